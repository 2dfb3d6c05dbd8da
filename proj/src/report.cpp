#include "canreveal/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace canreveal {

using nlohmann::ordered_json;

namespace {

ordered_json entry_json(const RankingEntry& e) {
    return {{"id", e.key.id}, {"channel", channel_suffix(e.key)}, {"correlation", std::abs(e.r)}};
}

ordered_json na_entry() {
    return {{"id", kNotAvailable}, {"channel", kNotAvailable}, {"correlation", kNotAvailable}};
}

ordered_json entries_json(const RankingReport& r) {
    ordered_json out = ordered_json::array();
    for (const auto& e : r.entries) out.push_back(entry_json(e));
    if (out.empty()) out.push_back(na_entry());
    return out;
}

ordered_json winner_json(const ControlResult& c) {
    if (c.winner) return channel_name(*c.winner);
    if (c.status == DiscoveryStatus::not_identified) return kNotAvailable;
    return nullptr;
}

} // namespace

std::string ranking_entries_json(const RankingReport& report) { return entries_json(report).dump(); }

std::string report_to_json(const SessionResult& result) {
    ordered_json controls = ordered_json::object();
    for (const auto& [c, res] : result.controls) {
        ordered_json rounds = ordered_json::array();
        for (const auto& r : res.rounds)
            rounds.push_back({{"round", r.round},
                              {"events_seen", r.events_seen},
                              {"elapsed_s", r.elapsed_s},
                              {"entries", entries_json(r)}});
        controls[std::string(to_string(c))] = {{"rounds", rounds},
                                               {"status", to_string(res.status)},
                                               {"winner", winner_json(res)},
                                               {"events_detected", res.windows.size()}};
    }
    ordered_json doc = {{"vehicle", result.vehicle}, {"controls", controls}};
    return doc.dump(2) + "\n";
}

std::string rankings_jsonl(const SessionResult& result) {
    std::string out;
    for (const auto& [c, res] : result.controls)
        for (const auto& r : res.rounds) {
            ordered_json base = {{"round", r.round},
                                 {"control", to_string(c)},
                                 {"elapsed_s", r.elapsed_s}};
            for (const auto& e : entries_json(r)) {
                ordered_json line = base;
                for (const auto& [k, v] : e.items()) line[k] = v;
                out += line.dump();
                out += '\n';
            }
        }
    return out;
}

std::string render_tables(const SessionResult& result) {
    std::ostringstream os;
    char buf[128];
    for (const auto& [c, res] : result.controls) {
        os << to_string(c) << ": " << to_string(res.status) << ", winner "
           << (res.winner ? channel_name(*res.winner) : std::string(kNotAvailable)) << ", "
           << res.windows.size() << " events detected\n";
        for (const auto& r : res.rounds) {
            std::snprintf(buf, sizeof buf, "  round %zu: %zu events (%.0f sec)\n", r.round,
                          r.events_seen, r.elapsed_s);
            os << buf;
            std::snprintf(buf, sizeof buf, "    %-10s %-8s %s\n", "ID", "Channel", "Correlation");
            os << buf;
            if (r.entries.empty()) {
                std::snprintf(buf, sizeof buf, "    %-10s %-8s %s\n", "N/A", "N/A", "N/A");
                os << buf;
            }
            for (const auto& e : r.entries) {
                std::snprintf(buf, sizeof buf, "    %-10u %-8s %.7f\n", e.key.id,
                              channel_suffix(e.key).c_str(), std::abs(e.r));
                os << buf;
            }
        }
    }
    return os.str();
}

ReportSummary parse_report(std::string_view text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    ReportSummary out;
    try {
        out.vehicle = doc.at("vehicle").get<std::string>();
        for (const auto& [name, body] : doc.at("controls").items()) {
            ReportControl rc;
            rc.status = parse_discovery_status(body.at("status").get<std::string>());
            rc.rounds = body.at("rounds").size();
            const auto& w = body.at("winner");
            if (w.is_string() && w.get<std::string>() != kNotAvailable)
                rc.winner = parse_channel_name(w.get<std::string>());
            out.controls[parse_control(name)] = rc;
        }
    } catch (const ordered_json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    return out;
}

ReportSummary load_report(const std::filesystem::path& path) { return parse_report(read_text_file(path)); }

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw Error("write failed for '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace canreveal

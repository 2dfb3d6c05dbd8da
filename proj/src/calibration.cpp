#include "canreveal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "canreveal/error.hpp"

namespace canreveal {

using nlohmann::json;

void PromptSchedule::validate() const {
    if (steps.empty()) throw ConfigError("calibration schedule has no steps");
    const double lo = is_pedal(control) ? 0.0 : -1.0;
    for (const auto& s : steps) {
        if (!(s.hold > 0)) throw ConfigError("calibration hold must be positive");
        if (s.level < lo || s.level > 1.0)
            throw ConfigError("calibration level out of range for " +
                              std::string(to_string(control)));
    }
    const EngineState want = control == Control::steering ? EngineState::running : EngineState::off;
    if (engine_state != want)
        throw ConfigError(control == Control::steering
                              ? "steering calibration requires the engine running"
                              : "pedal calibration requires the engine off");
}

double PromptSchedule::duration() const {
    double d = 0.0;
    for (const auto& s : steps) d += s.hold;
    return d;
}

PromptSchedule PromptSchedule::defaults_for(Control c) {
    PromptSchedule s;
    s.control = c;
    switch (c) {
    case Control::accelerator:
        s.engine_state = EngineState::off;
        s.steps = {{0, 3}, {0.5, 3}, {1.0, 3}, {0.5, 3}, {0, 3}, {1.0, 3}, {0, 3}};
        break;
    case Control::brake:
        s.engine_state = EngineState::off;
        s.steps = {{1.0, 3}, {0, 3}, {0.5, 3}, {1.0, 3}, {0, 3}, {0.5, 3}, {0, 3}};
        break;
    case Control::steering:
        s.engine_state = EngineState::running;
        s.steps = {{0, 3}, {-1.0, 3}, {0, 3}, {1.0, 3}, {-0.5, 3}, {0.5, 3}, {0, 3}};
        break;
    }
    return s;
}

namespace {

/// Step boundaries p_0 .. p_n.
std::vector<double> boundaries(const PromptSchedule& schedule, std::span<const double> prompts) {
    const std::size_t n = schedule.steps.size();
    if (prompts.empty()) throw ConfigError("calibration needs at least one prompt timestamp");
    if (prompts.size() != 1 && prompts.size() != n)
        throw ConfigError("calibration has " + std::to_string(prompts.size()) +
                          " prompt timestamps for " + std::to_string(n) + " steps");
    std::vector<double> b(n + 1);
    b[0] = prompts[0];
    for (std::size_t i = 0; i < n; ++i) {
        b[i + 1] = (prompts.size() == n && i + 1 < n) ? prompts[i + 1] : b[i] + schedule.steps[i].hold;
        if (!(b[i + 1] > b[i])) throw ConfigError("prompt timestamps must increase");
    }
    return b;
}

ReferenceSeries template_over(const PromptSchedule& schedule, const std::vector<double>& b,
                              double rate) {
    ReferenceSeries out{schedule.control, {}};
    if (!(rate > 0)) throw ConfigError("template rate must be positive");
    std::size_t step = 0;
    for (std::size_t i = 0;; ++i) {
        const double t = b.front() + double(i) / rate;
        if (t >= b.back()) break;
        while (step + 1 < schedule.steps.size() && t >= b[step + 1]) ++step;
        out.samples.push_back({t, schedule.steps[step].level});
    }
    return out;
}

} // namespace

ReferenceSeries calibration_template(const PromptSchedule& schedule, double t0, double rate) {
    schedule.validate();
    const double start[] = {t0};
    return template_over(schedule, boundaries(schedule, start), rate);
}

ReferenceSeries calibration_template(const PromptSchedule& schedule,
                                     std::span<const double> prompt_times, double rate) {
    schedule.validate();
    return template_over(schedule, boundaries(schedule, prompt_times), rate);
}

Mask CalibrationProfile::mask() const {
    std::set<ChannelKey> keys;
    for (const auto& c : candidates) keys.insert(c.key);
    return Mask::of(std::move(keys));
}

const CalibrationCandidate* CalibrationProfile::find(const ChannelKey& key) const {
    for (const auto& c : candidates)
        if (c.key == key) return &c;
    return nullptr;
}

CalibrationProfile calibrate(const CalibrationRecording& recording,
                             const PromptSchedule& schedule, const CalibrationOptions& opts) {
    schedule.validate();
    const auto b = boundaries(schedule, recording.prompt_times);
    const auto tmpl = template_over(schedule, b, opts.rate);
    if (tmpl.samples.size() < 2) throw ConfigError("calibration span too short");

    // Grid points far enough from every step boundary.
    std::vector<Eigen::Index> kept;
    for (std::size_t i = 0; i < tmpl.samples.size(); ++i) {
        const double t = tmpl.samples[i].t;
        bool near = false;
        for (double edge : b)
            if (std::abs(t - edge) <= opts.slack) near = true;
        if (!near) kept.push_back(Eigen::Index(i));
    }
    if (kept.size() < 2) throw ConfigError("calibration holds too short for the alignment slack");

    Eigen::VectorXd expected(Eigen::Index(kept.size()));
    for (std::size_t i = 0; i < kept.size(); ++i)
        expected[Eigen::Index(i)] = tmpl.samples[std::size_t(kept[i])].value;

    const Grid grid(tmpl.samples.front().t, tmpl.samples.back().t, opts.rate);
    std::vector<ChannelScore> scores;
    for (const auto& key : recording.store.keys()) {
        const auto samples = recording.store.query_bracketed(key, grid.start, grid.end);
        Eigen::VectorXd full;
        try {
            full = resample_linear(std::span<const ChannelSample>(samples), grid);
        } catch (const CoverageError&) {
            continue;
        }
        Eigen::VectorXd observed(expected.size());
        for (std::size_t i = 0; i < kept.size(); ++i) observed[Eigen::Index(i)] = full[kept[i]];
        try {
            const double r = pearson(observed, expected);
            if (std::abs(r) >= opts.retain_r) scores.push_back({key, r, kept.size(), 1});
        } catch (const UndefinedCorrelation&) {
        }
    }

    CalibrationProfile profile;
    profile.control = schedule.control;
    for (const auto& s : rank(std::move(scores), opts.max_candidates)) {
        CalibrationCandidate c{s.key, s.r, std::numeric_limits<std::uint16_t>::max(), 0};
        bool any = false;
        const std::size_t first = schedule.discards_first_step() ? 1 : 0;
        const double margin = (1.0 - opts.plateau_fraction) / 2.0;
        for (std::size_t i = first; i < schedule.steps.size(); ++i) {
            const double d = b[i + 1] - b[i];
            for (const auto& smp :
                 recording.store.query(s.key, b[i] + margin * d, b[i + 1] - margin * d)) {
                c.min_value = std::min(c.min_value, smp.value);
                c.max_value = std::max(c.max_value, smp.value);
                any = true;
            }
        }
        if (!any) {
            for (const auto& smp : recording.store.query(s.key, b.front(), b.back())) {
                c.min_value = std::min(c.min_value, smp.value);
                c.max_value = std::max(c.max_value, smp.value);
            }
        }
        profile.candidates.push_back(c);
    }
    return profile;
}

// ---------------------------------------------------------------------------

std::string profile_to_json(const VehicleProfile& profile) {
    json controls = json::object();
    for (const auto& [control, p] : profile.controls) {
        json cands = json::array();
        for (const auto& c : p.candidates)
            cands.push_back({{"id", c.key.id},
                             {"order", c.key.order == ByteOrder::msb ? "msb" : "lsb"},
                             {"start_byte", c.key.start_byte},
                             {"r", c.r},
                             {"min", c.min_value},
                             {"max", c.max_value}});
        controls[std::string(to_string(control))] = {
            {"candidates", cands},
            {"chosen", p.chosen ? json(channel_name(*p.chosen)) : json(nullptr)}};
    }
    json doc = {{"schema_version", VehicleProfile::kSchemaVersion},
                {"vehicle", profile.vehicle},
                {"created", profile.created},
                {"controls", controls}};
    return doc.dump(2) + "\n";
}

namespace {

const json& field(const json& obj, const char* name, const std::string& where) {
    if (!obj.is_object() || !obj.contains(name))
        throw ParseError("profile: missing field '" + where + name + "'");
    return obj.at(name);
}

template <typename T>
T typed(const json& obj, const char* name, const std::string& where) {
    const auto& v = field(obj, name, where);
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ParseError("profile: field '" + where + name + "' has the wrong type");
    }
}

} // namespace

VehicleProfile profile_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("profile: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("profile: document is not an object");
    const int version = typed<int>(doc, "schema_version", "");
    if (version != VehicleProfile::kSchemaVersion)
        throw ParseError("profile: field 'schema_version' is " + std::to_string(version) +
                         ", expected " + std::to_string(VehicleProfile::kSchemaVersion));
    VehicleProfile out;
    out.vehicle = typed<std::string>(doc, "vehicle", "");
    out.created = typed<std::string>(doc, "created", "");
    const auto& controls = field(doc, "controls", "");
    if (!controls.is_object()) throw ParseError("profile: field 'controls' is not an object");
    for (const auto& [name, body] : controls.items()) {
        Control control;
        try {
            control = parse_control(name);
        } catch (const ParseError&) {
            throw ParseError("profile: unknown control '" + name + "' in field 'controls'");
        }
        const std::string where = "controls." + name + ".";
        CalibrationProfile p;
        p.control = control;
        const auto& cands = field(body, "candidates", where);
        if (!cands.is_array()) throw ParseError("profile: field '" + where + "candidates' is not an array");
        for (std::size_t i = 0; i < cands.size(); ++i) {
            const std::string cw = where + "candidates[" + std::to_string(i) + "].";
            const auto& c = cands[i];
            CalibrationCandidate cand;
            const auto id = typed<std::uint32_t>(c, "id", cw);
            const auto order = typed<std::string>(c, "order", cw);
            const auto start = typed<int>(c, "start_byte", cw);
            if (order != "msb" && order != "lsb")
                throw ParseError("profile: field '" + cw + "order' must be msb or lsb");
            if (start < 0 || start > 6)
                throw ParseError("profile: field '" + cw + "start_byte' out of range");
            cand.key = {id, order == "msb" ? ByteOrder::msb : ByteOrder::lsb, std::uint8_t(start)};
            cand.r = typed<double>(c, "r", cw);
            cand.min_value = typed<std::uint16_t>(c, "min", cw);
            cand.max_value = typed<std::uint16_t>(c, "max", cw);
            if (cand.min_value > cand.max_value)
                throw ParseError("profile: field '" + cw + "min' exceeds max");
            p.candidates.push_back(cand);
        }
        const auto& chosen = field(body, "chosen", where);
        if (!chosen.is_null()) {
            if (!chosen.is_string()) throw ParseError("profile: field '" + where + "chosen' has the wrong type");
            try {
                p.chosen = parse_channel_name(chosen.get<std::string>());
            } catch (const ParseError& e) {
                throw ParseError("profile: field '" + where + "chosen': " + e.what());
            }
        }
        out.controls[control] = std::move(p);
    }
    return out;
}

void save_profile(const VehicleProfile& profile, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write profile '" + path.string() + "'");
    out << profile_to_json(profile);
}

VehicleProfile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open profile '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return profile_from_json(ss.str());
}

// ---------------------------------------------------------------------------

CalibrationWizard::CalibrationWizard(PromptSchedule schedule) : schedule_(std::move(schedule)) {
    schedule_.validate();
}

std::optional<CalibrationPrompt> CalibrationWizard::current() const {
    if (done() || aborted_) return std::nullopt;
    const std::size_t i = times_.size();
    return CalibrationPrompt{schedule_.control, i, schedule_.steps.size(), schedule_.steps[i].level,
                             schedule_.steps[i].hold};
}

void CalibrationWizard::acknowledge(std::size_t step, double t) {
    if (aborted_) throw DomainError("calibration wizard was aborted");
    if (done()) throw DomainError("calibration wizard already complete");
    if (step != times_.size())
        throw DomainError("acknowledged step " + std::to_string(step) + " but step " +
                          std::to_string(times_.size()) + " is current");
    if (!times_.empty() && !(t > times_.back()))
        throw DomainError("acknowledgement time must increase");
    times_.push_back(t);
}

double CalibrationWizard::end_time() const {
    if (!done()) throw DomainError("calibration wizard not complete");
    return times_.back() + schedule_.steps.back().hold;
}

} // namespace canreveal

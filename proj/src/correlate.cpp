#include "canreveal/correlate.hpp"

#include <map>

namespace canreveal {

std::string_view to_string(CorrelationMode m) noexcept {
    return m == CorrelationMode::value ? "value" : "derivative";
}

CorrelationMode parse_correlation_mode(std::string_view s) {
    if (s == "value") return CorrelationMode::value;
    if (s == "derivative") return CorrelationMode::derivative;
    throw ConfigError("unknown correlation mode '" + std::string(s) + "'");
}

std::vector<ChannelScore> score_channels(const ChannelStore& store,
                                         std::span<const RefSample> ref,
                                         std::span<const EventWindow> windows, const Mask& mask,
                                         CorrelationMode mode, double rate,
                                         ScoreDiagnostics* diag) {
    ScoreDiagnostics local;
    ScoreDiagnostics& dg = diag ? *diag : local;
    if (windows.empty()) throw DomainError("score_channels needs at least one window");

    std::vector<Grid> grids;
    std::vector<Eigen::VectorXd> ref_parts;
    Eigen::Index total = 0;
    for (const auto& w : windows) {
        grids.emplace_back(w.w_start, w.w_end, rate);
        auto part = resample_linear(ref, grids.back());
        if (mode == CorrelationMode::derivative) {
            if (part.size() < 2) throw DomainError("window too short for derivative mode");
            part = rate_of_change(part, 1.0 / rate);
        }
        total += part.size();
        ref_parts.push_back(std::move(part));
    }
    Eigen::VectorXd ref_cat(total);
    {
        Eigen::Index off = 0;
        for (const auto& p : ref_parts) {
            ref_cat.segment(off, p.size()) = p;
            off += p.size();
        }
    }

    std::vector<ChannelScore> scores;
    Eigen::VectorXd chan_cat(total);
    for (const auto& key : store.keys()) {
        if (!mask.allows(key)) continue;
        bool covered = true;
        Eigen::Index off = 0;
        for (const auto& g : grids) {
            const auto samples = store.query_bracketed(key, g.start, g.end);
            try {
                auto part = resample_linear(std::span<const ChannelSample>(samples), g);
                if (mode == CorrelationMode::derivative) part = rate_of_change(part, 1.0 / rate);
                chan_cat.segment(off, part.size()) = part;
                off += part.size();
            } catch (const CoverageError&) {
                covered = false;
                break;
            }
        }
        if (!covered) {
            ++dg.coverage_excluded;
            continue;
        }
        try {
            const double r = pearson(chan_cat, ref_cat);
            scores.push_back({key, r, std::size_t(total), windows.size()});
        } catch (const UndefinedCorrelation&) {
            ++dg.zero_variance_excluded;
        }
    }
    return scores;
}

std::vector<ChannelScore> rank(std::vector<ChannelScore> scores, std::size_t top_n) {
    struct Keyed {
        long long bucket;
        std::string name;
        ChannelScore score;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(scores.size());
    for (auto& s : scores)
        keyed.push_back({std::llround(std::abs(s.r) / kRankResolution), channel_name(s.key), s});
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.bucket != b.bucket) return a.bucket > b.bucket;
        return a.name < b.name;
    });
    std::vector<ChannelScore> out;
    for (std::size_t i = 0; i < keyed.size() && i < top_n; ++i) out.push_back(keyed[i].score);
    return out;
}

Mask liveliness_mask(const ChannelStore& store, double t_end, const LivelinessOptions& opts) {
    std::set<ChannelKey> keep;
    for (const auto& key : store.keys()) {
        const auto samples = store.query(key, t_end - opts.horizon, t_end);
        if (samples.size() < 2) continue;
        bool varies = false;
        for (const auto& s : samples)
            if (s.value != samples.front().value) {
                varies = true;
                break;
            }
        if (!varies) continue;
        if (opts.counter_filter) {
            std::map<std::uint16_t, std::size_t> deltas;
            for (std::size_t i = 1; i < samples.size(); ++i)
                ++deltas[std::uint16_t(samples[i].value - samples[i - 1].value)];
            std::size_t best = 0;
            for (const auto& [d, n] : deltas)
                if (d != 0) best = std::max(best, n);
            const double steps = double(samples.size() - 1);
            if (double(best) >= opts.counter_fraction * steps) continue;
        }
        keep.insert(key);
    }
    return Mask::of(std::move(keep));
}

} // namespace canreveal

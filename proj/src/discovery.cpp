#include "canreveal/discovery.hpp"

#include <cmath>
#include <limits>

namespace canreveal {

void DiscoveryConfig::validate() const {
    if (cadence < 1) throw ConfigError("discovery cadence must be >= 1");
    if (!(r_min > 0 && r_min <= 1)) throw ConfigError("discovery r_min must be in (0, 1]");
    if (stability < 1) throw ConfigError("discovery stability must be >= 1");
    if (max_events < 1) throw ConfigError("discovery max_events must be >= 1");
    if (top_n < 1) throw ConfigError("discovery top_n must be >= 1");
}

std::string_view to_string(DiscoveryStatus s) noexcept {
    switch (s) {
    case DiscoveryStatus::collecting: return "collecting";
    case DiscoveryStatus::candidate: return "candidate";
    case DiscoveryStatus::converged: return "converged";
    case DiscoveryStatus::not_identified: return "not_identified";
    }
    return "?";
}

DiscoveryStatus parse_discovery_status(std::string_view s) {
    for (auto st : {DiscoveryStatus::collecting, DiscoveryStatus::candidate,
                    DiscoveryStatus::converged, DiscoveryStatus::not_identified})
        if (to_string(st) == s) return st;
    throw ParseError("unknown discovery status '" + std::string(s) + "'");
}

StatusUpdate update_status(std::span<const RankingReport> rounds, const DiscoveryConfig& cfg) {
    StatusUpdate out;
    if (rounds.empty()) return out;
    auto meets = [&](const RankingReport& r) { return r.top && std::abs(r.top->r) >= cfg.r_min; };

    if (rounds.size() >= cfg.stability) {
        const auto tail = rounds.last(cfg.stability);
        bool stable = meets(tail.front());
        for (const auto& r : tail)
            stable = stable && meets(r) && r.top->key == tail.front().top->key;
        if (stable) {
            out.status = DiscoveryStatus::converged;
            out.winner = tail.back().top->key;
            return out;
        }
    }
    if (rounds.back().events_seen >= cfg.max_events)
        out.status = DiscoveryStatus::not_identified;
    else if (meets(rounds.back()))
        out.status = DiscoveryStatus::candidate;
    return out;
}

std::vector<Displacement> displacement_log(std::span<const RankingReport> rounds) {
    std::vector<Displacement> out;
    auto top_key = [](const RankingReport& r) -> std::optional<ChannelKey> {
        if (r.top) return r.top->key;
        return std::nullopt;
    };
    for (std::size_t i = 1; i < rounds.size(); ++i) {
        const auto a = top_key(rounds[i - 1]);
        const auto b = top_key(rounds[i]);
        if (a != b) out.push_back({rounds[i].round, a, b});
    }
    return out;
}

Discovery::Discovery(Control control, DiscoveryConfig cfg) : control_(control), cfg_(cfg) {
    cfg_.validate();
}

std::optional<RankingReport> Discovery::on_event(const EventWindow& window,
                                                 const DiscoveryInputs& in) {
    if (control_for(window.event.kind) != control_)
        throw DomainError("event kind does not match discovery control");
    if (events_seen_ >= cfg_.max_events) return std::nullopt;
    ++events_seen_;
    windows_.push_back(window);
    if (events_seen_ % cfg_.cadence != 0) return std::nullopt;

    RankingReport report;
    report.round = rounds_.size() + 1;
    report.events_seen = events_seen_;
    report.elapsed_s = window.w_end - in.t_origin;
    last_scores_ = rank(score_channels(in.store, in.ref, windows_, in.mask, in.mode, in.rate, &diag_),
                        std::numeric_limits<std::size_t>::max());
    if (!last_scores_.empty()) report.top = RankingEntry{last_scores_.front().key, last_scores_.front().r};
    for (const auto& s : last_scores_) {
        if (report.entries.size() >= cfg_.top_n || std::abs(s.r) < cfg_.r_min) break;
        report.entries.push_back({s.key, s.r});
    }
    rounds_.push_back(report);

    if (!terminal()) {
        const auto upd = update_status(rounds_, cfg_);
        status_ = upd.status;
        winner_ = upd.winner;
    }
    return report;
}

void Discovery::finish() {
    if (!terminal()) {
        status_ = DiscoveryStatus::not_identified;
        winner_.reset();
    }
}

} // namespace canreveal

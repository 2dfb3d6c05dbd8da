#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "canreveal/can.hpp"
#include "canreveal/control.hpp"
#include "canreveal/correlate.hpp"
#include "canreveal/events.hpp"

namespace canreveal {

struct DiscoveryConfig {
    std::size_t cadence = 3;      ///< events per inference round
    double r_min = 0.4;           ///< minimum |r| for a winning channel
    std::size_t stability = 2;    ///< consecutive rounds with the same top channel
    std::size_t max_events = 15;  ///< event budget
    std::size_t top_n = 9;        ///< ranking depth in reports

    void validate() const;
};

enum class DiscoveryStatus { collecting, candidate, converged, not_identified };

std::string_view to_string(DiscoveryStatus s) noexcept;
DiscoveryStatus parse_discovery_status(std::string_view s);

struct RankingEntry {
    ChannelKey key;
    double r = 0.0; ///< signed; reports show |r|
};

/// One inference round. `entries` holds the ranked channels with
/// |r| >= r_min, at most top_n of them; `top` is the best channel before
/// that floor is applied.
struct RankingReport {
    std::size_t round = 0; ///< 1-based
    std::size_t events_seen = 0;
    double elapsed_s = 0.0;
    std::vector<RankingEntry> entries;
    std::optional<RankingEntry> top;
};

struct StatusUpdate {
    DiscoveryStatus status = DiscoveryStatus::collecting;
    std::optional<ChannelKey> winner;
};

/// Converged iff the last `stability` rounds share a top channel with
/// |r| >= r_min in each; otherwise not_identified once the last round has
/// used the whole event budget, candidate if the latest top meets r_min,
/// collecting otherwise.
StatusUpdate update_status(std::span<const RankingReport> rounds, const DiscoveryConfig& cfg);

struct Displacement {
    std::size_t round = 0; ///< round in which the new top appeared
    std::optional<ChannelKey> old_top;
    std::optional<ChannelKey> new_top;
};

std::vector<Displacement> displacement_log(std::span<const RankingReport> rounds);

/// Everything a round needs besides the window list.
struct DiscoveryInputs {
    const ChannelStore& store;
    std::span<const RefSample> ref;
    const Mask& mask;
    CorrelationMode mode = CorrelationMode::value;
    double rate = 20.0;
    double t_origin = 0.0; ///< recording start, for elapsed_s
};

/// Per-control discovery state machine. Feed windows in detection order.
class Discovery {
public:
    Discovery(Control control, DiscoveryConfig cfg);

    /// Returns the round produced by this event, if any. Events beyond the
    /// budget are ignored.
    std::optional<RankingReport> on_event(const EventWindow& window, const DiscoveryInputs& in);

    /// End of input: an unresolved control becomes not_identified.
    void finish();

    Control control() const noexcept { return control_; }
    const DiscoveryConfig& config() const noexcept { return cfg_; }
    std::size_t events_seen() const noexcept { return events_seen_; }
    const std::vector<EventWindow>& windows() const noexcept { return windows_; }
    const std::vector<RankingReport>& rounds() const noexcept { return rounds_; }
    DiscoveryStatus status() const noexcept { return status_; }
    const std::optional<ChannelKey>& winner() const noexcept { return winner_; }
    bool terminal() const noexcept {
        return status_ == DiscoveryStatus::converged || status_ == DiscoveryStatus::not_identified;
    }
    /// Full (unfloored, untruncated) ranking of the latest round.
    const std::vector<ChannelScore>& last_scores() const noexcept { return last_scores_; }
    const ScoreDiagnostics& diagnostics() const noexcept { return diag_; }

private:
    Control control_;
    DiscoveryConfig cfg_;
    std::size_t events_seen_ = 0;
    std::vector<EventWindow> windows_;
    std::vector<RankingReport> rounds_;
    std::vector<ChannelScore> last_scores_;
    ScoreDiagnostics diag_;
    DiscoveryStatus status_ = DiscoveryStatus::collecting;
    std::optional<ChannelKey> winner_;
};

} // namespace canreveal

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "canreveal/session.hpp"

namespace canreveal {

/// Placeholder for an empty ranking row or a missing winner.
inline constexpr std::string_view kNotAvailable = "N/A";

/// {id, channel, correlation} as written in reports and pushed to clients.
/// Correlation is |r|.
std::string ranking_entries_json(const RankingReport& report);

/// {vehicle, controls: {<control>: {rounds: [...], status, winner}}}.
/// A round with no entries carries a single N/A row; an unresolved control
/// has winner "N/A".
std::string report_to_json(const SessionResult& result);

/// One JSON object per line: round, control, elapsed_s, id, channel,
/// correlation.
std::string rankings_jsonl(const SessionResult& result);

/// Human-readable ID/Channel/Correlation tables, one block per round.
std::string render_tables(const SessionResult& result);

struct ReportControl {
    DiscoveryStatus status = DiscoveryStatus::collecting;
    std::optional<ChannelKey> winner;
    std::size_t rounds = 0;
};

struct ReportSummary {
    std::string vehicle;
    std::map<Control, ReportControl> controls;
};

ReportSummary parse_report(std::string_view text);
ReportSummary load_report(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

} // namespace canreveal

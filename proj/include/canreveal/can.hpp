#pragma once

#include <array>
#include <compare>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace canreveal {

/// One classic CAN data frame as captured on the bus.
struct CanFrame {
    double t = 0.0;
    std::uint32_t id = 0;
    bool extended = false;
    std::uint8_t dlc = 0;
    std::array<std::uint8_t, 8> data{};

    std::span<const std::uint8_t> payload() const noexcept { return {data.data(), dlc}; }

    bool operator==(const CanFrame&) const = default;
};

/// Parse one candump log record: "(<seconds>) <iface> <ID>#<HEX>".
/// The id is 3 hex digits (standard) or 8 (extended); the payload has an
/// even number of hex digits, at most 16.
CanFrame parse_candump_line(std::string_view line);

std::string format_candump_line(const CanFrame& frame, std::string_view iface = "can0");

/// Byte order of a 16-bit channel hypothesis.
enum class ByteOrder : std::uint8_t { msb, lsb };

/// A fixed-width 16-bit window into the payload of one arbitration id.
struct ChannelKey {
    std::uint32_t id = 0;
    ByteOrder order = ByteOrder::msb;
    std::uint8_t start_byte = 0;

    auto operator<=>(const ChannelKey&) const = default;
};

struct ChannelKeyHash {
    std::size_t operator()(const ChannelKey& k) const noexcept {
        return std::hash<std::uint64_t>{}((std::uint64_t{k.id} << 16) |
                                          (std::uint64_t(k.order) << 8) | k.start_byte);
    }
};

/// "<id>_<msb|lsb>_<start_byte>", id in decimal.
std::string channel_name(const ChannelKey& key);
ChannelKey parse_channel_name(std::string_view name);

/// "msb_4" form used in the ID/Channel/Correlation ranking tables.
std::string channel_suffix(const ChannelKey& key);

/// Keys for every start byte 0..dlc-2 in both orders: msb first, then lsb.
std::vector<ChannelKey> enumerate_channel_keys(std::uint32_t id, std::size_t dlc);

/// msb: p[k]*256 + p[k+1]; lsb: p[k+1]*256 + p[k]. Throws DomainError when
/// the window does not fit in the payload.
std::uint16_t decode_channel(std::span<const std::uint8_t> payload, const ChannelKey& key);

struct ChannelSample {
    double t = 0.0;
    std::uint16_t value = 0;
};

struct ChannelSeries {
    ChannelKey key;
    std::vector<ChannelSample> samples;
};

/// Time-indexed store of every channel hypothesis seen on the bus.
///
/// Single writer (ingest), any number of concurrent readers. Samples older
/// than `min(latest, floor) - retention` are evicted; a consumer that still
/// needs older data holds the floor back with `set_floor`.
class ChannelStore {
public:
    static constexpr double kDefaultRetention = 600.0;

    explicit ChannelStore(double retention_s = kDefaultRetention);

    ChannelStore(const ChannelStore&) = delete;
    ChannelStore& operator=(const ChannelStore&) = delete;

    /// Decode every hypothesis of the frame and append it. Frames with dlc < 2
    /// contribute nothing.
    void ingest(const CanFrame& frame);

    /// Append one sample; ignored unless t is newer than the key's last sample.
    void append(const ChannelKey& key, const ChannelSample& sample);

    std::vector<ChannelKey> keys() const;
    bool contains(const ChannelKey& key) const;
    std::size_t sample_count(const ChannelKey& key) const;

    /// Retained samples with a <= t <= b.
    std::vector<ChannelSample> query(const ChannelKey& key, double a, double b) const;

    /// Like query, plus the nearest sample on either side of [a, b] when
    /// present, so that the result can be interpolated over the whole span.
    /// The trailing neighbour is only taken when its t <= after_limit.
    std::vector<ChannelSample> query_bracketed(
        const ChannelKey& key, double a, double b,
        double after_limit = std::numeric_limits<double>::infinity()) const;

    ChannelSeries series(const ChannelKey& key) const;

    /// Copy the bracketed [a, b] slice of every key into `dst`.
    void copy_slice_to(ChannelStore& dst, double a, double b,
                       double after_limit = std::numeric_limits<double>::infinity()) const;

    double retention() const noexcept { return retention_; }
    void set_floor(double t);

    /// Timestamp of the newest ingested frame (-inf before the first).
    double latest() const;
    std::size_t frames_ingested() const;
    std::size_t out_of_order_dropped() const;

    /// Marks the end of the input stream and wakes waiters.
    void close();
    bool closed() const;

    /// Blocks until a frame newer than t has been ingested or the store is
    /// closed. Returns false only for a closed store that never passed t.
    bool wait_past(double t) const;

private:
    using Deque = std::deque<ChannelSample>;

    void evict_locked();
    const Deque* find_locked(const ChannelKey& key) const;

    double retention_;
    mutable std::shared_mutex data_mu_;
    std::unordered_map<ChannelKey, Deque, ChannelKeyHash> series_;
    double floor_ = std::numeric_limits<double>::infinity();
    double newest_ = -std::numeric_limits<double>::infinity();
    std::size_t frames_ = 0;
    std::size_t dropped_ = 0;
    std::size_t since_evict_ = 0;

    mutable std::mutex wm_mu_;
    mutable std::condition_variable wm_cv_;
    double latest_ = -std::numeric_limits<double>::infinity();
    bool closed_ = false;
};

/// Read-time tallies for a log file.
struct LogReadStats {
    std::size_t records = 0;
    std::size_t skipped = 0;
    std::vector<std::string> diagnostics;
};

/// Strict mode throws ParseError (with line number) on the first bad record;
/// lenient mode skips it and counts it. Timestamps going backwards count as
/// malformed records.
std::vector<CanFrame> read_can_log(const std::filesystem::path& path, bool strict = true,
                                   LogReadStats* stats = nullptr);

void write_can_log(const std::filesystem::path& path, std::span<const CanFrame> frames,
                   std::string_view iface = "can0");

} // namespace canreveal

#include "canreveal/can.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>

#include "canreveal/error.hpp"

namespace canreveal {

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

bool is_space(char c) { return c == ' ' || c == '\t'; }

std::string_view trim_right(std::string_view s) {
    while (!s.empty() && (is_space(s.back()) || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

} // namespace

CanFrame parse_candump_line(std::string_view line) {
    line = trim_right(line);
    std::size_t pos = 0;
    auto fail = [&](const std::string& what) -> CanFrame { throw ParseError(what, 0, pos); };

    if (line.empty() || line[0] != '(') return fail("expected '(' before timestamp");
    const auto close = line.find(')');
    if (close == std::string_view::npos) return fail("unterminated timestamp");
    pos = 1;
    double t = 0.0;
    {
        const char* first = line.data() + 1;
        const char* last = line.data() + close;
        auto [ptr, ec] = std::from_chars(first, last, t);
        if (ec != std::errc{} || ptr != last) return fail("bad timestamp");
    }
    pos = close + 1;
    if (pos >= line.size() || !is_space(line[pos])) return fail("expected space after timestamp");
    while (pos < line.size() && is_space(line[pos])) ++pos;

    const auto iface_begin = pos;
    while (pos < line.size() && !is_space(line[pos])) ++pos;
    if (pos == iface_begin || pos >= line.size()) return fail("missing interface or frame");
    while (pos < line.size() && is_space(line[pos])) ++pos;

    const auto frame_text = line.substr(pos);
    const auto hash = frame_text.find('#');
    if (hash == std::string_view::npos) return fail("missing '#' separator");
    const auto id_text = frame_text.substr(0, hash);
    const auto data_text = frame_text.substr(hash + 1);

    CanFrame frame;
    frame.t = t;
    if (id_text.size() == 3) {
        frame.extended = false;
    } else if (id_text.size() == 8) {
        frame.extended = true;
    } else {
        return fail("identifier must have 3 or 8 hex digits");
    }
    std::uint32_t id = 0;
    for (char c : id_text) {
        const int v = hex_value(c);
        if (v < 0) return fail("non-hex identifier digit");
        id = (id << 4) | std::uint32_t(v);
        ++pos;
    }
    if (!frame.extended && id >= (1u << 11)) return fail("standard identifier exceeds 11 bits");
    if (frame.extended && id >= (1u << 29)) return fail("extended identifier exceeds 29 bits");
    frame.id = id;
    ++pos; // '#'

    if (data_text.size() % 2 != 0) return fail("odd number of payload hex digits");
    if (data_text.size() > 16)
        throw ParseError("frame error: dlc " + std::to_string(data_text.size() / 2) + " > 8", 0,
                         pos);
    frame.dlc = std::uint8_t(data_text.size() / 2);
    for (std::size_t i = 0; i < frame.dlc; ++i) {
        const int hi = hex_value(data_text[2 * i]);
        const int lo = hex_value(data_text[2 * i + 1]);
        if (hi < 0 || lo < 0) {
            pos += 2 * i;
            return fail("non-hex payload digit");
        }
        frame.data[i] = std::uint8_t(hi * 16 + lo);
    }
    return frame;
}

std::string format_candump_line(const CanFrame& frame, std::string_view iface) {
    char head[64];
    std::snprintf(head, sizeof head, frame.extended ? "(%.6f) %.*s %08X#" : "(%.6f) %.*s %03X#",
                  frame.t, int(iface.size()), iface.data(), unsigned(frame.id));
    std::string out = head;
    static constexpr char kHex[] = "0123456789ABCDEF";
    for (std::size_t i = 0; i < frame.dlc; ++i) {
        out.push_back(kHex[frame.data[i] >> 4]);
        out.push_back(kHex[frame.data[i] & 0xF]);
    }
    return out;
}

std::string channel_suffix(const ChannelKey& key) {
    return std::string(key.order == ByteOrder::msb ? "msb_" : "lsb_") +
           std::to_string(key.start_byte);
}

std::string channel_name(const ChannelKey& key) {
    return std::to_string(key.id) + "_" + channel_suffix(key);
}

ChannelKey parse_channel_name(std::string_view name) {
    auto parse_uint = [&](std::string_view s, std::uint64_t limit) {
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || v >= limit)
            throw ParseError("bad channel name '" + std::string(name) + "'");
        return v;
    };
    const auto a = name.find('_');
    const auto b = a == std::string_view::npos ? a : name.find('_', a + 1);
    if (b == std::string_view::npos)
        throw ParseError("bad channel name '" + std::string(name) + "'");
    ChannelKey key;
    key.id = std::uint32_t(parse_uint(name.substr(0, a), 1ull << 29));
    const auto order = name.substr(a + 1, b - a - 1);
    if (order == "msb")
        key.order = ByteOrder::msb;
    else if (order == "lsb")
        key.order = ByteOrder::lsb;
    else
        throw ParseError("unknown byte order '" + std::string(order) + "' in channel name");
    key.start_byte = std::uint8_t(parse_uint(name.substr(b + 1), 7));
    return key;
}

std::vector<ChannelKey> enumerate_channel_keys(std::uint32_t id, std::size_t dlc) {
    std::vector<ChannelKey> keys;
    if (dlc < 2) return keys;
    dlc = std::min<std::size_t>(dlc, 8);
    keys.reserve(2 * (dlc - 1));
    for (ByteOrder order : {ByteOrder::msb, ByteOrder::lsb})
        for (std::size_t k = 0; k + 2 <= dlc; ++k)
            keys.push_back({id, order, std::uint8_t(k)});
    return keys;
}

std::uint16_t decode_channel(std::span<const std::uint8_t> payload, const ChannelKey& key) {
    const std::size_t k = key.start_byte;
    if (k + 2 > payload.size())
        throw DomainError("channel " + channel_name(key) + " does not fit a " +
                          std::to_string(payload.size()) + "-byte payload");
    return key.order == ByteOrder::msb ? std::uint16_t(payload[k] << 8 | payload[k + 1])
                                       : std::uint16_t(payload[k + 1] << 8 | payload[k]);
}

// ---------------------------------------------------------------------------

ChannelStore::ChannelStore(double retention_s) : retention_(retention_s) {
    if (!(retention_s > 0)) throw ConfigError("retention must be positive");
}

void ChannelStore::ingest(const CanFrame& frame) {
    {
        std::unique_lock lock(data_mu_);
        const auto payload = frame.payload();
        bool late = false;
        for (std::size_t k = 0; k + 2 <= payload.size(); ++k) {
            for (ByteOrder order : {ByteOrder::msb, ByteOrder::lsb}) {
                const ChannelKey key{frame.id, order, std::uint8_t(k)};
                auto& dq = series_[key];
                if (!dq.empty() && dq.back().t >= frame.t) {
                    late = true;
                    continue;
                }
                dq.push_back({frame.t, decode_channel(payload, key)});
            }
        }
        if (late) ++dropped_;
        ++frames_;
        newest_ = std::max(newest_, frame.t);
        if (++since_evict_ >= 256) {
            since_evict_ = 0;
            evict_locked();
        }
    }
    {
        std::lock_guard lock(wm_mu_);
        latest_ = std::max(latest_, frame.t);
    }
    wm_cv_.notify_all();
}

void ChannelStore::append(const ChannelKey& key, const ChannelSample& sample) {
    std::unique_lock lock(data_mu_);
    auto& dq = series_[key];
    if (!dq.empty() && dq.back().t >= sample.t) return;
    dq.push_back(sample);
    newest_ = std::max(newest_, sample.t);
    if (++since_evict_ >= 256) {
        since_evict_ = 0;
        evict_locked();
    }
}

void ChannelStore::evict_locked() {
    const double cutoff = std::min(newest_, floor_) - retention_;
    for (auto& [key, dq] : series_)
        while (!dq.empty() && dq.front().t < cutoff) dq.pop_front();
}

void ChannelStore::set_floor(double t) {
    std::unique_lock lock(data_mu_);
    floor_ = t;
}

const ChannelStore::Deque* ChannelStore::find_locked(const ChannelKey& key) const {
    const auto it = series_.find(key);
    return it == series_.end() ? nullptr : &it->second;
}

std::vector<ChannelKey> ChannelStore::keys() const {
    std::shared_lock lock(data_mu_);
    std::vector<ChannelKey> out;
    out.reserve(series_.size());
    for (const auto& [key, dq] : series_)
        if (!dq.empty()) out.push_back(key);
    std::sort(out.begin(), out.end());
    return out;
}

bool ChannelStore::contains(const ChannelKey& key) const {
    std::shared_lock lock(data_mu_);
    const auto* dq = find_locked(key);
    return dq && !dq->empty();
}

std::size_t ChannelStore::sample_count(const ChannelKey& key) const {
    std::shared_lock lock(data_mu_);
    const auto* dq = find_locked(key);
    return dq ? dq->size() : 0;
}

namespace {
auto lower(const std::deque<ChannelSample>& dq, double t) {
    return std::lower_bound(dq.begin(), dq.end(), t,
                            [](const ChannelSample& s, double v) { return s.t < v; });
}
auto upper(const std::deque<ChannelSample>& dq, double t) {
    return std::upper_bound(dq.begin(), dq.end(), t,
                            [](double v, const ChannelSample& s) { return v < s.t; });
}
} // namespace

std::vector<ChannelSample> ChannelStore::query(const ChannelKey& key, double a, double b) const {
    std::shared_lock lock(data_mu_);
    const auto* dq = find_locked(key);
    if (!dq || a > b) return {};
    return {lower(*dq, a), upper(*dq, b)};
}

std::vector<ChannelSample> ChannelStore::query_bracketed(const ChannelKey& key, double a, double b,
                                                         double after_limit) const {
    std::shared_lock lock(data_mu_);
    const auto* dq = find_locked(key);
    if (!dq || a > b) return {};
    auto first = lower(*dq, a);
    auto last = upper(*dq, b);
    if (first != dq->begin() && (first == dq->end() || first->t > a)) --first;
    if (last != dq->end() && last->t <= after_limit &&
        (last == dq->begin() || std::prev(last)->t < b))
        ++last;
    return {first, last};
}

ChannelSeries ChannelStore::series(const ChannelKey& key) const {
    std::shared_lock lock(data_mu_);
    ChannelSeries out{key, {}};
    if (const auto* dq = find_locked(key)) out.samples.assign(dq->begin(), dq->end());
    return out;
}

void ChannelStore::copy_slice_to(ChannelStore& dst, double a, double b, double after_limit) const {
    for (const auto& key : keys())
        for (const auto& s : query_bracketed(key, a, b, after_limit)) dst.append(key, s);
}

double ChannelStore::latest() const {
    std::lock_guard lock(wm_mu_);
    return latest_;
}

std::size_t ChannelStore::frames_ingested() const {
    std::shared_lock lock(data_mu_);
    return frames_;
}

std::size_t ChannelStore::out_of_order_dropped() const {
    std::shared_lock lock(data_mu_);
    return dropped_;
}

void ChannelStore::close() {
    {
        std::lock_guard lock(wm_mu_);
        closed_ = true;
    }
    wm_cv_.notify_all();
}

bool ChannelStore::closed() const {
    std::lock_guard lock(wm_mu_);
    return closed_;
}

bool ChannelStore::wait_past(double t) const {
    std::unique_lock lock(wm_mu_);
    wm_cv_.wait(lock, [&] { return latest_ > t || closed_; });
    return latest_ > t;
}

// ---------------------------------------------------------------------------

std::vector<CanFrame> read_can_log(const std::filesystem::path& path, bool strict,
                                   LogReadStats* stats) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open CAN log '" + path.string() + "'");
    LogReadStats local;
    LogReadStats& st = stats ? *stats : local;
    std::vector<CanFrame> frames;
    std::string line;
    std::size_t lineno = 0;
    double last_t = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = trim_right(line);
        std::size_t lead = 0;
        while (lead < view.size() && is_space(view[lead])) ++lead;
        view.remove_prefix(lead);
        if (view.empty() || view.front() == '#') continue;
        try {
            CanFrame f = parse_candump_line(view);
            if (f.t < last_t) throw ParseError("timestamp goes backwards", 0, 1);
            last_t = f.t;
            frames.push_back(f);
            ++st.records;
        } catch (const ParseError& e) {
            const std::string msg = path.filename().string() + ": " + e.what();
            if (strict) throw ParseError(path.filename().string() + ": " + e.what(), lineno,
                                         e.column());
            ++st.skipped;
            st.diagnostics.push_back("line " + std::to_string(lineno) + ": " + msg);
        }
    }
    return frames;
}

void write_can_log(const std::filesystem::path& path, std::span<const CanFrame> frames,
                   std::string_view iface) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write CAN log '" + path.string() + "'");
    for (const auto& f : frames) out << format_candump_line(f, iface) << '\n';
}

} // namespace canreveal

#include "canreveal/dbc.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "canreveal/error.hpp"

namespace canreveal {

const DbcSignal* DbcMessage::find(std::string_view signal_name) const {
    for (const auto& s : signals)
        if (s.name == signal_name) return &s;
    return nullptr;
}

namespace {

class Cursor {
public:
    Cursor(std::string_view s, std::size_t line) : s_(s), line_(line) {}

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    bool done() {
        skip_ws();
        return pos_ >= s_.size();
    }
    char peek() {
        skip_ws();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }
    void expect(char c, const char* what) {
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "' " + what);
        ++pos_;
    }
    std::string_view word() {
        skip_ws();
        const auto b = pos_;
        while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != '\t' && s_[pos_] != ':')
            ++pos_;
        if (b == pos_) fail("expected identifier");
        return s_.substr(b, pos_ - b);
    }
    template <typename T>
    T number(const char* what) {
        skip_ws();
        T v{};
        const char* first = s_.data() + pos_;
        if (pos_ < s_.size() && s_[pos_] == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, s_.data() + s_.size(), v);
        if (ec != std::errc{}) fail(std::string("expected ") + what);
        pos_ = std::size_t(ptr - s_.data());
        return v;
    }
    std::string_view rest() {
        skip_ws();
        return s_.substr(pos_);
    }
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, line_, pos_); }
    std::size_t pos() const { return pos_; }

private:
    std::string_view s_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

DbcSignal parse_signal(Cursor& c) {
    DbcSignal sig;
    sig.name = std::string(c.word());
    if (c.peek() != ':') c.word(); // multiplexer indicator, ignored
    c.expect(':', "after signal name");
    sig.start_bit = c.number<int>("start bit");
    c.expect('|', "between start bit and length");
    sig.length = c.number<int>("signal length");
    c.expect('@', "before byte order");
    const char order = c.peek();
    if (order == '0')
        sig.byte_order = DbcByteOrder::big_endian;
    else if (order == '1')
        sig.byte_order = DbcByteOrder::little_endian;
    else
        c.fail("byte order must be 0 or 1");
    c.expect(order, "byte order");
    const char sign = c.peek();
    if (sign != '+' && sign != '-') c.fail("signedness must be '+' or '-'");
    c.expect(sign, "signedness");
    sig.is_signed = sign == '-';
    if (sig.start_bit < 0 || sig.start_bit > 63) c.fail("start bit out of range 0..63");
    if (sig.length < 1 || sig.length > 64) c.fail("length out of range 1..64");

    if (c.peek() == '(') {
        c.expect('(', "");
        sig.scale = c.number<double>("scale");
        c.expect(',', "between scale and offset");
        sig.offset = c.number<double>("offset");
        c.expect(')', "after offset");
    }
    if (c.peek() == '[') {
        c.expect('[', "");
        sig.minimum = c.number<double>("minimum");
        c.expect('|', "between minimum and maximum");
        sig.maximum = c.number<double>("maximum");
        c.expect(']', "after maximum");
    }
    if (c.peek() == '"') {
        auto rest = c.rest();
        const auto end = rest.find('"', 1);
        if (end != std::string_view::npos) sig.unit = std::string(rest.substr(1, end - 1));
    }
    return sig;
}

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace

std::vector<DbcMessage> parse_dbc_min(std::string_view text) {
    std::vector<DbcMessage> out;
    std::size_t lineno = 0;
    std::size_t begin = 0;
    bool in_message = false;
    while (begin <= text.size()) {
        auto end = text.find('\n', begin);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(begin, end - begin);
        begin = end + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        Cursor c(line, lineno);
        if (c.done()) {
            in_message = false;
            if (end == text.size()) break;
            continue;
        }
        const auto head = c.word();
        if (head == "BO_" || head == "B0_") {
            DbcMessage msg;
            auto raw_id = c.number<std::uint64_t>("message id");
            msg.extended = (raw_id & 0x80000000ull) != 0;
            msg.id = std::uint32_t(raw_id & 0x1FFFFFFFull);
            msg.name = std::string(c.word());
            c.expect(':', "after message name");
            msg.dlc = c.number<int>("message dlc");
            if (msg.dlc < 0 || msg.dlc > 8) c.fail("message dlc must be 0..8");
            if (!c.done()) msg.transmitter = std::string(c.word());
            out.push_back(std::move(msg));
            in_message = true;
        } else if (head == "SG_") {
            if (!in_message || out.empty()) c.fail("SG_ outside a BO_ block");
            auto sig = parse_signal(c);
            auto& msg = out.back();
            try {
                (void)signal_bit_positions(sig, msg.dlc);
            } catch (const DomainError& e) {
                throw ParseError(e.what(), lineno, 0);
            }
            if (msg.find(sig.name)) c.fail("duplicate signal name '" + sig.name + "'");
            msg.signals.push_back(std::move(sig));
        } else {
            in_message = false;
        }
        if (end == text.size()) break;
    }
    return out;
}

std::vector<DbcMessage> read_dbc_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open DBC file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_dbc_min(ss.str());
}

std::vector<int> signal_bit_walk(const DbcSignal& signal, int dlc) {
    std::vector<int> bits;
    bits.reserve(std::size_t(signal.length));
    const int limit = dlc * 8;
    int b = signal.start_bit;
    for (int i = 0; i < signal.length; ++i) {
        if (b < 0 || b >= limit)
            throw DomainError("signal '" + signal.name + "' leaves the " + std::to_string(dlc) +
                              "-byte message");
        bits.push_back(b);
        if (signal.byte_order == DbcByteOrder::big_endian)
            b = (b % 8 == 0) ? b + 15 : b - 1;
        else
            b = b + 1;
    }
    if (signal.byte_order == DbcByteOrder::little_endian) std::reverse(bits.begin(), bits.end());
    return bits;
}

std::vector<int> signal_bit_positions(const DbcSignal& signal, int dlc) {
    auto bits = signal_bit_walk(signal, dlc);
    std::sort(bits.begin(), bits.end());
    return bits;
}

void pack_signal(std::span<std::uint8_t> payload, const DbcSignal& signal, std::uint64_t raw) {
    const auto bits = signal_bit_walk(signal, int(payload.size()));
    for (std::size_t i = 0; i < bits.size(); ++i) {
        const int shift = int(bits.size() - 1 - i);
        const bool on = (raw >> shift) & 1u;
        auto& byte = payload[std::size_t(bits[i] / 8)];
        const std::uint8_t mask = std::uint8_t(1u << (bits[i] % 8));
        byte = on ? std::uint8_t(byte | mask) : std::uint8_t(byte & ~mask);
    }
}

std::uint64_t unpack_signal(std::span<const std::uint8_t> payload, const DbcSignal& signal) {
    std::uint64_t raw = 0;
    for (int b : signal_bit_walk(signal, int(payload.size())))
        raw = (raw << 1) | ((payload[std::size_t(b / 8)] >> (b % 8)) & 1u);
    return raw;
}

ChannelOverlap channel_overlap(const ChannelKey& key, const DbcMessage& message,
                               const DbcSignal& signal) {
    if (key.id != message.id)
        throw DomainError("channel " + channel_name(key) + " is not in message " +
                          std::to_string(message.id));
    const int lo = 8 * key.start_byte;
    const int hi = lo + 15;
    ChannelOverlap out;
    for (int b : signal_bit_positions(signal, message.dlc))
        if (b >= lo && b <= hi) ++out.overlap_bits;
    out.signal_coverage = double(out.overlap_bits) / double(signal.length);
    return out;
}

std::vector<ValidationRecord> validate_channels(std::span<const DbcMessage> messages,
                                                std::span<const ChannelKey> channels) {
    std::vector<ValidationRecord> out;
    for (const auto& key : channels) {
        for (const auto& msg : messages) {
            if (msg.id != key.id) continue;
            for (const auto& sig : msg.signals) {
                const auto ov = channel_overlap(key, msg, sig);
                out.push_back({channel_name(key), msg.name, sig.name, ov.overlap_bits,
                               ov.signal_coverage});
            }
        }
    }
    return out;
}

std::string emit_dbc(std::span<const DbcMessage> messages) {
    std::ostringstream os;
    for (const auto& msg : messages) {
        const std::uint64_t id = msg.extended ? (std::uint64_t{msg.id} | 0x80000000ull) : msg.id;
        os << "BO_ " << id << ' ' << msg.name << ": " << msg.dlc << ' '
           << (msg.transmitter.empty() ? "Vector__XXX" : msg.transmitter) << '\n';
        for (const auto& s : msg.signals) {
            os << " SG_ " << s.name << " : " << s.start_bit << '|' << s.length << '@'
               << (s.byte_order == DbcByteOrder::big_endian ? '0' : '1')
               << (s.is_signed ? '-' : '+') << " (" << shortest(s.scale) << ','
               << shortest(s.offset) << ") [" << shortest(s.minimum) << '|'
               << shortest(s.maximum) << "] \"" << s.unit << "\" Vector__XXX\n";
        }
        os << '\n';
    }
    return os.str();
}

} // namespace canreveal

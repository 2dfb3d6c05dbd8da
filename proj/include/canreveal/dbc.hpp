#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "canreveal/can.hpp"

namespace canreveal {

enum class DbcByteOrder { big_endian, little_endian }; // @0, @1

/// One SG_ line. Bit numbering: index b is bit (b % 8) of byte b / 8, with
/// bit 7 the most significant bit of its byte.
struct DbcSignal {
    std::string name;
    int start_bit = 0;
    int length = 1;
    DbcByteOrder byte_order = DbcByteOrder::big_endian;
    bool is_signed = false;
    double scale = 1.0;
    double offset = 0.0;
    double minimum = 0.0;
    double maximum = 0.0;
    std::string unit;
};

struct DbcMessage {
    std::uint32_t id = 0;
    bool extended = false;
    std::string name;
    int dlc = 8;
    std::string transmitter;
    std::vector<DbcSignal> signals;

    const DbcSignal* find(std::string_view signal_name) const;
};

/// Reads BO_ blocks and their SG_ lines; every other line kind is ignored.
/// "B0_" is accepted as a spelling of "BO_".
std::vector<DbcMessage> parse_dbc_min(std::string_view text);
std::vector<DbcMessage> read_dbc_file(const std::string& path);

/// Bits of the signal in significance order, most significant first.
std::vector<int> signal_bit_walk(const DbcSignal& signal, int dlc);

/// Set of bit indices occupied by the signal (ascending). Throws DomainError
/// when the walk leaves a dlc-byte message.
std::vector<int> signal_bit_positions(const DbcSignal& signal, int dlc);

/// Packs an unsigned raw value into the payload at the signal's bits.
void pack_signal(std::span<std::uint8_t> payload, const DbcSignal& signal, std::uint64_t raw);
std::uint64_t unpack_signal(std::span<const std::uint8_t> payload, const DbcSignal& signal);

struct ChannelOverlap {
    int overlap_bits = 0;
    double signal_coverage = 0.0;
};

/// Bits of bytes [k, k+1] against the signal's bits. Byte order of the
/// channel does not matter. Throws DomainError on id mismatch.
ChannelOverlap channel_overlap(const ChannelKey& key, const DbcMessage& message,
                               const DbcSignal& signal);

struct ValidationRecord {
    std::string channel;
    std::string message;
    std::string signal;
    int overlap_bits = 0;
    double coverage = 0.0;
};

/// One record per signal of the message carrying each channel's id.
std::vector<ValidationRecord> validate_channels(std::span<const DbcMessage> messages,
                                                std::span<const ChannelKey> channels);

std::string emit_dbc(std::span<const DbcMessage> messages);

} // namespace canreveal

#include "doctest.h"

#include <filesystem>
#include <random>

#include "canreveal/error.hpp"
#include "canreveal/can.hpp"
#include "canreveal/report.hpp"

using namespace canreveal;

TEST_SUITE("can") {

TEST_CASE("candump line with standard id") {
    const auto f = parse_candump_line("(1690000000.123456) can0 0BE#1122334455667788");
    CHECK(f.id == 190);
    CHECK_FALSE(f.extended);
    CHECK(f.dlc == 8);
    CHECK(f.t == doctest::Approx(1690000000.123456));
    const std::array<std::uint8_t, 8> want{0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88};
    CHECK(f.data == want);
}

TEST_CASE("candump line with extended id") {
    const auto f = parse_candump_line("(1.0) can0 0062401E#ABCD");
    CHECK(f.id == 6438942);
    CHECK(f.extended);
    CHECK(f.dlc == 2);
    CHECK(f.data[0] == 0xAB);
    CHECK(f.data[1] == 0xCD);
}

TEST_CASE("malformed candump lines") {
    CHECK_THROWS_AS(parse_candump_line("can0 190 11 22"), ParseError);
    CHECK_THROWS_AS(parse_candump_line("(1.0) can0 0BE#112233445566778899"), ParseError);
    CHECK_THROWS_AS(parse_candump_line("(1.0) can0 0BE#123"), ParseError);
    CHECK_THROWS_AS(parse_candump_line("(1.0) can0 #1122"), ParseError);
    CHECK_THROWS_AS(parse_candump_line("(x) can0 0BE#1122"), ParseError);
    try {
        parse_candump_line("(1.0) can0 0BE#11ZZ");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.column() > 0);
    }
}

TEST_CASE("format then parse round-trips") {
    std::mt19937 rng(7);
    for (int i = 0; i < 200; ++i) {
        CanFrame f;
        f.t = 1000.0 + i * 0.013;
        f.extended = i % 3 == 0;
        f.id = f.extended ? rng() % (1u << 29) : rng() % (1u << 11);
        f.dlc = static_cast<std::uint8_t>(rng() % 9);
        for (int b = 0; b < f.dlc; ++b) f.data[b] = static_cast<std::uint8_t>(rng());
        const auto g = parse_candump_line(format_candump_line(f));
        CHECK(g == f);
    }
}

TEST_CASE("channel keys per dlc") {
    CHECK(enumerate_channel_keys(190, 8).size() == 14);
    CHECK(enumerate_channel_keys(190, 1).empty());
    CHECK(enumerate_channel_keys(190, 0).empty());
    const auto two = enumerate_channel_keys(190, 2);
    REQUIRE(two.size() == 2);
    CHECK(channel_name(two[0]) == "190_msb_0");
    CHECK(channel_name(two[1]) == "190_lsb_0");
    const auto eight = enumerate_channel_keys(190, 8);
    CHECK(channel_name(eight[6]) == "190_msb_6");
    CHECK(channel_name(eight[13]) == "190_lsb_6");
}

TEST_CASE("decode 16-bit windows") {
    const std::array<std::uint8_t, 2> p{0x01, 0x02};
    CHECK(decode_channel(p, {1, ByteOrder::msb, 0}) == 258);
    CHECK(decode_channel(p, {1, ByteOrder::lsb, 0}) == 513);
    const std::array<std::uint8_t, 8> q{0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88};
    CHECK(decode_channel(q, {1, ByteOrder::msb, 6}) == 30600);
    CHECK_THROWS_AS(decode_channel(p, {1, ByteOrder::msb, 1}), DomainError);
}

TEST_CASE("channel names") {
    CHECK(channel_name({190, ByteOrder::msb, 0}) == "190_msb_0");
    const auto k = parse_channel_name("564_msb_2");
    CHECK(k.id == 564);
    CHECK(k.order == ByteOrder::msb);
    CHECK(k.start_byte == 2);
    CHECK(channel_suffix(k) == "msb_2");
    CHECK_THROWS_AS(parse_channel_name("190_mid_0"), ParseError);
    CHECK_THROWS_AS(parse_channel_name("abc_msb_0"), ParseError);
    CHECK_THROWS_AS(parse_channel_name("190_msb"), ParseError);
    CHECK_THROWS_AS(parse_channel_name("190_msb_x"), ParseError);
}

TEST_CASE("store query is inclusive and sorted") {
    ChannelStore store;
    for (int i = 0; i < 10; ++i) {
        CanFrame f;
        f.t = i;
        f.id = 5;
        f.dlc = 2;
        f.data[0] = 0;
        f.data[1] = static_cast<std::uint8_t>(i);
        store.ingest(f);
    }
    const ChannelKey k{5, ByteOrder::msb, 0};
    const auto q = store.query(k, 2.0, 5.0);
    REQUIRE(q.size() == 4);
    CHECK(q.front().t == 2.0);
    CHECK(q.back().value == 5);
    CHECK(store.keys().size() == 2);
    CHECK(store.query({9, ByteOrder::msb, 0}, 0, 10).empty());

    const auto br = store.query_bracketed(k, 2.5, 4.5);
    REQUIRE(br.size() == 4);
    CHECK(br.front().t == 2.0);
    CHECK(br.back().t == 5.0);
    const auto limited = store.query_bracketed(k, 2.5, 4.5, 4.9);
    CHECK(limited.back().t == 4.0);
}

TEST_CASE("store retention drops old samples behind the floor") {
    ChannelStore store(5.0);
    const ChannelKey k{5, ByteOrder::msb, 0};
    store.set_floor(100.0);
    for (int i = 0; i < 2000; ++i) store.append(k, {i * 0.01, static_cast<std::uint16_t>(i)});
    const auto all = store.query(k, 0, 100);
    REQUIRE_FALSE(all.empty());
    CHECK(all.back().t == doctest::Approx(19.99));
    CHECK(all.front().t >= 19.99 - 5.0 - 3.0);
    CHECK(all.front().t > 0.0);

    ChannelStore pinned(5.0);
    pinned.set_floor(1.0);
    for (int i = 0; i < 2000; ++i) pinned.append(k, {i * 0.01, static_cast<std::uint16_t>(i)});
    CHECK(pinned.query(k, 0, 100).front().t == 0.0);
}

TEST_CASE("store ignores out-of-order frames") {
    ChannelStore store;
    CanFrame f;
    f.id = 1;
    f.dlc = 2;
    f.t = 2.0;
    store.ingest(f);
    f.t = 1.0;
    store.ingest(f);
    CHECK(store.out_of_order_dropped() == 1);
    CHECK(store.sample_count({1, ByteOrder::msb, 0}) == 1);
}

TEST_CASE("log round-trip and lenient reading") {
    const auto dir = std::filesystem::temp_directory_path() / "canreveal_can_test";
    std::filesystem::create_directories(dir);
    std::vector<CanFrame> frames;
    for (int i = 0; i < 5; ++i) {
        CanFrame f;
        f.t = 10 + i * 0.5;
        f.id = 0x123;
        f.dlc = 3;
        f.data = {1, 2, static_cast<std::uint8_t>(i)};
        frames.push_back(f);
    }
    write_can_log(dir / "a.log", frames);
    CHECK(read_can_log(dir / "a.log") == frames);

    write_text_file(dir / "b.log", "(1.0) can0 001#00\ngarbage\n(2.0) can0 001#01\n");
    CHECK_THROWS_AS(read_can_log(dir / "b.log"), ParseError);
    LogReadStats st;
    const auto lenient = read_can_log(dir / "b.log", false, &st);
    CHECK(lenient.size() == 2);
    CHECK(st.skipped == 1);
}

}

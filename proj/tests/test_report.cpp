#include "doctest.h"

#include <sstream>

#include "json.hpp"

#include "canreveal/error.hpp"
#include "canreveal/report.hpp"

using namespace canreveal;

namespace {

SessionResult sample_result() {
    SessionResult res;
    res.vehicle = "Sierra";
    ControlResult acc;
    acc.control = Control::accelerator;
    RankingReport r1{1, 3, 37.2, {{{201, ByteOrder::msb, 4}, 0.6507645}, {{201, ByteOrder::lsb, 4}, -0.6507645}}, {}};
    r1.top = r1.entries[0];
    RankingReport r2{2, 6, 71.0, {{{201, ByteOrder::msb, 4}, 0.93}}, {}};
    r2.top = r2.entries[0];
    acc.rounds = {r1, r2};
    acc.status = DiscoveryStatus::converged;
    acc.winner = ChannelKey{201, ByteOrder::msb, 4};
    acc.windows.resize(7);
    res.controls[Control::accelerator] = acc;

    ControlResult st;
    st.control = Control::steering;
    st.rounds = {RankingReport{1, 3, 50.0, {}, RankingEntry{{700, ByteOrder::msb, 2}, 0.2}}};
    st.status = DiscoveryStatus::not_identified;
    res.controls[Control::steering] = st;

    ControlResult br;
    br.control = Control::brake;
    res.controls[Control::brake] = br;
    return res;
}

} // namespace

TEST_SUITE("report") {

TEST_CASE("report document layout") {
    const auto doc = nlohmann::json::parse(report_to_json(sample_result()));
    CHECK(doc["vehicle"] == "Sierra");
    const auto& acc = doc["controls"]["accelerator"];
    CHECK(acc["status"] == "converged");
    CHECK(acc["winner"] == "201_msb_4");
    CHECK(acc["events_detected"] == 7);
    REQUIRE(acc["rounds"].size() == 2);
    const auto& e0 = acc["rounds"][0]["entries"];
    CHECK(e0[0]["id"] == 201);
    CHECK(e0[0]["channel"] == "msb_4");
    CHECK(e0[1]["correlation"] == doctest::Approx(0.6507645));
    CHECK(acc["rounds"][0]["events_seen"] == 3);

    const auto& st = doc["controls"]["steering"];
    CHECK(st["status"] == "not_identified");
    CHECK(st["winner"] == "N/A");
    CHECK(st["rounds"][0]["entries"][0]["id"] == "N/A");
    CHECK(st["rounds"][0]["entries"][0]["correlation"] == "N/A");

    CHECK(doc["controls"]["brake"]["winner"].is_null());
    CHECK(doc["controls"]["brake"]["status"] == "collecting");
}

TEST_CASE("report summary parses back") {
    const auto s = parse_report(report_to_json(sample_result()));
    CHECK(s.vehicle == "Sierra");
    CHECK(s.controls.at(Control::accelerator).winner == ChannelKey{201, ByteOrder::msb, 4});
    CHECK(s.controls.at(Control::accelerator).rounds == 2);
    CHECK_FALSE(s.controls.at(Control::steering).winner);
    CHECK(s.controls.at(Control::steering).status == DiscoveryStatus::not_identified);
    CHECK_THROWS_AS(parse_report("{"), ParseError);
    CHECK_THROWS_AS(parse_report(R"({"vehicle":"x","controls":{"clutch":{}}})"), ParseError);
}

TEST_CASE("rankings lines") {
    std::istringstream in(rankings_jsonl(sample_result()));
    std::string line;
    std::vector<nlohmann::json> lines;
    while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0]["control"] == "accelerator");
    CHECK(lines[0]["round"] == 1);
    CHECK(lines[1]["channel"] == "lsb_4");
    CHECK(lines[3]["control"] == "steering");
    CHECK(lines[3]["id"] == "N/A");
}

TEST_CASE("tables") {
    const auto t = render_tables(sample_result());
    CHECK(t.find("round 1: 3 events (37 sec)") != std::string::npos);
    CHECK(t.find("201        msb_4    0.6507645") != std::string::npos);
    CHECK(t.find("winner N/A") != std::string::npos);
    CHECK(t.find("N/A        N/A      N/A") != std::string::npos);
}

}

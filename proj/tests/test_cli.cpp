#include "doctest.h"

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "canreveal/error.hpp"
#include "canreveal/report.hpp"
#include "cli.hpp"

using namespace canreveal;
namespace fs = std::filesystem;

namespace {

struct Run {
    int rc;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "canreveal");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {rc, out.str(), err.str()};
}

fs::path workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "canreveal_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

const fs::path fixtures = CANREVEAL_FIXTURES;

} // namespace

TEST_CASE("simulate, infer and validate end to end") {
    const auto dir = workdir() / "drive";
    auto r = run({"simulate", "--preset", "drive", "--seed", "3", "--out", dir.string()});
    REQUIRE(r.rc == 0);
    CHECK(fs::exists(dir / "can.log"));
    CHECK(fs::exists(dir / "imu.csv"));
    CHECK(fs::exists(dir / "truth.dbc"));

    const auto report = dir / "report.json";
    r = run({"infer", "--can", (dir / "can.log").string(), "--imu", (dir / "imu.csv").string(), "--out",
             report.string(), "--rankings", (dir / "rankings.jsonl").string()});
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("Correlation") != std::string::npos);
    const auto summary = load_report(report);
    for (auto c : kAllControls) {
        CHECK(summary.controls.at(c).rounds == 5);
        CHECK(summary.controls.at(c).winner);
    }

    r = run({"validate", "--dbc", (dir / "truth.dbc").string(), "--report", report.string(), "--json"});
    REQUIRE(r.rc == 0);
    const auto arr = nlohmann::json::parse(r.out);
    REQUIRE(arr.size() == 3);
    for (const auto& rec : arr) CHECK(rec["coverage"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("validate against the brake fixture") {
    const auto r = run({"validate", "--dbc", (fixtures / "gm_brake_241.dbc").string(), "--channel", "241_msb_1"});
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("BrakePedalPosition") != std::string::npos);
    CHECK(r.out.find("1.000") != std::string::npos);

    const auto j = run({"validate", "--dbc", (fixtures / "gm_brake_241.dbc").string(), "--channel", "241_msb_1",
                        "--json"});
    REQUIRE(j.rc == 0);
    const auto arr = nlohmann::json::parse(j.out);
    bool found = false;
    for (const auto& rec : arr)
        if (rec["signal"] == "BrakePedalPosition") {
            found = true;
            CHECK(rec["coverage"].get<double>() == doctest::Approx(1.0));
            CHECK(rec["overlap_bits"] == 8);
        }
    CHECK(found);
}

TEST_CASE("usage and configuration errors exit with 2") {
    CHECK(run({"--help"}).rc == 0);
    CHECK(run({}).rc == 2);
    CHECK(run({"frobnicate"}).rc == 2);
    CHECK(run({"infer", "--can", "/nonexistent.log", "--imu", "/nonexistent.csv", "--out", "x.json"}).rc == 2);
    CHECK(run({"validate", "--dbc", (fixtures / "gm_brake_241.dbc").string()}).rc == 2);
    CHECK(run({"validate", "--dbc", (fixtures / "gm_brake_241.dbc").string(), "--channel", "241_mid_1"}).rc == 2);

    const auto dir = workdir() / "badcfg";
    fs::create_directories(dir);
    write_text_file(dir / "config.json", R"({"events_per_round": 0})");
    run({"simulate", "--preset", "drive", "--seed", "1", "--events", "3", "--out", dir.string()});
    const auto r = run({"infer", "--can", (dir / "can.log").string(), "--imu", (dir / "imu.csv").string(), "--out",
                        (dir / "r.json").string(), "--config", (dir / "config.json").string()});
    CHECK(r.rc == 2);
    CHECK(r.err.find("config error") != std::string::npos);
}

TEST_CASE("a negative recording reports steering as not identified") {
    const auto dir = workdir() / "negative";
    REQUIRE(run({"simulate", "--preset", "negative", "--seed", "4", "--out", dir.string()}).rc == 0);
    const auto report = dir / "report.json";
    REQUIRE(run({"infer", "--can", (dir / "can.log").string(), "--imu", (dir / "imu.csv").string(), "--out",
                 report.string(), "--quiet"})
                .rc == 0);
    const auto summary = load_report(report);
    CHECK(summary.controls.at(Control::steering).status == DiscoveryStatus::not_identified);
    CHECK_FALSE(summary.controls.at(Control::steering).winner);
    CHECK(read_text_file(report).find("\"N/A\"") != std::string::npos);
}

TEST_CASE("calibrate writes a profile that infer accepts") {
    const auto dir = workdir() / "calib";
    REQUIRE(run({"simulate", "--preset", "calibration", "--seed", "5", "--out", dir.string()}).rc == 0);
    const auto profile = dir / "profile.json";
    const auto r = run({"calibrate", "--can", (dir / "can.log").string(), "--annotations",
                        (dir / "annotations.json").string(), "--vehicle", "sim", "--out", profile.string()});
    REQUIRE(r.rc == 0);
    const auto j = nlohmann::json::parse(read_text_file(profile));
    CHECK(j["vehicle"] == "sim");
    CHECK(j["controls"].contains("brake"));

    const auto drive = workdir() / "calib_drive";
    REQUIRE(run({"simulate", "--preset", "drive", "--seed", "5", "--events", "6", "--out", drive.string()}).rc == 0);
    const auto report = drive / "report.json";
    REQUIRE(run({"infer", "--can", (drive / "can.log").string(), "--imu", (drive / "imu.csv").string(), "--out",
                 report.string(), "--profile", profile.string(), "--quiet"})
                .rc == 0);
    const auto summary = load_report(report);
    CHECK(summary.vehicle == "sim");
    CHECK(summary.controls.at(Control::brake).winner);
}

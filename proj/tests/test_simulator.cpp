#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "canreveal/error.hpp"
#include "canreveal/events.hpp"
#include "canreveal/report.hpp"
#include "canreveal/simulator.hpp"

using namespace canreveal;

namespace {

// Raised-cosine pulse with 0.4 s edges, written out independently of the generator.
double pulse(double u, double hold) {
    if (u < 0 || u >= hold) return 0.0;
    const double r = std::min(0.4, hold / 2);
    const double x = std::min({1.0, u / r, (hold - u) / r});
    return 0.5 - 0.5 * std::cos(M_PI * x);
}

Scenario accel_only(std::size_t n, double magnitude, double hold) {
    Scenario sc;
    sc.seed = 21;
    sc.stationary_lead = 5.0;
    double t = 6.0;
    for (std::size_t i = 0; i < n; ++i) {
        sc.maneuvers.push_back({ManeuverKind::accelerate, t, magnitude, hold});
        t += 12.0;
    }
    sc.duration = t + 3;
    return sc;
}

} // namespace

TEST_SUITE("simulator") {

TEST_CASE("same seed gives byte-identical logs") {
    const auto file = make_drive_scenario({7, 6, true, false});
    const auto a = simulate(file.scenario, file.truth, file.dynamics);
    const auto b = simulate(file.scenario, file.truth, file.dynamics);
    const auto dir = std::filesystem::temp_directory_path() / "canreveal_sim_test";
    write_simulation(a, dir / "a");
    write_simulation(b, dir / "b");
    for (const char* f : {"can.log", "imu.csv", "truth.dbc", "annotations.json"})
        CHECK(read_text_file(dir / "a" / f) == read_text_file(dir / "b" / f));

    auto other = file;
    other.scenario.seed = 8;
    const auto c = simulate(other.scenario, other.truth, other.dynamics);
    CHECK(c.imu.front().accel != a.imu.front().accel);
}

TEST_CASE("fifteen accelerations are detected as fifteen events") {
    const auto sc = accel_only(15, 0.6, 3.0);
    const auto sim = simulate(sc, GroundTruthMap::defaults(), DynamicsConfig{});
    const auto conditioned = debias_smooth(sim.imu, 3.0, 0.25);
    const auto ref = reference(Control::accelerator, conditioned, AxisMap{});
    CHECK(detect(ref, DetectorConfig::defaults_for(Control::accelerator)).size() == 15);
}

TEST_CASE("accelerator channel decodes to the pedal position") {
    const auto sc = accel_only(4, 0.6, 3.0);
    const auto sim = simulate(sc, GroundTruthMap::defaults(), DynamicsConfig{});
    const ChannelKey key{201, ByteOrder::msb, 4};
    std::size_t n = 0;
    for (const auto& f : sim.can) {
        if (f.id != 201) continue;
        double pedal = 0;
        for (const auto& m : sc.maneuvers) pedal += m.magnitude * pulse(f.t - m.t_start, m.hold);
        CHECK(decode_channel(f.payload(), key) == static_cast<int>(std::lround(1000 * pedal)));
        ++n;
    }
    CHECK(n > 1000);
}

TEST_CASE("steering channel carries the signed wheel position") {
    Scenario sc;
    sc.duration = 20;
    sc.maneuvers = {{ManeuverKind::calibrate_steering, 6, -0.5, 4}, {ManeuverKind::calibrate_steering, 12, 1.0, 4}};
    const auto sim = simulate(sc, GroundTruthMap::defaults(), DynamicsConfig{});
    for (const auto& f : sim.can) {
        if (f.id != 564) continue;
        const int v = decode_channel(f.payload(), {564, ByteOrder::msb, 2});
        if (f.t > 7 && f.t < 9) CHECK(v == 32768 - 500);
        if (f.t > 13 && f.t < 15) CHECK(v == 32768 + 1000);
        if (f.t < 5) CHECK(v == 32768);
    }
}

TEST_CASE("truth DBC text") {
    const auto text = emit_truth_dbc(GroundTruthMap::defaults());
    CHECK(text.find("SG_ BrakePedalPosition : 15|8@0+") != std::string::npos);
    CHECK(emit_truth_dbc(GroundTruthMap{}).empty());

    GroundTruthMap two;
    TruthSignal a;
    a.name = "A";
    a.message_id = 300;
    a.message_name = "Pair";
    a.start_bit = 7;
    a.length = 8;
    TruthSignal b = a;
    b.name = "B";
    b.control = Control::brake;
    b.start_bit = 15;
    two.signals = {a, b};
    const auto t2 = emit_truth_dbc(two);
    std::size_t bo = 0, sg = 0;
    for (std::size_t p = 0; (p = t2.find("BO_ ", p)) != std::string::npos; ++p) ++bo;
    for (std::size_t p = 0; (p = t2.find("SG_ ", p)) != std::string::npos; ++p) ++sg;
    CHECK(bo == 1);
    CHECK(sg == 2);
    CHECK(parse_dbc_min(t2).at(0).signals.size() == 2);
}

TEST_CASE("infeasible scenarios are rejected") {
    Scenario sc;
    sc.duration = 30;
    sc.maneuvers = {{ManeuverKind::accelerate, 6, 0.5, 3}, {ManeuverKind::accelerate, 8, 0.5, 3}};
    CHECK_THROWS_AS(sc.validate(), ScenarioError);
    sc.maneuvers = {{ManeuverKind::accelerate, 6, 0.5, 3}, {ManeuverKind::brake, 8, 0.5, 3}};
    CHECK_NOTHROW(sc.validate());
    sc.maneuvers = {{ManeuverKind::accelerate, 2, 0.5, 3}};
    CHECK_THROWS_AS(sc.validate(), ScenarioError);
    sc.maneuvers = {{ManeuverKind::accelerate, 28, 0.5, 3}};
    CHECK_THROWS_AS(sc.validate(), ScenarioError);
    sc.maneuvers = {{ManeuverKind::brake, 10, 1.5, 3}};
    CHECK_THROWS_AS(sc.validate(), ScenarioError);
    sc.maneuvers = {{ManeuverKind::calibrate_steering, 10, -0.5, 3}};
    CHECK_NOTHROW(sc.validate());
    Scenario empty;
    empty.duration = -1.0;
    CHECK_THROWS_AS(simulate(empty, GroundTruthMap::defaults(), DynamicsConfig{}), ScenarioError);
}

TEST_CASE("scenario JSON round-trip") {
    const auto file = make_drive_scenario({3, 6, false, true});
    const auto back = scenario_from_json(scenario_to_json(file));
    CHECK(scenario_to_json(back) == scenario_to_json(file));
    CHECK(back.truth.find(Control::steering) == nullptr);
    CHECK_THROWS_AS(scenario_from_json("{\"duration\": \"long\"}"), ConfigError);
    CHECK_THROWS_AS(scenario_from_json("not json"), ConfigError);
}

TEST_CASE("annotations and prompt times") {
    const auto file = make_calibration_scenario(1);
    const auto sim = simulate(file.scenario, file.truth, file.dynamics);
    CHECK(sim.annotations.size() == 21);
    const auto back = annotations_from_json(annotations_to_json(sim.annotations));
    REQUIRE(back.size() == sim.annotations.size());
    CHECK(back[3].kind == sim.annotations[3].kind);
    CHECK(back[3].t_start == sim.annotations[3].t_start);
    const auto t = prompt_times_for(sim.annotations, Control::brake);
    REQUIRE(t.size() == 7);
    CHECK(std::is_sorted(t.begin(), t.end()));
    CHECK(t[1] - t[0] == doctest::Approx(3.0));
}

TEST_CASE("drive preset has the requested events per control") {
    const auto file = make_drive_scenario({2, 15, true, false});
    std::map<Control, int> n;
    for (const auto& m : file.scenario.maneuvers) ++n[maneuver_control(m.kind)];
    CHECK(n[Control::accelerator] == 15);
    CHECK(n[Control::brake] == 15);
    CHECK(n[Control::steering] == 15);
    CHECK_NOTHROW(file.scenario.validate());
}

}

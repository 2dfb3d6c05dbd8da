#include "doctest.h"

#include <filesystem>

#include "canreveal/error.hpp"
#include "canreveal/calibration.hpp"
#include "canreveal/report.hpp"
#include "canreveal/simulator.hpp"

using namespace canreveal;

namespace {

PromptSchedule staircase() {
    PromptSchedule s;
    s.control = Control::accelerator;
    s.engine_state = EngineState::off;
    s.steps = {{0, 3}, {0.5, 3}, {1.0, 3}, {0, 3}};
    return s;
}

struct CalRun {
    SimulationOutput sim;
    ChannelStore store{1e9};
    explicit CalRun(ScenarioFile file) : sim(simulate(file.scenario, file.truth, file.dynamics)) {
        for (const auto& f : sim.can) store.ingest(f);
    }
};

} // namespace

TEST_SUITE("calibration") {

TEST_CASE("staircase template") {
    const auto tmpl = calibration_template(staircase(), 0.0, 20.0);
    REQUIRE(tmpl.samples.size() == 240);
    for (const auto& s : tmpl.samples) {
        const double want = s.t < 3 ? 0.0 : s.t < 6 ? 0.5 : s.t < 9 ? 1.0 : 0.0;
        CHECK(s.value == want);
    }
    PromptSchedule one = staircase();
    one.steps = {{1.0, 5}};
    const auto flat = calibration_template(one, 0.0, 10.0);
    CHECK(flat.samples.size() == 50);
    CHECK(flat.samples.front().t == 0.0);
    CHECK(flat.samples.back().t < 5.0);
    for (const auto& s : flat.samples) CHECK(s.value == 1.0);

    one.steps.clear();
    CHECK_THROWS_AS(one.validate(), ConfigError);
}

TEST_CASE("template follows acknowledged prompt times") {
    const std::vector<double> prompts{10.0, 14.0, 20.0, 23.5};
    const auto tmpl = calibration_template(staircase(), prompts, 20.0);
    CHECK(tmpl.samples.front().t == 10.0);
    CHECK(tmpl.samples.back().t < 26.5);
    for (const auto& s : tmpl.samples) {
        const double want = s.t < 14 ? 0.0 : s.t < 20 ? 0.5 : s.t < 23.5 ? 1.0 : 0.0;
        CHECK(s.value == want);
    }
    const std::vector<double> wrong{10.0, 14.0};
    CHECK_THROWS_AS(calibration_template(staircase(), wrong), ConfigError);
}

TEST_CASE("schedule validation") {
    for (auto c : kAllControls) CHECK_NOTHROW(PromptSchedule::defaults_for(c).validate());
    auto s = PromptSchedule::defaults_for(Control::accelerator);
    s.engine_state = EngineState::running;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = PromptSchedule::defaults_for(Control::brake);
    s.steps[0].level = -0.5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = PromptSchedule::defaults_for(Control::steering);
    s.steps[0].hold = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK(PromptSchedule::defaults_for(Control::accelerator).duration() == 21.0);
}

TEST_CASE("affine channel is retained with its plateau range") {
    auto file = make_calibration_scenario(4);
    for (auto& sig : file.truth.signals)
        if (sig.control == Control::accelerator) {
            sig.scale = 200;
            sig.offset = 50;
        }
    CalRun run(file);
    const auto times = prompt_times_for(run.sim.annotations, Control::accelerator);
    REQUIRE(times.size() == 7);
    const auto p = calibrate({run.store, times}, PromptSchedule::defaults_for(Control::accelerator));
    const auto* truth = file.truth.find(Control::accelerator);
    const ChannelKey key{truth->message_id, ByteOrder::msb, 4};
    const auto* c = p.find(key);
    REQUIRE(c);
    CHECK(std::abs(c->r) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(c->min_value == 50);
    CHECK(c->max_value == 250);
    // Values below 256 make the swapped window an exact multiple too, so the two tie.
    CHECK(std::abs(p.candidates.front().r) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("counter and constant channels are excluded") {
    CalRun run(make_calibration_scenario(5));
    for (auto c : kAllControls) {
        const auto p = calibrate({run.store, prompt_times_for(run.sim.annotations, c)},
                                 PromptSchedule::defaults_for(c));
        CHECK_FALSE(p.candidates.empty());
        for (const auto& cand : p.candidates) {
            CHECK(cand.key.id != 1001);
            CHECK(cand.key.id != 501);
            CHECK(std::abs(cand.r) >= 0.7);
        }
    }
}

TEST_CASE("a recording with nothing correlated gives an empty profile") {
    ChannelStore store;
    for (int i = 0; i < 3000; ++i) {
        store.append({1, ByteOrder::msb, 0}, {i * 0.01, 7});
        store.append({2, ByteOrder::msb, 0}, {i * 0.01, static_cast<std::uint16_t>(i)});
    }
    const std::vector<double> t0{1.0};
    const auto p = calibrate({store, t0}, staircase());
    CHECK(p.candidates.empty());
    CHECK(p.mask().allowed->empty());
}

TEST_CASE("profile save and load") {
    VehicleProfile vp;
    vp.vehicle = "test car";
    vp.created = "2026-01-01T00:00:00Z";
    CalibrationProfile a;
    a.control = Control::brake;
    a.candidates = {{{241, ByteOrder::msb, 1}, 0.99, 10, 250}, {{241, ByteOrder::lsb, 0}, -0.8, 0, 65535}};
    a.chosen = a.candidates[0].key;
    vp.controls[Control::brake] = a;
    vp.controls[Control::steering] = CalibrationProfile{Control::steering, {}, std::nullopt};

    const auto dir = std::filesystem::temp_directory_path() / "canreveal_profile_test";
    std::filesystem::create_directories(dir);
    save_profile(vp, dir / "p.json");
    CHECK(load_profile(dir / "p.json") == vp);

    auto text = profile_to_json(vp);
    const auto pos = text.find("\"brake\"");
    text.replace(pos, 7, "\"clutch\"");
    CHECK_THROWS_WITH_AS(profile_from_json(text), doctest::Contains("unknown control"), ParseError);

    write_text_file(dir / "empty.json", "");
    CHECK_THROWS_AS(load_profile(dir / "empty.json"), ParseError);
    CHECK_THROWS_WITH_AS(profile_from_json(R"({"schema_version":2,"vehicle":"x","created":"","controls":{}})"),
                         doctest::Contains("schema_version"), ParseError);
    CHECK_THROWS_WITH_AS(profile_from_json(R"({"schema_version":1,"created":"","controls":{}})"),
                         doctest::Contains("vehicle"), ParseError);
}

TEST_CASE("wizard advances only on matching acknowledgements") {
    CalibrationWizard w(staircase());
    REQUIRE(w.current());
    CHECK(w.current()->step == 0);
    CHECK(w.current()->steps_total == 4);
    CHECK_THROWS_AS(w.acknowledge(1, 1.0), DomainError);
    w.acknowledge(0, 1.0);
    CHECK(w.current()->step == 1);
    CHECK(w.current()->level == 0.5);
    CHECK(w.current()->hold == 3.0);
    CHECK_THROWS_AS(w.acknowledge(1, 0.5), DomainError);
    w.acknowledge(1, 4.0);
    w.acknowledge(2, 7.0);
    CHECK_THROWS_AS(w.end_time(), DomainError);
    w.acknowledge(3, 10.0);
    CHECK(w.done());
    CHECK_FALSE(w.current());
    CHECK(w.end_time() == 13.0);
    CHECK(w.prompt_times() == std::vector<double>{1, 4, 7, 10});

    CalibrationWizard aborted(staircase());
    aborted.acknowledge(0, 1.0);
    aborted.abort();
    CHECK_FALSE(aborted.current());
    CHECK_THROWS_AS(aborted.acknowledge(1, 2.0), DomainError);
}

}

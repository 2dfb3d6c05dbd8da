#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "canreveal/calibration.hpp"
#include "canreveal/dbc.hpp"
#include "canreveal/gateway.hpp"
#include "canreveal/quadrants.hpp"
#include "canreveal/report.hpp"
#include "canreveal/session.hpp"
#include "canreveal/simulator.hpp"

namespace canreveal {

namespace {

namespace fs = std::filesystem;

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

struct SignalScope {
    SignalScope() {
        g_interrupted = false;
        prev_int_ = std::signal(SIGINT, on_signal);
        prev_term_ = std::signal(SIGTERM, on_signal);
    }
    ~SignalScope() {
        std::signal(SIGINT, prev_int_);
        std::signal(SIGTERM, prev_term_);
    }
    SignalScope(const SignalScope&) = delete;
    SignalScope& operator=(const SignalScope&) = delete;

private:
    void (*prev_int_)(int);
    void (*prev_term_)(int);
};

/// Calls `stop` if an interrupt arrives before the scope ends.
class InterruptWatch {
public:
    explicit InterruptWatch(std::function<void()> stop)
        : thread_([this, stop = std::move(stop)] {
              std::unique_lock lk(mu_);
              while (!done_) {
                  if (g_interrupted) {
                      stop();
                      return;
                  }
                  cv_.wait_for(lk, std::chrono::milliseconds(50));
              }
          }) {}
    ~InterruptWatch() {
        {
            std::lock_guard lk(mu_);
            done_ = true;
        }
        cv_.notify_all();
        thread_.join();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    bool done_ = false;
    std::thread thread_;
};

/// Anything wrong with a user-supplied configuration input is a config error.
template <typename F>
auto as_config(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Inputs {
    std::vector<CanFrame> frames;
    std::vector<ImuSample> imu;
};

Inputs read_inputs(const std::string& can, const std::string& imu, bool strict, std::ostream& err) {
    Inputs in;
    LogReadStats cs, is;
    in.frames = read_can_log(can, strict, &cs);
    in.imu = read_imu_log(imu, strict, &is);
    if (cs.skipped) err << "warning: skipped " << cs.skipped << " malformed CAN records\n";
    if (is.skipped) err << "warning: skipped " << is.skipped << " malformed IMU records\n";
    return in;
}

SessionConfig session_config(const std::string& path) {
    if (path.empty()) return {};
    return load_session_config(path);
}

/// Loads the profile named by the flag or the config. A profile also names the
/// vehicle unless one was set explicitly.
std::optional<VehicleProfile> session_profile(SessionConfig& cfg, const std::string& flag) {
    const std::string path = flag.empty() ? cfg.profile : flag;
    if (path.empty()) return std::nullopt;
    auto p = as_config([&] { return load_profile(path); });
    if (cfg.vehicle == SessionConfig{}.vehicle && !p.vehicle.empty()) cfg.vehicle = p.vehicle;
    return p;
}

// simulate --------------------------------------------------------------------

struct SimulateArgs {
    std::string scenario;
    std::string preset = "drive";
    std::uint64_t seed = 1;
    std::size_t events = 15;
    bool no_steering = false;
    bool full_brake = false;
    std::string out;
    std::string write_scenario;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    ScenarioFile sf = as_config([&] {
        if (!a.scenario.empty()) return load_scenario(a.scenario);
        if (a.preset == "calibration") return make_calibration_scenario(a.seed);
        DriveOptions o;
        o.seed = a.seed;
        o.events_per_control = a.events;
        o.include_steering_signal = !(a.no_steering || a.preset == "negative");
        o.final_full_brake = a.full_brake;
        return make_drive_scenario(o);
    });
    if (!a.write_scenario.empty()) write_text_file(a.write_scenario, scenario_to_json(sf));
    const auto sim = as_config([&] { return simulate(sf.scenario, sf.truth, sf.dynamics); });
    write_simulation(sim, a.out);
    out << "wrote " << sim.can.size() << " CAN frames, " << sim.imu.size() << " IMU samples, "
        << sim.annotations.size() << " maneuvers to " << a.out << "\n";
    return 0;
}

// infer -----------------------------------------------------------------------

struct InferArgs {
    std::string can, imu, out, config, profile, rankings, quadrants, calib_can, calib_annotations, vehicle;
    bool lenient = false;
    bool quiet = false;
};

std::optional<ChannelKey> quadrant_channel(const ControlResult& r, const std::optional<VehicleProfile>& profile) {
    if (r.winner) return r.winner;
    if (profile) {
        auto it = profile->controls.find(r.control);
        if (it != profile->controls.end()) {
            if (it->second.chosen) return it->second.chosen;
            if (!it->second.candidates.empty()) return it->second.candidates.front().key;
        }
    }
    return std::nullopt;
}

void export_all_quadrants(const InferArgs& a, const SessionConfig& cfg, const Inputs& in,
                          const SessionResult& result, const std::optional<VehicleProfile>& profile,
                          std::ostream& out) {
    ChannelStore drive(std::numeric_limits<double>::infinity());
    for (const auto& f : in.frames) drive.ingest(f);
    const auto conditioned = debias_smooth(in.imu, cfg.bias_window, cfg.smooth_window);

    std::optional<ChannelStore> cal_store;
    std::vector<Annotation> annotations;
    if (!a.calib_can.empty()) {
        cal_store.emplace(std::numeric_limits<double>::infinity());
        for (const auto& f : read_can_log(a.calib_can, cfg.strict)) cal_store->ingest(f);
        if (!a.calib_annotations.empty()) annotations = load_annotations(a.calib_annotations);
    }

    fs::create_directories(a.quadrants);
    for (const auto& [c, r] : result.controls) {
        const auto key = quadrant_channel(r, profile);
        if (!key) {
            out << "quadrants: no channel for " << to_string(c) << ", skipped\n";
            continue;
        }
        const auto ref = reference(c, conditioned, cfg.axes, cfg.steering_source);
        QuadrantInputs qi{*key, c, drive, r.windows, ref.samples, std::nullopt, cfg.rate};
        if (cal_store) {
            auto times = prompt_times_for(annotations, c);
            qi.calibration.emplace(CalibrationCapture{*cal_store, PromptSchedule::defaults_for(c), std::move(times)});
        }
        const auto doc = export_quadrants(qi);
        const auto path = fs::path(a.quadrants) / (std::string(to_string(c)) + "_" + channel_name(*key) + ".json");
        write_text_file(path, quadrants_to_json(doc));
        out << "quadrants: wrote " << path.string() << "\n";
    }
}

int cmd_infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
    SessionConfig cfg = as_config([&] { return session_config(a.config); });
    if (a.lenient) cfg.strict = false;
    if (!a.vehicle.empty()) cfg.vehicle = a.vehicle;
    cfg.speed = 0.0;
    const auto profile = session_profile(cfg, a.profile);
    const Inputs in = read_inputs(a.can, a.imu, cfg.strict, err);

    Session session(cfg, profile);
    const auto result = session.run(in.frames, in.imu);
    write_text_file(a.out, report_to_json(result));
    if (!a.rankings.empty()) write_text_file(a.rankings, rankings_jsonl(result));
    if (!a.quiet) out << render_tables(result);
    if (!a.quadrants.empty()) export_all_quadrants(a, cfg, in, result, profile, out);
    return 0;
}

// replay ----------------------------------------------------------------------

struct ReplayArgs {
    std::string can, imu, out, config, profile, vehicle;
    double speed = -1.0; ///< unset: config value, else 1.0
    int serve = -1;
    bool wait_client = false;
    bool lenient = false;
};

int cmd_replay(const ReplayArgs& a, std::ostream& out, std::ostream& err) {
    SessionConfig cfg = as_config([&] { return session_config(a.config); });
    if (a.lenient) cfg.strict = false;
    if (!a.vehicle.empty()) cfg.vehicle = a.vehicle;
    if (a.speed >= 0)
        cfg.speed = a.speed;
    else if (a.config.empty())
        cfg.speed = 1.0;
    as_config([&] { cfg.validate(); return 0; });
    const auto profile = session_profile(cfg, a.profile);
    const Inputs in = read_inputs(a.can, a.imu, cfg.strict, err);

    SignalScope signals;
    Session session(cfg, profile);
    std::optional<Gateway> gateway;
    if (a.serve >= 0) {
        GatewayOptions go;
        go.port = a.serve;
        gateway.emplace(go);
        gateway->state().set_vehicle(cfg.vehicle);
        gateway->state().set_profile(profile);
        gateway->set_clock([&session] { return std::max(0.0, session.now()); });
        gateway->start();
        gateway->attach(session.bus());
        out << "gateway listening on port " << gateway->port() << std::endl;
        if (a.wait_client) {
            out << "waiting for a client" << std::endl;
            while (!gateway->wait_for_clients(1, std::chrono::milliseconds(100)))
                if (g_interrupted) return 1;
        }
    }

    std::vector<std::string> names;
    for (auto c : kAllControls) names.push_back(topics::ranking(c));
    auto rounds = session.bus().subscribe(names);
    std::thread printer([&] {
        while (auto m = rounds->pop()) {
            const auto& r = std::get<RoundPublished>(*m->payload);
            out << to_string(r.control) << " round " << r.report.round << " (" << r.report.events_seen
                << " events, " << std::fixed << std::setprecision(1) << r.report.elapsed_s << " s): "
                << (r.report.top ? channel_name(r.report.top->key) : std::string("N/A")) << " -> "
                << to_string(r.status.status) << std::endl;
        }
    });

    SessionResult result;
    {
        InterruptWatch watch([&session] { session.stop(); });
        try {
            result = session.run(in.frames, in.imu);
        } catch (...) {
            printer.join();
            throw;
        }
    }
    printer.join();
    const double source = std::max(0.0, session.now() - result.rec_start);
    out << "replayed " << std::fixed << std::setprecision(3) << source << " s of data in "
        << session.wall_elapsed() << " s wall at speed " << cfg.speed << "\n";
    if (!a.out.empty()) write_text_file(a.out, report_to_json(result));
    out << render_tables(result);
    if (gateway) gateway->stop();
    return g_interrupted ? 1 : 0;
}

// calibrate -------------------------------------------------------------------

struct CalibrateArgs {
    std::string can, annotations, vehicle = "unknown", out, created;
    std::vector<std::string> controls;
    int serve = -1;
    double speed = 1.0;
    bool lenient = false;
};

std::vector<Control> selected_controls(const std::vector<std::string>& names) {
    if (names.empty()) return {kAllControls.begin(), kAllControls.end()};
    std::vector<Control> out;
    for (const auto& n : names) out.push_back(as_config([&] { return parse_control(n); }));
    return out;
}

void report_profile(const CalibrationProfile& p, std::ostream& out) {
    out << to_string(p.control) << ": " << p.candidates.size() << " candidates";
    if (p.chosen) out << ", chosen " << channel_name(*p.chosen);
    out << "\n";
    for (const auto& c : p.candidates)
        out << "  " << channel_name(c.key) << "  r=" << std::fixed << std::setprecision(4) << c.r
            << "  min=" << c.min_value << "  max=" << c.max_value << "\n";
}

CalibrationProfile finish_profile(CalibrationProfile p, std::ostream& err) {
    if (p.candidates.empty())
        err << "warning: no channel reached the retention threshold for " << to_string(p.control)
            << "; inference will fall back to the liveliness mask\n";
    else
        p.chosen = p.candidates.front().key;
    return p;
}

/// Wizard over a paced replay of a calibration recording: each prompt waits
/// for an acknowledgement, whose replay time becomes the step's start.
VehicleProfile run_wizard(const CalibrateArgs& a, const std::vector<CanFrame>& frames,
                          const std::vector<Control>& controls, std::ostream& out, std::ostream& err) {
    ChannelStore store(std::numeric_limits<double>::infinity());
    ReplayClock clock(a.speed);
    GatewayOptions go;
    go.port = a.serve;
    Gateway gateway(go);
    gateway.state().set_vehicle(a.vehicle);
    gateway.set_clock([&clock] { return std::max(0.0, clock.t_now()); });

    std::mutex mu;
    std::condition_variable cv;
    CalibrationWizard* active = nullptr;
    bool replay_done = false;
    gateway.set_ack_handler([&](Control c, std::size_t step) {
        std::lock_guard lk(mu);
        if (active && active->schedule().control == c) {
            try {
                active->acknowledge(step, clock.t_now());
            } catch (const DomainError&) {
            }
        }
        cv.notify_all();
    });
    gateway.start();
    out << "gateway listening on port " << gateway.port() << std::endl;
    while (!gateway.wait_for_clients(1, std::chrono::milliseconds(100)))
        if (g_interrupted) throw Error("interrupted");

    std::thread replay([&] {
        for (const auto& f : frames) {
            if (!clock.advance_to(f.t)) break;
            store.ingest(f);
            cv.notify_all();
        }
        store.close();
        std::lock_guard lk(mu);
        replay_done = true;
        cv.notify_all();
    });
    InterruptWatch watch([&] {
        clock.stop();
        cv.notify_all();
    });

    VehicleProfile profile;
    profile.vehicle = a.vehicle;
    profile.created = a.created.empty() ? utc_now() : a.created;
    try {
        for (auto c : controls) {
            CalibrationWizard wizard(PromptSchedule::defaults_for(c));
            {
                std::lock_guard lk(mu);
                active = &wizard;
            }
            while (!wizard.done()) {
                const auto p = *wizard.current();
                gateway.broadcast(gateway.state().prompt(p, wizard.schedule().engine_state, clock.t_now()));
                std::unique_lock lk(mu);
                cv.wait(lk, [&] { return wizard.prompt_times().size() > p.step || replay_done || g_interrupted; });
                if (wizard.prompt_times().size() <= p.step)
                    throw Error("calibration stopped before " + std::string(to_string(c)) + " step " +
                                std::to_string(p.step) + " was acknowledged");
                // Hold for the prompted duration on the recording clock.
                const double until = wizard.prompt_times().back() + p.hold;
                cv.wait(lk, [&] { return clock.t_now() >= until || replay_done || g_interrupted; });
                if (clock.t_now() < until) throw Error("recording ended during a calibration hold");
            }
            {
                std::lock_guard lk(mu);
                active = nullptr;
            }
            gateway.state().clear_prompt();
            auto p = calibrate({store, wizard.prompt_times()}, wizard.schedule());
            profile.controls[c] = finish_profile(std::move(p), err);
            report_profile(profile.controls[c], out);
        }
    } catch (...) {
        clock.stop();
        replay.join();
        gateway.stop();
        throw;
    }
    clock.stop();
    replay.join();
    gateway.stop();
    return profile;
}

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream& err) {
    const auto controls = selected_controls(a.controls);
    LogReadStats stats;
    const auto frames = read_can_log(a.can, !a.lenient, &stats);
    if (stats.skipped) err << "warning: skipped " << stats.skipped << " malformed CAN records\n";

    VehicleProfile profile;
    if (a.serve >= 0) {
        SignalScope signals;
        profile = run_wizard(a, frames, controls, out, err);
    } else {
        if (a.annotations.empty()) throw ConfigError("calibrate needs --annotations or --serve");
        const auto annotations = load_annotations(a.annotations);
        ChannelStore store(std::numeric_limits<double>::infinity());
        for (const auto& f : frames) store.ingest(f);
        profile.vehicle = a.vehicle;
        profile.created = a.created.empty() ? utc_now() : a.created;
        for (auto c : controls) {
            const auto schedule = PromptSchedule::defaults_for(c);
            const auto times = prompt_times_for(annotations, c);
            if (times.empty()) {
                err << "warning: no calibration prompts for " << to_string(c) << " in the annotations\n";
                continue;
            }
            if (times.size() != schedule.steps.size() && times.size() != 1)
                throw Error("annotations hold " + std::to_string(times.size()) + " prompts for " +
                            std::string(to_string(c)) + ", the schedule has " +
                            std::to_string(schedule.steps.size()));
            profile.controls[c] = finish_profile(calibrate({store, times}, schedule), err);
            report_profile(profile.controls[c], out);
        }
    }
    save_profile(profile, a.out);
    out << "wrote profile " << a.out << "\n";
    return 0;
}

// validate --------------------------------------------------------------------

struct ValidateArgs {
    std::string dbc, report;
    std::vector<std::string> channels;
    bool json = false;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
    std::vector<ChannelKey> keys;
    for (const auto& c : a.channels) keys.push_back(as_config([&] { return parse_channel_name(c); }));
    if (!a.report.empty())
        for (const auto& [c, rc] : load_report(a.report).controls)
            if (rc.winner) keys.push_back(*rc.winner);
    if (keys.empty()) throw ConfigError("validate needs --channel or a --report with winners");
    const auto messages = read_dbc_file(a.dbc);
    const auto records = validate_channels(messages, keys);

    if (a.json) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : records)
            arr.push_back({{"channel", r.channel},
                           {"message", r.message},
                           {"signal", r.signal},
                           {"overlap_bits", r.overlap_bits},
                           {"coverage", r.coverage}});
        out << arr.dump(2) << "\n";
        return 0;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-14s %-28s %-28s %8s %9s\n", "channel", "message", "signal",
                  "overlap", "coverage");
    out << buf;
    for (const auto& k : keys) {
        const auto name = channel_name(k);
        bool any = false;
        for (const auto& r : records) {
            if (r.channel != name) continue;
            any = true;
            std::snprintf(buf, sizeof buf, "%-14s %-28s %-28s %8d %9.3f\n", r.channel.c_str(),
                          r.message.c_str(), r.signal.c_str(), r.overlap_bits, r.coverage);
            out << buf;
        }
        if (!any) out << name << "  (no message with id " << k.id << ")\n";
    }
    return 0;
}

// serve -----------------------------------------------------------------------

int cmd_serve(int port, const std::string& vehicle, std::ostream& out) {
    SignalScope signals;
    GatewayOptions go;
    go.port = port;
    Gateway gateway(go);
    gateway.state().set_vehicle(vehicle);
    gateway.start();
    out << "gateway listening on port " << gateway.port() << ", waiting for a session" << std::endl;
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    gateway.stop();
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"canreveal: identify pedal and steering channels on a CAN bus from inertial data"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "canreveal 1.0");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic drive or calibration recording");
    simulate->add_option("--scenario", sim.scenario, "scenario JSON file")->check(CLI::ExistingFile);
    simulate->add_option("--preset", sim.preset, "built-in scenario when no file is given")
        ->check(CLI::IsMember({"drive", "calibration", "negative"}));
    simulate->add_option("--seed", sim.seed, "seed for presets");
    simulate->add_option("--events", sim.events, "events per control for the drive preset")
        ->check(CLI::Range(1, 1000));
    simulate->add_flag("--no-steering-signal", sim.no_steering, "omit the steering signal from the bus");
    simulate->add_flag("--full-brake", sim.full_brake, "append a full brake press to the drive preset");
    simulate->add_option("--write-scenario", sim.write_scenario, "also save the scenario as JSON");
    simulate->add_option("--out", sim.out, "output directory")->required();

    InferArgs inf;
    auto* infer = app.add_subcommand("infer", "batch inference over recorded logs");
    infer->add_option("--can", inf.can, "CAN log (candump format)")->required()->check(CLI::ExistingFile);
    infer->add_option("--imu", inf.imu, "IMU CSV log")->required()->check(CLI::ExistingFile);
    infer->add_option("--out", inf.out, "report JSON")->required();
    infer->add_option("--config", inf.config, "session config JSON")->check(CLI::ExistingFile);
    infer->add_option("--profile", inf.profile, "vehicle profile JSON")->check(CLI::ExistingFile);
    infer->add_option("--rankings", inf.rankings, "rankings JSONL output");
    infer->add_option("--quadrants", inf.quadrants, "directory for four-quadrant exports");
    infer->add_option("--calib-can", inf.calib_can, "calibration CAN log for quadrant exports")
        ->check(CLI::ExistingFile);
    infer->add_option("--calib-annotations", inf.calib_annotations, "calibration prompt annotations")
        ->check(CLI::ExistingFile);
    infer->add_option("--vehicle", inf.vehicle, "vehicle name for the report");
    infer->add_flag("--lenient", inf.lenient, "skip malformed log records instead of failing");
    infer->add_flag("--quiet", inf.quiet, "do not print ranking tables");

    ReplayArgs rep;
    auto* replay = app.add_subcommand("replay", "paced replay through the live pipeline");
    replay->add_option("--can", rep.can, "CAN log")->required()->check(CLI::ExistingFile);
    replay->add_option("--imu", rep.imu, "IMU CSV log")->required()->check(CLI::ExistingFile);
    replay->add_option("--speed", rep.speed, "replay speed, 0 for unpaced")->check(CLI::NonNegativeNumber);
    replay->add_option("--serve", rep.serve, "serve the websocket gateway on this port")
        ->check(CLI::Range(0, 65535));
    replay->add_flag("--wait-client", rep.wait_client, "start only once a client has connected");
    replay->add_option("--out", rep.out, "report JSON");
    replay->add_option("--config", rep.config, "session config JSON")->check(CLI::ExistingFile);
    replay->add_option("--profile", rep.profile, "vehicle profile JSON")->check(CLI::ExistingFile);
    replay->add_option("--vehicle", rep.vehicle, "vehicle name");
    replay->add_flag("--lenient", rep.lenient, "skip malformed log records");

    CalibrateArgs cal;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "build a vehicle profile from a calibration recording");
    calibrate_cmd->add_option("--can", cal.can, "calibration CAN log")->required()->check(CLI::ExistingFile);
    calibrate_cmd->add_option("--annotations", cal.annotations, "prompt annotations JSON")
        ->check(CLI::ExistingFile);
    calibrate_cmd->add_option("--vehicle", cal.vehicle, "vehicle name");
    calibrate_cmd->add_option("--out", cal.out, "profile JSON")->required();
    calibrate_cmd->add_option("--control", cal.controls, "restrict to these controls")
        ->check(CLI::IsMember({"accelerator", "brake", "steering"}));
    calibrate_cmd->add_option("--created", cal.created, "creation timestamp to record");
    calibrate_cmd->add_option("--serve", cal.serve, "run the prompt wizard over the gateway on this port")
        ->check(CLI::Range(0, 65535));
    calibrate_cmd->add_option("--speed", cal.speed, "replay speed in wizard mode")->check(CLI::PositiveNumber);
    calibrate_cmd->add_flag("--lenient", cal.lenient, "skip malformed log records");

    ValidateArgs val;
    auto* validate = app.add_subcommand("validate", "check channels against a DBC file");
    validate->add_option("--dbc", val.dbc, "DBC file")->required()->check(CLI::ExistingFile);
    validate->add_option("--channel", val.channels, "channel name such as 241_msb_1 (repeatable)");
    validate->add_option("--report", val.report, "take the winners of a report")->check(CLI::ExistingFile);
    validate->add_flag("--json", val.json, "JSON output");

    int serve_port = 8765;
    std::string serve_vehicle = "unknown";
    auto* serve = app.add_subcommand("serve", "run the gateway alone");
    serve->add_option("--port", serve_port, "listen port")->check(CLI::Range(0, 65535));
    serve->add_option("--vehicle", serve_vehicle, "vehicle name");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*simulate) return cmd_simulate(sim, out);
        if (*infer) return cmd_infer(inf, out, err);
        if (*replay) return cmd_replay(rep, out, err);
        if (*calibrate_cmd) return cmd_calibrate(cal, out, err);
        if (*validate) return cmd_validate(val, out);
        if (*serve) return cmd_serve(serve_port, serve_vehicle, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace canreveal

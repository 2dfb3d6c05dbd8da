// Acceptance gate: one PASS/FAIL line per primary criterion, exit status 1 on
// any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "canreveal/calibration.hpp"
#include "canreveal/correlate.hpp"
#include "canreveal/dbc.hpp"
#include "canreveal/error.hpp"
#include "canreveal/report.hpp"
#include "canreveal/session.hpp"
#include "canreveal/simulator.hpp"
#include "cli.hpp"

using namespace canreveal;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kSeeds = 10;
constexpr double kBatchBudget = 30.0;     // seconds for the whole 10-seed batch
constexpr double kPearsonTol = 1e-9;
constexpr double kPacingFixed = 0.050;    // seconds
constexpr double kPacingFraction = 0.02;  // of elapsed source time
constexpr double kReplaySpeed = 2.0;
constexpr double kPacingSpan = 10.0;      // source seconds
constexpr double kCalibrationR = 0.95;
constexpr double kRangeTolerance = 0.02;  // of the encoded range
constexpr std::uint32_t kCounterId = 1001;
constexpr std::uint32_t kRpmId = 190;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Drive runs over the seed range, shared by the recovery, cadence and rpm checks.
struct DriveRun {
    std::uint64_t seed = 0;
    SimulationOutput sim;
    SessionResult result;
};

struct DriveBatch {
    std::vector<DriveRun> runs;
    double seconds = 0.0;
};

const DriveBatch& drive_batch() {
    static const DriveBatch batch = [] {
        DriveBatch b;
        const auto t0 = Clock::now();
        for (int s = 1; s <= kSeeds; ++s) {
            DriveRun run;
            run.seed = static_cast<std::uint64_t>(s);
            const auto file = make_drive_scenario({run.seed, 15, true, false});
            run.sim = simulate(file.scenario, file.truth, file.dynamics);
            Session session(SessionConfig{});
            run.result = session.run(run.sim.can, run.sim.imu);
            b.runs.push_back(std::move(run));
        }
        b.seconds = seconds_since(t0);
        return b;
    }();
    return batch;
}

Outcome oracle_recovery() {
    const auto& batch = drive_batch();
    int passed = 0;
    std::string failures;
    for (const auto& run : batch.runs) {
        const auto truth = parse_dbc_min(run.sim.truth_dbc);
        const auto map = GroundTruthMap::defaults();
        bool ok = true;
        for (auto c : kAllControls) {
            const auto& cr = run.result.controls.at(c);
            const auto* sig = map.find(c);
            if (cr.status != DiscoveryStatus::converged || !cr.winner) {
                ok = false;
                failures += fmt(" seed%d/%s:%s", int(run.seed), std::string(to_string(c)).c_str(),
                                std::string(to_string(cr.status)).c_str());
                continue;
            }
            const std::vector<ChannelKey> keys{*cr.winner};
            double coverage = 0.0;
            for (const auto& rec : validate_channels(truth, keys))
                if (rec.signal == sig->name) coverage = rec.coverage;
            if (coverage != 1.0) {
                ok = false;
                failures += fmt(" seed%d/%s:%s cov %.3f", int(run.seed), std::string(to_string(c)).c_str(),
                                channel_name(*cr.winner).c_str(), coverage);
            }
        }
        passed += ok;
    }
    const bool fast = batch.seconds < kBatchBudget;
    return {passed == kSeeds && fast,
            fmt("%d/%d seeds converged with coverage 1.0, batch %.1f s (budget %.0f s)%s", passed, kSeeds,
                batch.seconds, kBatchBudget, failures.c_str())};
}

Outcome cadence() {
    std::size_t bad = 0;
    std::string seen;
    for (const auto& run : drive_batch().runs)
        for (auto c : kAllControls) {
            const auto n = run.result.controls.at(c).rounds.size();
            if (n != 5) {
                ++bad;
                seen += fmt(" seed%d/%s=%zu", int(run.seed), std::string(to_string(c)).c_str(), n);
            }
        }
    return {bad == 0, fmt("15 events at cadence 3 gave 5 rounds for every control in %d seeds%s", kSeeds,
                          seen.c_str())};
}

Outcome negative_control() {
    int passed = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto file = make_drive_scenario({seed, 15, false, false});
        const auto sim = simulate(file.scenario, file.truth, file.dynamics);
        const auto result = infer_batch(SessionConfig{}, sim.can, sim.imu);
        const auto doc = nlohmann::json::parse(report_to_json(result));
        const auto& steer = doc["controls"]["steering"];
        bool na_row = steer["winner"] == "N/A";
        const bool status = steer["status"] == "not_identified";
        for (const auto& round : steer["rounds"])
            for (const auto& e : round["entries"])
                if (e["channel"] == "N/A") na_row = true;
        if (na_row && status) ++passed;
        else
            detail += fmt(" seed%d: status %s", int(seed), steer["status"].get<std::string>().c_str());
    }
    return {passed == 3, fmt("steering not_identified with an N/A row in %d/3 seeds%s", passed, detail.c_str())};
}

Outcome dbc_fixture() {
    const auto msgs = read_dbc_file(CANREVEAL_FIXTURES "/gm_brake_241.dbc");
    if (msgs.size() != 1) return {false, "expected one message"};
    const auto& m = msgs.front();
    const auto* pos = m.find("BrakePedalPosition");
    if (!pos) return {false, "BrakePedalPosition missing"};
    const auto ov = channel_overlap(parse_channel_name("241_msb_1"), m, *pos);
    const bool ok = m.id == 241 && m.dlc == 6 && pos->start_bit == 15 && pos->length == 8 && ov.overlap_bits == 8 &&
                    ov.signal_coverage == 1.0;
    return {ok, fmt("id %u dlc %d start %d length %d, 241_msb_1 overlap %d bits coverage %.3f", m.id, m.dlc,
                    pos->start_bit, pos->length, ov.overlap_bits, ov.signal_coverage)};
}

double reference_r(const std::vector<double>& x, const std::vector<double>& y) {
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

Outcome correlation_core() {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal(0, 1);
    std::uniform_int_distribution<int> len(3, 400);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const int n = len(rng);
        const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-3, 4)(rng));
        const double shift = std::uniform_real_distribution<double>(-1e4, 1e4)(rng);
        const double mix = std::uniform_real_distribution<double>(-1, 1)(rng);
        std::vector<double> x(n), y(n);
        for (int k = 0; k < n; ++k) {
            x[k] = normal(rng);
            y[k] = shift + scale * (mix * x[k] + normal(rng));
        }
        worst = std::max(worst, std::abs(pearson(as_vector(x), as_vector(y)) - reference_r(x, y)));
    }

    int affine_trials = 0, affine_ok = 0;
    std::uniform_real_distribution<double> coef(-500, 500);
    for (int trial = 0; trial < 200; ++trial, ++affine_trials) {
        const int n = 150;
        std::vector<double> ref(n);
        for (auto& v : ref) v = normal(rng);
        std::vector<ChannelScore> plain, moved;
        for (std::uint32_t c = 0; c < 16; ++c) {
            const double w = std::uniform_real_distribution<double>(-1, 1)(rng);
            double a = coef(rng);
            if (std::abs(a) < 1e-3) a = 1.0;
            const double b = coef(rng) * 50;
            std::vector<double> ch(n), tr(n);
            for (int k = 0; k < n; ++k) {
                ch[k] = w * ref[k] + normal(rng);
                tr[k] = a * ch[k] + b;
            }
            const ChannelKey key{c, ByteOrder::msb, 0};
            plain.push_back({key, pearson(as_vector(ch), as_vector(ref))});
            moved.push_back({key, pearson(as_vector(tr), as_vector(ref))});
        }
        const auto r1 = rank(plain, 16), r2 = rank(moved, 16);
        bool same = r1.size() == r2.size();
        for (std::size_t i = 0; same && i < r1.size(); ++i) same = r1[i].key == r2[i].key;
        affine_ok += same;
    }

    int rejected = 0;
    const std::vector<std::pair<std::vector<double>, std::vector<double>>> flat{
        {{3, 3, 3, 3}, {1, 2, 3, 4}}, {{1, 2, 3, 4}, {0, 0, 0, 0}}, {{5e5, 5e5, 5e5}, {1, 2, 3}}};
    for (const auto& [x, y] : flat) {
        try {
            pearson(as_vector(x), as_vector(y));
        } catch (const UndefinedCorrelation&) {
            ++rejected;
        }
    }

    const bool ok = worst <= kPearsonTol && affine_ok == affine_trials && rejected == 3;
    return {ok, fmt("max |r - oracle| %.2e over 1000 vectors (tol %.0e), affine rank invariant %d/%d, "
                    "zero variance rejected %d/3",
                    worst, kPearsonTol, affine_ok, affine_trials, rejected)};
}

Outcome rpm_separation() {
    const auto map = GroundTruthMap::defaults();
    const auto* acc = map.find(Control::accelerator);
    int passed = 0;
    std::string detail;
    for (const auto& run : drive_batch().runs) {
        const auto& rounds = run.result.controls.at(Control::accelerator).rounds;
        if (rounds.empty()) {
            detail += fmt(" seed%d:no rounds", int(run.seed));
            continue;
        }
        const auto& entries = rounds.back().entries;
        std::optional<std::size_t> true_pos, rpm_pos;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& k = entries[i].key;
            if (k.id == acc->message_id && k.order == ByteOrder::msb && k.start_byte == 4 && !true_pos) true_pos = i;
            if (k.id == kRpmId && !rpm_pos) rpm_pos = i;
        }
        if (true_pos && (!rpm_pos || *true_pos < *rpm_pos)) ++passed;
        else detail += fmt(" seed%d", int(run.seed));
    }
    return {passed >= 9, fmt("true accelerator channel above the rpm decoy in the final round in %d/%d seeds "
                             "(need 9)%s",
                             passed, kSeeds, detail.c_str())};
}

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / "canreveal_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto file = make_drive_scenario({7, 15, true, false});
    const auto sim = simulate(file.scenario, file.truth, file.dynamics);
    write_simulation(sim, dir);

    std::ostringstream sink;
    auto infer = [&](const std::string& out) {
        const std::string can = (dir / "can.log").string(), imu = (dir / "imu.csv").string();
        const char* argv[] = {"canreveal", "infer", "--can", can.c_str(), "--imu", imu.c_str(),
                              "--out",     out.c_str(), "--quiet"};
        return run_cli(9, argv, sink, sink);
    };
    const auto a = (dir / "a.json").string(), b = (dir / "b.json").string();
    const int rc = infer(a) | infer(b);
    const bool identical = rc == 0 && read_text_file(a) == read_text_file(b);

    // Paced replay of a 10 s slice at speed 2.
    const double t_from = sim.can.front().t + 30.0;
    std::vector<CanFrame> frames;
    std::vector<ImuSample> imu;
    for (const auto& f : sim.can)
        if (f.t >= t_from && f.t < t_from + kPacingSpan) frames.push_back(f);
    for (const auto& s : sim.imu)
        if (s.t >= t_from && s.t < t_from + kPacingSpan) imu.push_back(s);
    SessionConfig cfg;
    cfg.speed = kReplaySpeed;
    Session session(cfg);
    auto sub = session.bus().subscribe(topics::can);
    double worst = -1e9, span = 0.0;
    std::size_t seen = 0;
    std::thread watcher([&] {
        std::optional<Clock::time_point> wall0;
        double src0 = 0.0;
        while (auto m = sub->pop()) {
            const auto now = Clock::now();
            if (!wall0) {
                wall0 = now;
                src0 = m->t;
            }
            const double source = m->t - src0;
            const double wall = std::chrono::duration<double>(now - *wall0).count();
            worst = std::max(worst, std::abs(wall - source / kReplaySpeed) - (kPacingFixed + kPacingFraction * source));
            span = source;
            ++seen;
        }
    });
    session.run(frames, imu);
    watcher.join();
    const bool paced = seen == frames.size() && worst <= 0.0 && span > kPacingSpan - 0.1;

    fs::remove_all(dir);
    return {identical && paced,
            fmt("reports %s; speed %.1f over %.1f s source, %zu frames, worst margin to 50 ms + 2%% bound %+.4f s",
                identical ? "byte-identical" : "differ", kReplaySpeed, span, seen, worst)};
}

// Channel value of `key` when `signal` carries `level`, built from a recorded
// frame of the same message so the other bytes keep their recorded content.
double encoded_channel_value(const CanFrame& frame, const TruthSignal& signal, const ChannelKey& key, double level) {
    auto data = frame.data;
    pack_signal(std::span<std::uint8_t>(data.data(), frame.dlc), signal.dbc_signal(), signal.encode(level));
    const unsigned hi = key.order == ByteOrder::msb ? data[key.start_byte] : data[key.start_byte + 1];
    const unsigned lo = key.order == ByteOrder::msb ? data[key.start_byte + 1] : data[key.start_byte];
    return hi * 256.0 + lo;
}

Outcome calibration() {
    const auto file = make_calibration_scenario(3);
    const auto sim = simulate(file.scenario, file.truth, file.dynamics);
    ChannelStore store(1e9);
    for (const auto& f : sim.can) store.ingest(f);
    const auto truth_dbc = parse_dbc_min(sim.truth_dbc);

    bool ok = true;
    std::string detail;
    for (auto c : kAllControls) {
        const auto schedule = PromptSchedule::defaults_for(c);
        const auto profile = calibrate({store, prompt_times_for(sim.annotations, c)}, schedule);
        const auto* sig = file.truth.find(c);
        const auto frame = std::find_if(sim.can.begin(), sim.can.end(),
                                        [&](const CanFrame& f) { return f.id == sig->message_id; });
        const auto msg = std::find_if(truth_dbc.begin(), truth_dbc.end(),
                                      [&](const DbcMessage& m) { return m.id == sig->message_id; });

        // Best retained channel whose bits cover the whole signal.
        const CalibrationCandidate* hit = nullptr;
        for (const auto& cand : profile.candidates) {
            if (cand.key.id == kCounterId) {
                ok = false;
                detail += fmt(" %s:counter retained", std::string(to_string(c)).c_str());
            }
            if (!hit && cand.key.id == sig->message_id &&
                channel_overlap(cand.key, *msg, *msg->find(sig->name)).signal_coverage == 1.0)
                hit = &cand;
        }
        if (!hit) {
            ok = false;
            detail += fmt(" %s:true channel not retained", std::string(to_string(c)).c_str());
            continue;
        }
        double lo = 1e18, hi = -1e18;
        for (const auto& step : schedule.steps) {
            const double v = encoded_channel_value(*frame, *sig, hit->key, step.level);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double tol = kRangeTolerance * (hi - lo);
        const bool in_range = std::abs(hit->min_value - lo) <= tol && std::abs(hit->max_value - hi) <= tol;
        const bool strong = std::abs(hit->r) >= kCalibrationR;
        ok = ok && in_range && strong;
        detail += fmt(" %s:%s |r| %.4f min %u/%.0f max %u/%.0f;", std::string(to_string(c)).c_str(),
                      channel_name(hit->key).c_str(), std::abs(hit->r), unsigned(hit->min_value), lo,
                      unsigned(hit->max_value), hi);
    }
    return {ok, "min/max measured/encoded within 2% of range, |r| >= 0.95, counter excluded:" + detail};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"oracle recovery", oracle_recovery},
        {"cadence reproduction", cadence},
        {"negative control", negative_control},
        {"dbc fixture", dbc_fixture},
        {"correlation core", correlation_core},
        {"hard-negative separation", rpm_separation},
        {"determinism", determinism},
        {"calibration", calibration},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : "acceptance: all criteria passed")
              << std::endl;
    return failed ? 1 : 0;
}

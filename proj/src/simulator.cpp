#include "canreveal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

#include "canreveal/calibration.hpp"

namespace canreveal {

using nlohmann::json;

std::string_view to_string(ManeuverKind k) noexcept {
    switch (k) {
    case ManeuverKind::accelerate: return "accelerate";
    case ManeuverKind::brake: return "brake";
    case ManeuverKind::steer_left: return "steer_left";
    case ManeuverKind::steer_right: return "steer_right";
    case ManeuverKind::calibrate_accelerator: return "calibrate_accelerator";
    case ManeuverKind::calibrate_brake: return "calibrate_brake";
    case ManeuverKind::calibrate_steering: return "calibrate_steering";
    }
    return "?";
}

ManeuverKind parse_maneuver_kind(std::string_view s) {
    for (auto k : {ManeuverKind::accelerate, ManeuverKind::brake, ManeuverKind::steer_left,
                   ManeuverKind::steer_right, ManeuverKind::calibrate_accelerator,
                   ManeuverKind::calibrate_brake, ManeuverKind::calibrate_steering})
        if (to_string(k) == s) return k;
    throw ScenarioError("unknown maneuver kind '" + std::string(s) + "'");
}

Control maneuver_control(ManeuverKind k) noexcept {
    switch (k) {
    case ManeuverKind::accelerate:
    case ManeuverKind::calibrate_accelerator: return Control::accelerator;
    case ManeuverKind::brake:
    case ManeuverKind::calibrate_brake: return Control::brake;
    default: return Control::steering;
    }
}

bool is_calibration(ManeuverKind k) noexcept {
    return k == ManeuverKind::calibrate_accelerator || k == ManeuverKind::calibrate_brake ||
           k == ManeuverKind::calibrate_steering;
}

void Scenario::validate() const {
    if (!(duration > 0)) throw ScenarioError("scenario duration must be positive");
    if (stationary_lead < 0 || stationary_lead > duration)
        throw ScenarioError("stationary lead must lie within the duration");
    std::map<Control, std::vector<const Maneuver*>> by_control;
    for (const auto& m : maneuvers) {
        if (!(m.hold > 0)) throw ScenarioError("maneuver hold must be positive");
        if (m.t_start < stationary_lead)
            throw ScenarioError("maneuver at t=" + std::to_string(m.t_start) +
                                " starts inside the stationary lead");
        if (m.t_start + m.hold > duration)
            throw ScenarioError("maneuver at t=" + std::to_string(m.t_start) +
                                " runs past the scenario duration");
        const double lo = m.kind == ManeuverKind::calibrate_steering ? -1.0 : 0.0;
        if (m.magnitude < lo || m.magnitude > 1.0)
            throw ScenarioError("maneuver magnitude out of range");
        by_control[maneuver_control(m.kind)].push_back(&m);
    }
    for (auto& [control, list] : by_control) {
        std::sort(list.begin(), list.end(),
                  [](const Maneuver* a, const Maneuver* b) { return a->t_start < b->t_start; });
        for (std::size_t i = 1; i < list.size(); ++i)
            if (list[i]->t_start < list[i - 1]->t_start + list[i - 1]->hold - 1e-9)
                throw ScenarioError("overlapping " + std::string(to_string(control)) +
                                    " maneuvers at t=" + std::to_string(list[i]->t_start));
    }
}

DbcSignal TruthSignal::dbc_signal() const {
    DbcSignal s;
    s.name = name;
    s.start_bit = start_bit;
    s.length = length;
    s.byte_order = byte_order;
    s.is_signed = false;
    s.scale = 1.0 / scale;
    s.offset = -offset / scale;
    const double lo = is_pedal(control) ? 0.0 : -1.0;
    s.minimum = lo;
    s.maximum = 1.0;
    return s;
}

std::uint64_t TruthSignal::encode(double level) const {
    const double raw = std::round(level * scale + offset);
    const double top = std::ldexp(1.0, length) - 1.0;
    return std::uint64_t(std::clamp(raw, 0.0, top));
}

std::string_view to_string(DecoyKind k) noexcept {
    switch (k) {
    case DecoyKind::counter: return "counter";
    case DecoyKind::constant: return "constant";
    case DecoyKind::random_walk: return "random_walk";
    case DecoyKind::engine_rpm: return "engine_rpm";
    }
    return "?";
}

DecoyKind parse_decoy_kind(std::string_view s) {
    for (auto k : {DecoyKind::counter, DecoyKind::constant, DecoyKind::random_walk,
                   DecoyKind::engine_rpm})
        if (to_string(k) == s) return k;
    throw ScenarioError("unknown decoy kind '" + std::string(s) + "'");
}

const TruthSignal* GroundTruthMap::find(Control c) const {
    for (const auto& s : signals)
        if (s.control == c) return &s;
    return nullptr;
}

std::vector<DbcMessage> GroundTruthMap::to_dbc() const {
    std::vector<DbcMessage> out;
    for (const auto& s : signals) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const DbcMessage& m) { return m.id == s.message_id; });
        if (it == out.end()) {
            DbcMessage m;
            m.id = s.message_id;
            m.extended = s.extended;
            m.name = s.message_name.empty() ? "MSG_" + std::to_string(s.message_id) : s.message_name;
            m.dlc = s.dlc;
            m.transmitter = "SIM";
            out.push_back(std::move(m));
            it = std::prev(out.end());
        }
        it->signals.push_back(s.dbc_signal());
    }
    return out;
}

GroundTruthMap GroundTruthMap::defaults() {
    GroundTruthMap m;
    TruthSignal acc;
    acc.control = Control::accelerator;
    acc.name = "AcceleratorPedalPosition";
    acc.message_id = 201;
    acc.message_name = "AcceleratorPedal";
    acc.start_bit = 39; // bytes 4-5, Motorola
    acc.length = 16;
    acc.scale = 1000.0;
    acc.offset = 0.0;
    m.signals.push_back(acc);

    TruthSignal brk;
    brk.control = Control::brake;
    brk.name = "BrakePedalPosition";
    brk.message_id = 241;
    brk.message_name = "EBCMBrakePedalPosition";
    brk.dlc = 6;
    brk.start_bit = 15;
    brk.length = 8;
    brk.scale = 250.0;
    m.signals.push_back(brk);

    TruthSignal str;
    str.control = Control::steering;
    str.name = "SteeringWheelAngle";
    str.message_id = 564;
    str.message_name = "SteeringWheel";
    str.start_bit = 23; // bytes 2-3, Motorola
    str.length = 16;
    str.scale = 1000.0;
    str.offset = 32768.0;
    m.signals.push_back(str);

    m.decoys = {{190, 0.02, DecoyKind::engine_rpm},
                {1001, 0.01, DecoyKind::counter},
                {501, 0.1, DecoyKind::constant},
                {700, 0.02, DecoyKind::random_walk}};
    return m;
}

void DynamicsConfig::validate() const {
    if (!(a_max > 0 && b_max > 0 && yaw_gain > 0 && v_ref > 0))
        throw ScenarioError("dynamics gains must be positive");
    if (!(imu_rate > 0)) throw ScenarioError("imu_rate must be positive");
    if (accel_noise_sd < 0 || gyro_noise_sd < 0) throw ScenarioError("noise must be >= 0");
    if (ramp < 0 || !(rpm_tau > 0)) throw ScenarioError("ramp must be >= 0 and rpm_tau > 0");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Smooth 0 -> 1 -> 0 envelope over [0, hold] with `ramp`-long edges.
double envelope(double u, double hold, double ramp) {
    if (u < 0 || u >= hold) return 0.0;
    const double r = std::min(ramp, hold / 2.0);
    if (r <= 0) return 1.0;
    auto rise = [](double x) { return 0.5 - 0.5 * std::cos(M_PI * x); };
    if (u < r) return rise(u / r);
    if (u > hold - r) return rise((hold - u) / r);
    return 1.0;
}

struct Inputs {
    double accel_bus = 0, brake_bus = 0, steer_bus = 0; // what the bus reports
    double accel_dyn = 0, brake_dyn = 0, steer_dyn = 0; // what moves the vehicle
    bool engine_running = true;
};

Inputs inputs_at(const Scenario& sc, const DynamicsConfig& dyn, double t) {
    Inputs in;
    for (const auto& m : sc.maneuvers) {
        const double u = t - m.t_start;
        if (u < 0 || u >= m.hold) continue;
        switch (m.kind) {
        case ManeuverKind::accelerate:
            in.accel_dyn = in.accel_bus = m.magnitude * envelope(u, m.hold, dyn.ramp);
            break;
        case ManeuverKind::brake:
            in.brake_dyn = in.brake_bus = m.magnitude * envelope(u, m.hold, dyn.ramp);
            break;
        case ManeuverKind::steer_left:
            in.steer_dyn = in.steer_bus = m.magnitude * envelope(u, m.hold, dyn.ramp);
            break;
        case ManeuverKind::steer_right:
            in.steer_dyn = in.steer_bus = -m.magnitude * envelope(u, m.hold, dyn.ramp);
            break;
        case ManeuverKind::calibrate_accelerator:
            in.accel_bus = m.magnitude;
            in.engine_running = false;
            break;
        case ManeuverKind::calibrate_brake:
            in.brake_bus = m.magnitude;
            in.engine_running = false;
            break;
        case ManeuverKind::calibrate_steering: in.steer_bus = m.magnitude; break;
        }
    }
    return in;
}

struct VehicleState {
    double t = 0;
    Inputs in;
    double rpm_lp = 0;
};

std::array<std::uint8_t, 8> filler_bytes(std::uint64_t seed, std::uint32_t id) {
    std::array<std::uint8_t, 8> b{};
    std::uint64_t x = splitmix64(seed ^ (std::uint64_t{id} * 0x2545F4914F6CDD1Dull));
    for (auto& v : b) {
        v = std::uint8_t(x & 0xFF);
        x >>= 8;
    }
    return b;
}

} // namespace

SimulationOutput simulate(const Scenario& scenario, const GroundTruthMap& truth,
                          const DynamicsConfig& dyn) {
    scenario.validate();
    dyn.validate();
    for (const auto& s : truth.signals) (void)signal_bit_positions(s.dbc_signal(), s.dlc);

    SimulationOutput out;
    std::mt19937_64 rng(scenario.seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    // Vehicle dynamics and IMU at the IMU rate.
    const double dt = 1.0 / dyn.imu_rate;
    const std::size_t steps = std::size_t(std::floor(scenario.duration * dyn.imu_rate)) + 1;
    std::vector<VehicleState> states(steps);
    Eigen::Vector3d accel_bias(0.1 * (unit(rng) > 0 ? 1 : -1) * 0.4, 0.03, 0.05);
    Eigen::Vector3d gyro_bias(0.002, -0.001, 0.004 * (unit(rng) > 0 ? 1 : -1));
    double v = 0.0;
    double rpm_lp = 0.0;
    out.imu.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = double(k) * dt;
        const Inputs in = inputs_at(scenario, dyn, t);
        double a = dyn.a_max * in.accel_dyn - dyn.b_max * in.brake_dyn;
        if (v <= 0 && a < 0) a = 0;
        if (a < 0 && v + a * dt < 0) a = -v / dt;
        const double yaw = dyn.yaw_gain * in.steer_dyn * std::min(1.0, v / dyn.v_ref);
        const double lat = v * yaw;

        ImuSample s;
        s.t = t;
        s.accel = Eigen::Vector3d(a, lat, dyn.gravity) + accel_bias;
        s.gyro = Eigen::Vector3d(0, 0, yaw) + gyro_bias;
        for (int i = 0; i < 3; ++i) s.accel[i] += dyn.accel_noise_sd * unit(rng);
        for (int i = 0; i < 3; ++i) s.gyro[i] += dyn.gyro_noise_sd * unit(rng);
        out.imu.push_back(s);

        rpm_lp += (in.accel_dyn - rpm_lp) * dt / dyn.rpm_tau;
        states[k] = {t, in, rpm_lp};
        v = std::max(0.0, v + a * dt);
    }
    auto state_at = [&](double t) -> const VehicleState& {
        const auto k = std::min(steps - 1, std::size_t(std::max(0.0, std::floor(t / dt + 1e-9))));
        return states[k];
    };

    // CAN traffic.
    struct Emitter {
        std::uint32_t id;
        bool extended;
        int dlc;
        double period;
        double phase;
        std::vector<const TruthSignal*> signals;
        std::optional<DecoyKind> decoy;
        std::array<std::uint8_t, 8> filler;
        double walk = 30000.0;
        std::uint16_t counter = 0;
    };
    std::vector<Emitter> emitters;
    for (const auto& s : truth.signals) {
        auto it = std::find_if(emitters.begin(), emitters.end(),
                               [&](const Emitter& e) { return e.id == s.message_id; });
        if (it == emitters.end()) {
            emitters.push_back({s.message_id, s.extended, s.dlc, s.period, 0.0, {}, std::nullopt,
                                filler_bytes(scenario.seed, s.message_id)});
            it = std::prev(emitters.end());
        }
        it->signals.push_back(&s);
        it->dlc = std::max(it->dlc, s.dlc);
        it->period = std::min(it->period, s.period);
    }
    for (const auto& d : truth.decoys)
        emitters.push_back({d.message_id, d.message_id >= (1u << 11), 8, d.period, 0.0, {}, d.kind,
                            filler_bytes(scenario.seed, d.message_id)});
    for (auto& e : emitters) {
        if (!(e.period > 0)) throw ScenarioError("message period must be positive");
        e.phase = std::fmod(double(splitmix64(scenario.seed + e.id) % 1000000) / 1e6, 1.0) * e.period;
    }

    struct Pending {
        double t;
        std::size_t emitter;
        std::size_t k;
    };
    std::vector<Pending> schedule;
    for (std::size_t i = 0; i < emitters.size(); ++i) {
        const auto& e = emitters[i];
        for (std::size_t k = 0;; ++k) {
            const double t = e.phase + double(k) * e.period;
            if (t >= scenario.duration) break;
            schedule.push_back({std::round(t * 1e6) / 1e6, i, k});
        }
    }
    std::sort(schedule.begin(), schedule.end(), [](const Pending& a, const Pending& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.emitter < b.emitter;
    });

    std::normal_distribution<double> walk_step(0.0, 40.0);
    std::normal_distribution<double> rpm_noise(0.0, 10.0);
    out.can.reserve(schedule.size());
    for (const auto& p : schedule) {
        auto& e = emitters[p.emitter];
        CanFrame f;
        f.t = p.t;
        f.id = e.id;
        f.extended = e.extended;
        f.dlc = std::uint8_t(e.dlc);
        std::copy(e.filler.begin(), e.filler.end(), f.data.begin());
        const auto& st = state_at(p.t);
        std::span<std::uint8_t> payload(f.data.data(), f.dlc);
        // Control signals are sampled at the frame time, not the dynamics tick.
        const Inputs bus = e.signals.empty() ? Inputs{} : inputs_at(scenario, dyn, p.t);
        for (const auto* s : e.signals) {
            const double level = s->control == Control::accelerator ? bus.accel_bus
                                 : s->control == Control::brake     ? bus.brake_bus
                                                                    : bus.steer_bus;
            pack_signal(payload, s->dbc_signal(), s->encode(level));
        }
        if (e.decoy) {
            std::uint16_t value = 0;
            switch (*e.decoy) {
            case DecoyKind::counter: value = e.counter++; break;
            case DecoyKind::constant: break;
            case DecoyKind::random_walk:
                e.walk = std::clamp(e.walk + walk_step(rng), 0.0, 65535.0);
                value = std::uint16_t(std::lround(e.walk));
                break;
            case DecoyKind::engine_rpm: {
                const double rpm =
                    st.in.engine_running ? 700.0 + 2300.0 * st.rpm_lp + rpm_noise(rng) : 0.0;
                value = std::uint16_t(std::clamp(std::lround(rpm * 4.0), 0l, 65535l));
                break;
            }
            }
            if (*e.decoy != DecoyKind::constant) {
                const std::size_t at = *e.decoy == DecoyKind::random_walk ? 2 : 0;
                f.data[at] = std::uint8_t(value >> 8);
                f.data[at + 1] = std::uint8_t(value & 0xFF);
            }
        }
        out.can.push_back(f);
    }

    out.truth_dbc = emit_truth_dbc(truth);
    for (const auto& m : scenario.maneuvers)
        out.annotations.push_back({std::string(to_string(m.kind)), m.t_start, m.t_start + m.hold});
    std::stable_sort(out.annotations.begin(), out.annotations.end(),
                     [](const Annotation& a, const Annotation& b) { return a.t_start < b.t_start; });
    return out;
}

std::string emit_truth_dbc(const GroundTruthMap& truth) {
    const auto messages = truth.to_dbc();
    return emit_dbc(messages);
}

// ---------------------------------------------------------------------------

namespace {

json truth_to_json(const GroundTruthMap& t) {
    json sigs = json::array();
    for (const auto& s : t.signals)
        sigs.push_back({{"control", to_string(s.control)},
                        {"name", s.name},
                        {"message_id", s.message_id},
                        {"message_name", s.message_name},
                        {"extended", s.extended},
                        {"dlc", s.dlc},
                        {"period", s.period},
                        {"start_bit", s.start_bit},
                        {"length", s.length},
                        {"byte_order", s.byte_order == DbcByteOrder::big_endian ? "big_endian"
                                                                                : "little_endian"},
                        {"scale", s.scale},
                        {"offset", s.offset}});
    json decoys = json::array();
    for (const auto& d : t.decoys)
        decoys.push_back({{"message_id", d.message_id}, {"period", d.period}, {"kind", to_string(d.kind)}});
    return {{"signals", sigs}, {"decoys", decoys}};
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ScenarioError(std::string("scenario: field '") + key + "' has the wrong type");
    }
}

GroundTruthMap truth_from_json(const json& j) {
    GroundTruthMap t;
    for (const auto& s : j.value("signals", json::array())) {
        TruthSignal ts;
        ts.control = parse_control(get_or<std::string>(s, "control", ""));
        ts.name = get_or<std::string>(s, "name", std::string(to_string(ts.control)));
        ts.message_id = get_or<std::uint32_t>(s, "message_id", 0);
        ts.message_name = get_or<std::string>(s, "message_name", "");
        ts.extended = get_or<bool>(s, "extended", false);
        ts.dlc = get_or<int>(s, "dlc", 8);
        ts.period = get_or<double>(s, "period", 0.02);
        ts.start_bit = get_or<int>(s, "start_bit", 0);
        ts.length = get_or<int>(s, "length", 16);
        const auto order = get_or<std::string>(s, "byte_order", "big_endian");
        if (order == "big_endian")
            ts.byte_order = DbcByteOrder::big_endian;
        else if (order == "little_endian")
            ts.byte_order = DbcByteOrder::little_endian;
        else
            throw ScenarioError("scenario: unknown byte_order '" + order + "'");
        ts.scale = get_or<double>(s, "scale", 1.0);
        ts.offset = get_or<double>(s, "offset", 0.0);
        if (ts.scale == 0) throw ScenarioError("scenario: truth scale must be nonzero");
        t.signals.push_back(ts);
    }
    for (const auto& d : j.value("decoys", json::array()))
        t.decoys.push_back({get_or<std::uint32_t>(d, "message_id", 0), get_or<double>(d, "period", 0.1),
                            parse_decoy_kind(get_or<std::string>(d, "kind", ""))});
    return t;
}

json dynamics_to_json(const DynamicsConfig& d) {
    return {{"a_max", d.a_max},           {"b_max", d.b_max},
            {"yaw_gain", d.yaw_gain},     {"v_ref", d.v_ref},
            {"accel_noise_sd", d.accel_noise_sd}, {"gyro_noise_sd", d.gyro_noise_sd},
            {"imu_rate", d.imu_rate},     {"ramp", d.ramp},
            {"rpm_tau", d.rpm_tau},       {"gravity", d.gravity}};
}

DynamicsConfig dynamics_from_json(const json& j) {
    DynamicsConfig d;
    d.a_max = get_or(j, "a_max", d.a_max);
    d.b_max = get_or(j, "b_max", d.b_max);
    d.yaw_gain = get_or(j, "yaw_gain", d.yaw_gain);
    d.v_ref = get_or(j, "v_ref", d.v_ref);
    d.accel_noise_sd = get_or(j, "accel_noise_sd", d.accel_noise_sd);
    d.gyro_noise_sd = get_or(j, "gyro_noise_sd", d.gyro_noise_sd);
    d.imu_rate = get_or(j, "imu_rate", d.imu_rate);
    d.ramp = get_or(j, "ramp", d.ramp);
    d.rpm_tau = get_or(j, "rpm_tau", d.rpm_tau);
    d.gravity = get_or(j, "gravity", d.gravity);
    return d;
}

std::string slurp(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw Error(std::string("cannot open ") + what + " '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::string scenario_to_json(const ScenarioFile& file) {
    json man = json::array();
    for (const auto& m : file.scenario.maneuvers)
        man.push_back({{"kind", to_string(m.kind)},
                       {"t_start", m.t_start},
                       {"magnitude", m.magnitude},
                       {"hold", m.hold}});
    json doc = {{"duration", file.scenario.duration},
                {"stationary_lead", file.scenario.stationary_lead},
                {"seed", file.scenario.seed},
                {"maneuvers", man},
                {"truth", truth_to_json(file.truth)},
                {"dynamics", dynamics_to_json(file.dynamics)}};
    return doc.dump(2) + "\n";
}

ScenarioFile scenario_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("scenario: ") + e.what());
    }
    if (!doc.is_object()) throw ScenarioError("scenario: document is not an object");
    ScenarioFile f;
    f.scenario.duration = get_or(doc, "duration", f.scenario.duration);
    f.scenario.stationary_lead = get_or(doc, "stationary_lead", f.scenario.stationary_lead);
    f.scenario.seed = get_or<std::uint64_t>(doc, "seed", f.scenario.seed);
    for (const auto& m : doc.value("maneuvers", json::array()))
        f.scenario.maneuvers.push_back({parse_maneuver_kind(get_or<std::string>(m, "kind", "")),
                                        get_or(m, "t_start", 0.0), get_or(m, "magnitude", 0.0),
                                        get_or(m, "hold", 0.0)});
    if (doc.contains("truth")) f.truth = truth_from_json(doc.at("truth"));
    if (doc.contains("dynamics")) f.dynamics = dynamics_from_json(doc.at("dynamics"));
    return f;
}

ScenarioFile load_scenario(const std::filesystem::path& path) {
    return scenario_from_json(slurp(path, "scenario"));
}

std::string annotations_to_json(const std::vector<Annotation>& annotations) {
    json arr = json::array();
    for (const auto& a : annotations)
        arr.push_back({{"kind", a.kind}, {"t_start", a.t_start}, {"t_end", a.t_end}});
    return arr.dump(2) + "\n";
}

std::vector<Annotation> annotations_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("annotations: ") + e.what());
    }
    if (!doc.is_array()) throw ParseError("annotations: document is not an array");
    std::vector<Annotation> out;
    for (const auto& a : doc) {
        try {
            out.push_back({a.at("kind").get<std::string>(), a.at("t_start").get<double>(),
                           a.at("t_end").get<double>()});
        } catch (const json::exception& e) {
            throw ParseError(std::string("annotations: ") + e.what());
        }
    }
    return out;
}

std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
    return annotations_from_json(slurp(path, "annotations"));
}

std::vector<double> prompt_times_for(const std::vector<Annotation>& annotations, Control control) {
    const std::string kind = "calibrate_" + std::string(to_string(control));
    std::vector<double> out;
    for (const auto& a : annotations)
        if (a.kind == kind) out.push_back(a.t_start);
    std::sort(out.begin(), out.end());
    return out;
}

void write_simulation(const SimulationOutput& out, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_can_log(dir / "can.log", out.can);
    write_imu_log(dir / "imu.csv", out.imu);
    {
        std::ofstream f(dir / "truth.dbc");
        if (!f) throw Error("cannot write truth.dbc");
        f << out.truth_dbc;
    }
    std::ofstream f(dir / "annotations.json");
    if (!f) throw Error("cannot write annotations.json");
    f << annotations_to_json(out.annotations);
}

// ---------------------------------------------------------------------------

ScenarioFile make_drive_scenario(const DriveOptions& opts) {
    ScenarioFile file;
    if (!opts.include_steering_signal)
        std::erase_if(file.truth.signals,
                      [](const TruthSignal& s) { return s.control == Control::steering; });
    auto& sc = file.scenario;
    const auto& dyn = file.dynamics;
    sc.seed = opts.seed;
    sc.stationary_lead = 5.0;
    std::mt19937_64 rng(splitmix64(opts.seed));
    auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };

    double t = sc.stationary_lead + 1.0;
    bool left = uniform(0, 1) < 0.5;
    for (std::size_t i = 0; i < opts.events_per_control; ++i) {
        const double acc_mag = uniform(0.45, 0.9);
        const double acc_hold = uniform(3.0, 4.5);
        sc.maneuvers.push_back({ManeuverKind::accelerate, t, acc_mag, acc_hold});
        t += acc_hold + uniform(4.5, 6.0);

        const double steer_hold = uniform(2.5, 4.0);
        sc.maneuvers.push_back({left ? ManeuverKind::steer_left : ManeuverKind::steer_right, t,
                                uniform(0.5, 0.9), steer_hold});
        left = !left;
        t += steer_hold + uniform(4.5, 6.0);

        const double gained = dyn.a_max * acc_mag * (acc_hold - dyn.ramp);
        const double target = uniform(0.6, 0.85) * gained;
        double brake_mag = uniform(0.4, 0.8);
        double brake_hold = target / (dyn.b_max * brake_mag) + dyn.ramp;
        if (brake_hold < 1.8 || brake_hold > 5.0) {
            brake_hold = std::clamp(brake_hold, 1.8, 5.0);
            brake_mag = std::clamp(target / (dyn.b_max * (brake_hold - dyn.ramp)), 0.3, 1.0);
        }
        sc.maneuvers.push_back({ManeuverKind::brake, t, brake_mag, brake_hold});
        t += brake_hold + uniform(4.5, 6.0);
    }
    if (opts.final_full_brake) {
        sc.maneuvers.push_back({ManeuverKind::accelerate, t, 0.9, 6.0});
        t += 6.0 + 5.0;
        sc.maneuvers.push_back({ManeuverKind::brake, t, 1.0, 2.5});
        t += 2.5 + 5.0;
    }
    sc.duration = t + 3.0;
    return file;
}

ScenarioFile make_calibration_scenario(std::uint64_t seed) {
    ScenarioFile file;
    auto& sc = file.scenario;
    sc.seed = seed;
    sc.stationary_lead = 3.0;
    double t = sc.stationary_lead + 1.0;
    const std::pair<Control, ManeuverKind> order[] = {
        {Control::accelerator, ManeuverKind::calibrate_accelerator},
        {Control::brake, ManeuverKind::calibrate_brake},
        {Control::steering, ManeuverKind::calibrate_steering}};
    for (const auto& [control, kind] : order) {
        for (const auto& step : PromptSchedule::defaults_for(control).steps) {
            sc.maneuvers.push_back({kind, t, step.level, step.hold});
            t += step.hold;
        }
        t += 4.0;
    }
    sc.duration = t;
    return file;
}

} // namespace canreveal

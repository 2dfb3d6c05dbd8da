#include "canreveal/session.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace canreveal {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string_view to_string(SteeringSource s) {
    return s == SteeringSource::yaw_rate ? "yaw_rate" : "lateral_accel";
}

SteeringSource parse_steering_source(std::string_view s) {
    if (s == "yaw_rate") return SteeringSource::yaw_rate;
    if (s == "lateral_accel") return SteeringSource::lateral_accel;
    throw ConfigError("config: unknown steering_source '" + std::string(s) + "'");
}

// Config JSON ----------------------------------------------------------------

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("config: unknown field '" + where + (where.empty() ? "" : ".") + key + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + where + (where.empty() ? "" : ".") + key +
                          "' has the wrong type");
    }
}

json axis_json(const AxisRef& a) { return {{"index", a.index}, {"sign", a.sign}}; }

void read_axis(const json& obj, const char* key, AxisRef& out) {
    if (!obj.contains(key)) return;
    const std::string where = std::string("axes.") + key;
    check_keys(obj.at(key), {"index", "sign"}, where);
    read(obj.at(key), "index", out.index, where);
    read(obj.at(key), "sign", out.sign, where);
}

} // namespace

void SessionConfig::validate() const {
    for (auto c : kAllControls) {
        if (!detectors.count(c))
            throw ConfigError("config: missing detector for " + std::string(to_string(c)));
        detectors.at(c).validate();
    }
    if (!(rate > 0)) throw ConfigError("config: correlation rate must be positive");
    discovery.validate();
    axes.validate();
    if (!(bias_window > 0)) throw ConfigError("config: bias_window must be positive");
    if (!(smooth_window > 0)) throw ConfigError("config: smooth_window must be positive");
    if (!(retention > 0)) throw ConfigError("config: retention must be positive");
    if (!(liveliness.horizon > 0) || liveliness.horizon > retention)
        throw ConfigError("config: liveliness horizon must be in (0, retention]");
    if (!(liveliness.counter_fraction > 0 && liveliness.counter_fraction <= 1))
        throw ConfigError("config: counter_fraction must be in (0, 1]");
    if (settle < 0) throw ConfigError("config: settle must be >= 0");
    if (!(speed >= 0) || !std::isfinite(speed)) throw ConfigError("config: replay speed must be >= 0");
    if (port < 0 || port > 65535) throw ConfigError("config: port out of range");
}

std::string session_config_to_json(const SessionConfig& cfg) {
    json det = json::object();
    for (const auto& [c, d] : cfg.detectors)
        det[std::string(to_string(c))] = {{"on_threshold", d.on_threshold},
                                          {"off_threshold", d.off_threshold},
                                          {"min_duration", d.min_duration},
                                          {"pre_pad", d.pre_pad},
                                          {"post_pad", d.post_pad},
                                          {"refractory", d.refractory}};
    const auto& dc = cfg.discovery;
    json doc = {
        {"detectors", det},
        {"correlation", {{"mode", to_string(cfg.mode)}, {"rate", cfg.rate}}},
        {"discovery",
         {{"cadence", dc.cadence}, {"r_min", dc.r_min}, {"stability", dc.stability},
          {"max_events", dc.max_events}, {"top_n", dc.top_n}}},
        {"axes",
         {{"forward", axis_json(cfg.axes.forward)},
          {"lateral", axis_json(cfg.axes.lateral)},
          {"yaw", axis_json(cfg.axes.yaw)}}},
        {"steering_source", to_string(cfg.steering_source)},
        {"conditioning", {{"bias_window", cfg.bias_window}, {"smooth_window", cfg.smooth_window}}},
        {"liveliness",
         {{"horizon", cfg.liveliness.horizon},
          {"counter_filter", cfg.liveliness.counter_filter},
          {"counter_fraction", cfg.liveliness.counter_fraction}}},
        {"retention", cfg.retention},
        {"settle", cfg.settle},
        {"profile", cfg.profile},
        {"vehicle", cfg.vehicle},
        {"replay", {{"speed", cfg.speed}, {"strict", cfg.strict}}},
        {"serve", {{"port", cfg.port}}}};
    return doc.dump(2) + "\n";
}

SessionConfig session_config_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    SessionConfig cfg;
    check_keys(doc,
               {"detectors", "correlation", "discovery", "axes", "steering_source", "conditioning",
                "liveliness", "retention", "settle", "profile", "vehicle", "replay", "serve"},
               "");
    if (doc.contains("detectors")) {
        const auto& det = doc.at("detectors");
        check_keys(det, {"accelerator", "brake", "steering"}, "detectors");
        for (const auto& [name, body] : det.items()) {
            const Control c = parse_control(name);
            const std::string where = "detectors." + name;
            check_keys(body,
                       {"on_threshold", "off_threshold", "min_duration", "pre_pad", "post_pad",
                        "refractory"},
                       where);
            auto& d = cfg.detectors[c];
            read(body, "on_threshold", d.on_threshold, where);
            read(body, "off_threshold", d.off_threshold, where);
            read(body, "min_duration", d.min_duration, where);
            read(body, "pre_pad", d.pre_pad, where);
            read(body, "post_pad", d.post_pad, where);
            read(body, "refractory", d.refractory, where);
        }
    }
    if (doc.contains("correlation")) {
        const auto& c = doc.at("correlation");
        check_keys(c, {"mode", "rate"}, "correlation");
        std::string mode(to_string(cfg.mode));
        read(c, "mode", mode, "correlation");
        try {
            cfg.mode = parse_correlation_mode(mode);
        } catch (const Error&) {
            throw ConfigError("config: unknown correlation.mode '" + mode + "'");
        }
        read(c, "rate", cfg.rate, "correlation");
    }
    if (doc.contains("discovery")) {
        const auto& d = doc.at("discovery");
        check_keys(d, {"cadence", "r_min", "stability", "max_events", "top_n"}, "discovery");
        read(d, "cadence", cfg.discovery.cadence, "discovery");
        read(d, "r_min", cfg.discovery.r_min, "discovery");
        read(d, "stability", cfg.discovery.stability, "discovery");
        read(d, "max_events", cfg.discovery.max_events, "discovery");
        read(d, "top_n", cfg.discovery.top_n, "discovery");
    }
    if (doc.contains("axes")) {
        const auto& a = doc.at("axes");
        check_keys(a, {"forward", "lateral", "yaw"}, "axes");
        read_axis(a, "forward", cfg.axes.forward);
        read_axis(a, "lateral", cfg.axes.lateral);
        read_axis(a, "yaw", cfg.axes.yaw);
    }
    if (doc.contains("steering_source")) {
        std::string s;
        read(doc, "steering_source", s, "");
        cfg.steering_source = parse_steering_source(s);
    }
    if (doc.contains("conditioning")) {
        const auto& c = doc.at("conditioning");
        check_keys(c, {"bias_window", "smooth_window"}, "conditioning");
        read(c, "bias_window", cfg.bias_window, "conditioning");
        read(c, "smooth_window", cfg.smooth_window, "conditioning");
    }
    if (doc.contains("liveliness")) {
        const auto& l = doc.at("liveliness");
        check_keys(l, {"horizon", "counter_filter", "counter_fraction"}, "liveliness");
        read(l, "horizon", cfg.liveliness.horizon, "liveliness");
        read(l, "counter_filter", cfg.liveliness.counter_filter, "liveliness");
        read(l, "counter_fraction", cfg.liveliness.counter_fraction, "liveliness");
    }
    read(doc, "retention", cfg.retention, "");
    read(doc, "settle", cfg.settle, "");
    read(doc, "profile", cfg.profile, "");
    read(doc, "vehicle", cfg.vehicle, "");
    if (doc.contains("replay")) {
        const auto& r = doc.at("replay");
        check_keys(r, {"speed", "strict"}, "replay");
        read(r, "speed", cfg.speed, "replay");
        read(r, "strict", cfg.strict, "replay");
    }
    if (doc.contains("serve")) {
        const auto& s = doc.at("serve");
        check_keys(s, {"port"}, "serve");
        read(s, "port", cfg.port, "serve");
    }
    cfg.validate();
    return cfg;
}

SessionConfig load_session_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return session_config_from_json(ss.str());
}

std::string topics::event(Control c) { return "event/" + std::string(to_string(c)); }
std::string topics::ranking(Control c) { return "ranking/" + std::string(to_string(c)); }
std::string topics::status(Control c) { return "status/" + std::string(to_string(c)); }

// ---------------------------------------------------------------------------

namespace {

struct Span {
    double origin = 0.0; ///< first timestamp of either log, for elapsed_s
    double start = 0.0;  ///< window clamp: both logs have data in [start, end]
    double end = 0.0;
};

Span recording_span(std::span<const CanFrame> frames, std::span<const ImuSample> imu) {
    if (frames.empty() || imu.empty()) throw Error("session needs both CAN and IMU data");
    return {std::min(frames.front().t, imu.front().t), std::max(frames.front().t, imu.front().t),
            std::min(frames.back().t, imu.back().t)};
}

/// Per-control discovery with its private evidence store. Evidence for a
/// window is copied out of the shared store once the store has moved past
/// w_end + settle, so what gets scored never depends on thread timing.
class DiscoveryStage {
public:
    DiscoveryStage(Control c, const SessionConfig& cfg, const std::optional<VehicleProfile>& profile)
        : cfg_(cfg), discovery_(c, cfg.discovery), evidence_(kInf) {
        if (profile) {
            auto it = profile->controls.find(c);
            if (it != profile->controls.end() && !it->second.candidates.empty())
                profile_mask_ = it->second.mask();
        }
    }

    bool wants_more() const { return discovery_.events_seen() < cfg_.discovery.max_events; }
    double evidence_horizon(const EventWindow& w) const { return w.w_end + cfg_.settle; }

    std::optional<RankingReport> process(const EventWindow& w, const ChannelStore& store,
                                         std::span<const RefSample> ref, double origin) {
        store.copy_slice_to(evidence_, w.w_start, w.w_end, evidence_horizon(w));
        const bool scores = (discovery_.events_seen() + 1) % cfg_.discovery.cadence == 0;
        Mask mask = profile_mask_ ? *profile_mask_
                    : scores      ? liveliness_mask(store, w.w_end, cfg_.liveliness)
                                  : Mask::of({});
        const DiscoveryInputs in{evidence_, ref, mask, cfg_.mode, cfg_.rate, origin};
        return discovery_.on_event(w, in);
    }

    Discovery& discovery() { return discovery_; }

    ControlResult result(std::vector<EventWindow> windows) const {
        ControlResult r;
        r.control = discovery_.control();
        r.windows = std::move(windows);
        r.rounds = discovery_.rounds();
        r.status = discovery_.status();
        r.winner = discovery_.winner();
        r.diagnostics = discovery_.diagnostics();
        return r;
    }

private:
    const SessionConfig& cfg_;
    Discovery discovery_;
    ChannelStore evidence_;
    std::optional<Mask> profile_mask_;
};

/// Holds the shared store's eviction floor at the oldest window start any
/// control may still need.
class FloorTracker {
public:
    FloorTracker(ChannelStore& store, double start) : store_(store) {
        for (auto c : kAllControls) needed_[c] = start;
        store_.set_floor(start);
    }
    void update(Control c, double t) {
        std::lock_guard lk(mu_);
        needed_[c] = t;
        double floor = kInf;
        for (const auto& [k, v] : needed_) floor = std::min(floor, v);
        store_.set_floor(floor);
    }

private:
    ChannelStore& store_;
    std::mutex mu_;
    std::map<Control, double> needed_;
};

class ErrorSlot {
public:
    void capture() {
        std::lock_guard lk(mu_);
        if (!first_) first_ = std::current_exception();
    }
    void rethrow() {
        if (first_) std::rethrow_exception(first_);
    }

private:
    std::mutex mu_;
    std::exception_ptr first_;
};

} // namespace

Session::Session(SessionConfig cfg, std::optional<VehicleProfile> profile)
    : cfg_(std::move(cfg)), profile_(std::move(profile)) {
    cfg_.validate();
}

Session::~Session() { stop(); }

void Session::stop() {
    stop_ = true;
    std::lock_guard lk(clock_mu_);
    if (clock_) clock_->stop();
}

double Session::now() const {
    std::lock_guard lk(clock_mu_);
    return clock_ ? clock_->t_now() : -kInf;
}

double Session::wall_elapsed() const {
    std::lock_guard lk(clock_mu_);
    return clock_ ? clock_->wall_elapsed() : 0.0;
}

SessionResult Session::run(std::span<const CanFrame> frames, std::span<const ImuSample> imu) {
    const Span span = recording_span(frames, imu);
    ChannelStore store(cfg_.retention);
    FloorTracker floors(store, span.origin);
    ErrorSlot errors;

    {
        std::lock_guard lk(clock_mu_);
        clock_ = std::make_shared<ReplayClock>(cfg_.speed);
        if (stop_) clock_->stop();
    }

    // Every subscription exists before the first publish.
    auto can_sub = bus_.subscribe(topics::can);
    auto imu_sub = bus_.subscribe(topics::imu);
    std::map<Control, PipelineBus::SubscriptionPtr> det_subs, ref_subs, ev_subs;
    for (auto c : kAllControls) {
        det_subs[c] = bus_.subscribe(topics::reference);
        ref_subs[c] = bus_.subscribe(topics::reference);
        ev_subs[c] = bus_.subscribe(topics::event(c));
    }

    std::map<Control, ControlResult> results;
    std::mutex results_mu;
    std::vector<std::thread> threads;

    threads.emplace_back([&] {
        try {
            while (auto m = can_sub->pop()) store.ingest(std::get<CanFrame>(*m->payload));
        } catch (...) {
            errors.capture();
            stop();
        }
        store.close();
    });

    threads.emplace_back([&] {
        try {
            InertialConditioner cond(cfg_.bias_window, cfg_.smooth_window);
            std::vector<ImuSample> out;
            auto flush = [&] {
                for (auto& s : out) bus_.publish(topics::reference, s.t, s);
                out.clear();
            };
            while (auto m = imu_sub->pop()) {
                cond.push(std::get<ImuSample>(*m->payload), out);
                flush();
            }
            cond.finish(out);
            flush();
        } catch (...) {
            errors.capture();
            stop();
        }
        bus_.close(topics::reference);
    });

    for (auto c : kAllControls) {
        threads.emplace_back([&, c] {
            try {
                const auto& dcfg = cfg_.detector(c);
                EventDetector det(event_kind_for(c), dcfg);
                std::deque<EventWindow> pending;
                std::size_t index = 0;
                auto flush = [&](double upto) {
                    while (!pending.empty() && pending.front().w_end <= upto) {
                        const auto w = pending.front();
                        pending.pop_front();
                        bus_.publish(topics::event(c), w.w_end, DetectedEvent{c, ++index, w});
                    }
                };
                while (auto m = det_subs[c]->pop()) {
                    const auto& s = std::get<ImuSample>(*m->payload);
                    const RefSample r{s.t, reference_value(c, s, cfg_.axes, cfg_.steering_source)};
                    if (auto e = det.push(r)) pending.push_back(window(*e, dcfg, span.start, span.end));
                    flush(r.t);
                }
                flush(kInf);
            } catch (...) {
                errors.capture();
                stop();
            }
            bus_.close(topics::event(c));
        });

        threads.emplace_back([&, c] {
            DiscoveryStage stage(c, cfg_, profile_);
            std::vector<EventWindow> windows;
            bool announced = false;
            auto announce = [&](double t) {
                auto& d = stage.discovery();
                if (announced || !d.terminal()) return;
                announced = true;
                bus_.publish(topics::status(c), t, StatusChanged{c, {d.status(), d.winner()}});
            };
            try {
                std::vector<RefSample> ref;
                while (auto m = ev_subs[c]->pop()) {
                    const auto& w = std::get<DetectedEvent>(*m->payload).window;
                    windows.push_back(w);
                    if (!stage.wants_more()) continue;
                    while (ref.empty() || ref.back().t < w.w_end) {
                        auto r = ref_subs[c]->pop();
                        if (!r) break;
                        const auto& s = std::get<ImuSample>(*r->payload);
                        ref.push_back({s.t, reference_value(c, s, cfg_.axes, cfg_.steering_source)});
                    }
                    store.wait_past(stage.evidence_horizon(w));
                    auto round = stage.process(w, store, ref, span.origin);
                    floors.update(c, stage.wants_more() ? w.w_start : kInf);
                    auto& d = stage.discovery();
                    if (round)
                        bus_.publish(topics::ranking(c), w.w_end,
                                     RoundPublished{c, *round, {d.status(), d.winner()}});
                    announce(w.w_end);
                }
                stage.discovery().finish();
                announce(span.end);
            } catch (...) {
                errors.capture();
                stop();
            }
            ref_subs[c]->cancel();
            floors.update(c, kInf);
            bus_.close(topics::ranking(c));
            bus_.close(topics::status(c));
            std::lock_guard lk(results_mu);
            results[c] = stage.result(std::move(windows));
        });
    }

    std::size_t frames_sent = 0, samples_sent = 0;
    try {
        replay_merged(frames, imu, *clock_, [&](const auto& item) {
            using T = std::decay_t<decltype(item)>;
            if constexpr (std::is_same_v<T, CanFrame>) {
                bus_.publish(topics::can, item.t, item);
                ++frames_sent;
            } else {
                bus_.publish(topics::imu, item.t, item);
                ++samples_sent;
            }
        });
    } catch (...) {
        errors.capture();
    }
    bus_.close(topics::can);
    bus_.close(topics::imu);
    for (auto& t : threads) t.join();
    errors.rethrow();

    SessionResult out;
    out.vehicle = cfg_.vehicle;
    out.rec_start = span.origin;
    out.rec_end = std::max(frames.back().t, imu.back().t);
    out.frames = frames_sent;
    out.imu_samples = samples_sent;
    out.controls = std::move(results);
    return out;
}

SessionResult infer_batch(const SessionConfig& cfg, std::span<const CanFrame> frames,
                          std::span<const ImuSample> imu, const std::optional<VehicleProfile>& profile) {
    cfg.validate();
    const Span span = recording_span(frames, imu);
    ChannelStore store(kInf);
    for (const auto& f : frames) store.ingest(f);
    store.close();
    const auto conditioned = debias_smooth(imu, cfg.bias_window, cfg.smooth_window);

    SessionResult out;
    out.vehicle = cfg.vehicle;
    out.rec_start = span.origin;
    out.rec_end = std::max(frames.back().t, imu.back().t);
    out.frames = frames.size();
    out.imu_samples = imu.size();
    for (auto c : kAllControls) {
        const auto ref = reference(c, conditioned, cfg.axes, cfg.steering_source);
        const auto& dcfg = cfg.detector(c);
        DiscoveryStage stage(c, cfg, profile);
        std::vector<EventWindow> windows;
        for (const auto& e : detect(ref, dcfg)) {
            const auto w = window(e, dcfg, span.start, span.end);
            windows.push_back(w);
            if (stage.wants_more()) stage.process(w, store, ref.samples, span.origin);
        }
        stage.discovery().finish();
        out.controls[c] = stage.result(std::move(windows));
    }
    return out;
}

} // namespace canreveal

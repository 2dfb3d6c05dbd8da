#include "canreveal/protocol.hpp"

#include <algorithm>
#include <cmath>

namespace canreveal {

using nlohmann::json;

std::string_view to_string(MessageType t) noexcept {
    switch (t) {
    case MessageType::hello: return "hello";
    case MessageType::snapshot: return "snapshot";
    case MessageType::ranking_update: return "ranking_update";
    case MessageType::event_detected: return "event_detected";
    case MessageType::decoded_value: return "decoded_value";
    case MessageType::calibration_prompt: return "calibration_prompt";
    case MessageType::calibration_ack: return "calibration_ack";
    case MessageType::select_control: return "select_control";
    case MessageType::convergence: return "convergence";
    case MessageType::not_identified: return "not_identified";
    }
    return "?";
}

MessageType parse_message_type(std::string_view s) {
    for (int i = 0; i <= int(MessageType::not_identified); ++i)
        if (to_string(MessageType(i)) == s) return MessageType(i);
    throw ProtocolError("unknown message type '" + std::string(s) + "'");
}

bool client_may_send(MessageType t) noexcept {
    return t == MessageType::hello || t == MessageType::select_control ||
           t == MessageType::calibration_ack;
}

std::string make_message(MessageType type, double t, const json& body) {
    json env = json::object();
    env["schema_version"] = kSchemaVersion;
    env["type"] = to_string(type);
    env["t"] = t;
    env["body"] = body;
    return env.dump();
}

namespace {

const json& field(const json& obj, const char* name) {
    auto it = obj.find(name);
    if (it == obj.end()) throw ProtocolError(std::string("missing field '") + name + "'");
    return *it;
}

Control body_control(const json& body) {
    const auto& c = field(body, "control");
    if (!c.is_string()) throw ProtocolError("field 'control' must be a string");
    try {
        return parse_control(c.get<std::string>());
    } catch (const Error&) {
        throw ProtocolError("unknown control '" + c.get<std::string>() + "'");
    }
}

json round_entries(const RankingReport& r) {
    json out = json::array();
    for (const auto& e : r.entries)
        out.push_back({{"id", e.key.id}, {"channel", channel_suffix(e.key)}, {"correlation", std::abs(e.r)}});
    if (out.empty()) out.push_back({{"id", "N/A"}, {"channel", "N/A"}, {"correlation", "N/A"}});
    return out;
}

json optional_channel(const std::optional<ChannelKey>& k) {
    return k ? json(channel_name(*k)) : json(nullptr);
}

} // namespace

ClientMessage parse_client_message(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error&) {
        throw ProtocolError("frame is not valid JSON");
    }
    if (!doc.is_object()) throw ProtocolError("frame is not a JSON object");
    const auto& version = field(doc, "schema_version");
    if (!version.is_string() || version.get<std::string>() != kSchemaVersion)
        throw ProtocolError("unsupported schema_version");
    const auto& type = field(doc, "type");
    if (!type.is_string()) throw ProtocolError("field 'type' must be a string");
    ClientMessage msg;
    msg.type = parse_message_type(type.get<std::string>());
    if (!client_may_send(msg.type))
        throw ProtocolError("clients may not send '" + type.get<std::string>() + "'");
    if (doc.contains("t")) {
        if (!doc["t"].is_number()) throw ProtocolError("field 't' must be a number");
        msg.t = doc["t"].get<double>();
    }
    msg.body = doc.value("body", json::object());
    if (!msg.body.is_object()) throw ProtocolError("field 'body' must be an object");

    switch (msg.type) {
    case MessageType::select_control: {
        body_control(msg.body);
        if (msg.body.contains("channel") && !msg.body["channel"].is_null()) {
            if (!msg.body["channel"].is_string()) throw ProtocolError("field 'channel' must be a string");
            try {
                parse_channel_name(msg.body["channel"].get<std::string>());
            } catch (const Error&) {
                throw ProtocolError("bad channel name");
            }
        }
        break;
    }
    case MessageType::calibration_ack: {
        body_control(msg.body);
        const auto& step = field(msg.body, "step");
        if (!step.is_number_unsigned()) throw ProtocolError("field 'step' must be a non-negative integer");
        break;
    }
    default: break;
    }
    return msg;
}

double scale_decoded(Control control, double raw, double min_value, double max_value) {
    if (!(max_value > min_value)) return 0.0;
    const double x = std::clamp((raw - min_value) / (max_value - min_value), 0.0, 1.0);
    return is_pedal(control) ? x : 2.0 * x - 1.0;
}

json ranking_update_body(const RoundPublished& round) {
    const auto& r = round.report;
    json body = {{"control", to_string(round.control)},
                 {"round", r.round},
                 {"events_seen", r.events_seen},
                 {"elapsed_s", r.elapsed_s},
                 {"entries", round_entries(r)},
                 {"status", to_string(round.status.status)},
                 {"winner", optional_channel(round.status.winner)}};
    return body;
}

json event_detected_body(const DetectedEvent& event) {
    const auto& w = event.window;
    return {{"control", to_string(event.control)},
            {"kind", to_string(w.event.kind)},
            {"index", event.index},
            {"t_on", w.event.t_on},
            {"t_off", w.event.t_off},
            {"peak", w.event.peak},
            {"w_start", w.w_start},
            {"w_end", w.w_end}};
}

json calibration_prompt_body(const CalibrationPrompt& p, EngineState engine) {
    return {{"control", to_string(p.control)},
            {"step", p.step},
            {"steps_total", p.steps_total},
            {"level", p.level},
            {"hold", p.hold},
            {"engine", engine == EngineState::running ? "running" : "off"}};
}

// ---------------------------------------------------------------------------

GatewayState::GatewayState(std::string vehicle, double decoded_rate)
    : vehicle_(std::move(vehicle)), decoded_period_(1.0 / decoded_rate) {
    if (!(decoded_rate > 0)) throw ConfigError("decoded_value rate must be positive");
    for (auto c : kAllControls) controls_[c];
}

void GatewayState::set_vehicle(std::string vehicle) {
    std::lock_guard lk(mu_);
    vehicle_ = std::move(vehicle);
}

void GatewayState::set_profile(const std::optional<VehicleProfile>& profile) {
    std::lock_guard lk(mu_);
    profile_ = profile;
}

std::optional<ChannelKey> GatewayState::display_locked(Control c) const {
    const auto& v = controls_.at(c);
    if (v.selected) return v.selected;
    if (v.winner) return v.winner;
    if (profile_) {
        auto it = profile_->controls.find(c);
        if (it != profile_->controls.end()) {
            if (it->second.chosen) return it->second.chosen;
            if (!it->second.candidates.empty()) return it->second.candidates.front().key;
        }
    }
    return std::nullopt;
}

std::optional<ChannelKey> GatewayState::display_channel(Control c) const {
    std::lock_guard lk(mu_);
    return display_locked(c);
}

std::optional<std::string> GatewayState::decoded_locked(Control c, const CanFrame& frame) {
    const auto key = display_locked(c);
    if (!key || key->id != frame.id || std::size_t(key->start_byte) + 2 > frame.dlc) return std::nullopt;
    auto& v = controls_[c];
    const double raw = decode_channel(frame.payload(), *key);
    if (v.observed_key != key) {
        v.observed_key = key;
        v.observed = false;
        v.last_sent = -1e300;
    }
    if (!v.observed) {
        v.observed_min = v.observed_max = raw;
        v.observed = true;
    } else {
        v.observed_min = std::min(v.observed_min, raw);
        v.observed_max = std::max(v.observed_max, raw);
    }
    // Consecutive pushes are at least one period apart; the tolerance absorbs timestamp rounding.
    if (frame.t - v.last_sent < decoded_period_ - 1e-6) return std::nullopt;
    v.last_sent = frame.t;

    double lo = v.observed_min, hi = v.observed_max;
    std::string scaling = "observed";
    if (profile_) {
        auto it = profile_->controls.find(c);
        if (it != profile_->controls.end())
            if (const auto* cand = it->second.find(*key); cand && cand->max_value > cand->min_value) {
                lo = cand->min_value;
                hi = cand->max_value;
                scaling = "calibration";
            }
    }
    return make_message(MessageType::decoded_value, frame.t,
                        {{"control", to_string(c)},
                         {"channel", channel_name(*key)},
                         {"raw", raw},
                         {"value", scale_decoded(c, raw, lo, hi)},
                         {"scaling", scaling}});
}

std::vector<std::string> GatewayState::on_pipeline(const std::string&, double t, const PipelinePayload& payload) {
    std::vector<std::string> out;
    std::lock_guard lk(mu_);
    if (const auto* f = std::get_if<CanFrame>(&payload)) {
        for (auto c : kAllControls)
            if (auto m = decoded_locked(c, *f)) out.push_back(std::move(*m));
    } else if (const auto* e = std::get_if<DetectedEvent>(&payload)) {
        controls_[e->control].events = std::max(controls_[e->control].events, e->index);
        out.push_back(make_message(MessageType::event_detected, t, event_detected_body(*e)));
    } else if (const auto* r = std::get_if<RoundPublished>(&payload)) {
        auto body = ranking_update_body(*r);
        auto& v = controls_[r->control];
        v.latest_round = body;
        v.status = r->status.status;
        v.winner = r->status.winner;
        out.push_back(make_message(MessageType::ranking_update, t, body));
    } else if (const auto* s = std::get_if<StatusChanged>(&payload)) {
        auto& v = controls_[s->control];
        v.status = s->status.status;
        v.winner = s->status.winner;
        if (s->status.status == DiscoveryStatus::converged)
            out.push_back(make_message(MessageType::convergence, t,
                                       {{"control", to_string(s->control)},
                                        {"winner", optional_channel(s->status.winner)},
                                        {"events_seen", v.latest_round ? (*v.latest_round)["events_seen"] : json(0)},
                                        {"round", v.latest_round ? (*v.latest_round)["round"] : json(0)}}));
        else if (s->status.status == DiscoveryStatus::not_identified)
            out.push_back(make_message(MessageType::not_identified, t,
                                       {{"control", to_string(s->control)},
                                        {"winner", "N/A"},
                                        {"rounds", v.latest_round ? (*v.latest_round)["round"] : json(0)}}));
    }
    return out;
}

std::vector<std::string> GatewayState::on_client(const ClientMessage& msg) {
    std::vector<std::string> out;
    std::lock_guard lk(mu_);
    switch (msg.type) {
    case MessageType::hello:
        if (msg.body.contains("schema_version") && msg.body["schema_version"] != kSchemaVersion)
            throw ProtocolError("unsupported schema_version");
        break;
    case MessageType::select_control: {
        const Control c = parse_control(msg.body.at("control").get<std::string>());
        auto& v = controls_[c];
        if (msg.body.contains("channel") && !msg.body["channel"].is_null())
            v.selected = parse_channel_name(msg.body["channel"].get<std::string>());
        else
            v.selected.reset();
        break;
    }
    case MessageType::calibration_ack: {
        const Control c = parse_control(msg.body.at("control").get<std::string>());
        const auto step = msg.body.at("step").get<std::size_t>();
        if (!prompt_ || (*prompt_)["control"] != to_string(c) || (*prompt_)["step"] != step)
            throw ProtocolError("calibration_ack does not match the current prompt");
        pending_ack_ = {c, step};
        prompt_.reset();
        out.push_back(make_message(MessageType::calibration_ack, msg.t,
                                   {{"control", to_string(c)}, {"step", step}, {"accepted", true}}));
        break;
    }
    default: throw ProtocolError("clients may not send this type");
    }
    return out;
}

std::string GatewayState::hello(double t) const {
    json accepts = json::array();
    for (auto m : {MessageType::hello, MessageType::select_control, MessageType::calibration_ack})
        accepts.push_back(to_string(m));
    return make_message(MessageType::hello, t,
                        {{"server", "canreveal"}, {"schema_version", kSchemaVersion}, {"accepts", accepts}});
}

std::string GatewayState::snapshot(double t) const {
    std::lock_guard lk(mu_);
    json controls = json::object();
    for (const auto& [c, v] : controls_) {
        json cal = nullptr;
        const auto key = display_locked(c);
        if (profile_ && key) {
            auto it = profile_->controls.find(c);
            if (it != profile_->controls.end())
                if (const auto* cand = it->second.find(*key))
                    cal = {{"min", cand->min_value}, {"max", cand->max_value}};
        }
        controls[std::string(to_string(c))] = {
            {"status", to_string(v.status)},
            {"winner", optional_channel(v.winner)},
            {"events_detected", v.events},
            {"latest_round", v.latest_round ? *v.latest_round : json(nullptr)},
            {"selected_channel", optional_channel(v.selected)},
            {"display_channel", optional_channel(key)},
            {"calibration", cal}};
    }
    return make_message(MessageType::snapshot, t,
                        {{"vehicle", vehicle_},
                         {"controls", controls},
                         {"prompt", prompt_ ? *prompt_ : json(nullptr)}});
}

std::string GatewayState::prompt(const CalibrationPrompt& p, EngineState engine, double t) {
    std::lock_guard lk(mu_);
    prompt_ = calibration_prompt_body(p, engine);
    return make_message(MessageType::calibration_prompt, t, *prompt_);
}

void GatewayState::clear_prompt() {
    std::lock_guard lk(mu_);
    prompt_.reset();
}

std::optional<std::pair<Control, std::size_t>> GatewayState::take_ack() {
    std::lock_guard lk(mu_);
    auto a = pending_ack_;
    pending_ack_.reset();
    return a;
}

} // namespace canreveal

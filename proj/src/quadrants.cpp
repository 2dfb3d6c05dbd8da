#include "canreveal/quadrants.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace canreveal {

namespace {

LabeledSeries channel_series(const std::string& label, const std::vector<ChannelSample>& samples) {
    LabeledSeries s{label, {}, {}};
    s.t.reserve(samples.size());
    s.value.reserve(samples.size());
    for (const auto& x : samples) {
        s.t.push_back(x.t);
        s.value.push_back(x.value);
    }
    return s;
}

double span_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

nlohmann::ordered_json series_json(const LabeledSeries& s) {
    return {{"label", s.label}, {"t", s.t}, {"value", s.value}};
}

} // namespace

double peak_to_peak_ratio(std::span<const double> a, std::span<const double> b) {
    const double pa = span_of(a), pb = span_of(b);
    if (pa == 0 && pb == 0) return 1.0;
    if (pa == 0 || pb == 0) return std::numeric_limits<double>::infinity();
    return std::max(pa, pb) / std::min(pa, pb);
}

QuadrantDocument export_quadrants(const QuadrantInputs& in) {
    if (!in.recording.contains(in.channel))
        throw DomainError("channel " + channel_name(in.channel) + " not present in the recording");
    const std::string name = channel_name(in.channel);
    QuadrantDocument doc;
    doc.channel = in.channel;
    doc.control = in.control;

    if (in.calibration && in.calibration->store.contains(in.channel)) {
        const auto& cal = *in.calibration;
        doc.calibration_available = true;
        doc.calibration = channel_series(name, cal.store.series(in.channel).samples);
        const auto tmpl = cal.prompt_times.size() == cal.schedule.steps.size()
                              ? calibration_template(cal.schedule, cal.prompt_times, in.rate)
                              : calibration_template(cal.schedule,
                                                     cal.prompt_times.empty() ? 0.0 : cal.prompt_times.front(),
                                                     in.rate);
        doc.expected.label = "expected " + std::string(to_string(in.control));
        for (const auto& s : tmpl.samples) {
            doc.expected.t.push_back(s.t);
            doc.expected.value.push_back(s.value);
        }
    } else {
        doc.calibration.label = name;
        const auto tmpl = calibration_template(PromptSchedule::defaults_for(in.control), 0.0, in.rate);
        doc.expected.label = "expected " + std::string(to_string(in.control));
        for (const auto& s : tmpl.samples) {
            doc.expected.t.push_back(s.t);
            doc.expected.value.push_back(s.value);
        }
    }

    std::size_t k = 0;
    for (const auto& w : in.events)
        doc.events.push_back(channel_series("event " + std::to_string(++k),
                                            in.recording.query(in.channel, w.w_start, w.w_end)));

    auto full = channel_series(name, in.recording.series(in.channel).samples);
    doc.overlay_reference.label = "reference " + std::string(to_string(in.control));
    for (const auto& s : in.reference) {
        doc.overlay_reference.t.push_back(s.t);
        doc.overlay_reference.value.push_back(s.value);
    }
    doc.scale_ratio = peak_to_peak_ratio(full.value, doc.overlay_reference.value);
    doc.reference_only = doc.scale_ratio > kOverlayScaleLimit;
    if (!doc.reference_only) doc.overlay_channel = std::move(full);
    return doc;
}

std::string quadrants_to_json(const QuadrantDocument& doc) {
    nlohmann::ordered_json events = nlohmann::ordered_json::array();
    for (const auto& e : doc.events) events.push_back(series_json(e));
    nlohmann::ordered_json overlay = {{"reference_only", doc.reference_only},
                                      {"scale_ratio", std::isfinite(doc.scale_ratio)
                                                          ? nlohmann::ordered_json(doc.scale_ratio)
                                                          : nlohmann::ordered_json(nullptr)},
                                      {"reference", series_json(doc.overlay_reference)}};
    overlay["channel"] = doc.overlay_channel ? series_json(*doc.overlay_channel) : nlohmann::ordered_json(nullptr);
    nlohmann::ordered_json out = {
        {"channel", channel_name(doc.channel)},
        {"control", to_string(doc.control)},
        {"calibration", {{"available", doc.calibration_available}, {"series", series_json(doc.calibration)}}},
        {"template", series_json(doc.expected)},
        {"events", events},
        {"overlay", overlay}};
    return out.dump() + "\n";
}

} // namespace canreveal

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "canreveal/can.hpp"
#include "canreveal/error.hpp"
#include "canreveal/events.hpp"
#include "canreveal/imu.hpp"

namespace canreveal {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Uniform sampling grid over [start, end].
struct Grid {
    double start = 0.0;
    double end = 0.0;
    double rate = 20.0;

    Grid(double start_, double end_, double rate_) : start(start_), end(end_), rate(rate_) {
        if (!(rate > 0)) throw DomainError("grid rate must be positive");
        if (!(end >= start)) throw DomainError("grid end precedes start");
    }

    std::size_t points() const {
        return static_cast<std::size_t>(std::floor((end - start) * rate + 1e-9)) + 1;
    }
    double at(std::size_t i) const { return std::min(start + static_cast<double>(i) / rate, end); }
};

/// Linear interpolation of a (t, value) series onto `grid`. The series must
/// be sorted by t and span the grid; exact sample values are reproduced at
/// coincident timestamps.
template <typename Scalar = double, typename Sample>
Vector<Scalar> resample_linear(std::span<const Sample> series, const Grid& grid) {
    const std::size_t n = grid.points();
    if (series.empty()) throw CoverageError("cannot resample an empty series");
    if (series.front().t > grid.at(0) || series.back().t < grid.at(n - 1))
        throw CoverageError("series does not span the grid");
    Vector<Scalar> out(static_cast<Eigen::Index>(n));
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = grid.at(i);
        while (j + 1 < series.size() && series[j + 1].t <= t) ++j;
        const auto& a = series[j];
        if (a.t == t || j + 1 >= series.size()) {
            out[Eigen::Index(i)] = static_cast<Scalar>(a.value);
            continue;
        }
        const auto& b = series[j + 1];
        const double u = (t - a.t) / (b.t - a.t);
        out[Eigen::Index(i)] = static_cast<Scalar>(double(a.value) +
                                                   u * (double(b.value) - double(a.value)));
    }
    return out;
}

/// Forward differences (v[i+1] - v[i]) / dt.
template <typename Derived>
Vector<typename Derived::Scalar> rate_of_change(const Eigen::MatrixBase<Derived>& v,
                                                typename Derived::Scalar dt) {
    if (v.size() < 2) throw DomainError("rate_of_change needs at least 2 points");
    if (!(dt > 0)) throw DomainError("rate_of_change needs dt > 0");
    const Eigen::Index n = v.size() - 1;
    return (v.tail(n) - v.head(n)) / dt;
}

/// Pearson product-moment correlation, two-pass. Throws
/// UndefinedCorrelation when either input has no variance.
template <typename DX, typename DY>
typename DX::Scalar pearson(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
    using Scalar = typename DX::Scalar;
    if (x.size() != y.size()) throw DomainError("pearson inputs differ in length");
    if (x.size() < 2) throw DomainError("pearson needs at least 2 points");
    const Scalar n = static_cast<Scalar>(x.size());
    const auto dx = (x.array() - x.sum() / n).eval();
    const auto dy = (y.array() - y.sum() / n).eval();
    const Scalar sxx = dx.square().sum();
    const Scalar syy = dy.square().sum();
    // Deviations below rounding noise of the mean count as zero variance.
    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    const Scalar fx = n * eps * x.cwiseAbs().maxCoeff();
    const Scalar fy = n * eps * y.cwiseAbs().maxCoeff();
    if (sxx <= fx * fx || syy <= fy * fy) throw UndefinedCorrelation("zero variance input");
    const Scalar r = (dx * dy).sum() / std::sqrt(sxx * syy);
    return std::clamp(r, Scalar(-1), Scalar(1));
}

enum class CorrelationMode { value, derivative };

std::string_view to_string(CorrelationMode m) noexcept;
CorrelationMode parse_correlation_mode(std::string_view s);

/// Set of channel hypotheses allowed into scoring; empty optional means all.
struct Mask {
    std::optional<std::set<ChannelKey>> allowed;

    static Mask all() { return {}; }
    static Mask of(std::set<ChannelKey> keys) { return Mask{std::move(keys)}; }
    bool allows(const ChannelKey& k) const { return !allowed || allowed->count(k) > 0; }
};

struct ChannelScore {
    ChannelKey key;
    double r = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_events = 0;
};

struct ScoreDiagnostics {
    std::size_t coverage_excluded = 0;
    std::size_t zero_variance_excluded = 0;
};

/// Correlates every masked channel with the reference over the concatenation
/// of all event windows (one Pearson per channel). In derivative mode the
/// forward differences are taken per window, never across a boundary.
std::vector<ChannelScore> score_channels(const ChannelStore& store,
                                         std::span<const RefSample> ref,
                                         std::span<const EventWindow> windows, const Mask& mask,
                                         CorrelationMode mode, double rate,
                                         ScoreDiagnostics* diag = nullptr);

/// |r| is compared on a 1e-9 lattice so that correlations equal to
/// reporting precision tie and fall back to the channel name.
inline constexpr double kRankResolution = 1e-9;

/// Sort by |r| descending, ties by canonical channel name; keep top_n.
std::vector<ChannelScore> rank(std::vector<ChannelScore> scores, std::size_t top_n);

struct LivelinessOptions {
    double horizon = 600.0;
    bool counter_filter = true;
    double counter_fraction = 0.99;
};

/// Drops channels that are constant over [t_end - horizon, t_end] and,
/// optionally, counters (one repeated nonzero modular delta in >= 99% of
/// steps).
Mask liveliness_mask(const ChannelStore& store, double t_end, const LivelinessOptions& opts = {});

} // namespace canreveal

#pragma once

// Error and dispersion statistics over a measured series: mean error and
// RMSD against ground truth, indirect re-estimates through intermediate
// images, and the Pearson correlation between dispersion and error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pipoc/errors.hpp"
#include "pipoc/measure.hpp"

namespace pipoc {

/// Pairwise measurement values of an n-image series. `direct` holds the
/// upper triangle (f < g) row-major; mirrored access negates the value.
/// `indirect` holds, per pair, the re-estimates through every intermediate
/// image k (ascending, k != f,g), each valid only when both legs are usable.
struct SeriesResult {
    int n = 0;
    std::vector<double> direct;
    std::vector<std::uint8_t> usable;
    std::vector<double> truth; // empty when no ground truth is attached
    std::vector<double> indirect;
    std::vector<std::uint8_t> indirect_ok;

    size_t index(int f, int g) const {
        if (!(0 <= f && f < g && g < n)) throw ParamError("pair index out of range");
        return static_cast<size_t>(f) * n - static_cast<size_t>(f) * (f + 1) / 2 +
               (g - f - 1);
    }
    /// Signed value for any ordered pair: JSN_gf == -JSN_fg.
    double signed_at(int f, int g) const {
        if (f == g) return 0.0;
        return f < g ? direct[index(f, g)] : -direct[index(g, f)];
    }
    bool pair_usable(int f, int g) const {
        return usable[f < g ? index(f, g) : index(g, f)] != 0;
    }
    size_t pair_count() const { return static_cast<size_t>(n) * (n - 1) / 2; }
};

namespace detail {

/// Fill the indirect tensor from the direct triangle: per pair (f,g) one
/// entry for each k, JSN_fk + JSN_kg, flagged usable when both legs are.
inline void fill_indirect(SeriesResult& r) {
    const size_t per_pair = r.n >= 2 ? static_cast<size_t>(r.n - 2) : 0;
    r.indirect.assign(r.pair_count() * per_pair, 0.0);
    r.indirect_ok.assign(r.indirect.size(), 0);
    for (int f = 0; f < r.n; ++f) {
        for (int g = f + 1; g < r.n; ++g) {
            size_t base = r.index(f, g) * per_pair;
            size_t slot = 0;
            for (int k = 0; k < r.n; ++k) {
                if (k == f || k == g) continue;
                r.indirect[base + slot] = r.signed_at(f, k) + r.signed_at(k, g);
                r.indirect_ok[base + slot] =
                    r.pair_usable(f, k) && r.pair_usable(k, g);
                ++slot;
            }
        }
    }
}

} // namespace detail

/// Package a raw pair triangle as a SeriesResult. `usable` may be empty
/// (all pairs usable) and `truth` may be empty (no ground truth).
inline SeriesResult make_series_result(int n, std::vector<double> direct,
                                       std::vector<std::uint8_t> usable = {},
                                       std::vector<double> truth = {}) {
    if (n < 2) throw ParamError("series statistics need at least two images");
    SeriesResult r;
    r.n = n;
    const size_t count = r.pair_count();
    if (direct.size() != count) throw ParamError("pair triangle size mismatch");
    if (!usable.empty() && usable.size() != count)
        throw ParamError("usable flag size mismatch");
    if (!truth.empty() && truth.size() != count)
        throw ParamError("truth triangle size mismatch");
    r.direct = std::move(direct);
    r.usable = usable.empty() ? std::vector<std::uint8_t>(count, 1) : std::move(usable);
    r.truth = std::move(truth);
    detail::fill_indirect(r);
    return r;
}

/// Collect a measured series into a result. Values are millimeters by
/// default; pairs that failed outright or carry a mismatch flag are
/// excluded from every aggregate.
inline SeriesResult make_series_result(const JsnSeries& s, bool in_mm = true) {
    std::vector<double> direct(s.pairs.size());
    std::vector<std::uint8_t> usable(s.pairs.size());
    for (size_t i = 0; i < s.pairs.size(); ++i) {
        direct[i] = in_mm ? s.pairs[i].jsn_mm : s.pairs[i].jsn_px;
        usable[i] = s.ok[i] && !s.pairs[i].mismatch;
    }
    return make_series_result(s.n, std::move(direct), std::move(usable));
}

/// Attach ground truth from per-image joint space widths: the true
/// narrowing from f to g is jsw_f - jsw_g (positive when the gap shrinks).
inline void attach_truth(SeriesResult& r, const std::vector<double>& jsw) {
    if (static_cast<int>(jsw.size()) != r.n)
        throw ParamError("one jsw value per image required");
    r.truth.resize(r.pair_count());
    for (int f = 0; f < r.n; ++f)
        for (int g = f + 1; g < r.n; ++g)
            r.truth[r.index(f, g)] = jsw[f] - jsw[g];
}

namespace detail {

inline void require_truth(const SeriesResult& r) {
    if (r.truth.empty()) throw ParamError("ground truth required");
}

struct DeviationSums {
    double abs = 0.0;
    double sq = 0.0;
    size_t count = 0;
};

inline DeviationSums deviation_sums(const SeriesResult& r) {
    require_truth(r);
    DeviationSums s;
    for (size_t i = 0; i < r.direct.size(); ++i) {
        if (!r.usable[i]) continue;
        double d = r.direct[i] - r.truth[i];
        s.abs += std::abs(d);
        s.sq += d * d;
        ++s.count;
    }
    if (s.count == 0) throw ParamError("no usable pairs");
    return s;
}

} // namespace detail

/// Mean absolute deviation from truth over all usable unordered pairs.
inline double mean_error(const SeriesResult& r) {
    detail::DeviationSums s = detail::deviation_sums(r);
    return s.abs / static_cast<double>(s.count);
}

/// Root-mean-square deviation from truth, same weighting as mean_error.
inline double rmsd(const SeriesResult& r) {
    detail::DeviationSums s = detail::deviation_sums(r);
    return std::sqrt(s.sq / static_cast<double>(s.count));
}

/// Mean and population standard deviation of the indirect re-estimates of
/// pair (f,g) through every usable intermediate image.
inline std::pair<double, double> indirect_mean_and_sigma(const SeriesResult& r,
                                                         int f, int g) {
    if (r.n < 3) throw ParamError("indirect estimates need at least three images");
    const size_t per_pair = static_cast<size_t>(r.n - 2);
    const size_t base = r.index(f, g) * per_pair;
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < per_pair; ++i) {
        if (!r.indirect_ok[base + i]) continue;
        sum += r.indirect[base + i];
        ++count;
    }
    if (count == 0) throw ParamError("no usable intermediate images");
    const double mean = sum / static_cast<double>(count);
    double var = 0.0;
    for (size_t i = 0; i < per_pair; ++i) {
        if (!r.indirect_ok[base + i]) continue;
        double d = r.indirect[base + i] - mean;
        var += d * d;
    }
    return {mean, std::sqrt(var / static_cast<double>(count))};
}

/// Expected mean absolute error of a zero-mean Gaussian with the given RMSD.
inline double rmsd_to_mean_error(double rmsd_value) {
    if (rmsd_value < 0.0) throw ParamError("rmsd must be non-negative");
    return std::sqrt(2.0 / 3.14159265358979323846) * rmsd_value;
}

/// Sample Pearson correlation coefficient.
inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ParamError("series length mismatch");
    if (xs.size() < 3) throw ParamError("correlation needs at least three points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw ParamError("degenerate variance");
    double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

/// Fraction of pairs excluded from the aggregates.
inline double excluded_ratio(const SeriesResult& r) {
    size_t bad = 0;
    for (std::uint8_t u : r.usable) bad += u == 0;
    return static_cast<double>(bad) / static_cast<double>(r.usable.size());
}

} // namespace pipoc

#pragma once

// Region-masked phase correlation and joint space narrowing.
//
// The measurement chain: integer pre-alignment of the two windows, a phase
// correlation restricted to one bone region at a time, and the narrowing
// value as the difference between the two regional y-displacements.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "pipoc/errors.hpp"
#include "pipoc/image.hpp"
#include "pipoc/segmentation.hpp"
#include "pipoc/spectral.hpp"

namespace pipoc {

struct CalibrationResult {
    int dx = 0; // integer displacement of the follow-up, x
    int dy = 0; // integer displacement of the follow-up, y
    DisplacementEstimate residual; // measured after the last applied shift
    int rounds = 0;
};

/// Integer pre-alignment of the follow-up window onto the baseline.
/// Both windows are median-filtered, correlated full-frame, and the
/// follow-up is shifted by the rounded estimate; repeated until the
/// residual is below half a pixel per axis or three rounds are spent.
/// The filter exists to protect the rounding decision; it biases
/// fractional estimates, so the returned residual is re-measured on
/// the unfiltered windows after the total shift.
/// Throws CalibrationError when no round produces a trustworthy peak.
inline CalibrationResult calibrate_window(const GrayImage& baseline,
                                          const GrayImage& followup,
                                          const FipocConfig& cfg = {},
                                          int median_radius = 1) {
    if (baseline.width != followup.width || baseline.height != followup.height)
        throw ParamError("window shape mismatch");
    GrayImage mf = median_filter(baseline, median_radius);
    GrayImage mg = median_filter(followup, median_radius);
    CalibrationResult res;
    bool any_clean = false;
    for (int round = 0; round < 3; ++round) {
        DisplacementEstimate est = fipoc(mf, mg, cfg);
        res.rounds = round + 1;
        any_clean = any_clean || !est.mismatch;
        const int rx = static_cast<int>(std::lround(est.alpha));
        const int ry = static_cast<int>(std::lround(est.beta));
        if (rx == 0 && ry == 0) break;
        if (round + 1 == 3) break; // out of rounds; keep the offset so far
        res.dx += rx;
        res.dy += ry;
        mg = circular_shift(mg, -rx, -ry);
    }
    if (!any_clean)
        throw CalibrationError("no trustworthy correlation peak in any alignment round");
    res.residual = fipoc(baseline,
                         (res.dx != 0 || res.dy != 0)
                             ? circular_shift(followup, -res.dx, -res.dy)
                             : followup,
                         cfg);
    return res;
}

struct PipocConfig {
    WeightingConfig weighting{};
    double peak_threshold = 0.1;
    // The masked phase image is already compact; a second taper before the
    // final transform is off by default and kept only for experiments.
    bool rewindow_after_mask = false;
};

namespace detail {

/// Phase-only image: the window's spectrum reduced to unit amplitude and
/// transformed back. Real for real input; the imaginary residue is rounding.
inline std::vector<double> phase_only_image(const GrayImage& img) {
    ComplexSpectrum s = forward_dft_raw(img.width, img.height, windowed_samples(img));
    std::vector<cplx> back = inverse_dft(phase_extract(s));
    std::vector<double> out(back.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = back[i].real();
    return out;
}

} // namespace detail

/// Displacement of the masked region between f and g. Both windows are
/// reduced to phase-only images, cut by the SAME mask, and correlated.
/// The mask must cover at least 10% of the window.
inline DisplacementEstimate pipoc_region(const GrayImage& f, const GrayImage& g,
                                         const std::vector<std::uint8_t>& mask,
                                         const PipocConfig& cfg = {}) {
    if (f.width != g.width || f.height != g.height)
        throw ParamError("window shape mismatch");
    if (mask.size() != f.samples.size())
        throw ParamError("mask shape mismatch");
    size_t area = 0;
    for (std::uint8_t m : mask) area += m != 0;
    if (area == 0) throw MaskError("empty region mask");
    if (static_cast<double>(area) < 0.10 * static_cast<double>(mask.size()))
        throw MaskError("region mask below the minimum area fraction");

    std::vector<double> pf = detail::phase_only_image(f);
    std::vector<double> pg = detail::phase_only_image(g);
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) {
            pf[i] = 0.0;
            pg[i] = 0.0;
        }
    }
    if (cfg.rewindow_after_mask) {
        GrayImage w = hanning_window(f.width, f.height);
        for (size_t i = 0; i < pf.size(); ++i) {
            pf[i] *= w.samples[i];
            pg[i] *= w.samples[i];
        }
    }
    ComplexSpectrum mf = forward_dft_raw(f.width, f.height, pf);
    ComplexSpectrum mg = forward_dft_raw(g.width, g.height, pg);
    // (follow-up, baseline) order puts the peak at +displacement.
    PhaseSpectrum r = cross_phase_spectrum(mg, mf);
    CorrelationSurface surf = correlation_surface(r, cfg.weighting);
    return fit_subpixel_peak(surf, cfg.peak_threshold);
}

struct JsnMeasurement {
    DisplacementEstimate upper; // region above the gap, post-calibration
    DisplacementEstimate lower; // region below the gap, post-calibration
    double jsn_px = 0.0;        // upper.beta - lower.beta; narrowing positive
    double jsn_mm = 0.0;
    int calib_dx = 0; // integer offset removed before measurement
    int calib_dy = 0;
    bool mismatch = false; // either region failed the peak threshold
};

struct QuantifyConfig {
    int mask_margin_rows = 0; // rows excluded on each side of the gap curve
    int gully_i_min = 0;      // odd px; 0 derives the range from spacing
    int gully_i_max = 0;
    int median_radius = 1; // calibration pre-filter radius
    PipocConfig pipoc{};
    FipocConfig calibration{};
};

/// Segment a window into the two bone regions: depth map over gully widths
/// scaled by the window's own pixel spacing, best connected path, masks on
/// either side. margin_rows > 0 additionally excludes rows near the curve.
/// Explicit odd gully widths override the spacing-derived range.
inline RegionMasks segment_window(const GrayImage& win, int margin_rows = 0,
                                  int i_min_override = 0, int i_max_override = 0) {
    if (margin_rows < 0) throw ParamError("mask margin must be non-negative");
    auto [i_min, i_max] = gully_width_range(win.spacing_mm);
    if (i_min_override > 0) i_min = i_min_override;
    if (i_max_override > 0) i_max = i_max_override;
    SegmentationCurve c = segmentation_curve(integral_map(depth_map(win, i_min, i_max)));
    RegionMasks masks = region_masks(c, win.width, win.height);
    if (margin_rows > 0) {
        for (int x = 0; x < masks.width; ++x) {
            for (int y = 0; y < masks.height; ++y) {
                size_t i = static_cast<size_t>(y) * masks.width + x;
                masks.s0[i] = y < c.rows[x] - margin_rows;
                masks.s1[i] = y > c.rows[x] + margin_rows;
            }
        }
    }
    return masks;
}

/// Narrowing between a baseline and a follow-up window using precomputed
/// region masks. The calibration offset cancels in the difference; it is
/// reported so callers can reconstruct absolute per-bone displacements.
inline JsnMeasurement quantify_jsn(const GrayImage& baseline, const GrayImage& followup,
                                   const RegionMasks& masks,
                                   const QuantifyConfig& cfg = {}) {
    if (baseline.spacing_mm != followup.spacing_mm)
        throw ParamError("windows disagree on pixel spacing");
    if (masks.width != baseline.width || masks.height != baseline.height)
        throw ParamError("mask shape mismatch");
    CalibrationResult cal =
        calibrate_window(baseline, followup, cfg.calibration, cfg.median_radius);
    GrayImage aligned = (cal.dx != 0 || cal.dy != 0)
                            ? circular_shift(followup, -cal.dx, -cal.dy)
                            : followup;
    JsnMeasurement out;
    out.upper = pipoc_region(baseline, aligned, masks.s0, cfg.pipoc);
    out.lower = pipoc_region(baseline, aligned, masks.s1, cfg.pipoc);
    out.jsn_px = out.upper.beta - out.lower.beta;
    out.jsn_mm = out.jsn_px * baseline.spacing_mm;
    out.calib_dx = cal.dx;
    out.calib_dy = cal.dy;
    out.mismatch = out.upper.mismatch || out.lower.mismatch;
    return out;
}

/// Same, segmenting the baseline window to obtain the masks.
inline JsnMeasurement quantify_jsn(const GrayImage& baseline, const GrayImage& followup,
                                   const QuantifyConfig& cfg = {}) {
    return quantify_jsn(baseline, followup,
                        segment_window(baseline, cfg.mask_margin_rows,
                                       cfg.gully_i_min, cfg.gully_i_max),
                        cfg);
}

/// All pairwise measurements of an ordered window series, upper triangle
/// (f < g) in row-major order. Pairs that fail outright are marked in `ok`
/// and left default-initialized.
struct JsnSeries {
    int n = 0;
    std::vector<JsnMeasurement> pairs;
    std::vector<std::uint8_t> ok;

    size_t index(int f, int g) const {
        if (!(0 <= f && f < g && g < n)) throw ParamError("pair index out of range");
        return static_cast<size_t>(f) * n - static_cast<size_t>(f) * (f + 1) / 2 +
               (g - f - 1);
    }
    const JsnMeasurement& at(int f, int g) const { return pairs[index(f, g)]; }
    bool pair_ok(int f, int g) const { return ok[index(f, g)] != 0; }
};

/// Measure every pair of a series. The region masks come from the first
/// window and are reused for all pairs, so every measurement sees the same
/// partition; per-pair failures mark the pair and the series continues.
inline JsnSeries jsn_series(const std::vector<GrayImage>& windows,
                            const QuantifyConfig& cfg = {}) {
    if (windows.size() < 2) throw ParamError("series needs at least two windows");
    for (const GrayImage& w : windows)
        if (w.width != windows[0].width || w.height != windows[0].height ||
            w.spacing_mm != windows[0].spacing_mm)
            throw ParamError("window shape mismatch");
    RegionMasks masks = segment_window(windows[0], cfg.mask_margin_rows,
                                       cfg.gully_i_min, cfg.gully_i_max);
    JsnSeries s;
    s.n = static_cast<int>(windows.size());
    const size_t count = static_cast<size_t>(s.n) * (s.n - 1) / 2;
    s.pairs.resize(count);
    s.ok.assign(count, 0);
    for (int f = 0; f < s.n; ++f) {
        for (int g = f + 1; g < s.n; ++g) {
            const size_t i = s.index(f, g);
            try {
                s.pairs[i] = quantify_jsn(windows[f], windows[g], masks, cfg);
                s.ok[i] = 1;
            } catch (const Error&) {
                s.ok[i] = 0;
            }
        }
    }
    return s;
}

} // namespace pipoc

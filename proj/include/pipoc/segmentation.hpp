#pragma once

// Splits a joint window into upper- and lower-bone regions along the
// deepest horizontal gully: a per-pixel depth map, a dynamic-programming
// integral map, and a backtracked row path with |step| <= 1.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "pipoc/errors.hpp"
#include "pipoc/image.hpp"
#include "pipoc/image_io.hpp"

namespace pipoc {

struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> values; // >= 0 everywhere

    double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
};

struct IntegralMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
};

/// Row index of the gully per column; adjacent entries differ by at most 1.
struct SegmentationCurve {
    std::vector<int> rows;
};

/// Binary partition of the window. The curve row itself belongs to neither
/// side, so the two masks never touch.
struct RegionMasks {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> s0; // 1 where y < c(x): upper bone
    std::vector<std::uint8_t> s1; // 1 where y > c(x): lower bone

    std::uint8_t upper(int x, int y) const { return s0[static_cast<size_t>(y) * width + x]; }
    std::uint8_t lower(int x, int y) const { return s1[static_cast<size_t>(y) * width + x]; }
};

/// Gully widths to pool over: [1, 9] px at 0.175 mm/px, scaled to other
/// spacings and snapped to the nearest odd values.
inline std::pair<int, int> gully_width_range(double spacing_mm) {
    if (!(spacing_mm > 0.0))
        throw ParamError("spacing must be positive");
    const double scale = 0.175 / spacing_mm;
    auto to_odd = [](double v) {
        int n = static_cast<int>(std::lround((v - 1.0) / 2.0));
        return std::max(1, 2 * n + 1);
    };
    return {to_odd(1.0 * scale), to_odd(9.0 * scale)};
}

namespace detail {

// Mean of the 3-column block rows [y+lo, y+hi], borders replicated.
inline double block_mean(const GrayImage& win, int x, int y, int lo, int hi) {
    double sum = 0.0;
    for (int k = -1; k <= 1; ++k) {
        int sx = std::clamp(x + k, 0, win.width - 1);
        for (int l = lo; l <= hi; ++l) {
            int sy = std::clamp(y + l, 0, win.height - 1);
            sum += win.at(sx, sy);
        }
    }
    return sum / (3.0 * (hi - lo + 1));
}

} // namespace detail

/// Depth of the darkest gully of width i under each pixel, pooled over all
/// odd i in [i_min, i_max]. For each width the score is the smaller of
/// (block below - center block) and (block above - center block), both as
/// 3-column means, clamped at zero: a gully is dark relative to BOTH sides.
inline DepthMap depth_map(const GrayImage& win, int i_min, int i_max) {
    if (i_min > i_max || i_min % 2 == 0 || i_max % 2 == 0 || i_min < 1)
        throw ParamError("gully widths must be odd and ordered");
    if (win.height <= 3 * i_max)
        throw ParamError("window shorter than three times the widest gully");
    DepthMap d;
    d.width = win.width;
    d.height = win.height;
    d.values.assign(static_cast<size_t>(win.width) * win.height, 0.0);
    for (int i = i_min; i <= i_max; i += 2) {
        const int half = (i - 1) / 2;
        for (int y = 0; y < win.height; ++y) {
            for (int x = 0; x < win.width; ++x) {
                double center = detail::block_mean(win, x, y, -half, half);
                double below = detail::block_mean(win, x, y, half + 1, half + i);
                double above = detail::block_mean(win, x, y, -half - i, -half - 1);
                double g = std::max(0.0, std::min(below - center, above - center));
                d.at(x, y) = std::max(d.at(x, y), g);
            }
        }
    }
    return d;
}

/// Best depth-sum achievable by any |step| <= 1 path ending at (x, y).
inline IntegralMap integral_map(const DepthMap& d) {
    IntegralMap m;
    m.width = d.width;
    m.height = d.height;
    m.values.assign(d.values.size(), 0.0);
    for (int y = 0; y < d.height; ++y) m.at(0, y) = d.at(0, y);
    for (int x = 1; x < d.width; ++x) {
        for (int y = 0; y < d.height; ++y) {
            double best = m.at(x - 1, y);
            if (y > 0) best = std::max(best, m.at(x - 1, y - 1));
            if (y + 1 < d.height) best = std::max(best, m.at(x - 1, y + 1));
            m.at(x, y) = best + d.at(x, y);
        }
    }
    return m;
}

/// Backtracks the maximum-sum path: rightmost-column argmax, then the best
/// of the three neighbors one column left. Ties go to the smaller row.
inline SegmentationCurve segmentation_curve(const IntegralMap& im) {
    SegmentationCurve c;
    c.rows.assign(static_cast<size_t>(im.width), 0);
    int row = 0;
    for (int y = 1; y < im.height; ++y)
        if (im.at(im.width - 1, y) > im.at(im.width - 1, row)) row = y;
    c.rows[im.width - 1] = row;
    for (int x = im.width - 2; x >= 0; --x) {
        int best = -1;
        double bestv = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
            int y = row + dy;
            if (y < 0 || y >= im.height) continue;
            if (best < 0 || im.at(x, y) > bestv) {
                best = y;
                bestv = im.at(x, y);
            }
        }
        row = best;
        c.rows[x] = row;
    }
    return c;
}

inline RegionMasks region_masks(const SegmentationCurve& c, int width, int height) {
    if (static_cast<int>(c.rows.size()) != width)
        throw ParamError("curve length does not match mask width");
    RegionMasks m;
    m.width = width;
    m.height = height;
    m.s0.assign(static_cast<size_t>(width) * height, 0);
    m.s1.assign(static_cast<size_t>(width) * height, 0);
    for (int x = 0; x < width; ++x) {
        if (c.rows[x] < 0 || c.rows[x] >= height)
            throw ParamError("curve row outside mask");
        for (int y = 0; y < height; ++y) {
            if (y < c.rows[x]) m.s0[static_cast<size_t>(y) * width + x] = 1;
            else if (y > c.rows[x]) m.s1[static_cast<size_t>(y) * width + x] = 1;
        }
    }
    return m;
}

/// Depth map rescaled to full range as a 16-bit PGM, for eyeballing.
inline void dump_depth_pgm(const DepthMap& d, const std::filesystem::path& path) {
    GrayImage img = make_image(d.width, d.height, 1.0);
    double peak = 0.0;
    for (double v : d.values) peak = std::max(peak, v);
    const double s = peak > 0.0 ? 1.0 / peak : 0.0;
    for (size_t i = 0; i < d.values.size(); ++i) img.samples[i] = d.values[i] * s;
    save_pgm16(img, path, false);
}

inline void dump_curve_csv(const SegmentationCurve& c, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "column,row\n";
    for (size_t x = 0; x < c.rows.size(); ++x) out << x << "," << c.rows[x] << "\n";
}

} // namespace pipoc

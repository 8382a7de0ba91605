#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pipoc/errors.hpp"

namespace pipoc {

/// Single-channel raster. Samples are doubles in [0,1], row-major, top-left
/// origin, x right, y down. spacing_mm is the physical size of one pixel.
struct GrayImage {
    int width = 0;
    int height = 0;
    double spacing_mm = 1.0;
    std::vector<double> samples;

    double at(int x, int y) const { return samples[static_cast<size_t>(y) * width + x]; }
    double& at(int x, int y) { return samples[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return samples.size(); }
};

inline GrayImage make_image(int width, int height, double spacing_mm, double fill = 0.0) {
    if (width <= 0 || height <= 0)
        throw ParamError("image dimensions must be positive");
    if (spacing_mm <= 0.0)
        throw ParamError("pixel spacing must be positive");
    GrayImage img;
    img.width = width;
    img.height = height;
    img.spacing_mm = spacing_mm;
    img.samples.assign(static_cast<size_t>(width) * height, fill);
    return img;
}

/// True when every sample is finite and inside [0,1].
inline bool samples_in_range(const GrayImage& img) {
    for (double v : img.samples)
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) return false;
    return true;
}

inline double image_mean(const GrayImage& img) {
    double s = 0.0;
    for (double v : img.samples) s += v;
    return s / static_cast<double>(img.samples.size());
}

inline std::pair<double, double> image_min_max(const GrayImage& img) {
    auto [lo, hi] = std::minmax_element(img.samples.begin(), img.samples.end());
    return {*lo, *hi};
}

/// Oriented window on a parent image. center is in parent pixel coordinates,
/// rotation in radians within (-pi/2, pi/2]. Sample offsets are taken around
/// the geometric center, so an "integer-aligned" rect for even sizes has a
/// half-integer center (center - (size-1)/2 integral).
struct WindowRect {
    double center_x = 0.0;
    double center_y = 0.0;
    int width = 0;
    int height = 0;
    double rotation = 0.0;
};

/// Window size rule for joint windows: even and at least 32 px per side.
inline bool valid_joint_window_size(int width, int height) {
    return width >= 32 && height >= 32 && width % 2 == 0 && height % 2 == 0;
}

inline double bilinear_sample(const GrayImage& img, double x, double y) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0;
    double fy = y - y0;
    // A coordinate exactly on the last row/column is valid with weight 1.
    if (x0 == img.width - 1 && fx == 0.0) { x0 -= 1; fx = 1.0; }
    if (y0 == img.height - 1 && fy == 0.0) { y0 -= 1; fy = 1.0; }
    if (x0 < 0 || y0 < 0 || x0 + 1 >= img.width || y0 + 1 >= img.height)
        throw BoundsError("bilinear sample outside image");
    double v00 = img.at(x0, y0), v10 = img.at(x0 + 1, y0);
    double v01 = img.at(x0, y0 + 1), v11 = img.at(x0 + 1, y0 + 1);
    return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

/// Cuts an oriented window out of a parent image by bilinear resampling.
/// Output pixel (i,j) reads the parent at center + R(rotation) * (i-(w-1)/2, j-(h-1)/2).
/// With rotation 0 and an integer-aligned rect this is an exact sub-array copy.
inline GrayImage extract_window(const GrayImage& img, const WindowRect& rect) {
    if (rect.width < 2 || rect.height < 2 || rect.width % 2 != 0 || rect.height % 2 != 0)
        throw ParamError("window size must be even and at least 2");
    if (!(rect.rotation > -1.5707963267948970 && rect.rotation <= 1.5707963267948970))
        throw ParamError("window rotation outside (-pi/2, pi/2]");
    const double c = std::cos(rect.rotation);
    const double s = std::sin(rect.rotation);
    const double hw = (rect.width - 1) / 2.0;
    const double hh = (rect.height - 1) / 2.0;
    const double eps = 1e-9;
    // The map is affine, so checking the four corner samples bounds the rest.
    for (int cy = 0; cy < 2; ++cy) {
        for (int cx = 0; cx < 2; ++cx) {
            double du = cx ? hw : -hw;
            double dv = cy ? hh : -hh;
            double px = rect.center_x + c * du - s * dv;
            double py = rect.center_y + s * du + c * dv;
            if (px < -eps || px > img.width - 1 + eps || py < -eps || py > img.height - 1 + eps)
                throw BoundsError("rotated window leaves the parent image");
        }
    }
    GrayImage out = make_image(rect.width, rect.height, img.spacing_mm);
    for (int j = 0; j < rect.height; ++j) {
        double dv = j - hh;
        for (int i = 0; i < rect.width; ++i) {
            double du = i - hw;
            double px = std::clamp(rect.center_x + c * du - s * dv, 0.0, img.width - 1.0);
            double py = std::clamp(rect.center_y + s * du + c * dv, 0.0, img.height - 1.0);
            out.at(i, j) = bilinear_sample(img, px, py);
        }
    }
    return out;
}

/// Median over the (2r+1)^2 neighborhood, borders by edge replication.
inline GrayImage median_filter(const GrayImage& img, int radius = 1) {
    if (radius < 1)
        throw ParamError("median radius must be at least 1");
    GrayImage out = img;
    const int k = 2 * radius + 1;
    std::vector<double> window(static_cast<size_t>(k) * k);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            size_t n = 0;
            for (int dy = -radius; dy <= radius; ++dy) {
                int sy = std::clamp(y + dy, 0, img.height - 1);
                for (int dx = -radius; dx <= radius; ++dx) {
                    int sx = std::clamp(x + dx, 0, img.width - 1);
                    window[n++] = img.at(sx, sy);
                }
            }
            auto mid = window.begin() + static_cast<long>(n / 2);
            std::nth_element(window.begin(), mid, window.begin() + static_cast<long>(n));
            out.at(x, y) = *mid;
        }
    }
    return out;
}

/// Separable raised-cosine taper w(x,y) = (1+cos(pi*x/(M/2)))/2 * (1+cos(pi*y/(N/2)))/2
/// on centered coordinates x = i - floor(M/2). The center sample is exactly 1 and the
/// taper reaches 0 at the border, so the windowed image has no wrap-around seam. A taper
/// that stops short of 0 leaves a frame-anchored residue that correlates at zero lag and
/// drowns genuine displacement peaks.
inline GrayImage hanning_window(int M, int N) {
    if (M < 2 || N < 2)
        throw ParamError("window dimensions must be at least 2");
    GrayImage w = make_image(M, N, 1.0);
    const double pi = 3.14159265358979323846;
    std::vector<double> wx(static_cast<size_t>(M)), wy(static_cast<size_t>(N));
    for (int i = 0; i < M; ++i) wx[i] = 0.5 * (1.0 + std::cos(2.0 * pi * (i - M / 2) / M));
    for (int j = 0; j < N; ++j) wy[j] = 0.5 * (1.0 + std::cos(2.0 * pi * (j - N / 2) / N));
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < M; ++i)
            w.at(i, j) = wx[i] * wy[j];
    return w;
}

/// Moves content by (dx, dy) with wrap-around: out(x,y) = in((x-dx) mod W, (y-dy) mod H).
inline GrayImage circular_shift(const GrayImage& img, int dx, int dy) {
    GrayImage out = img;
    auto wrap = [](int v, int n) {
        int m = v % n;
        return m < 0 ? m + n : m;
    };
    for (int y = 0; y < img.height; ++y) {
        int sy = wrap(y - dy, img.height);
        for (int x = 0; x < img.width; ++x)
            out.at(x, y) = img.at(wrap(x - dx, img.width), sy);
    }
    return out;
}

} // namespace pipoc

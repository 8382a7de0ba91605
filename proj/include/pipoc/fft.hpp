#pragma once

#include <complex>
#include <vector>

#include "pipoc/errors.hpp"

namespace pipoc {
namespace fft {

using cplx = std::complex<double>;
inline constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 transform, unnormalized.
/// sign -1: X[k] = sum x[j] e^{-2pi i jk/n};   sign +1: conjugate kernel.
inline void radix2(cplx* a, size_t n, int sign) {
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = sign * 2.0 * kPi / static_cast<double>(len);
        cplx wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                cplx u = a[i + k];
                cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

/// Arbitrary-length transform via the chirp-z identity, unnormalized.
inline void bluestein(cplx* a, size_t n, int sign) {
    size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;
    std::vector<cplx> chirp(n), fa(m, cplx(0, 0)), fb(m, cplx(0, 0));
    for (size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the phase argument small for large n.
        size_t k2 = (k * k) % (2 * n);
        double ang = sign * kPi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = cplx(std::cos(ang), std::sin(ang));
    }
    for (size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
    fb[0] = std::conj(chirp[0]);
    for (size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);
    radix2(fa.data(), m, -1);
    radix2(fb.data(), m, -1);
    for (size_t k = 0; k < m; ++k) fa[k] *= fb[k];
    radix2(fa.data(), m, +1);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (size_t k = 0; k < n; ++k) a[k] = fa[k] * inv_m * chirp[k];
}

inline void transform(cplx* a, size_t n, int sign) {
    if (n == 0)
        throw ParamError("empty transform");
    if (n == 1) return;
    if (is_pow2(n))
        radix2(a, n, sign);
    else
        bluestein(a, n, sign);
}

/// 2-D transform over a row-major width x height grid, rows first then columns.
/// sign -1 forward, +1 inverse; both unnormalized (inverse needs 1/(w*h)).
inline void transform2d(std::vector<cplx>& data, int width, int height, int sign) {
    if (static_cast<size_t>(width) * height != data.size())
        throw ParamError("grid size mismatch");
    for (int y = 0; y < height; ++y)
        transform(data.data() + static_cast<size_t>(y) * width, static_cast<size_t>(width), sign);
    std::vector<cplx> col(static_cast<size_t>(height));
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) col[y] = data[static_cast<size_t>(y) * width + x];
        transform(col.data(), col.size(), sign);
        for (int y = 0; y < height; ++y) data[static_cast<size_t>(y) * width + x] = col[y];
    }
}

} // namespace fft
} // namespace pipoc

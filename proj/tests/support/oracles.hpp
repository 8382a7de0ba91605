#pragma once

// Independent reference implementations used to pin the library's numerics.
// Mostly deliberately naive (direct sums, explicit loops); BandTexture is the
// one exception and says why.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <set>
#include <vector>

#include "pipoc/fft.hpp"
#include "pipoc/image.hpp"

namespace oracle {

inline constexpr double kPi = 3.14159265358979323846;
using cplx = std::complex<double>;

// --- deterministic RNG (bit-stable across platforms) ---

struct SplitMix64 {
    uint64_t state;
    explicit SplitMix64(uint64_t seed) : state(seed) {}
    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return (next() >> 11) * 0x1.0p-53; } // [0,1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }
};

// --- O(n^4) DFT, the frozen reference for every transform in the library ---

inline std::vector<cplx> naive_dft_2d(const std::vector<double>& f, int M, int N) {
    std::vector<cplx> F(static_cast<size_t>(M) * N);
    for (int v = 0; v < N; ++v) {
        for (int u = 0; u < M; ++u) {
            cplx acc(0, 0);
            for (int y = 0; y < N; ++y) {
                for (int x = 0; x < M; ++x) {
                    double ang = -2.0 * kPi * (static_cast<double>(u) * x / M +
                                               static_cast<double>(v) * y / N);
                    acc += f[static_cast<size_t>(y) * M + x] * cplx(std::cos(ang), std::sin(ang));
                }
            }
            F[static_cast<size_t>(v) * M + u] = acc;
        }
    }
    return F;
}

inline std::vector<cplx> naive_idft_2d(const std::vector<cplx>& F, int M, int N) {
    std::vector<cplx> f(static_cast<size_t>(M) * N);
    for (int y = 0; y < N; ++y) {
        for (int x = 0; x < M; ++x) {
            cplx acc(0, 0);
            for (int v = 0; v < N; ++v) {
                for (int u = 0; u < M; ++u) {
                    double ang = 2.0 * kPi * (static_cast<double>(u) * x / M +
                                              static_cast<double>(v) * y / N);
                    acc += F[static_cast<size_t>(v) * M + u] * cplx(std::cos(ang), std::sin(ang));
                }
            }
            f[static_cast<size_t>(y) * M + x] = acc / static_cast<double>(M * N);
        }
    }
    return f;
}

inline int signed_freq(int u, int M) { return u <= (M - 1) / 2 ? u : u - M; }

// --- band-limited synthetic texture with an exact analytic shift ---
// A sum of integer-frequency sinusoids inside a low-frequency disc. Because
// the function is periodic and band-limited, render(dx,dy) IS f(x-dx, y-dy)
// exactly: the displacement oracle has zero error by construction.

struct SparseTexture {
    int M = 0, N = 0;
    struct Wave {
        int su, sv;
        double amp, phase;
    };
    std::vector<Wave> waves;
    double norm = 1.0;

    pipoc::GrayImage render(double dx = 0.0, double dy = 0.0) const {
        pipoc::GrayImage img = pipoc::make_image(M, N, 1.0);
        std::vector<double> acc(static_cast<size_t>(M) * N, 0.0);
        for (const Wave& w : waves) {
            // cos evaluated by complex rotation: one trig pair per row
            const cplx step_x(std::cos(2.0 * kPi * w.su / M), std::sin(2.0 * kPi * w.su / M));
            for (int y = 0; y < N; ++y) {
                double row_ang = 2.0 * kPi * (-w.su * dx / M + w.sv * (y - dy) / N) + w.phase;
                cplx z(std::cos(row_ang), std::sin(row_ang));
                double* out = acc.data() + static_cast<size_t>(y) * M;
                for (int x = 0; x < M; ++x) {
                    out[x] += w.amp * z.real();
                    z *= step_x;
                }
            }
        }
        for (size_t i = 0; i < acc.size(); ++i) img.samples[i] = 0.5 + acc[i] * norm;
        return img;
    }
};

/// wave_count 0 fills the whole band disc (dense spectrum); positive values
/// keep a random subset of that size.
inline SparseTexture make_texture(int M, int N, uint64_t seed, int wave_count = 0,
                                  double band_fraction = 0.35) {
    SplitMix64 rng(seed);
    SparseTexture t;
    t.M = M;
    t.N = N;
    const double bu = band_fraction * (M / 2.0);
    const double bv = band_fraction * (N / 2.0);
    // one representative per conjugate pair keeps the sum real and unique
    std::vector<std::pair<int, int>> candidates;
    for (int sv = 0; sv <= static_cast<int>(bv); ++sv)
        for (int su = sv == 0 ? 1 : -static_cast<int>(bu); su <= static_cast<int>(bu); ++su)
            if ((su / bu) * (su / bu) + (sv / bv) * (sv / bv) <= 1.0)
                candidates.emplace_back(su, sv);
    if (wave_count > 0 && wave_count < static_cast<int>(candidates.size())) {
        for (size_t i = candidates.size(); i > 1; --i)
            std::swap(candidates[i - 1], candidates[rng.next() % i]);
        candidates.resize(static_cast<size_t>(wave_count));
    }
    double amp_sum = 0.0;
    for (auto [su, sv] : candidates) {
        SparseTexture::Wave w{su, sv, rng.uniform(0.2, 1.0), rng.uniform(0.0, 2.0 * kPi)};
        t.waves.push_back(w);
        amp_sum += w.amp;
    }
    t.norm = 0.45 / amp_sum; // keeps samples inside [0.05, 0.95] for any shift
    return t;
}

// --- FFT-backed band-limited texture with exact fractional shifts ---
// The per-wave renderer above is exact but O(waves * pixels); for dense
// spectra at acceptance sizes that is minutes of work. This variant stores
// the spectrum directly and renders any shift with one inverse transform.
// The transform itself is pinned against the naive O(n^4) sums elsewhere,
// so leaning on it here does not let an FFT bug vouch for itself.

struct BandTexture {
    int M = 0, N = 0;
    std::vector<cplx> bins; // coefficients of (1/MN) sum B e^{+2pi i(ux/M+vy/N)}
    double offset = 0.5, scale = 1.0;

    pipoc::GrayImage render(double dx, double dy) const {
        std::vector<cplx> shifted(bins);
        for (int v = 0; v < N; ++v) {
            for (int u = 0; u < M; ++u) {
                size_t idx = static_cast<size_t>(v) * M + u;
                if (shifted[idx] == cplx(0, 0)) continue;
                int su = signed_freq(u, M), sv = signed_freq(v, N);
                double ang = -2.0 * kPi * (su * dx / M + sv * dy / N);
                shifted[idx] *= cplx(std::cos(ang), std::sin(ang));
            }
        }
        pipoc::fft::transform2d(shifted, M, N, +1);
        pipoc::GrayImage img = pipoc::make_image(M, N, 1.0);
        const double inv = 1.0 / (static_cast<double>(M) * N);
        for (size_t i = 0; i < shifted.size(); ++i)
            img.samples[i] = offset + scale * shifted[i].real() * inv;
        return img;
    }
};

inline BandTexture band_texture(int M, int N, uint64_t seed, double band_fraction = 0.8) {
    SplitMix64 rng(seed);
    BandTexture t;
    t.M = M;
    t.N = N;
    t.bins.assign(static_cast<size_t>(M) * N, cplx(0, 0));
    const double bu = band_fraction * (M / 2.0);
    const double bv = band_fraction * (N / 2.0);
    for (int sv = 0; sv <= static_cast<int>(bv); ++sv) {
        for (int su = sv == 0 ? 1 : -static_cast<int>(bu); su <= static_cast<int>(bu); ++su) {
            if ((su / bu) * (su / bu) + (sv / bv) * (sv / bv) > 1.0) continue;
            double amp = rng.uniform(0.2, 1.0), phase = rng.uniform(0.0, 2.0 * kPi);
            cplx c = amp * cplx(std::cos(phase), std::sin(phase));
            int u = (su % M + M) % M, v = (sv % N + N) % N;
            int cu = (M - u) % M, cv = (N - v) % N;
            t.bins[static_cast<size_t>(v) * M + u] = c;
            t.bins[static_cast<size_t>(cv) * M + cu] = std::conj(c);
        }
    }
    // probe the base render to pin an affine map keeping samples near (0,1)
    std::vector<cplx> base(t.bins);
    pipoc::fft::transform2d(base, M, N, +1);
    double peak = 0.0;
    const double inv = 1.0 / (static_cast<double>(M) * N);
    for (const cplx& z : base) peak = std::max(peak, std::abs(z.real()) * inv);
    t.scale = 0.45 / peak;
    return t;
}

// --- exact fractional circular shift for arbitrary small rasters ---
// Uses the naive transforms; O(n^4), fine for <= 64x64 fixtures.

inline pipoc::GrayImage fourier_shift(const pipoc::GrayImage& f, double dx, double dy) {
    const int M = f.width, N = f.height;
    std::vector<cplx> F = naive_dft_2d(f.samples, M, N);
    for (int v = 0; v < N; ++v) {
        for (int u = 0; u < M; ++u) {
            int su = signed_freq(u, M), sv = signed_freq(v, N);
            if ((M % 2 == 0 && su == -M / 2) || (N % 2 == 0 && sv == -N / 2)) {
                F[static_cast<size_t>(v) * M + u] = cplx(0, 0);
                continue;
            }
            double ang = -2.0 * kPi * (su * dx / M + sv * dy / N);
            F[static_cast<size_t>(v) * M + u] *= cplx(std::cos(ang), std::sin(ang));
        }
    }
    std::vector<cplx> g = naive_idft_2d(F, M, N);
    pipoc::GrayImage out = f;
    for (size_t i = 0; i < g.size(); ++i)
        out.samples[i] = std::clamp(g[i].real(), 0.0, 1.0);
    return out;
}

// --- brute-force median over a replicated-border neighborhood ---

inline double median_at(const pipoc::GrayImage& img, int x, int y, int radius) {
    std::vector<double> vals;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            int sx = std::clamp(x + dx, 0, img.width - 1);
            int sy = std::clamp(y + dy, 0, img.height - 1);
            vals.push_back(img.at(sx, sy));
        }
    std::sort(vals.begin(), vals.end());
    return vals[vals.size() / 2];
}

} // namespace oracle

#pragma once

#include <array>
#include <complex>
#include <vector>

#include "pipoc/fft.hpp"
#include "pipoc/image.hpp"

namespace pipoc {

using cplx = std::complex<double>;

/// Unnormalized 2-D DFT bins, row-major, DC at (0,0).
struct ComplexSpectrum {
    int width = 0;
    int height = 0;
    std::vector<cplx> bins;

    cplx at(int u, int v) const { return bins[static_cast<size_t>(v) * width + u]; }
    cplx& at(int u, int v) { return bins[static_cast<size_t>(v) * width + u]; }
};

/// Spectrum whose bins are unit modulus or exactly zero (amplitude-suppressed).
struct PhaseSpectrum : ComplexSpectrum {};

/// Low-pass weight applied to the cross phase spectrum before inversion.
/// sigma is in units of the Nyquist frequency.
struct WeightingConfig {
    bool enabled = true;
    double sigma = 0.5;
};

/// Real correlation values with the zero-displacement bin shifted to the
/// center sample (floor(w/2), floor(h/2)). Carries enough metadata for the
/// peak fit to reconstruct the expected peak shape.
struct CorrelationSurface {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    double weight_sigma = 0.0; // 0 = unweighted
    bool dc_active = false;    // true when the DC bin contributed

    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
    double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
    int center_x() const { return width / 2; }
    int center_y() const { return height / 2; }
};

struct DisplacementEstimate {
    double alpha = 0.0; // x displacement, px
    double beta = 0.0;  // y displacement, px
    double peak = 0.0;  // fitted peak height in [0,1]
    bool mismatch = false;
};

inline ComplexSpectrum forward_dft_raw(int width, int height, const std::vector<double>& data) {
    if (static_cast<size_t>(width) * height != data.size())
        throw ParamError("raster size mismatch");
    ComplexSpectrum s;
    s.width = width;
    s.height = height;
    s.bins.assign(data.begin(), data.end());
    fft::transform2d(s.bins, width, height, -1);
    return s;
}

/// F(u,v) = sum_xy f(x,y) exp(-2 pi i (ux/M + vy/N))
inline ComplexSpectrum forward_dft(const GrayImage& img) {
    return forward_dft_raw(img.width, img.height, img.samples);
}

/// Normalized inverse: f(x,y) = (1/MN) sum_uv F(u,v) exp(+2 pi i (ux/M + vy/N))
inline std::vector<cplx> inverse_dft(const ComplexSpectrum& s) {
    std::vector<cplx> out = s.bins;
    fft::transform2d(out, s.width, s.height, +1);
    const double inv = 1.0 / (static_cast<double>(s.width) * s.height);
    for (cplx& v : out) v *= inv;
    return out;
}

/// Largest deviation from b(u,v) == conj(b(-u,-v)); 0 for spectra of real rasters.
inline double hermitian_deviation(const ComplexSpectrum& s) {
    double dev = 0.0;
    for (int v = 0; v < s.height; ++v) {
        int mv = (s.height - v) % s.height;
        for (int u = 0; u < s.width; ++u) {
            int mu = (s.width - u) % s.width;
            dev = std::max(dev, std::abs(s.at(u, v) - std::conj(s.at(mu, mv))));
        }
    }
    return dev;
}

/// Per-bin b/|b|. Bins below 1e-12 x (max modulus) become exactly 0, and the
/// DC bin is always 0: the mean carries no displacement information.
inline PhaseSpectrum phase_extract(const ComplexSpectrum& s) {
    PhaseSpectrum p;
    p.width = s.width;
    p.height = s.height;
    p.bins.assign(s.bins.size(), cplx(0, 0));
    double maxmod = 0.0;
    for (const cplx& b : s.bins) maxmod = std::max(maxmod, std::abs(b));
    if (maxmod == 0.0) return p;
    const double eps = 1e-12 * maxmod;
    for (size_t i = 0; i < s.bins.size(); ++i) {
        double m = std::abs(s.bins[i]);
        if (m >= eps) p.bins[i] = s.bins[i] / m;
    }
    p.bins[0] = cplx(0, 0);
    return p;
}

/// Normalized cross spectrum a * conj(b) / |a * conj(b)| with per-bin
/// zero-suppression. Accepts arbitrary spectra; the per-bin normalization
/// makes the result unit-or-zero regardless of input amplitudes.
inline PhaseSpectrum cross_phase_spectrum(const ComplexSpectrum& a, const ComplexSpectrum& b) {
    if (a.width != b.width || a.height != b.height)
        throw ParamError("spectrum shape mismatch");
    PhaseSpectrum r;
    r.width = a.width;
    r.height = a.height;
    r.bins.assign(a.bins.size(), cplx(0, 0));
    std::vector<cplx> prod(a.bins.size());
    double maxmod = 0.0;
    for (size_t i = 0; i < prod.size(); ++i) {
        prod[i] = a.bins[i] * std::conj(b.bins[i]);
        maxmod = std::max(maxmod, std::abs(prod[i]));
    }
    if (maxmod == 0.0) return r;
    const double eps = 1e-12 * maxmod;
    for (size_t i = 0; i < prod.size(); ++i) {
        double m = std::abs(prod[i]);
        if (m >= eps) r.bins[i] = prod[i] / m;
    }
    return r;
}

namespace detail {

/// Signed frequency of bin u on an M-point axis, in [-M/2, M/2).
inline int signed_freq(int u, int M) { return u <= (M - 1) / 2 ? u : u - M; }

/// Low-pass weight for one signed frequency pair. Nyquist rows/cols are
/// zeroed when weighting is on (keeps the peak model real and symmetric).
inline double bin_weight(int su, int sv, int M, int N, const WeightingConfig& w) {
    if (!w.enabled) return 1.0;
    if ((M % 2 == 0 && su == -M / 2) || (N % 2 == 0 && sv == -N / 2)) return 0.0;
    double nu = su / (M / 2.0);
    double nv = sv / (N / 2.0);
    return std::exp(-(nu * nu + nv * nv) / (2.0 * w.sigma * w.sigma));
}

} // namespace detail

/// Inverse transform of the (optionally weighted) cross phase spectrum,
/// normalized by the retained weight mass so a perfect match peaks at 1,
/// then circularly shifted to put zero displacement at the center sample.
/// The discarded imaginary part must stay below 1e-6 for Hermitian input.
inline CorrelationSurface correlation_surface(const PhaseSpectrum& r,
                                              const WeightingConfig& weighting = {}) {
    const int M = r.width, N = r.height;
    std::vector<cplx> wr(r.bins.size());
    double mass = 0.0;
    double max_wr = 0.0;
    for (int v = 0; v < N; ++v) {
        int sv = detail::signed_freq(v, N);
        for (int u = 0; u < M; ++u) {
            int su = detail::signed_freq(u, M);
            size_t i = static_cast<size_t>(v) * M + u;
            double w = detail::bin_weight(su, sv, M, N, weighting);
            wr[i] = r.bins[i] * w;
            max_wr = std::max(max_wr, std::abs(wr[i]));
            if (r.bins[i] != cplx(0, 0)) mass += w;
        }
    }
    if (mass <= 0.0)
        throw ConstantImageError("no usable spectrum bins for correlation");

    bool hermitian = false;
    {
        ComplexSpectrum tmp;
        tmp.width = M;
        tmp.height = N;
        tmp.bins = wr;
        hermitian = hermitian_deviation(tmp) <= 1e-9 * std::max(1.0, max_wr);
    }

    fft::transform2d(wr, M, N, +1);
    CorrelationSurface surf;
    surf.width = M;
    surf.height = N;
    surf.values.assign(wr.size(), 0.0);
    surf.weight_sigma = weighting.enabled ? weighting.sigma : 0.0;
    surf.dc_active = r.bins[0] != cplx(0, 0);
    const int cx = M / 2, cy = N / 2;
    double max_imag = 0.0;
    for (int y = 0; y < N; ++y) {
        for (int x = 0; x < M; ++x) {
            size_t src = static_cast<size_t>(y) * M + x;
            size_t dst = static_cast<size_t>((y + cy) % N) * M + (x + cx) % M;
            surf.values[dst] = wr[src].real() / mass;
            max_imag = std::max(max_imag, std::abs(wr[src].imag()) / mass);
        }
    }
    if (hermitian && max_imag >= 1e-6)
        throw Error("imaginary residue too large for a Hermitian spectrum");
    return surf;
}

namespace detail {

/// Expected 1-D peak profile for the active weighting: the cosine series of
/// the retained bins. With weighting off this is the ratio-of-sines kernel
/// (Dirichlet sum); the DC term is handled by the caller.
struct PeakKernel {
    std::vector<double> weights; // index 1..M/2-1 (or (M-1)/2 for odd M)
    double nyquist_weight = 0.0;
    int M = 0;

    static PeakKernel build(int M, double sigma) {
        PeakKernel k;
        k.M = M;
        int half = (M - 1) / 2;
        k.weights.resize(static_cast<size_t>(half) + 1, 0.0);
        for (int u = 1; u <= half; ++u) {
            double nu = u / (M / 2.0);
            k.weights[u] = sigma > 0.0 ? std::exp(-nu * nu / (2.0 * sigma * sigma)) : 1.0;
        }
        if (M % 2 == 0) k.nyquist_weight = sigma > 0.0 ? 0.0 : 1.0;
        return k;
    }

    // K(t) = 1 + 2 sum_u w_u cos(2 pi u t / M) + w_nyq cos(pi t)
    double value(double t) const {
        double s = 1.0;
        const double step = 2.0 * fft::kPi * t / M;
        for (size_t u = 1; u < weights.size(); ++u)
            s += 2.0 * weights[u] * std::cos(step * static_cast<double>(u));
        s += nyquist_weight * std::cos(fft::kPi * t);
        return s;
    }

    double derivative(double t) const {
        double s = 0.0;
        const double step = 2.0 * fft::kPi * t / M;
        for (size_t u = 1; u < weights.size(); ++u) {
            double w = 2.0 * fft::kPi * static_cast<double>(u) / M;
            s -= 2.0 * weights[u] * w * std::sin(step * static_cast<double>(u));
        }
        s -= nyquist_weight * fft::kPi * std::sin(fft::kPi * t);
        return s;
    }
};

inline bool solve3(const std::array<std::array<double, 3>, 3>& A, const std::array<double, 3>& b,
                   std::array<double, 3>& x) {
    double det = A[0][0] * (A[1][1] * A[2][2] - A[1][2] * A[2][1]) -
                 A[0][1] * (A[1][0] * A[2][2] - A[1][2] * A[2][0]) +
                 A[0][2] * (A[1][0] * A[2][1] - A[1][1] * A[2][0]);
    if (std::abs(det) < 1e-300) return false;
    std::array<std::array<double, 3>, 3> inv;
    inv[0][0] = (A[1][1] * A[2][2] - A[1][2] * A[2][1]) / det;
    inv[0][1] = (A[0][2] * A[2][1] - A[0][1] * A[2][2]) / det;
    inv[0][2] = (A[0][1] * A[1][2] - A[0][2] * A[1][1]) / det;
    inv[1][0] = (A[1][2] * A[2][0] - A[1][0] * A[2][2]) / det;
    inv[1][1] = (A[0][0] * A[2][2] - A[0][2] * A[2][0]) / det;
    inv[1][2] = (A[0][2] * A[1][0] - A[0][0] * A[1][2]) / det;
    inv[2][0] = (A[1][0] * A[2][1] - A[1][1] * A[2][0]) / det;
    inv[2][1] = (A[0][1] * A[2][0] - A[0][0] * A[2][1]) / det;
    inv[2][2] = (A[0][0] * A[1][1] - A[0][1] * A[1][0]) / det;
    for (int i = 0; i < 3; ++i)
        x[i] = inv[i][0] * b[0] + inv[i][1] * b[1] + inv[i][2] * b[2];
    return true;
}

} // namespace detail

/// Sub-pixel peak location by least-squares fit of the expected peak profile
/// over the 5x5 neighborhood of the integer maximum. Gauss-Newton on
/// (height, x, y), initialized at the integer peak; falls back to per-axis
/// parabolic interpolation if the iteration has not converged after 50 steps.
inline DisplacementEstimate fit_subpixel_peak(const CorrelationSurface& surf,
                                              double peak_threshold = 0.1) {
    const int M = surf.width, N = surf.height;
    if (M < 8 || N < 8)
        throw ParamError("surface too small for a 5x5 peak fit");
    int px = 0, py = 0;
    double best = surf.values[0];
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < M; ++x)
            if (surf.at(x, y) > best) {
                best = surf.at(x, y);
                px = x;
                py = y;
            }
    if (px < 2 || px >= M - 2 || py < 2 || py >= N - 2)
        throw PeakOnBorderError("correlation maximum on the border frame");

    const auto kx = detail::PeakKernel::build(M, surf.weight_sigma);
    const auto ky = detail::PeakKernel::build(N, surf.weight_sigma);
    // Model: v = p * U(x-ax, y-ay) / U(0,0), U = Kx*Ky - (DC excluded ? 1 : 0).
    const double dc_sub = surf.dc_active ? 0.0 : 1.0;
    const double U0 = kx.value(0) * ky.value(0) - dc_sub;

    double p = best, ax = px, ay = py;
    bool converged = false;
    for (int iter = 0; iter < 50 && !converged; ++iter) {
        std::array<std::array<double, 3>, 3> JtJ{};
        std::array<double, 3> Jtr{};
        for (int dy = -2; dy <= 2; ++dy) {
            for (int dx = -2; dx <= 2; ++dx) {
                double tx = (px + dx) - ax;
                double ty = (py + dy) - ay;
                double kxv = kx.value(tx), kyv = ky.value(ty);
                double U = kxv * kyv - dc_sub;
                double model = p * U / U0;
                double r = surf.at(px + dx, py + dy) - model;
                double jp = U / U0;
                double jx = -p * kx.derivative(tx) * kyv / U0;
                double jy = -p * kxv * ky.derivative(ty) / U0;
                const double J[3] = {jp, jx, jy};
                for (int i = 0; i < 3; ++i) {
                    Jtr[i] += J[i] * r;
                    for (int j = 0; j < 3; ++j) JtJ[i][j] += J[i] * J[j];
                }
            }
        }
        std::array<double, 3> step{};
        if (!detail::solve3(JtJ, Jtr, step)) break;
        for (double& s : step)
            if (!std::isfinite(s)) { step = {0, 0, 0}; break; }
        step[1] = std::clamp(step[1], -0.5, 0.5);
        step[2] = std::clamp(step[2], -0.5, 0.5);
        p += step[0];
        ax += step[1];
        ay += step[2];
        if (std::abs(ax - px) > 1.25 || std::abs(ay - py) > 1.25) break;
        if (std::abs(step[1]) < 1e-10 && std::abs(step[2]) < 1e-10 && std::abs(step[0]) < 1e-10)
            converged = true;
    }

    if (!converged || std::abs(ax - px) > 1.0 || std::abs(ay - py) > 1.0) {
        auto parabola = [](double sm, double s0, double sp) {
            double den = sm - 2.0 * s0 + sp;
            return std::abs(den) < 1e-300 ? 0.0 : std::clamp(0.5 * (sm - sp) / den, -0.5, 0.5);
        };
        ax = px + parabola(surf.at(px - 1, py), surf.at(px, py), surf.at(px + 1, py));
        ay = py + parabola(surf.at(px, py - 1), surf.at(px, py), surf.at(px, py + 1));
        p = best;
    }

    DisplacementEstimate est;
    est.alpha = ax - surf.center_x();
    est.beta = ay - surf.center_y();
    est.peak = std::clamp(p, 0.0, 1.0);
    est.mismatch = est.peak < peak_threshold;
    return est;
}

struct FipocConfig {
    WeightingConfig weighting{};
    double peak_threshold = 0.1;
};

namespace detail {

/// Mean-subtract then taper. The subtraction keeps a constant intensity
/// offset out of every bin (the taper is not DFT-periodic, so an offset
/// would otherwise leak beyond the DC bin).
inline std::vector<double> windowed_samples(const GrayImage& img) {
    GrayImage w = hanning_window(img.width, img.height);
    const double mean = image_mean(img);
    std::vector<double> out(img.samples.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = (img.samples[i] - mean) * w.samples[i];
    return out;
}

} // namespace detail

/// Full-image phase correlation. Returns the displacement of the follow-up
/// relative to the baseline: g(x,y) ~ f(x - alpha, y - beta).
inline DisplacementEstimate fipoc(const GrayImage& f, const GrayImage& g,
                                  const FipocConfig& cfg = {}) {
    if (f.width != g.width || f.height != g.height)
        throw ParamError("window shape mismatch");
    auto [fl, fh] = image_min_max(f);
    auto [gl, gh] = image_min_max(g);
    if (fh - fl <= 0.0 || gh - gl <= 0.0)
        throw ConstantImageError("constant window has no phase information");
    ComplexSpectrum F = forward_dft_raw(f.width, f.height, detail::windowed_samples(f));
    ComplexSpectrum G = forward_dft_raw(g.width, g.height, detail::windowed_samples(g));
    PhaseSpectrum pf = phase_extract(F);
    PhaseSpectrum pg = phase_extract(G);
    // (follow-up, baseline) order puts the peak at +displacement.
    PhaseSpectrum r = cross_phase_spectrum(pg, pf);
    CorrelationSurface surf = correlation_surface(r, cfg.weighting);
    return fit_subpixel_peak(surf, cfg.peak_threshold);
}

} // namespace pipoc

#include <catch2/catch_amalgamated.hpp>

#include "pipoc/spectral.hpp"
#include "support/oracles.hpp"

using namespace pipoc;
using oracle::kPi;

namespace {

ComplexSpectrum spectrum_from(int M, int N, const std::vector<cplx>& bins) {
    ComplexSpectrum s;
    s.width = M;
    s.height = N;
    s.bins = bins;
    return s;
}

PhaseSpectrum phase_from(int M, int N, const std::vector<cplx>& bins) {
    PhaseSpectrum s;
    s.width = M;
    s.height = N;
    s.bins = bins;
    return s;
}

/// Unit spectrum carrying a pure displacement (k,l): IDFT peaks at +(k,l).
PhaseSpectrum pure_shift_spectrum(int M, int N, double k, double l, bool zero_dc) {
    std::vector<cplx> bins(static_cast<size_t>(M) * N);
    for (int v = 0; v < N; ++v) {
        for (int u = 0; u < M; ++u) {
            int su = oracle::signed_freq(u, M), sv = oracle::signed_freq(v, N);
            double ang = -2.0 * kPi * (su * k / M + sv * l / N);
            bins[static_cast<size_t>(v) * M + u] = cplx(std::cos(ang), std::sin(ang));
        }
    }
    if (zero_dc) bins[0] = cplx(0, 0);
    return phase_from(M, N, bins);
}

} // namespace

TEST_CASE("forward transform against the direct-sum reference", "[spectral]") {
    SECTION("constant image concentrates in the DC bin") {
        GrayImage img = make_image(8, 8, 1.0, 0.37);
        ComplexSpectrum F = forward_dft(img);
        CHECK_THAT(F.at(0, 0).real(), Catch::Matchers::WithinAbs(0.37 * 64, 1e-9));
        CHECK_THAT(F.at(0, 0).imag(), Catch::Matchers::WithinAbs(0.0, 1e-9));
        for (int v = 0; v < 8; ++v)
            for (int u = 0; u < 8; ++u)
                if (u || v) CHECK(std::abs(F.at(u, v)) < 1e-9);
    }
    SECTION("impulse at the origin is flat") {
        GrayImage img = make_image(8, 8, 1.0, 0.0);
        img.at(0, 0) = 1.0;
        ComplexSpectrum F = forward_dft(img);
        for (const cplx& b : F.bins) CHECK(std::abs(b - cplx(1, 0)) < 1e-12);
    }
    SECTION("random 8x8 matches the naive DFT within 1e-9, inverse too") {
        oracle::SplitMix64 rng(31);
        GrayImage img = make_image(8, 8, 1.0);
        for (double& v : img.samples) v = rng.uniform();
        ComplexSpectrum F = forward_dft(img);
        auto ref = oracle::naive_dft_2d(img.samples, 8, 8);
        for (size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(F.bins[i] - ref[i]) < 1e-9);
        auto back = inverse_dft(F);
        for (size_t i = 0; i < back.size(); ++i)
            CHECK(std::abs(back[i] - cplx(img.samples[i], 0)) < 1e-9);
    }
    SECTION("non power-of-two sizes match the naive DFT") {
        oracle::SplitMix64 rng(32);
        const int M = 12, N = 10;
        GrayImage img = make_image(M, N, 1.0);
        for (double& v : img.samples) v = rng.uniform();
        ComplexSpectrum F = forward_dft(img);
        auto ref = oracle::naive_dft_2d(img.samples, M, N);
        for (size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(F.bins[i] - ref[i]) < 1e-9);
    }
    SECTION("energy is preserved (Parseval)") {
        oracle::SplitMix64 rng(33);
        GrayImage img = make_image(16, 16, 1.0);
        for (double& v : img.samples) v = rng.uniform();
        ComplexSpectrum F = forward_dft(img);
        double e_space = 0.0, e_freq = 0.0;
        for (double v : img.samples) e_space += v * v;
        for (const cplx& b : F.bins) e_freq += std::norm(b);
        CHECK_THAT(e_freq / (16.0 * 16.0), Catch::Matchers::WithinRel(e_space, 1e-9));
    }
    SECTION("real input gives a Hermitian spectrum") {
        oracle::SplitMix64 rng(34);
        GrayImage img = make_image(16, 12, 1.0);
        for (double& v : img.samples) v = rng.uniform();
        ComplexSpectrum F = forward_dft(img);
        CHECK(hermitian_deviation(F) < 1e-9 * 16 * 12);
    }
}

TEST_CASE("phase extraction", "[spectral]") {
    SECTION("unit modulus with exact amplitude division") {
        std::vector<cplx> bins(16, cplx(1, 0));
        bins[5] = cplx(3, 4);
        PhaseSpectrum p = phase_extract(spectrum_from(4, 4, bins));
        CHECK_THAT(p.bins[5].real(), Catch::Matchers::WithinAbs(0.6, 1e-15));
        CHECK_THAT(p.bins[5].imag(), Catch::Matchers::WithinAbs(0.8, 1e-15));
    }
    SECTION("zero bins stay zero, DC is forced to zero") {
        std::vector<cplx> bins(16, cplx(2, -1));
        bins[3] = cplx(0, 0);
        PhaseSpectrum p = phase_extract(spectrum_from(4, 4, bins));
        CHECK(p.bins[3] == cplx(0, 0));
        CHECK(p.bins[0] == cplx(0, 0));
    }
    SECTION("bins far below the maximum modulus are suppressed") {
        std::vector<cplx> bins(16, cplx(1e6, 0));
        bins[7] = cplx(1e-9, 0); // 1e-15 of max, below the 1e-12 relative floor
        PhaseSpectrum p = phase_extract(spectrum_from(4, 4, bins));
        CHECK(p.bins[7] == cplx(0, 0));
    }
    SECTION("every output bin is unit-or-zero") {
        oracle::SplitMix64 rng(41);
        std::vector<cplx> bins(64);
        for (cplx& b : bins) b = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
        PhaseSpectrum p = phase_extract(spectrum_from(8, 8, bins));
        for (const cplx& b : p.bins) {
            double m = std::abs(b);
            CHECK((m == 0.0 || std::abs(m - 1.0) < 1e-12));
        }
    }
}

TEST_CASE("normalized cross spectrum", "[spectral]") {
    SECTION("identical spectra give exactly 1+0i everywhere") {
        oracle::SplitMix64 rng(51);
        std::vector<cplx> bins(64);
        for (cplx& b : bins) {
            double ph = rng.uniform(0, 2 * kPi);
            b = cplx(std::cos(ph), std::sin(ph));
        }
        PhaseSpectrum a = phase_from(8, 8, bins);
        PhaseSpectrum r = cross_phase_spectrum(a, a);
        for (const cplx& b : r.bins) CHECK(b == cplx(1, 0));
    }
    SECTION("recovers a pure shift: cross(a, a*e^{-i phi}) = e^{+i phi}") {
        const int M = 8, N = 8, k = 3;
        oracle::SplitMix64 rng(52);
        std::vector<cplx> abins(static_cast<size_t>(M) * N), bbins(abins.size());
        for (int v = 0; v < N; ++v)
            for (int u = 0; u < M; ++u) {
                double ph = rng.uniform(0, 2 * kPi);
                cplx a(std::cos(ph), std::sin(ph));
                double ang = -2.0 * kPi * u * k / static_cast<double>(M);
                abins[static_cast<size_t>(v) * M + u] = a;
                bbins[static_cast<size_t>(v) * M + u] = a * cplx(std::cos(ang), std::sin(ang));
            }
        PhaseSpectrum r = cross_phase_spectrum(phase_from(M, N, abins), phase_from(M, N, bbins));
        for (int v = 0; v < N; ++v)
            for (int u = 0; u < M; ++u) {
                double ang = 2.0 * kPi * u * k / static_cast<double>(M);
                CHECK(std::abs(r.at(u, v) - cplx(std::cos(ang), std::sin(ang))) < 1e-12);
            }
    }
    SECTION("zero-suppression when either bin is zero") {
        std::vector<cplx> abins(16, cplx(1, 0)), bbins(16, cplx(0, 1));
        abins[2] = cplx(0, 0);
        bbins[9] = cplx(0, 0);
        PhaseSpectrum r = cross_phase_spectrum(phase_from(4, 4, abins), phase_from(4, 4, bbins));
        CHECK(r.bins[2] == cplx(0, 0));
        CHECK(r.bins[9] == cplx(0, 0));
        CHECK(std::abs(std::abs(r.bins[1]) - 1.0) < 1e-12);
    }
    SECTION("matches the per-bin definition on random spectra") {
        oracle::SplitMix64 rng(53);
        std::vector<cplx> abins(36), bbins(36);
        for (size_t i = 0; i < 36; ++i) {
            abins[i] = cplx(rng.uniform(-2, 2), rng.uniform(-2, 2));
            bbins[i] = cplx(rng.uniform(-2, 2), rng.uniform(-2, 2));
        }
        ComplexSpectrum a = spectrum_from(6, 6, abins), b = spectrum_from(6, 6, bbins);
        PhaseSpectrum r = cross_phase_spectrum(a, b);
        for (size_t i = 0; i < 36; ++i) {
            cplx p = abins[i] * std::conj(bbins[i]);
            double m = std::abs(p);
            if (m > 0.0)
                CHECK(std::abs(r.bins[i] - p / m) < 1e-12);
            else
                CHECK(r.bins[i] == cplx(0, 0));
        }
    }
}

TEST_CASE("correlation surface", "[spectral]") {
    const WeightingConfig off{false, 0.5};
    SECTION("all-ones spectrum gives a centered unit impulse") {
        std::vector<cplx> bins(static_cast<size_t>(16) * 16, cplx(1, 0));
        CorrelationSurface s = correlation_surface(phase_from(16, 16, bins), off);
        CHECK_THAT(s.at(8, 8), Catch::Matchers::WithinAbs(1.0, 1e-12));
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if (x != 8 || y != 8) CHECK(std::abs(s.at(x, y)) < 1e-12);
    }
    SECTION("integer-shift spectrum peaks at center + (k,l)") {
        CorrelationSurface s = correlation_surface(pure_shift_spectrum(16, 16, 3, -2, false), off);
        CHECK_THAT(s.at(8 + 3, 8 - 2), Catch::Matchers::WithinAbs(1.0, 1e-12));
        double second = -1.0;
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if (x != 11 || y != 6) second = std::max(second, std::abs(s.at(x, y)));
        CHECK(second < 1e-12);
    }
    SECTION("matches the naive inverse transform on a random Hermitian phase spectrum") {
        const int M = 8, N = 8;
        oracle::SplitMix64 rng(61);
        std::vector<cplx> bins(static_cast<size_t>(M) * N, cplx(0, 0));
        for (int v = 0; v < N; ++v)
            for (int u = 0; u < M; ++u) {
                int cu = (M - u) % M, cv = (N - v) % N;
                size_t i = static_cast<size_t>(v) * M + u;
                size_t ci = static_cast<size_t>(cv) * M + cu;
                if (bins[i] != cplx(0, 0)) continue;
                if (i == ci) {
                    bins[i] = cplx(rng.uniform() < 0.5 ? -1.0 : 1.0, 0.0);
                } else {
                    double ph = rng.uniform(0, 2 * kPi);
                    bins[i] = cplx(std::cos(ph), std::sin(ph));
                    bins[ci] = std::conj(bins[i]);
                }
            }
        CorrelationSurface s = correlation_surface(phase_from(M, N, bins), off);
        auto ref = oracle::naive_idft_2d(bins, M, N);
        for (int y = 0; y < N; ++y)
            for (int x = 0; x < M; ++x) {
                // surface is circularly centered; undo the shift for comparison
                double got = s.at((x + M / 2) % M, (y + N / 2) % N);
                CHECK_THAT(got, Catch::Matchers::WithinAbs(ref[static_cast<size_t>(y) * M + x].real(),
                                                           1e-9));
            }
    }
    SECTION("surface never exceeds 1 by more than float noise") {
        oracle::SplitMix64 rng(62);
        for (int trial = 0; trial < 4; ++trial) {
            auto ta = oracle::make_texture(32, 32, 100 + trial).render();
            auto tb = oracle::make_texture(32, 32, 200 + trial).render();
            PhaseSpectrum pa = phase_extract(forward_dft(ta));
            PhaseSpectrum pb = phase_extract(forward_dft(tb));
            CorrelationSurface s =
                correlation_surface(cross_phase_spectrum(pa, pb), WeightingConfig{});
            for (double v : s.values) CHECK(v <= 1.0 + 1e-6);
        }
    }
    SECTION("weighted surface of a perfect match still peaks at 1") {
        auto t = oracle::make_texture(32, 32, 7).render();
        PhaseSpectrum p = phase_extract(forward_dft(t));
        CorrelationSurface s =
            correlation_surface(cross_phase_spectrum(p, p), WeightingConfig{true, 0.5});
        CHECK_THAT(s.at(16, 16), Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("sub-pixel peak fit", "[spectral]") {
    SECTION("centered impulse fits at (0,0) with peak 1") {
        std::vector<cplx> bins(static_cast<size_t>(32) * 32, cplx(1, 0));
        CorrelationSurface s =
            correlation_surface(phase_from(32, 32, bins), WeightingConfig{false, 0.5});
        DisplacementEstimate est = fit_subpixel_peak(s);
        CHECK_THAT(est.alpha, Catch::Matchers::WithinAbs(0.0, 1e-9));
        CHECK_THAT(est.beta, Catch::Matchers::WithinAbs(0.0, 1e-9));
        CHECK_THAT(est.peak, Catch::Matchers::WithinAbs(1.0, 1e-6));
        CHECK_FALSE(est.mismatch);
    }
    SECTION("recovers a fractional shift from the unweighted model") {
        CorrelationSurface s = correlation_surface(
            pure_shift_spectrum(64, 64, 0.30, -0.45, true), WeightingConfig{false, 0.5});
        DisplacementEstimate est = fit_subpixel_peak(s);
        CHECK_THAT(est.alpha, Catch::Matchers::WithinAbs(0.30, 5e-3));
        CHECK_THAT(est.beta, Catch::Matchers::WithinAbs(-0.45, 5e-3));
        CHECK(est.peak > 0.9);
    }
    SECTION("recovers a fractional shift under the default weighting") {
        CorrelationSurface s = correlation_surface(pure_shift_spectrum(64, 64, 0.30, -0.45, true),
                                                   WeightingConfig{true, 0.5});
        DisplacementEstimate est = fit_subpixel_peak(s);
        CHECK_THAT(est.alpha, Catch::Matchers::WithinAbs(0.30, 5e-3));
        CHECK_THAT(est.beta, Catch::Matchers::WithinAbs(-0.45, 5e-3));
        CHECK(est.peak > 0.9);
    }
    SECTION("flat surface with tiny noise flags a mismatch") {
        CorrelationSurface s;
        s.width = 32;
        s.height = 32;
        s.weight_sigma = 0.0;
        s.dc_active = false;
        s.values.assign(static_cast<size_t>(32) * 32, -1e-4);
        oracle::SplitMix64 rng(71);
        for (int y = 3; y < 29; ++y)
            for (int x = 3; x < 29; ++x) s.at(x, y) = 1e-4 * rng.uniform();
        DisplacementEstimate est = fit_subpixel_peak(s);
        CHECK(est.mismatch);
        CHECK(est.peak < 0.1);
    }
    SECTION("peak on the border frame is an error") {
        CorrelationSurface s = correlation_surface(
            pure_shift_spectrum(16, 16, -8, 0, false), WeightingConfig{false, 0.5});
        CHECK_THROWS_AS(fit_subpixel_peak(s), PeakOnBorderError);
    }
}

TEST_CASE("full-window phase correlation", "[spectral][fipoc]") {
    SECTION("identical windows give zero displacement with a strong peak") {
        auto f = oracle::make_texture(64, 64, 301).render();
        DisplacementEstimate est = fipoc(f, f);
        CHECK_THAT(est.alpha, Catch::Matchers::WithinAbs(0.0, 1e-6));
        CHECK_THAT(est.beta, Catch::Matchers::WithinAbs(0.0, 1e-6));
        CHECK(est.peak >= 0.95);
        CHECK_FALSE(est.mismatch);
    }
    SECTION("integer circular shift is recovered") {
        // The taper makes the two windowed frames crop different content, so
        // even an exact cyclic shift carries a leakage floor that shrinks
        // like 1/size (measured: 0.09 at 64^2, 0.03 at 128^2, 0.014 at 200^2
        // for a 0.35-band texture; a fuller band is several times tighter).
        auto t = oracle::band_texture(128, 128, 302);
        GrayImage f = t.render(0.0, 0.0);
        GrayImage g = circular_shift(f, 3, -2);
        DisplacementEstimate est = fipoc(f, g);
        CHECK_THAT(est.alpha, Catch::Matchers::WithinAbs(3.0, 0.02));
        CHECK_THAT(est.beta, Catch::Matchers::WithinAbs(-2.0, 0.02));
    }
    SECTION("fractional shift on a band-limited texture within 0.02 px") {
        auto t = oracle::band_texture(128, 128, 303);
        GrayImage f = t.render(0.0, 0.0);
        GrayImage g = t.render(0.30, -0.45);
        DisplacementEstimate est = fipoc(f, g);
        CHECK_THAT(est.alpha, Catch::Matchers::WithinAbs(0.30, 0.02));
        CHECK_THAT(est.beta, Catch::Matchers::WithinAbs(-0.45, 0.02));
    }
    SECTION("antisymmetry: fipoc(g,f) = -fipoc(f,g) within 2e-3") {
        auto t = oracle::make_texture(64, 64, 304);
        GrayImage f = t.render();
        GrayImage g = t.render(1.3, 0.8);
        DisplacementEstimate fg = fipoc(f, g);
        DisplacementEstimate gf = fipoc(g, f);
        CHECK_THAT(fg.alpha + gf.alpha, Catch::Matchers::WithinAbs(0.0, 2e-3));
        CHECK_THAT(fg.beta + gf.beta, Catch::Matchers::WithinAbs(0.0, 2e-3));
    }
    SECTION("invariant to intensity gain and offset") {
        auto t = oracle::make_texture(64, 64, 305);
        GrayImage f = t.render();
        GrayImage g = t.render(0.7, -1.2);
        DisplacementEstimate base = fipoc(f, g);
        GrayImage f2 = f;
        for (double& v : f2.samples) v = std::clamp(0.6 * v + 0.2, 0.0, 1.0);
        DisplacementEstimate scaled = fipoc(f2, g);
        CHECK_THAT(scaled.alpha, Catch::Matchers::WithinAbs(base.alpha, 1e-6));
        CHECK_THAT(scaled.beta, Catch::Matchers::WithinAbs(base.beta, 1e-6));
    }
    SECTION("constant windows are rejected") {
        GrayImage f = make_image(64, 64, 1.0, 0.5);
        auto g = oracle::make_texture(64, 64, 306).render();
        CHECK_THROWS_AS(fipoc(f, g), ConstantImageError);
    }
    SECTION("shape mismatch is rejected") {
        auto f = oracle::make_texture(64, 64, 307).render();
        auto g = oracle::make_texture(32, 32, 307).render();
        CHECK_THROWS_AS(fipoc(f, g), ParamError);
    }
}

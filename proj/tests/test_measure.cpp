#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <pipoc/measure.hpp>
#include <pipoc/phantom.hpp>

#include "support/oracles.hpp"

using namespace pipoc;

namespace {

GrayImage noisy(GrayImage img, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (double& v : img.samples) v = std::clamp(v + n(rng), 0.0, 1.0);
    return img;
}

std::vector<std::uint8_t> half_mask(int width, int height, bool top) {
    std::vector<std::uint8_t> m(static_cast<size_t>(width) * height, 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            m[static_cast<size_t>(y) * width + x] = top == (y < height / 2);
    return m;
}

GrayImage white_noise(int width, int height, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GrayImage img = make_image(width, height, 1.0);
    for (double& v : img.samples) v = u(rng);
    return img;
}

} // namespace

TEST_CASE("window calibration", "[measure]") {
    oracle::BandTexture tex = oracle::band_texture(128, 128, 401);
    GrayImage f = tex.render(0.0, 0.0);

    SECTION("identical windows need no offset") {
        CalibrationResult r = calibrate_window(f, f);
        CHECK(r.dx == 0);
        CHECK(r.dy == 0);
        CHECK(std::abs(r.residual.alpha) < 1e-3);
        CHECK(std::abs(r.residual.beta) < 1e-3);
        CHECK_FALSE(r.residual.mismatch);
    }
    SECTION("integer circular shift is recovered exactly") {
        GrayImage g = circular_shift(f, 4, -6);
        CalibrationResult r = calibrate_window(f, g);
        CHECK(r.dx == 4);
        CHECK(r.dy == -6);
        CHECK(std::abs(r.residual.alpha) < 0.5);
        CHECK(std::abs(r.residual.beta) < 0.5);
    }
    SECTION("fractional shift splits into integer offset and residual") {
        GrayImage g = tex.render(2.4, -1.3);
        CalibrationResult r = calibrate_window(f, g);
        CHECK(r.dx == 2);
        CHECK(r.dy == -1);
        CHECK_THAT(r.residual.alpha, Catch::Matchers::WithinAbs(0.4, 0.05));
        CHECK_THAT(r.residual.beta, Catch::Matchers::WithinAbs(-0.3, 0.05));
    }
    SECTION("uncorrelated windows fail calibration") {
        GrayImage a = white_noise(128, 128, 1);
        GrayImage b = white_noise(128, 128, 2);
        CHECK_THROWS_AS(calibrate_window(a, b), CalibrationError);
    }
    SECTION("shape mismatch is rejected") {
        GrayImage small = make_image(64, 128, 1.0);
        CHECK_THROWS_AS(calibrate_window(f, small), ParamError);
    }
}

TEST_CASE("region-masked correlation", "[measure]") {
    oracle::BandTexture tex = oracle::band_texture(128, 128, 402);
    GrayImage f = tex.render(0.0, 0.0);

    SECTION("self-registration peaks at zero") {
        DisplacementEstimate est = pipoc_region(f, f, half_mask(128, 128, true));
        CHECK_THAT(est.alpha, Catch::Matchers::WithinAbs(0.0, 1e-6));
        CHECK_THAT(est.beta, Catch::Matchers::WithinAbs(0.0, 1e-6));
        CHECK(est.peak > 0.9);
        CHECK_FALSE(est.mismatch);
    }
    SECTION("global shift is recovered through a region mask") {
        GrayImage g = tex.render(0.7, 0.2);
        DisplacementEstimate est = pipoc_region(f, g, half_mask(128, 128, true));
        CHECK_THAT(est.alpha, Catch::Matchers::WithinAbs(0.7, 0.03));
        CHECK_THAT(est.beta, Catch::Matchers::WithinAbs(0.2, 0.03));
    }
    SECTION("composite regions move independently") {
        PhantomSpec s;
        GrayImage base = render_joint(s, 1.70);
        GrayImage up = render_joint(s, 1.70, 0.0, 0.20);
        GrayImage dn = render_joint(s, 1.70, 0.0, -0.10);
        // splice at the gap center row, where every render is background
        GrayImage comp = base;
        for (int y = 0; y < comp.height; ++y)
            for (int x = 0; x < comp.width; ++x)
                comp.at(x, y) = y < comp.height / 2 ? up.at(x, y) : dn.at(x, y);
        DisplacementEstimate eu =
            pipoc_region(base, comp, half_mask(comp.width, comp.height, true));
        CHECK_THAT(eu.beta, Catch::Matchers::WithinAbs(0.20, 0.05));
        CHECK_THAT(eu.alpha, Catch::Matchers::WithinAbs(0.0, 0.05));
        DisplacementEstimate el =
            pipoc_region(base, comp, half_mask(comp.width, comp.height, false));
        CHECK_THAT(el.beta, Catch::Matchers::WithinAbs(-0.10, 0.05));
        CHECK_THAT(el.alpha, Catch::Matchers::WithinAbs(0.0, 0.05));
    }
    SECTION("mask preconditions") {
        std::vector<std::uint8_t> empty(f.samples.size(), 0);
        CHECK_THROWS_AS(pipoc_region(f, f, empty), MaskError);
        std::vector<std::uint8_t> sliver(f.samples.size(), 0);
        for (size_t i = 0; i < sliver.size() / 20; ++i) sliver[i] = 1; // 5%
        CHECK_THROWS_AS(pipoc_region(f, f, sliver), MaskError);
        std::vector<std::uint8_t> short_mask(100, 1);
        CHECK_THROWS_AS(pipoc_region(f, f, short_mask), ParamError);
        GrayImage small = make_image(64, 128, 1.0, 0.5);
        CHECK_THROWS_AS(pipoc_region(f, small, half_mask(128, 128, true)), ParamError);
    }
}

TEST_CASE("joint space narrowing quantification", "[measure]") {
    PhantomSpec s;
    QuantifyConfig cfg;
    GrayImage a = render_joint(s, 1.70);

    SECTION("identical windows measure zero narrowing") {
        JsnMeasurement m = quantify_jsn(a, a, cfg);
        CHECK(std::abs(m.jsn_px) < 2e-3);
        CHECK(m.calib_dx == 0);
        CHECK(m.calib_dy == 0);
        CHECK_FALSE(m.mismatch);
    }
    SECTION("a 0.10 mm narrowing is recovered") {
        GrayImage b = render_joint(s, 1.60);
        JsnMeasurement m = quantify_jsn(a, b, cfg);
        CHECK_THAT(m.jsn_mm, Catch::Matchers::WithinAbs(0.10, 0.02));
        CHECK_FALSE(m.mismatch);
    }
    SECTION("water-level noise doubles the tolerance, not more") {
        GrayImage an = noisy(a, noise_sigma_water(), 11);
        GrayImage bn = noisy(render_joint(s, 1.60), noise_sigma_water(), 22);
        JsnMeasurement m = quantify_jsn(an, bn, cfg);
        CHECK_THAT(m.jsn_mm, Catch::Matchers::WithinAbs(0.10, 0.04));
    }
    SECTION("a global shift measures zero narrowing") {
        GrayImage g = render_joint(s, 1.70, 1.6, -2.3);
        JsnMeasurement m = quantify_jsn(a, g, cfg);
        CHECK(m.calib_dx == 2);
        CHECK(m.calib_dy == -2);
        CHECK(std::abs(m.jsn_px) <= 0.02);
    }
    SECTION("swapped masks negate the measurement") {
        GrayImage b = render_joint(s, 1.60);
        RegionMasks masks = segment_window(a);
        JsnMeasurement m = quantify_jsn(a, b, masks, cfg);
        RegionMasks swapped;
        swapped.width = masks.width;
        swapped.height = masks.height;
        swapped.s0 = masks.s1;
        swapped.s1 = masks.s0;
        JsnMeasurement n = quantify_jsn(a, b, swapped, cfg);
        CHECK_THAT(n.jsn_px, Catch::Matchers::WithinAbs(-m.jsn_px, 4e-3));
    }
    SECTION("intensity scaling of the follow-up does not move the result") {
        GrayImage b = render_joint(s, 1.60);
        JsnMeasurement m = quantify_jsn(a, b, cfg);
        GrayImage b2 = b;
        for (double& v : b2.samples) v *= 0.8;
        JsnMeasurement m2 = quantify_jsn(a, b2, cfg);
        CHECK_THAT(m2.jsn_px, Catch::Matchers::WithinAbs(m.jsn_px, 1e-3));
    }
}

TEST_CASE("series measurement", "[measure]") {
    PhantomSpec s;
    QuantifyConfig cfg;

    SECTION("identical triple measures zero everywhere") {
        std::vector<GrayImage> w(3, render_joint(s, 1.70));
        JsnSeries ser = jsn_series(w, cfg);
        REQUIRE(ser.n == 3);
        for (int f = 0; f < 3; ++f) {
            for (int g = f + 1; g < 3; ++g) {
                REQUIRE(ser.pair_ok(f, g));
                CHECK(std::abs(ser.at(f, g).jsn_px) < 4e-3);
            }
        }
        double indirect = ser.at(0, 1).jsn_px + ser.at(1, 2).jsn_px;
        CHECK(std::abs(indirect) < 4e-3);
    }
    SECTION("a narrowing series is additive") {
        std::vector<GrayImage> w{render_joint(s, 1.70), render_joint(s, 1.65),
                                 render_joint(s, 1.60)};
        JsnSeries ser = jsn_series(w, cfg);
        CHECK_THAT(ser.at(0, 2).jsn_mm, Catch::Matchers::WithinAbs(0.10, 0.02));
        double indirect = ser.at(0, 1).jsn_mm + ser.at(1, 2).jsn_mm;
        CHECK_THAT(indirect, Catch::Matchers::WithinAbs(0.10, 0.02));
        double gap_px = ser.at(0, 2).jsn_px -
                        (ser.at(0, 1).jsn_px + ser.at(1, 2).jsn_px);
        CHECK(std::abs(gap_px) < 0.02);
    }
    SECTION("swapping the pair order negates the value") {
        GrayImage a = render_joint(s, 1.70);
        GrayImage b = render_joint(s, 1.62);
        RegionMasks masks = segment_window(a);
        JsnMeasurement fg = quantify_jsn(a, b, masks, cfg);
        JsnMeasurement gf = quantify_jsn(b, a, masks, cfg);
        CHECK_THAT(gf.jsn_px, Catch::Matchers::WithinAbs(-fg.jsn_px, 4e-3));
    }
    SECTION("a series needs at least two windows") {
        std::vector<GrayImage> one{render_joint(s, 1.70)};
        CHECK_THROWS_AS(jsn_series(one, cfg), ParamError);
    }
}

#pragma once

// Synthetic radiograph generator with exact sub-pixel ground truth. Two
// bone silhouettes face each other across a constant vertical gap; the gap
// is the ground-truth joint space width. Geometry lives in millimetres and
// is rasterized at 16x supersampling, so sub-pixel motion is free of grid
// artifacts without touching any frequency-domain machinery.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipoc/errors.hpp"
#include "pipoc/image.hpp"
#include "pipoc/image_io.hpp"

namespace pipoc {

struct PhantomSpec {
    double spacing_mm = 0.15;
    int canvas_width = 128;
    int canvas_height = 128;
    double bone_width_mm = 9.0;
    double head_radius_mm = 6.75;
    double cortex_thickness_mm = 0.75;
    // One-pixel transitions: sharper edges alias through the 16x box filter
    // and bias diagonal sub-pixel correlation by ~0.03 px toward zero.
    double edge_softness_mm = 0.15;
    double texture_amplitude = 0.05;
    double cortex_intensity = 0.80;
    double cancellous_intensity = 0.45;
    double background_intensity = 0.08;
    double reference_jsw_mm = 1.70;
    std::vector<double> jsw_sequence;
    double noise_sigma = 0.0;
    std::uint64_t seed = 1;
};

struct PhantomManifest {
    PhantomSpec spec;
    struct Entry {
        std::string file;
        double jsw_mm = 0.0;
        double upper_shift_px = 0.0;
        double lower_shift_px = 0.0;
    };
    std::vector<Entry> images;
};

namespace detail {

inline void validate_phantom(const PhantomSpec& s) {
    if (!(s.background_intensity < s.cancellous_intensity &&
          s.cancellous_intensity < s.cortex_intensity))
        throw ParamError("phantom intensities must be ordered background < cancellous < cortex");
    for (double j : s.jsw_sequence)
        if (!(j > 0.0)) throw ParamError("jsw values must be positive");
    if (!(s.spacing_mm > 0.0) || s.canvas_width < 8 || s.canvas_height < 8)
        throw ParamError("degenerate phantom canvas");
    if (!(s.head_radius_mm > s.bone_width_mm / 2.0))
        throw ParamError("head radius must exceed the bone half-width");
}

inline double smoothstep(double lo, double hi, double v) {
    double t = (v - lo) / (hi - lo);
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    return t * t * (3.0 - 2.0 * t);
}

// Texture fixed by the spec seed: it belongs to the bone and must ride
// along with it unchanged through every image of a sweep. Broadband value
// noise rather than a handful of sinusoids: a smooth, dense spectrum keeps
// the whitened correlation kernel compact, so texture from one bone does
// not bleed across the gap and drag the other region's peak estimate.
struct BonePattern {
    std::uint64_t seed = 0;
    double amplitude = 0.0;

    static double cell(std::uint64_t seed, std::int64_t ix, std::int64_t iy,
                       std::uint64_t octave) {
        std::uint64_t h = seed ^ (octave * 0x9E3779B97F4A7C15ULL);
        h ^= static_cast<std::uint64_t>(ix) * 0xC2B2AE3D27D4EB4FULL;
        h ^= static_cast<std::uint64_t>(iy) * 0x165667B19E3779F9ULL;
        h ^= h >> 30;
        h *= 0xBF58476D1CE4E5B9ULL;
        h ^= h >> 27;
        h *= 0x94D049BB133111EBULL;
        h ^= h >> 31;
        return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0; // [-1, 1)
    }

    double octave_value(double x, double y, std::uint64_t octave) const {
        const double fx = std::floor(x), fy = std::floor(y);
        const auto ix = static_cast<std::int64_t>(fx);
        const auto iy = static_cast<std::int64_t>(fy);
        double tx = x - fx, ty = y - fy;
        tx = tx * tx * (3.0 - 2.0 * tx); // C1 interpolation keeps the 16x
        ty = ty * ty * (3.0 - 2.0 * ty); // box filter free of lattice creases
        const double v00 = cell(seed, ix, iy, octave);
        const double v10 = cell(seed, ix + 1, iy, octave);
        const double v01 = cell(seed, ix, iy + 1, octave);
        const double v11 = cell(seed, ix + 1, iy + 1, octave);
        const double a = v00 + (v10 - v00) * tx;
        const double b = v01 + (v11 - v01) * tx;
        return a + (b - a) * ty;
    }

    double operator()(double x_mm, double y_mm) const {
        double v = octave_value(x_mm / 1.8, y_mm / 1.8, 1);
        v += 0.7 * octave_value(x_mm / 0.9, y_mm / 0.9, 2);
        v += 0.45 * octave_value(x_mm / 0.45, y_mm / 0.45, 3);
        return amplitude * v;
    }

    static constexpr double kSpectralPi = 3.14159265358979323846;

    static BonePattern from_seed(std::uint64_t seed, double amplitude) {
        BonePattern p{};
        p.seed = seed;
        p.amplitude = amplitude;
        return p;
    }
};

} // namespace detail

/// One joint image: convex head above, matching concave base below, the
/// vertical gap between their edges exactly `jsw` at every column. `jsw`
/// changes move both bones symmetrically about the reference; the global
/// offset moves them together. Deterministic and noiseless.
inline GrayImage render_joint(const PhantomSpec& spec, double jsw,
                              double offset_x_px = 0.0, double offset_y_px = 0.0) {
    detail::validate_phantom(spec);
    if (!(jsw >= 0.5 && jsw <= 5.0))
        throw ParamError("jsw outside [0.5, 5] mm");
    if (std::fabs(offset_x_px) > 4.0 || std::fabs(offset_y_px) > 4.0)
        throw ParamError("offset larger than 4 px");

    const double s = spec.spacing_mm;
    const double W = spec.canvas_width * s, H = spec.canvas_height * s;
    const double cx = W / 2.0;
    const double r = spec.head_radius_mm;
    const double hw = spec.bone_width_mm / 2.0;
    const double y0 = H / 2.0 - spec.reference_jsw_mm / 2.0 - r; // head disc center
    const double delta = jsw - spec.reference_jsw_mm;
    const double ox = offset_x_px * s;
    const double oy_upper = offset_y_px * s - delta / 2.0;
    const double oy_lower = offset_y_px * s + delta / 2.0;

    // the facing edges (not the shafts) must stay well inside the canvas
    const double edge_hi = y0 + std::sqrt(r * r - hw * hw) + oy_upper;
    const double edge_lo = y0 + r + spec.reference_jsw_mm + (r - std::sqrt(r * r - hw * hw)) + oy_lower;
    if (cx - hw + ox < 0.5 || cx + hw + ox > W - 0.5 || edge_hi < 1.0 || edge_lo > H - 1.0)
        throw ParamError("phantom geometry exceeds canvas");

    const auto upper_tex = detail::BonePattern::from_seed(spec.seed ^ 0xA5A5A5A5ULL,
                                                          spec.texture_amplitude);
    const auto lower_tex = detail::BonePattern::from_seed(spec.seed ^ 0x5A5A5A5AULL,
                                                          spec.texture_amplitude);
    const double e = spec.edge_softness_mm;
    const double ct = spec.cortex_thickness_mm;

    // negative inside; the lower field measures vertical distance to the cup
    // curve, which keeps the gap between the two zero-level sets exact
    auto upper_field = [&](double x, double y) {
        double slab = std::fabs(x - cx) - hw;
        double half = y - y0;
        double dxc = x - cx, dyc = y - y0;
        double disc = std::sqrt(dxc * dxc + dyc * dyc) - r;
        return std::max(slab, std::min(half, disc));
    };
    auto cup_edge = [&](double x) {
        double dxc = std::clamp(x - cx, -r, r);
        return y0 + std::sqrt(r * r - dxc * dxc) + spec.reference_jsw_mm;
    };
    auto lower_field = [&](double x, double y) {
        double slab = std::fabs(x - cx) - hw;
        return std::max(slab, cup_edge(x) - y);
    };

    auto layer_intensity = [&](double depth, const detail::BonePattern& tex, double x, double y) {
        double base;
        if (ct <= 0.0) {
            base = spec.cancellous_intensity;
        } else {
            double t = detail::smoothstep(ct - e, ct + e, depth);
            base = spec.cortex_intensity + t * (spec.cancellous_intensity - spec.cortex_intensity);
        }
        return base + tex(x, y);
    };

    GrayImage img = make_image(spec.canvas_width, spec.canvas_height, s);
    constexpr int kSub = 16;
    const double step = s / kSub;
    for (int py = 0; py < spec.canvas_height; ++py) {
        for (int px = 0; px < spec.canvas_width; ++px) {
            double acc = 0.0;
            for (int sy = 0; sy < kSub; ++sy) {
                double y = py * s + (sy + 0.5) * step;
                for (int sx = 0; sx < kSub; ++sx) {
                    double x = px * s + (sx + 0.5) * step;
                    double v = spec.background_intensity;
                    double fu = upper_field(x - ox, y - oy_upper);
                    if (fu < e) {
                        double cov = 1.0 - detail::smoothstep(-e, e, fu);
                        double li = layer_intensity(-fu, upper_tex, x - ox, y - oy_upper);
                        v += cov * (li - spec.background_intensity);
                    } else {
                        double fl = lower_field(x - ox, y - oy_lower);
                        if (fl < e) {
                            double cov = 1.0 - detail::smoothstep(-e, e, fl);
                            double li = layer_intensity(-fl, lower_tex, x - ox, y - oy_lower);
                            v += cov * (li - spec.background_intensity);
                        }
                    }
                    acc += v;
                }
            }
            img.at(px, py) = acc / (kSub * kSub);
        }
    }
    return img;
}

inline std::string phantom_file_name(std::size_t index, double jsw) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "phantom_%02zu_%.2f.pgm", index, jsw);
    return buf;
}

inline void save_manifest(const PhantomManifest& m, const std::filesystem::path& path) {
    nlohmann::json j;
    j["spacing_mm"] = m.spec.spacing_mm;
    j["canvas_width"] = m.spec.canvas_width;
    j["canvas_height"] = m.spec.canvas_height;
    j["bone_width_mm"] = m.spec.bone_width_mm;
    j["head_radius_mm"] = m.spec.head_radius_mm;
    j["cortex_thickness_mm"] = m.spec.cortex_thickness_mm;
    j["edge_softness_mm"] = m.spec.edge_softness_mm;
    j["texture_amplitude"] = m.spec.texture_amplitude;
    j["cortex_intensity"] = m.spec.cortex_intensity;
    j["cancellous_intensity"] = m.spec.cancellous_intensity;
    j["background_intensity"] = m.spec.background_intensity;
    j["reference_jsw_mm"] = m.spec.reference_jsw_mm;
    j["jsw_sequence"] = m.spec.jsw_sequence;
    j["noise_sigma"] = m.spec.noise_sigma;
    j["seed"] = m.spec.seed;
    j["images"] = nlohmann::json::array();
    for (const auto& e : m.images)
        j["images"].push_back({{"file", e.file},
                               {"jsw_mm", e.jsw_mm},
                               {"upper_shift_px", e.upper_shift_px},
                               {"lower_shift_px", e.lower_shift_px}});
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

inline PhantomManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError("bad manifest " + path.string() + ": " + ex.what());
    }
    PhantomManifest m;
    try {
        m.spec.spacing_mm = j.at("spacing_mm").get<double>();
        m.spec.canvas_width = j.at("canvas_width").get<int>();
        m.spec.canvas_height = j.at("canvas_height").get<int>();
        m.spec.bone_width_mm = j.at("bone_width_mm").get<double>();
        m.spec.head_radius_mm = j.at("head_radius_mm").get<double>();
        m.spec.cortex_thickness_mm = j.at("cortex_thickness_mm").get<double>();
        m.spec.edge_softness_mm = j.at("edge_softness_mm").get<double>();
        m.spec.texture_amplitude = j.at("texture_amplitude").get<double>();
        m.spec.cortex_intensity = j.at("cortex_intensity").get<double>();
        m.spec.cancellous_intensity = j.at("cancellous_intensity").get<double>();
        m.spec.background_intensity = j.at("background_intensity").get<double>();
        m.spec.reference_jsw_mm = j.at("reference_jsw_mm").get<double>();
        m.spec.jsw_sequence = j.at("jsw_sequence").get<std::vector<double>>();
        m.spec.noise_sigma = j.at("noise_sigma").get<double>();
        m.spec.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("images")) {
            PhantomManifest::Entry entry;
            entry.file = e.at("file").get<std::string>();
            entry.jsw_mm = e.at("jsw_mm").get<double>();
            entry.upper_shift_px = e.at("upper_shift_px").get<double>();
            entry.lower_shift_px = e.at("lower_shift_px").get<double>();
            m.images.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError("bad manifest " + path.string() + ": " + ex.what());
    }
    return m;
}

/// Renders the whole jsw sequence into `out_dir`, adds per-image Gaussian
/// noise (clamped to [0,1]), and writes manifest.json alongside. Per-image
/// noise seeds derive from spec.seed and the image index, so renders are
/// order-independent and byte-stable.
inline PhantomManifest render_sweep(const PhantomSpec& spec,
                                    const std::filesystem::path& out_dir) {
    detail::validate_phantom(spec);
    if (spec.jsw_sequence.empty())
        throw ParamError("jsw sequence is empty");
    std::filesystem::create_directories(out_dir);
    PhantomManifest m;
    m.spec = spec;
    for (std::size_t i = 0; i < spec.jsw_sequence.size(); ++i) {
        const double jsw = spec.jsw_sequence[i];
        GrayImage img = render_joint(spec, jsw);
        if (spec.noise_sigma > 0.0) {
            std::mt19937_64 rng(spec.seed + 0x9E3779B97F4A7C15ULL * (i + 1));
            auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
            for (size_t k = 0; k + 1 < img.samples.size(); k += 2) {
                double u1 = uniform(), u2 = uniform();
                double mag = spec.noise_sigma * std::sqrt(-2.0 * std::log(u1));
                img.samples[k] += mag * std::cos(2.0 * detail::BonePattern::kSpectralPi * u2);
                img.samples[k + 1] += mag * std::sin(2.0 * detail::BonePattern::kSpectralPi * u2);
            }
            if (img.samples.size() % 2 == 1) {
                double u1 = uniform(), u2 = uniform();
                img.samples.back() += spec.noise_sigma * std::sqrt(-2.0 * std::log(u1)) *
                                      std::cos(2.0 * detail::BonePattern::kSpectralPi * u2);
            }
            for (double& v : img.samples) v = std::clamp(v, 0.0, 1.0);
        }
        const std::string name = phantom_file_name(i, jsw);
        save_pgm16(img, out_dir / name);
        const double delta = jsw - spec.reference_jsw_mm;
        m.images.push_back({name, jsw, -delta / 2.0 / spec.spacing_mm,
                            delta / 2.0 / spec.spacing_mm});
    }
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

/// Noise presets: with the tank empty the frames are nearly clean; filled
/// with water the attenuation shows up as stronger pixel noise.
inline double noise_sigma_air() { return 0.005; }
inline double noise_sigma_water() { return 0.02; }

// --- comb-shaped hand silhouette for exercising the detection stage ---

struct FingerTruth {
    double base_x_px = 0.0;
    double base_y_px = 0.0;
    double angle_deg = 0.0; // from vertical, positive leaning right
    double half_width_px = 0.0;
    double length_px = 0.0;
    std::array<double, 2> band_centers; // fraction of length from the base
};

struct HandSilhouette {
    GrayImage image;
    std::vector<FingerTruth> fingers;
};

/// Bright capsule fingers on a common palm block, two dark joint bands per
/// finger. A soft-tissue margin surrounds every bone and fills the joint
/// bands, so global thresholding sees one solid hand instead of bone
/// fragments. Seeded jitter moves bases and widths a little; fingers whose
/// tissue margins would touch raise DetectionError.
inline HandSilhouette render_hand_silhouette(int finger_count,
                                             const std::vector<double>& angles_deg,
                                             std::uint64_t seed) {
    if (finger_count < 1 || finger_count > 5)
        throw ParamError("finger count outside [1,5]");
    if (static_cast<int>(angles_deg.size()) != finger_count)
        throw ParamError("one angle per finger required");

    const int W = 400, H = 400;
    constexpr double kPi = detail::BonePattern::kSpectralPi;
    std::mt19937_64 rng(seed);
    auto jitter = [&rng](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    };

    const double palm_top = H * 0.80;
    HandSilhouette out;
    for (int i = 0; i < finger_count; ++i) {
        FingerTruth f;
        f.base_x_px = (i + 1.0) / (finger_count + 1.0) * W + jitter(-4.0, 4.0);
        f.base_y_px = palm_top + 8.0;
        f.angle_deg = angles_deg[i];
        f.half_width_px = 12.0 + jitter(-2.0, 2.0);
        f.length_px = H * 0.55 + jitter(-10.0, 10.0);
        f.band_centers = {0.45 + jitter(-0.02, 0.02), 0.75 + jitter(-0.02, 0.02)};
        out.fingers.push_back(f);
    }

    const double halo = 3.0; // soft-tissue margin around each bone

    // reject touching tissue margins before rasterizing anything
    auto tip = [](const FingerTruth& f) {
        double a = f.angle_deg * kPi / 180.0;
        return std::array<double, 2>{f.base_x_px + f.length_px * std::sin(a),
                                     f.base_y_px - f.length_px * std::cos(a)};
    };
    auto seg_dist = [](double ax, double ay, double bx, double by, double px, double py) {
        double vx = bx - ax, vy = by - ay;
        double t = ((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy);
        t = std::clamp(t, 0.0, 1.0);
        double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
        return std::sqrt(dx * dx + dy * dy);
    };
    for (int i = 0; i + 1 < finger_count; ++i) {
        const auto& a = out.fingers[i];
        const auto& b = out.fingers[i + 1];
        auto ta = tip(a), tb = tip(b);
        double d = 1e300;
        for (double t = 0.0; t <= 1.0; t += 0.05) {
            double px = a.base_x_px + t * (ta[0] - a.base_x_px);
            double py = a.base_y_px + t * (ta[1] - a.base_y_px);
            d = std::min(d, seg_dist(b.base_x_px, b.base_y_px, tb[0], tb[1], px, py));
        }
        if (d < a.half_width_px + b.half_width_px + 2.0 * halo + 3.0)
            throw DetectionError("fingers overlap at these angles");
    }

    const double bone = 0.85, tissue = 0.65, background = 0.06;
    GrayImage img = make_image(W, H, 0.175, background);
    constexpr int kSub = 4;
    for (int py = 0; py < H; ++py) {
        for (int px = 0; px < W; ++px) {
            double acc = 0.0;
            for (int sy = 0; sy < kSub; ++sy) {
                for (int sx = 0; sx < kSub; ++sx) {
                    double x = px + (sx + 0.5) / kSub;
                    double y = py + (sy + 0.5) / kSub;
                    double v = background;
                    if (y >= palm_top) v = bone;
                    else if (y >= palm_top - halo) v = tissue;
                    for (const auto& f : out.fingers) {
                        double a = f.angle_deg * kPi / 180.0;
                        double ux = std::sin(a), uy = -std::cos(a);
                        double rx = x - f.base_x_px, ry = y - f.base_y_px;
                        double t = rx * ux + ry * uy;
                        double tc = std::clamp(t, 0.0, f.length_px);
                        double dx = rx - tc * ux, dy = ry - tc * uy;
                        double d2 = dx * dx + dy * dy;
                        double hw = f.half_width_px;
                        if (d2 > (hw + halo) * (hw + halo)) continue;
                        if (d2 > hw * hw) {
                            if (v < tissue) v = tissue;
                            continue; // margins of neighbors may abut the check slack
                        }
                        v = bone;
                        for (double bc : f.band_centers)
                            if (std::fabs(t - bc * f.length_px) < 5.0) v = tissue;
                        break; // bone capsules never overlap, checked above
                    }
                    acc += v;
                }
            }
            img.at(px, py) = acc / (kSub * kSub);
        }
    }
    out.image = img;
    return out;
}

} // namespace pipoc

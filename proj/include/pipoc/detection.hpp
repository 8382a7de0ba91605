#pragma once

// Finger midline detection and joint window proposal from a hand image:
// Otsu binarization, morphological cleanup at one-fifth scale, contour
// extrema after polygonal simplification, total-least-squares midlines,
// and an intensity-valley proposer along each midline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "pipoc/errors.hpp"
#include "pipoc/image.hpp"

namespace pipoc {

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values; // 0 or 1

    std::uint8_t at(int x, int y) const {
        return values[static_cast<size_t>(y) * width + x];
    }
    std::uint8_t& at(int x, int y) {
        return values[static_cast<size_t>(y) * width + x];
    }
    bool inside(int x, int y) const {
        return x >= 0 && y >= 0 && x < width && y < height;
    }
};

inline BinaryMask make_mask(int width, int height, std::uint8_t fill = 0) {
    if (width <= 0 || height <= 0)
        throw ParamError("mask dimensions must be positive");
    BinaryMask m;
    m.width = width;
    m.height = height;
    m.values.assign(static_cast<size_t>(width) * height, fill);
    return m;
}

struct Point {
    double x = 0.0;
    double y = 0.0;
};

enum class JointKind { IP, DIP, PIP, MCP };

inline const char* joint_kind_name(JointKind k) {
    switch (k) {
        case JointKind::IP: return "IP";
        case JointKind::DIP: return "DIP";
        case JointKind::PIP: return "PIP";
        default: return "MCP";
    }
}

/// One detected finger: contour tip, the two flanking contour valleys, and
/// the fitted midline (point + unit direction, oriented tip to palm).
struct FingerRegion {
    Point tip;
    Point valley_left;
    Point valley_right;
    Point midline_point;
    Point midline_dir;
    int label = 1;

    /// Lean of the midline from vertical, degrees, positive to the right.
    double angle_deg() const {
        return std::atan2(-midline_dir.x, midline_dir.y) * 180.0 /
               3.14159265358979323846;
    }
};

struct JointProposal {
    WindowRect window;
    JointKind kind = JointKind::DIP;
    double score = 0.0; // valley prominence
};

// --- binarization ---

struct OtsuResult {
    BinaryMask mask;
    double threshold = 0.0;
};

/// Threshold maximizing between-class variance over a 256-bin histogram.
/// The reported threshold is the lower edge of the first foreground bin.
inline OtsuResult otsu_binarize(const GrayImage& img) {
    auto [lo, hi] = image_min_max(img);
    if (!(hi > lo)) throw ConstantImageError("constant image cannot be binarized");
    std::array<double, 256> hist{};
    for (double v : img.samples) {
        int bin = std::min(255, static_cast<int>(v * 256.0));
        hist[static_cast<size_t>(std::max(0, bin))] += 1.0;
    }
    const double total = static_cast<double>(img.samples.size());
    double total_sum = 0.0;
    for (int b = 0; b < 256; ++b) total_sum += b * hist[b];
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_t = 0;
    for (int t = 0; t < 255; ++t) {
        w0 += hist[t];
        sum0 += t * hist[t];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (total_sum - sum0) / w1;
        const double sb = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (sb > best) {
            best = sb;
            best_t = t;
        }
    }
    OtsuResult out;
    out.threshold = (best_t + 1) / 256.0;
    out.mask = make_mask(img.width, img.height);
    for (size_t i = 0; i < img.samples.size(); ++i)
        out.mask.values[i] = img.samples[i] > out.threshold;
    return out;
}

// --- morphology ---

namespace detail {

inline std::vector<std::pair<int, int>> disc_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) offs.push_back({dx, dy});
    return offs;
}

} // namespace detail

/// Erosion with a disc. Samples beyond the border count as foreground, so
/// shapes entering through the image edge are not eaten away there.
inline BinaryMask erode_mask(const BinaryMask& m, int radius) {
    auto offs = detail::disc_offsets(radius);
    BinaryMask out = make_mask(m.width, m.height);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t keep = 1;
            for (auto [dx, dy] : offs) {
                int nx = x + dx, ny = y + dy;
                if (m.inside(nx, ny) && !m.at(nx, ny)) {
                    keep = 0;
                    break;
                }
            }
            out.at(x, y) = keep;
        }
    }
    return out;
}

/// Dilation with a disc; the outside counts as background.
inline BinaryMask dilate_mask(const BinaryMask& m, int radius) {
    auto offs = detail::disc_offsets(radius);
    BinaryMask out = make_mask(m.width, m.height);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t hit = 0;
            for (auto [dx, dy] : offs) {
                int nx = x + dx, ny = y + dy;
                if (m.inside(nx, ny) && m.at(nx, ny)) {
                    hit = 1;
                    break;
                }
            }
            out.at(x, y) = hit;
        }
    }
    return out;
}

/// Morphological opening then closing with the same disc.
inline BinaryMask smooth_mask(const BinaryMask& m, int radius) {
    if (radius < 1) throw ParamError("structuring radius must be at least 1");
    BinaryMask opened = dilate_mask(erode_mask(m, radius), radius);
    return erode_mask(dilate_mask(opened, radius), radius);
}

// --- contour analysis ---

struct ContourExtrema {
    std::vector<Point> maxima; // finger tips, contour order
    std::vector<Point> minima; // inter-finger valleys, contour order
    bool first_is_max = true;  // whether a maximum precedes every minimum
};

namespace detail {

inline void require_single_bottom_component(const BinaryMask& m) {
    // flood fill with 8-connectivity
    std::vector<std::uint8_t> seen(m.values.size(), 0);
    int components = 0;
    bool touches_bottom = false;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(x, y) || seen[static_cast<size_t>(y) * m.width + x]) continue;
            if (++components > 1)
                throw DetectionError("expected exactly one foreground component");
            stack.push_back({x, y});
            seen[static_cast<size_t>(y) * m.width + x] = 1;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                if (cy == m.height - 1) touches_bottom = true;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        int nx = cx + dx, ny = cy + dy;
                        if (!m.inside(nx, ny) || !m.at(nx, ny)) continue;
                        std::uint8_t& s = seen[static_cast<size_t>(ny) * m.width + nx];
                        if (!s) {
                            s = 1;
                            stack.push_back({nx, ny});
                        }
                    }
                }
            }
        }
    }
    if (components == 0) throw DetectionError("no foreground component");
    if (!touches_bottom)
        throw DetectionError("foreground must reach the bottom border");
}

/// Moore-neighbor boundary trace. Returns the closed outer contour in
/// order; the starting pixel appears only once.
inline std::vector<std::pair<int, int>> trace_contour(const BinaryMask& m) {
    static const int dx8[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    static const int dy8[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    auto fg = [&m](int x, int y) { return m.inside(x, y) && m.at(x, y); };
    int sx = -1, sy = -1;
    for (int y = 0; y < m.height && sx < 0; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) {
                sx = x;
                sy = y;
                break;
            }
    std::vector<std::pair<int, int>> contour{{sx, sy}};
    int cx = sx, cy = sy;
    int px = sx - 1, py = sy; // previous (background) position
    const size_t cap = 4 * m.values.size() + 16;
    while (contour.size() < cap) {
        int d = 0;
        for (int k = 0; k < 8; ++k)
            if (cx + dx8[k] == px && cy + dy8[k] == py) {
                d = k;
                break;
            }
        int nd = -1;
        for (int k = 1; k <= 8; ++k) {
            int cand = (d + k) % 8;
            int nx = cx + dx8[cand], ny = cy + dy8[cand];
            if (fg(nx, ny)) {
                nd = cand;
                break;
            }
            px = nx;
            py = ny;
        }
        if (nd < 0) break; // isolated pixel
        cx += dx8[nd];
        cy += dy8[nd];
        if (cx == sx && cy == sy) break;
        contour.push_back({cx, cy});
    }
    return contour;
}

/// Douglas-Peucker keep-flags over an open polyline.
inline void simplify_polyline(const std::vector<std::pair<int, int>>& pts,
                              size_t lo, size_t hi, double eps,
                              std::vector<std::uint8_t>& keep) {
    if (hi <= lo + 1) return;
    const double ax = pts[lo].first, ay = pts[lo].second;
    const double bx = pts[hi].first, by = pts[hi].second;
    const double vx = bx - ax, vy = by - ay;
    const double len = std::hypot(vx, vy);
    double worst = -1.0;
    size_t wi = lo;
    for (size_t i = lo + 1; i < hi; ++i) {
        double dist;
        if (len == 0.0) {
            dist = std::hypot(pts[i].first - ax, pts[i].second - ay);
        } else {
            dist = std::abs(vx * (pts[i].second - ay) - vy * (pts[i].first - ax)) / len;
        }
        if (dist > worst) {
            worst = dist;
            wi = i;
        }
    }
    if (worst <= eps) return;
    keep[wi] = 1;
    simplify_polyline(pts, lo, wi, eps, keep);
    simplify_polyline(pts, wi, hi, eps, keep);
}

} // namespace detail

/// Tips and valleys of the hand outline. The outer contour is simplified
/// by polygonal approximation (tolerance = epsilon_frac of the image
/// height); the surviving vertices are classified by their height above
/// the bottom border, plateaus collapsing to their midpoint, and cleaned
/// to a strictly alternating tip/valley sequence.
inline ContourExtrema contour_extrema(const BinaryMask& m,
                                      double epsilon_frac = 0.02) {
    detail::require_single_bottom_component(m);
    std::vector<std::pair<int, int>> contour = detail::trace_contour(m);

    // cut the loop at the bottom-left-most pixel so the polyline endpoints
    // sit on the low ground
    size_t cut = 0;
    for (size_t i = 1; i < contour.size(); ++i) {
        auto [x, y] = contour[i];
        auto [cx, cy] = contour[cut];
        if (y > cy || (y == cy && x < cx)) cut = i;
    }
    std::rotate(contour.begin(), contour.begin() + cut, contour.end());

    std::vector<std::uint8_t> keep(contour.size(), 0);
    keep.front() = 1;
    keep.back() = 1;
    detail::simplify_polyline(contour, 0, contour.size() - 1,
                              epsilon_frac * m.height, keep);
    std::vector<std::pair<int, int>> poly;
    for (size_t i = 0; i < contour.size(); ++i)
        if (keep[i]) poly.push_back(contour[i]);

    // plateau-aware extrema of height above the bottom border; the
    // approximation leaves staircase corners one pixel apart, so a flat
    // tolerates small height wobble and collapses to its mean
    auto dist = [&m](const std::pair<int, int>& p) {
        return static_cast<double>(m.height - 1 - p.second);
    };
    struct Group {
        Point p;
        double d;
    };
    std::vector<Group> groups;
    for (size_t i = 0; i < poly.size();) {
        size_t j = i;
        while (j + 1 < poly.size() && std::fabs(dist(poly[j + 1]) - dist(poly[i])) <= 2.0)
            ++j;
        double sx = 0.0, sy = 0.0, sd = 0.0;
        for (size_t k = i; k <= j; ++k) {
            sx += poly[k].first;
            sy += poly[k].second;
            sd += dist(poly[k]);
        }
        const double cnt = static_cast<double>(j - i + 1);
        groups.push_back({{sx / cnt, sy / cnt}, sd / cnt});
        i = j + 1;
    }

    struct Found {
        Point p;
        double d;
        bool is_max;
    };
    std::vector<Found> found;
    for (size_t g = 1; g + 1 < groups.size(); ++g) {
        const double before = groups[g - 1].d;
        const double here = groups[g].d;
        const double after = groups[g + 1].d;
        if ((before < here) == (after < here))
            found.push_back({groups[g].p, here, before < here});
    }

    // enforce alternation: of adjacent same-kind extrema keep the stronger
    std::vector<Found> alt;
    for (const Found& f : found) {
        if (!alt.empty() && alt.back().is_max == f.is_max) {
            const bool replace = f.is_max ? f.p.y < alt.back().p.y
                                          : f.p.y > alt.back().p.y;
            if (replace) alt.back() = f;
        } else {
            alt.push_back(f);
        }
    }

    // prune low-relief tip/valley pairs left over from contour noise; the
    // polygonal tolerance doubles as the relief threshold
    const double relief = epsilon_frac * m.height;
    while (alt.size() >= 2) {
        size_t at = 0;
        double weakest = 1e300;
        for (size_t k = 0; k + 1 < alt.size(); ++k) {
            const double c = std::fabs(alt[k].d - alt[k + 1].d);
            if (c < weakest) {
                weakest = c;
                at = k;
            }
        }
        if (weakest >= relief) break;
        alt.erase(alt.begin() + static_cast<long>(at),
                  alt.begin() + static_cast<long>(at) + 2);
    }
    if (alt.empty()) throw DetectionError("no contour extrema found");

    ContourExtrema out;
    out.first_is_max = alt.front().is_max;
    for (const Found& f : alt)
        (f.is_max ? out.maxima : out.minima).push_back(f.p);
    if (out.maxima.empty()) throw DetectionError("no contour maxima found");
    return out;
}

// --- midline fitting ---

namespace detail {

inline bool point_in_triangle(double px, double py, const Point& a,
                              const Point& b, const Point& c) {
    auto cross = [](double ox, double oy, double ax2, double ay2, double bx2,
                    double by2) {
        return (ax2 - ox) * (by2 - oy) - (ay2 - oy) * (bx2 - ox);
    };
    const double d1 = cross(a.x, a.y, b.x, b.y, px, py);
    const double d2 = cross(b.x, b.y, c.x, c.y, px, py);
    const double d3 = cross(c.x, c.y, a.x, a.y, px, py);
    const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
    const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(has_neg && has_pos);
}

} // namespace detail

/// Fit one midline per contour tip: collect the foreground pixels inside
/// the triangle spanned by the tip and its two flanking valleys (an
/// image-border point substitutes where a finger has no outer valley) and
/// run a total-least-squares line through them.
inline std::vector<FingerRegion> fit_midlines(const BinaryMask& m,
                                              const ContourExtrema& ex) {
    if (ex.maxima.empty()) throw DetectionError("no finger tips to fit");
    std::vector<FingerRegion> out;
    const int offset = ex.first_is_max ? 0 : 1;
    for (size_t i = 0; i < ex.maxima.size(); ++i) {
        const Point tip = ex.maxima[i];
        const int li = static_cast<int>(i) - 1 + offset;
        const int ri = static_cast<int>(i) + offset;
        Point va, vb;
        bool have_a = li >= 0 && li < static_cast<int>(ex.minima.size());
        bool have_b = ri >= 0 && ri < static_cast<int>(ex.minima.size());
        if (have_a) va = ex.minima[static_cast<size_t>(li)];
        if (have_b) vb = ex.minima[static_cast<size_t>(ri)];
        // Substitute image-border points at the hand edges, at the height
        // of the known valley (or of the bottom border for a lone finger).
        // Contour order settles the side: a missing preceding valley means
        // the outermost finger on the trace's leading side, so the border
        // point goes before it; likewise after for a missing follower.
        const double fallback_y = have_a ? va.y : have_b ? vb.y : m.height - 1.0;
        if (!have_a) va = {0.0, fallback_y};
        if (!have_b) vb = {m.width - 1.0, fallback_y};

        // The triangle clips a tilted finger asymmetrically (one edge hugs
        // the capsule, the other opens wide), which biases a single fit.
        // Refit inside a symmetric strip around the fitted line to unwind
        // that bias. Along the axis the strip stops at the valleys'
        // projections, a cut perpendicular to the axis, so it stays off
        // the palm without shaving one side of a tilted finger.
        struct LineFit {
            double mx = 0.0, my = 0.0;
            Point dir{0.0, 1.0};
            double half_width = 0.0, t_lo = 0.0, t_hi = 0.0;
        };
        LineFit fit;
        for (int pass = 0; pass < 5; ++pass) {
            const LineFit prev = fit;
            auto member = [&](int x, int y) {
                if (pass == 0) return detail::point_in_triangle(x, y, va, tip, vb);
                const double t = (x - prev.mx) * prev.dir.x + (y - prev.my) * prev.dir.y;
                const double u = -(x - prev.mx) * prev.dir.y + (y - prev.my) * prev.dir.x;
                return std::fabs(u) <= prev.half_width && t >= prev.t_lo && t <= prev.t_hi;
            };
            double sx = 0.0, sy = 0.0, n = 0.0;
            for (int y = 0; y < m.height; ++y)
                for (int x = 0; x < m.width; ++x)
                    if (m.at(x, y) && member(x, y)) {
                        sx += x;
                        sy += y;
                        n += 1.0;
                    }
            if (n == 0.0) throw DetectionError("empty finger area");
            fit.mx = sx / n;
            fit.my = sy / n;
            double sxx = 0.0, sxy = 0.0, syy = 0.0;
            for (int y = 0; y < m.height; ++y)
                for (int x = 0; x < m.width; ++x)
                    if (m.at(x, y) && member(x, y)) {
                        sxx += (x - fit.mx) * (x - fit.mx);
                        sxy += (x - fit.mx) * (y - fit.my);
                        syy += (y - fit.my) * (y - fit.my);
                    }
            const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
            fit.dir = {std::cos(theta), std::sin(theta)};
            double var_u = (sxx * fit.dir.y * fit.dir.y -
                            2.0 * sxy * fit.dir.x * fit.dir.y +
                            syy * fit.dir.x * fit.dir.x) / n;
            // a uniform strip of half-width h has perpendicular variance h^2/3
            fit.half_width = std::sqrt(3.0 * std::max(0.0, var_u)) + 1.0;
            const double t_tip = (tip.x - fit.mx) * fit.dir.x + (tip.y - fit.my) * fit.dir.y;
            const double t_va = (va.x - fit.mx) * fit.dir.x + (va.y - fit.my) * fit.dir.y;
            const double t_vb = (vb.x - fit.mx) * fit.dir.x + (vb.y - fit.my) * fit.dir.y;
            if (t_tip <= std::min(t_va, t_vb)) {
                fit.t_lo = t_tip - 2.0;
                fit.t_hi = std::min(t_va, t_vb) + 1.0;
            } else {
                fit.t_lo = std::max(t_va, t_vb) - 1.0;
                fit.t_hi = t_tip + 2.0;
            }
        }
        const double mx = fit.mx, my = fit.my;
        Point dir = fit.dir;
        // orient tip to palm: the centroid sits palm-ward of the tip
        if (dir.x * (mx - tip.x) + dir.y * (my - tip.y) < 0.0) {
            dir.x = -dir.x;
            dir.y = -dir.y;
        }
        FingerRegion fr;
        fr.tip = tip;
        fr.valley_left = va;
        fr.valley_right = vb;
        fr.midline_point = {mx, my};
        fr.midline_dir = dir;
        fr.label = static_cast<int>(i) + 1;
        out.push_back(fr);
    }
    return out;
}

// --- joint proposal ---

struct ProposerConfig {
    double strip_halfwidth = 6.0; // px across the midline
    double min_prominence = 0.10; // intensity units
    double thumb_prominence = 0.05;
    bool thumb = false;
    int window_width = 64;
    int window_height = 64;
};

/// Intensity valleys along a finger midline. The mean profile over a strip
/// perpendicular to the midline is scanned tip to palm; local minima with
/// enough prominence become window proposals (up to three: DIP/PIP/MCP, or
/// two for a thumb: IP/MCP). Windows that would leave the image are
/// dropped. No qualifying valley yields an empty list.
inline std::vector<JointProposal> propose_joints(const GrayImage& img,
                                                 const FingerRegion& region,
                                                 const ProposerConfig& cfg = {}) {
    const Point d = region.midline_dir;
    const Point nrm{-d.y, d.x};
    std::vector<double> profile;
    for (int t = 0;; ++t) {
        const double cx = region.tip.x + t * d.x;
        const double cy = region.tip.y + t * d.y;
        if (cx < 0.0 || cy < 0.0 || cx > img.width - 1.0 || cy > img.height - 1.0)
            break;
        double sum = 0.0;
        int cnt = 0;
        const int hw = static_cast<int>(cfg.strip_halfwidth);
        for (int s = -hw; s <= hw; ++s) {
            const double px = cx + s * nrm.x;
            const double py = cy + s * nrm.y;
            if (px < 0.0 || py < 0.0 || px > img.width - 1.0 || py > img.height - 1.0)
                continue;
            sum += bilinear_sample(img, px, py);
            ++cnt;
        }
        if (cnt == 0) break;
        profile.push_back(sum / cnt);
    }

    // plateau-aware local minima with prominence
    struct Valley {
        double t;
        double prominence;
    };
    std::vector<Valley> valleys;
    size_t i = 1;
    while (i + 1 < profile.size()) {
        size_t j = i;
        while (j + 1 < profile.size() && profile[j + 1] == profile[i]) ++j;
        if (j + 1 >= profile.size()) break;
        if (profile[i - 1] > profile[i] && profile[j + 1] > profile[i]) {
            const double v = profile[i];
            double barrier_l = -1e300;
            for (size_t k = i; k-- > 0;) {
                if (profile[k] < v) break;
                barrier_l = std::max(barrier_l, profile[k]);
            }
            double barrier_r = -1e300;
            for (size_t k = j + 1; k < profile.size(); ++k) {
                if (profile[k] < v) break;
                barrier_r = std::max(barrier_r, profile[k]);
            }
            valleys.push_back({(i + j) / 2.0, std::min(barrier_l, barrier_r) - v});
        }
        i = j + 1;
    }

    const double need = cfg.thumb ? cfg.thumb_prominence : cfg.min_prominence;
    std::vector<Valley> picked;
    for (const Valley& v : valleys)
        if (v.prominence >= need) picked.push_back(v);
    std::sort(picked.begin(), picked.end(),
              [](const Valley& a, const Valley& b) { return a.prominence > b.prominence; });
    const size_t cap = cfg.thumb ? 2 : 3;
    if (picked.size() > cap) picked.resize(cap);
    std::sort(picked.begin(), picked.end(),
              [](const Valley& a, const Valley& b) { return a.t < b.t; });

    static const JointKind finger_kinds[3] = {JointKind::DIP, JointKind::PIP,
                                              JointKind::MCP};
    static const JointKind thumb_kinds[2] = {JointKind::IP, JointKind::MCP};
    std::vector<JointProposal> out;
    for (size_t k = 0; k < picked.size(); ++k) {
        JointProposal p;
        p.window.center_x = region.tip.x + picked[k].t * d.x;
        p.window.center_y = region.tip.y + picked[k].t * d.y;
        p.window.width = cfg.window_width;
        p.window.height = cfg.window_height;
        p.window.rotation = std::atan2(-d.x, d.y);
        p.kind = cfg.thumb ? thumb_kinds[std::min<size_t>(k, 1)]
                           : finger_kinds[std::min<size_t>(k, 2)];
        p.score = picked[k].prominence;
        // keep only windows that fit inside the image
        const double c = std::cos(p.window.rotation), s = std::sin(p.window.rotation);
        const double hw2 = (p.window.width - 1) / 2.0;
        const double hh2 = (p.window.height - 1) / 2.0;
        bool fits = true;
        for (int cyi = 0; cyi < 2 && fits; ++cyi)
            for (int cxi = 0; cxi < 2 && fits; ++cxi) {
                const double du = cxi ? hw2 : -hw2;
                const double dv = cyi ? hh2 : -hh2;
                const double qx = p.window.center_x + c * du - s * dv;
                const double qy = p.window.center_y + s * du + c * dv;
                fits = qx >= 0.0 && qy >= 0.0 && qx <= img.width - 1.0 &&
                       qy <= img.height - 1.0;
            }
        if (fits) out.push_back(p);
    }
    return out;
}

// --- scale handling ---

/// One-fifth box downsample; trailing rows/columns that do not fill a
/// 5x5 block are dropped. Pixel spacing grows accordingly.
inline GrayImage downscale_for_detection(const GrayImage& img) {
    if (img.width < 50 || img.height < 50)
        throw ParamError("image too small for detection downscale");
    GrayImage out = make_image(img.width / 5, img.height / 5, img.spacing_mm * 5.0);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            double sum = 0.0;
            for (int dy = 0; dy < 5; ++dy)
                for (int dx = 0; dx < 5; ++dx) sum += img.at(5 * x + dx, 5 * y + dy);
            out.at(x, y) = sum / 25.0;
        }
    }
    return out;
}

/// Center of small-scale pixel X on the full-resolution grid.
inline double upscale_coord(double x) { return 5.0 * x + 2.0; }

// --- pipeline composition ---

struct DetectionConfig {
    double epsilon_frac = 0.02; // polygonal approximation tolerance
    int smooth_radius = 2;      // disc radius at one-fifth scale
    int thumb_label = 0;        // 0 = no thumb specialization
    ProposerConfig proposer{};
};

struct DetectedHand {
    std::vector<FingerRegion> fingers; // full-resolution coordinates
    BinaryMask small_mask;             // smoothed one-fifth-scale mask
    double otsu_threshold = 0.0;
};

/// Binarize, reduce to one-fifth scale, smooth, and fit one midline per
/// finger. All returned geometry is in full-resolution pixels.
inline DetectedHand detect_fingers(const GrayImage& img,
                                   const DetectionConfig& cfg = {}) {
    OtsuResult otsu = otsu_binarize(img);
    GrayImage as_gray = make_image(img.width, img.height, img.spacing_mm);
    for (size_t i = 0; i < otsu.mask.values.size(); ++i)
        as_gray.samples[i] = otsu.mask.values[i];
    GrayImage small = downscale_for_detection(as_gray);
    BinaryMask small_mask = make_mask(small.width, small.height);
    for (size_t i = 0; i < small.samples.size(); ++i)
        small_mask.values[i] = small.samples[i] >= 0.5;
    small_mask = smooth_mask(small_mask, cfg.smooth_radius);

    ContourExtrema ex = contour_extrema(small_mask, cfg.epsilon_frac);
    std::vector<FingerRegion> fingers = fit_midlines(small_mask, ex);
    for (FingerRegion& f : fingers) {
        f.tip = {upscale_coord(f.tip.x), upscale_coord(f.tip.y)};
        f.valley_left = {upscale_coord(f.valley_left.x), upscale_coord(f.valley_left.y)};
        f.valley_right = {upscale_coord(f.valley_right.x), upscale_coord(f.valley_right.y)};
        f.midline_point = {upscale_coord(f.midline_point.x),
                           upscale_coord(f.midline_point.y)};
    }
    DetectedHand out;
    out.fingers = std::move(fingers);
    out.small_mask = std::move(small_mask);
    out.otsu_threshold = otsu.threshold;
    return out;
}

/// Full detection pass: midlines plus joint proposals per finger.
inline std::vector<std::pair<FingerRegion, std::vector<JointProposal>>>
detect_joints(const GrayImage& img, const DetectionConfig& cfg = {}) {
    DetectedHand hand = detect_fingers(img, cfg);
    std::vector<std::pair<FingerRegion, std::vector<JointProposal>>> out;
    for (const FingerRegion& f : hand.fingers) {
        ProposerConfig pc = cfg.proposer;
        pc.thumb = cfg.thumb_label != 0 && f.label == cfg.thumb_label;
        out.push_back({f, propose_joints(img, f, pc)});
    }
    return out;
}

} // namespace pipoc

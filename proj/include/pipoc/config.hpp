#pragma once

// Run configuration shared by the command-line tools: a flat key=value
// text format so configs diff cleanly and round-trip bit-exactly.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "pipoc/errors.hpp"

namespace pipoc {

struct RunConfig {
    int window_size = 128;    // joint window side, px
    double spacing_mm = 0.0;  // 0 = take spacing from the image sidecar
    int gully_i_min = 0;      // odd px; 0 = derive from spacing
    int gully_i_max = 0;
    int median_radius = 1;    // calibration pre-filter radius
    bool weighting = true;    // spectral low-pass weighting
    double weighting_sigma = 0.5;
    double peak_threshold = 0.1;
    int mask_margin_rows = 0; // erosion margin around the gap curve
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline std::string serialize_config(const RunConfig& c) {
    std::string s;
    s += "window_size = " + std::to_string(c.window_size) + "\n";
    s += "spacing_mm = " + detail::format_double(c.spacing_mm) + "\n";
    s += "gully_i_min = " + std::to_string(c.gully_i_min) + "\n";
    s += "gully_i_max = " + std::to_string(c.gully_i_max) + "\n";
    s += "median_radius = " + std::to_string(c.median_radius) + "\n";
    s += "weighting = " + std::string(c.weighting ? "true" : "false") + "\n";
    s += "weighting_sigma = " + detail::format_double(c.weighting_sigma) + "\n";
    s += "peak_threshold = " + detail::format_double(c.peak_threshold) + "\n";
    s += "mask_margin_rows = " + std::to_string(c.mask_margin_rows) + "\n";
    s += "seed = " + std::to_string(c.seed) + "\n";
    s += "out_dir = " + c.out_dir + "\n";
    return s;
}

inline void save_config(const RunConfig& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << serialize_config(c);
}

/// Parses "key = value" lines; '#' starts a comment, blank lines skipped.
/// Unknown keys are rejected so typos do not silently fall back to defaults.
inline RunConfig parse_config(std::istream& in, const std::string& origin) {
    RunConfig c;
    std::string line;
    int line_no = 0;
    auto fail = [&origin, &line_no](const std::string& what) {
        throw FormatError(origin + ":" + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) fail("expected key = value");

        auto as_int = [&](int& dst) {
            char* end = nullptr;
            long v = std::strtol(value.c_str(), &end, 10);
            if (end == value.c_str() || *end != '\0') fail("bad integer for " + key);
            dst = static_cast<int>(v);
        };
        auto as_double = [&](double& dst) {
            char* end = nullptr;
            double v = std::strtod(value.c_str(), &end);
            if (end == value.c_str() || *end != '\0') fail("bad number for " + key);
            dst = v;
        };
        if (key == "window_size") as_int(c.window_size);
        else if (key == "spacing_mm") as_double(c.spacing_mm);
        else if (key == "gully_i_min") as_int(c.gully_i_min);
        else if (key == "gully_i_max") as_int(c.gully_i_max);
        else if (key == "median_radius") as_int(c.median_radius);
        else if (key == "weighting") {
            if (value == "true" || value == "1") c.weighting = true;
            else if (value == "false" || value == "0") c.weighting = false;
            else fail("bad boolean for weighting");
        }
        else if (key == "weighting_sigma") as_double(c.weighting_sigma);
        else if (key == "peak_threshold") as_double(c.peak_threshold);
        else if (key == "mask_margin_rows") as_int(c.mask_margin_rows);
        else if (key == "seed") {
            char* end = nullptr;
            unsigned long long v = std::strtoull(value.c_str(), &end, 10);
            if (end == value.c_str() || *end != '\0') fail("bad integer for seed");
            c.seed = v;
        }
        else if (key == "out_dir") c.out_dir = value;
        else fail("unknown key " + key);
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return parse_config(in, path.string());
}

} // namespace pipoc

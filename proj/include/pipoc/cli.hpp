#pragma once

// Command-line front end: simulate (phantom sweeps), detect (joint
// proposals on a radiograph), quantify (pairwise narrowing CSV), and
// evaluate (accuracy metrics against a manifest). Header-level so the
// test suite can drive commands in-process.
//
// Exit codes: 0 success, 1 hard failure, 2 partial (some pairs flagged).

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pipoc/config.hpp"
#include "pipoc/detection.hpp"
#include "pipoc/image_io.hpp"
#include "pipoc/measure.hpp"
#include "pipoc/metrics.hpp"
#include "pipoc/phantom.hpp"

namespace pipoc {

namespace cli {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

/// Temp-and-rename so readers never observe a half-written file.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string id_of(const std::filesystem::path& p) { return p.stem().string(); }

inline QuantifyConfig quantify_config(const RunConfig& c) {
    QuantifyConfig q;
    q.mask_margin_rows = c.mask_margin_rows;
    q.gully_i_min = c.gully_i_min;
    q.gully_i_max = c.gully_i_max;
    q.median_radius = c.median_radius;
    q.pipoc.weighting.enabled = c.weighting;
    q.pipoc.weighting.sigma = c.weighting_sigma;
    q.pipoc.peak_threshold = c.peak_threshold;
    q.calibration.weighting = q.pipoc.weighting;
    q.calibration.peak_threshold = c.peak_threshold;
    return q;
}

inline const char* kResultsHeader =
    "baseline_id,followup_id,jsn_px,jsn_mm,beta_upper,beta_lower,"
    "peak_upper,peak_lower,calib_dx,calib_dy,mismatch";

struct ResultRow {
    std::string baseline_id;
    std::string followup_id;
    JsnMeasurement m;
    bool ok = true; // false: the pair failed outright and carries no values
};

inline std::string results_csv(const std::vector<ResultRow>& rows) {
    std::string s = kResultsHeader;
    s += "\n";
    for (const ResultRow& r : rows) {
        const bool flagged = !r.ok || r.m.mismatch;
        s += r.baseline_id + "," + r.followup_id + "," + fmt(r.m.jsn_px) + "," +
             fmt(r.m.jsn_mm) + "," + fmt(r.m.upper.beta) + "," + fmt(r.m.lower.beta) +
             "," + fmt(r.m.upper.peak) + "," + fmt(r.m.lower.peak) + "," +
             std::to_string(r.m.calib_dx) + "," + std::to_string(r.m.calib_dy) + "," +
             (flagged ? "1" : "0") + "\n";
    }
    return s;
}

struct ParsedRow {
    std::string baseline_id;
    std::string followup_id;
    double jsn_mm = 0.0;
    bool mismatch = false;
};

inline std::vector<ParsedRow> parse_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty results file " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kResultsHeader)
        throw FormatError("unexpected results header in " + path.string());
    std::vector<ParsedRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        size_t start = 0;
        while (true) {
            size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() != 11)
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": expected 11 columns");
        ParsedRow r;
        r.baseline_id = cells[0];
        r.followup_id = cells[1];
        r.jsn_mm = std::strtod(cells[3].c_str(), nullptr);
        r.mismatch = cells[10] != "0";
        rows.push_back(std::move(r));
    }
    return rows;
}

inline GrayImage mask_to_gray(const BinaryMask& m, double spacing_mm) {
    GrayImage g = make_image(m.width, m.height, spacing_mm);
    for (size_t i = 0; i < m.values.size(); ++i) g.samples[i] = m.values[i] ? 1.0 : 0.0;
    return g;
}

// --- simulate ---

struct SimulateArgs {
    std::string preset;
    std::string noise = "none";
    RunConfig cfg;
};

inline int cmd_simulate(const SimulateArgs& a) {
    PhantomSpec spec;
    if (a.cfg.spacing_mm > 0.0) spec.spacing_mm = a.cfg.spacing_mm;
    spec.canvas_width = a.cfg.window_size;
    spec.canvas_height = a.cfg.window_size;
    spec.seed = a.cfg.seed;
    if (a.preset == "sweep-coarse") {
        for (int i = 0; i <= 10; ++i) spec.jsw_sequence.push_back(1.20 + 0.10 * i);
    } else if (a.preset == "sweep-fine") {
        for (int i = 0; i <= 10; ++i) spec.jsw_sequence.push_back(1.65 + 0.01 * i);
    } else {
        throw ParamError("unknown preset " + a.preset);
    }
    if (a.noise == "air") spec.noise_sigma = noise_sigma_air();
    else if (a.noise == "water") spec.noise_sigma = noise_sigma_water();
    else if (a.noise == "none") spec.noise_sigma = 0.0;
    else throw ParamError("unknown noise preset " + a.noise);

    render_sweep(spec, a.cfg.out_dir);
    std::cout << (std::filesystem::path(a.cfg.out_dir) / "manifest.json").string()
              << "\n";
    return 0;
}

// --- detect ---

struct DetectArgs {
    std::string input;
    bool dump_debug = false;
    bool to_stdout = false; // print JSON even when an output dir is set
    int window_size = 0;    // 0 keeps the proposer default
    RunConfig cfg;
    bool have_out = false;
};

inline int cmd_detect(const DetectArgs& a) {
    GrayImage img = load_image(a.input, a.cfg.spacing_mm);

    DetectionConfig dc;
    if (a.window_size > 0) {
        dc.proposer.window_width = a.window_size;
        dc.proposer.window_height = a.window_size;
    }

    std::vector<std::pair<FingerRegion, std::vector<JointProposal>>> joints;
    try {
        joints = detect_joints(img, dc);
    } catch (const ConstantImageError& e) {
        throw DetectionError(std::string("binarization failed: ") + e.what());
    } catch (const DetectionError& e) {
        throw DetectionError(std::string("detection failed: ") + e.what());
    }

    nlohmann::json out = nlohmann::json::array();
    for (const auto& [finger, proposals] : joints) {
        for (const JointProposal& p : proposals) {
            out.push_back({{"finger", finger.label},
                           {"joint_kind", joint_kind_name(p.kind)},
                           {"center", {p.window.center_x, p.window.center_y}},
                           {"size", {p.window.width, p.window.height}},
                           {"rotation", p.window.rotation},
                           {"score", p.score}});
        }
    }
    const std::string text = out.dump(2) + "\n";
    if (a.have_out) {
        const std::filesystem::path dir(a.cfg.out_dir);
        write_file_atomic(dir / "proposals.json", text);
        std::cout << (dir / "proposals.json").string() << "\n";
        if (a.to_stdout) std::cout << text;
    } else {
        std::cout << text;
    }

    if (a.dump_debug) {
        const std::filesystem::path dir(a.cfg.out_dir);
        std::filesystem::create_directories(dir);
        DetectedHand hand = detect_fingers(img, dc);
        OtsuResult otsu = otsu_binarize(img);
        save_pgm16(mask_to_gray(otsu.mask, img.spacing_mm), dir / "mask_full.pgm",
                   false);
        save_pgm16(mask_to_gray(hand.small_mask, img.spacing_mm * 5.0),
                   dir / "mask_small.pgm", false);
        auto contour = detail::trace_contour(hand.small_mask);
        GrayImage cimg =
            make_image(hand.small_mask.width, hand.small_mask.height, 1.0, 0.0);
        std::string depth_csv = "x,y,height_above_bottom\n";
        for (const auto& [x, y] : contour) {
            cimg.at(x, y) = 1.0;
            depth_csv += std::to_string(x) + "," + std::to_string(y) + "," +
                         std::to_string(hand.small_mask.height - 1 - y) + "\n";
        }
        save_pgm16(cimg, dir / "contour.pgm", false);
        write_file_atomic(dir / "contour_depth.csv", depth_csv);
    }
    return 0;
}

// --- quantify ---

struct QuantifyArgs {
    std::vector<std::string> inputs;
    std::string series_dir;
    std::string masks = "from-baseline";
    RunConfig cfg;
    bool have_out = false;
};

inline int cmd_quantify(const QuantifyArgs& a) {
    std::vector<std::string> ids;
    std::vector<GrayImage> windows;
    if (!a.series_dir.empty()) {
        const std::filesystem::path dir(a.series_dir);
        const std::filesystem::path manifest = dir / "manifest.json";
        if (std::filesystem::exists(manifest)) {
            PhantomManifest m = load_manifest(manifest);
            for (const auto& e : m.images) {
                ids.push_back(id_of(e.file));
                windows.push_back(load_image(dir / e.file, a.cfg.spacing_mm));
            }
        } else {
            std::vector<std::filesystem::path> files;
            for (const auto& entry : std::filesystem::directory_iterator(dir)) {
                const std::string ext = entry.path().extension().string();
                if (ext == ".pgm" || ext == ".png") files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                ids.push_back(id_of(f));
                windows.push_back(load_image(f, a.cfg.spacing_mm));
            }
        }
    } else {
        for (const std::string& f : a.inputs) {
            ids.push_back(id_of(f));
            windows.push_back(load_image(f, a.cfg.spacing_mm));
        }
    }
    if (windows.size() < 2) throw ParamError("need at least two window images");

    const QuantifyConfig qc = quantify_config(a.cfg);
    std::vector<ResultRow> rows;
    if (a.masks == "from-baseline") {
        JsnSeries s = jsn_series(windows, qc);
        for (int f = 0; f < s.n; ++f)
            for (int g = f + 1; g < s.n; ++g) {
                ResultRow r;
                r.baseline_id = ids[static_cast<size_t>(f)];
                r.followup_id = ids[static_cast<size_t>(g)];
                r.ok = s.pair_ok(f, g);
                if (r.ok) r.m = s.at(f, g);
                rows.push_back(std::move(r));
            }
    } else if (a.masks == "per-pair") {
        const int n = static_cast<int>(windows.size());
        for (int f = 0; f < n; ++f)
            for (int g = f + 1; g < n; ++g) {
                ResultRow r;
                r.baseline_id = ids[static_cast<size_t>(f)];
                r.followup_id = ids[static_cast<size_t>(g)];
                try {
                    r.m = quantify_jsn(windows[static_cast<size_t>(f)],
                                       windows[static_cast<size_t>(g)], qc);
                } catch (const Error& e) {
                    r.ok = false;
                    std::fprintf(stderr, "pair %s/%s failed: %s\n",
                                 r.baseline_id.c_str(), r.followup_id.c_str(), e.what());
                }
                rows.push_back(std::move(r));
            }
    } else {
        throw ParamError("unknown masks mode " + a.masks);
    }

    const std::string csv = results_csv(rows);
    if (a.have_out) {
        const std::filesystem::path out = std::filesystem::path(a.cfg.out_dir) /
                                          "results.csv";
        write_file_atomic(out, csv);
        std::cout << out.string() << "\n";
    } else {
        std::cout << csv;
    }
    for (const ResultRow& r : rows)
        if (!r.ok || r.m.mismatch) return 2;
    return 0;
}

// --- evaluate ---

struct EvaluateArgs {
    std::string results;
    std::string manifest;
    std::string scatter; // optional per-pair (sigma, |error|) CSV
    RunConfig cfg;
    bool have_out = false;
};

inline int cmd_evaluate(const EvaluateArgs& a) {
    PhantomManifest manifest = load_manifest(a.manifest);
    const int n = static_cast<int>(manifest.images.size());
    if (n < 2) throw ParamError("manifest lists fewer than two images");

    std::map<std::string, int> index;
    std::vector<double> jsw;
    for (int i = 0; i < n; ++i) {
        index[id_of(manifest.images[static_cast<size_t>(i)].file)] = i;
        jsw.push_back(manifest.images[static_cast<size_t>(i)].jsw_mm);
    }

    const size_t pair_count = static_cast<size_t>(n) * (n - 1) / 2;
    std::vector<double> direct(pair_count, 0.0);
    std::vector<std::uint8_t> usable(pair_count, 0);
    SeriesResult probe; // borrow the triangular indexer
    probe.n = n;
    for (const ParsedRow& row : parse_results_csv(a.results)) {
        auto fi = index.find(row.baseline_id);
        auto gi = index.find(row.followup_id);
        if (fi == index.end() || gi == index.end())
            throw ParamError("results row names an image absent from the manifest: " +
                             row.baseline_id + "/" + row.followup_id);
        int f = fi->second, g = gi->second;
        double value = row.jsn_mm;
        if (f > g) {
            std::swap(f, g);
            value = -value;
        } else if (f == g) {
            throw ParamError("results row pairs an image with itself: " +
                             row.baseline_id);
        }
        const size_t i = probe.index(f, g);
        direct[i] = value;
        usable[i] = row.mismatch ? 0 : 1;
    }

    SeriesResult r = make_series_result(n, std::move(direct), std::move(usable));
    attach_truth(r, jsw);

    nlohmann::json out;
    out["n_pairs"] = pair_count;
    out["mismatch_ratio"] = excluded_ratio(r);
    out["E_mm"] = mean_error(r);
    out["RMSD_mm"] = rmsd(r);

    std::vector<double> sigmas, errors;
    for (int f = 0; f < n; ++f)
        for (int g = f + 1; g < n; ++g) {
            if (!r.pair_usable(f, g)) continue;
            if (n < 3) continue;
            try {
                const double sigma = indirect_mean_and_sigma(r, f, g).second;
                sigmas.push_back(sigma);
                errors.push_back(std::fabs(r.direct[r.index(f, g)] -
                                           r.truth[r.index(f, g)]));
            } catch (const Error&) {
                // pair has no usable intermediates; skip it
            }
        }
    if (sigmas.empty()) {
        out["sigma_mean_mm"] = nullptr;
    } else {
        double sum = 0.0;
        for (double s : sigmas) sum += s;
        out["sigma_mean_mm"] = sum / static_cast<double>(sigmas.size());
    }
    try {
        out["pearson_sigma_vs_E"] = pearson(sigmas, errors);
    } catch (const Error&) {
        out["pearson_sigma_vs_E"] = nullptr;
    }

    if (!a.scatter.empty()) {
        std::string csv = "sigma_mm,abs_error_mm\n";
        for (size_t i = 0; i < sigmas.size(); ++i)
            csv += fmt(sigmas[i]) + "," + fmt(errors[i]) + "\n";
        write_file_atomic(a.scatter, csv);
    }

    const std::string text = out.dump(2) + "\n";
    if (a.have_out) {
        const std::filesystem::path path =
            std::filesystem::path(a.cfg.out_dir) / "metrics.json";
        write_file_atomic(path, text);
        std::cout << path.string() << "\n";
    } else {
        std::cout << text;
    }
    return 0;
}

} // namespace cli

/// Parses and dispatches one command line (program name excluded).
inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"sub-pixel joint space narrowing measurement"};
    app.require_subcommand(1);

    // shared config plumbing: --config loads a file, explicit flags win
    struct Shared {
        std::string config_path;
        std::string out_dir;
        double spacing = 0.0;
        std::uint64_t seed = 0;
        int window_size = 0;
        CLI::App* sub = nullptr;
    };
    auto add_shared = [](CLI::App* sub, Shared& s) {
        s.sub = sub;
        sub->add_option("--config", s.config_path, "key=value config file");
        sub->add_option("--out", s.out_dir, "output directory");
        sub->add_option("--spacing", s.spacing, "pixel spacing override, mm/px");
        sub->add_option("--seed", s.seed, "RNG seed");
        sub->add_option("--window-size", s.window_size, "window side, px");
    };
    auto resolve = [](const Shared& s) {
        RunConfig cfg;
        if (!s.config_path.empty()) cfg = load_config(s.config_path);
        if (s.sub->count("--out")) cfg.out_dir = s.out_dir;
        if (s.sub->count("--spacing")) cfg.spacing_mm = s.spacing;
        if (s.sub->count("--seed")) cfg.seed = s.seed;
        if (s.sub->count("--window-size")) cfg.window_size = s.window_size;
        return cfg;
    };

    CLI::App* sim = app.add_subcommand("simulate", "render a phantom sweep");
    Shared sim_shared;
    std::string sim_preset, sim_noise = "none";
    sim->add_option("--preset", sim_preset, "sweep-coarse or sweep-fine")->required();
    sim->add_option("--noise", sim_noise, "air, water, or none");
    add_shared(sim, sim_shared);

    CLI::App* det = app.add_subcommand("detect", "propose joint windows on a radiograph");
    Shared det_shared;
    std::string det_input;
    bool det_debug = false, det_stdout = false;
    det->add_option("--input", det_input, "radiograph image")->required();
    det->add_flag("--dump-debug", det_debug, "write mask/contour artifacts");
    det->add_flag("--stdout", det_stdout, "print JSON even when --out is set");
    add_shared(det, det_shared);

    CLI::App* qua = app.add_subcommand("quantify", "pairwise narrowing of a window series");
    Shared qua_shared;
    std::vector<std::string> qua_inputs;
    std::string qua_dir, qua_masks = "from-baseline";
    qua->add_option("--inputs", qua_inputs, "window images (two or more)");
    qua->add_option("--dir", qua_dir, "series directory (manifest.json honored)");
    qua->add_option("--masks", qua_masks, "from-baseline or per-pair");
    add_shared(qua, qua_shared);

    CLI::App* eva = app.add_subcommand("evaluate", "compare results against a manifest");
    Shared eva_shared;
    std::string eva_results, eva_manifest, eva_scatter;
    eva->add_option("--results", eva_results, "results CSV from quantify")->required();
    eva->add_option("--manifest", eva_manifest, "phantom manifest JSON")->required();
    eva->add_option("--scatter", eva_scatter, "write per-pair (sigma, error) CSV here");
    add_shared(eva, eva_shared);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(sim)) {
            cli::SimulateArgs a;
            a.preset = sim_preset;
            a.noise = sim_noise;
            a.cfg = resolve(sim_shared);
            return cli::cmd_simulate(a);
        }
        if (app.got_subcommand(det)) {
            cli::DetectArgs a;
            a.input = det_input;
            a.dump_debug = det_debug;
            a.to_stdout = det_stdout;
            a.cfg = resolve(det_shared);
            a.window_size = det_shared.sub->count("--window-size")
                                ? det_shared.window_size
                                : 0;
            a.have_out = det_shared.sub->count("--out") > 0;
            return cli::cmd_detect(a);
        }
        if (app.got_subcommand(qua)) {
            cli::QuantifyArgs a;
            a.inputs = qua_inputs;
            a.series_dir = qua_dir;
            a.masks = qua_masks;
            a.cfg = resolve(qua_shared);
            a.have_out = qua_shared.sub->count("--out") > 0;
            if (!a.series_dir.empty() && !a.inputs.empty())
                throw ParamError("give either --inputs or --dir, not both");
            return cli::cmd_quantify(a);
        }
        if (app.got_subcommand(eva)) {
            cli::EvaluateArgs a;
            a.results = eva_results;
            a.manifest = eva_manifest;
            a.scatter = eva_scatter;
            a.cfg = resolve(eva_shared);
            a.have_out = eva_shared.sub->count("--out") > 0;
            return cli::cmd_evaluate(a);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}

} // namespace pipoc

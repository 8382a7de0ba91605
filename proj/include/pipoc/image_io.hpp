#pragma once

#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>
#include <json.hpp>

#include "pipoc/image.hpp"

namespace pipoc {

namespace detail {

inline int pgm_next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok.empty() ? EOF : 0;
}

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadGuard() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteGuard() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

} // namespace detail

/// Sidecar path for per-image metadata: image.pgm -> image.pgm.json
inline std::filesystem::path sidecar_path(const std::filesystem::path& image_path) {
    std::filesystem::path p = image_path;
    p += ".json";
    return p;
}

inline void save_spacing_sidecar(const std::filesystem::path& image_path, double spacing_mm) {
    nlohmann::json j;
    j["spacing_mm"] = spacing_mm;
    std::ofstream out(sidecar_path(image_path));
    if (!out)
        throw IoError("cannot write sidecar: " + sidecar_path(image_path).string());
    out << j.dump(2) << "\n";
}

/// Reads spacing_mm from the sidecar, or 0 when absent/invalid.
inline double read_spacing_sidecar(const std::filesystem::path& image_path) {
    std::ifstream in(sidecar_path(image_path));
    if (!in) return 0.0;
    try {
        nlohmann::json j;
        in >> j;
        if (j.contains("spacing_mm") && j["spacing_mm"].is_number())
            return j["spacing_mm"].get<double>();
    } catch (const nlohmann::json::exception&) {
        return 0.0;
    }
    return 0.0;
}

/// Binary PGM (P5), maxval up to 65535, 16-bit samples big-endian.
inline GrayImage load_pgm(const std::filesystem::path& path, double spacing_mm) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::string tok;
    if (detail::pgm_next_token(in, tok) == EOF || tok != "P5")
        throw FormatError("not a binary PGM: " + path.string());
    long vals[3];
    for (long& v : vals) {
        if (detail::pgm_next_token(in, tok) == EOF)
            throw FormatError("truncated PGM header: " + path.string());
        try {
            v = std::stol(tok);
        } catch (const std::exception&) {
            throw FormatError("bad PGM header token: " + path.string());
        }
    }
    long w = vals[0], h = vals[1], maxval = vals[2];
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw FormatError("bad PGM dimensions: " + path.string());
    GrayImage img = make_image(static_cast<int>(w), static_cast<int>(h), spacing_mm);
    const size_t count = static_cast<size_t>(w) * h;
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(count * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        throw FormatError("truncated PGM data: " + path.string());
    const double maxv = static_cast<double>(maxval);
    for (size_t i = 0; i < count; ++i) {
        unsigned v = bytes == 2 ? (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
        img.samples[i] = v / maxv;
    }
    return img;
}

/// Writes 16-bit binary PGM plus a spacing sidecar.
inline void save_pgm16(const GrayImage& img, const std::filesystem::path& path, bool with_sidecar = true) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<unsigned char> raw(img.samples.size() * 2);
    for (size_t i = 0; i < img.samples.size(); ++i) {
        double v = std::clamp(img.samples[i], 0.0, 1.0);
        unsigned q = static_cast<unsigned>(std::lround(v * 65535.0));
        raw[2 * i] = static_cast<unsigned char>(q >> 8);
        raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out)
        throw IoError("short write: " + path.string());
    out.close();
    if (with_sidecar) save_spacing_sidecar(path, img.spacing_mm);
}

inline GrayImage load_png(const std::filesystem::path& path, double spacing_mm) {
    detail::PngReadGuard g;
    g.fp = std::fopen(path.string().c_str(), "rb");
    if (!g.fp)
        throw IoError("cannot open " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, g.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw FormatError("not a PNG: " + path.string());
    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!g.png)
        throw IoError("libpng init failed");
    g.info = png_create_info_struct(g.png);
    if (!g.info)
        throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(g.png)))
        throw FormatError("corrupt PNG: " + path.string());
    png_init_io(g.png, g.fp);
    png_set_sig_bytes(g.png, 8);
    png_read_info(g.png, g.info);
    png_uint_32 w = png_get_image_width(g.png, g.info);
    png_uint_32 h = png_get_image_height(g.png, g.info);
    int depth = png_get_bit_depth(g.png, g.info);
    int color = png_get_color_type(g.png, g.info);
    if (color != PNG_COLOR_TYPE_GRAY)
        throw FormatError("not single-channel grayscale: " + path.string());
    if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(g.png);
        depth = 8;
    }
    png_read_update_info(g.png, g.info);
    size_t rowbytes = png_get_rowbytes(g.png, g.info);
    std::vector<unsigned char> data(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + y * rowbytes;
    png_read_image(g.png, rows.data());
    png_read_end(g.png, nullptr);

    GrayImage img = make_image(static_cast<int>(w), static_cast<int>(h), spacing_mm);
    const double maxv = depth == 16 ? 65535.0 : 255.0;
    for (png_uint_32 y = 0; y < h; ++y) {
        const unsigned char* row = rows[y];
        for (png_uint_32 x = 0; x < w; ++x) {
            unsigned v = depth == 16 ? (static_cast<unsigned>(row[2 * x]) << 8) | row[2 * x + 1]
                                     : row[x];
            img.at(static_cast<int>(x), static_cast<int>(y)) = v / maxv;
        }
    }
    return img;
}

/// Writes 8- or 16-bit grayscale PNG plus a spacing sidecar.
inline void save_png(const GrayImage& img, const std::filesystem::path& path, int bit_depth = 16,
                     bool with_sidecar = true) {
    if (bit_depth != 8 && bit_depth != 16)
        throw ParamError("PNG bit depth must be 8 or 16");
    detail::PngWriteGuard g;
    g.fp = std::fopen(path.string().c_str(), "wb");
    if (!g.fp)
        throw IoError("cannot write " + path.string());
    g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!g.png)
        throw IoError("libpng init failed");
    g.info = png_create_info_struct(g.png);
    if (!g.info)
        throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(g.png)))
        throw IoError("PNG write failed: " + path.string());
    png_init_io(g.png, g.fp);
    png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), bit_depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(g.png, g.info);
    const int bytes = bit_depth / 8;
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * bytes);
    const double maxq = bit_depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double v = std::clamp(img.at(x, y), 0.0, 1.0);
            unsigned q = static_cast<unsigned>(std::lround(v * maxq));
            if (bytes == 2) {
                row[2 * x] = static_cast<unsigned char>(q >> 8);
                row[2 * x + 1] = static_cast<unsigned char>(q & 0xff);
            } else {
                row[x] = static_cast<unsigned char>(q);
            }
        }
        png_write_row(g.png, row.data());
    }
    png_write_end(g.png, nullptr);
    if (with_sidecar) save_spacing_sidecar(path, img.spacing_mm);
}

/// Loads PNG or PGM by extension. Spacing comes from the override when positive,
/// otherwise from the sidecar; no spacing at all is a distinct error.
inline GrayImage load_image(const std::filesystem::path& path, double spacing_override = 0.0) {
    double spacing = spacing_override;
    if (spacing <= 0.0) spacing = read_spacing_sidecar(path);
    if (spacing <= 0.0)
        throw MissingSpacingError("no pixel spacing for " + path.string() +
                                  " (no sidecar, no override)");
    std::string ext = path.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return load_png(path, spacing);
    if (ext == ".pgm") return load_pgm(path, spacing);
    throw FormatError("unsupported image format: " + path.string());
}

} // namespace pipoc

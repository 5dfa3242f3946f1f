// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"
#include "undistort/facemodel.hpp"
#include "undistort/geometry.hpp"
#include "undistort/image.hpp"
#include "undistort/landmarks.hpp"
#include "undistort/metrics.hpp"
#include "undistort/solver.hpp"
#include "undistort/synth.hpp"

#include "json.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace undistort::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

// ---------------------------------------------------------------- files

inline std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a temporary sibling and renames it over the target.
inline void write_file_atomic(const fs::path& path, std::string_view bytes)
{
    const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(dir, ec);
    const fs::path tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::io_error, "cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error(ErrorCode::io_error, "write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorCode::io_error, "cannot rename onto " + path.string() + ": " + ec.message());
    }
}

inline std::string lower_extension(const fs::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

inline json parse_json(std::string_view text, const std::string& what)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw parse_error(what + ": " + e.what(), e.byte > 0 ? e.byte - 1 : 0);
    }
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------- PNG

namespace detail {

inline std::uint32_t be32(const unsigned char* p)
{
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}

/// Walks the chunk structure and checks every CRC, so damage is reported with its byte offset.
inline void check_png_structure(std::string_view bytes)
{
    static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0) {
        throw parse_error("not a PNG file (bad signature)", 0);
    }
    std::size_t pos = 8;
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
    while (true) {
        if (pos + 8 > bytes.size()) {
            throw parse_error("truncated PNG: chunk header missing", pos);
        }
        const std::uint32_t len = be32(data + pos);
        if (len > 0x7fffffffu) {
            throw parse_error("PNG chunk length out of range", pos);
        }
        if (pos + 12 + static_cast<std::size_t>(len) > bytes.size()) {
            throw parse_error("truncated PNG: chunk extends past end of file", pos);
        }
        const std::uint32_t crc = be32(data + pos + 8 + len);
        const auto computed = static_cast<std::uint32_t>(::crc32(0L, data + pos + 4, len + 4));
        if (crc != computed) {
            throw parse_error("PNG chunk CRC mismatch", pos);
        }
        const bool iend = std::memcmp(data + pos + 4, "IEND", 4) == 0;
        pos += 12 + static_cast<std::size_t>(len);
        if (iend) {
            return;
        }
    }
}

struct PngRaw
{
    int width = 0;
    int height = 0;
    int channels = 0;  ///< after expansion: 1 (gray) or 3 (rgb)
    int bit_depth = 8; ///< 8 or 16
    std::vector<std::uint16_t> samples;
};

struct PngReadSource
{
    std::string_view bytes;
    std::size_t pos = 0;
};

inline void png_read_mem(png_structp png, png_bytep out, png_size_t n)
{
    auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
    if (src->pos + n > src->bytes.size()) {
        png_error(png, "read past end of data");
    }
    std::memcpy(out, src->bytes.data() + src->pos, n);
    src->pos += n;
}

inline void png_write_mem(png_structp png, png_bytep in, png_size_t n)
{
    auto* dst = static_cast<std::string*>(png_get_io_ptr(png));
    dst->append(reinterpret_cast<const char*>(in), n);
}

inline void png_flush_mem(png_structp) {}

/// keep_gray leaves single-channel images single-channel; otherwise everything becomes RGB.
inline PngRaw decode_png(std::string_view bytes, bool keep_gray)
{
    check_png_structure(bytes);
    PngRaw raw;
    PngReadSource src{bytes, 0};
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw Error(ErrorCode::io_error, "libpng initialisation failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        const std::size_t at = src.pos;
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        throw parse_error("corrupt PNG data", at);
    }
    png_set_read_fn(png, &src, png_read_mem);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    png_set_expand(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_strip_alpha(png);
    }
    const bool gray = (color & PNG_COLOR_MASK_COLOR) == 0;
    if (gray && !keep_gray) {
        png_set_gray_to_rgb(png);
    }
    if (png_get_bit_depth(png, info) == 16) {
        png_set_swap(png);
    }
    png_read_update_info(png, info);
    raw.width = static_cast<int>(png_get_image_width(png, info));
    raw.height = static_cast<int>(png_get_image_height(png, info));
    raw.channels = png_get_channels(png, info);
    raw.bit_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * static_cast<std::size_t>(raw.height));
    rows.resize(static_cast<std::size_t>(raw.height));
    for (int y = 0; y < raw.height; ++y) {
        rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height * raw.channels;
    raw.samples.resize(n);
    if (raw.bit_depth == 16) {
        std::memcpy(raw.samples.data(), buffer.data(), n * 2);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            raw.samples[i] = buffer[i];
        }
    }
    return raw;
}

inline std::string encode_png(int width, int height, int channels, int bit_depth, const std::vector<std::uint16_t>& samples)
{
    std::string out;
    std::vector<unsigned char> buffer;
    std::vector<png_bytep> rows;
    const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
    buffer.resize(stride * static_cast<std::size_t>(height));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (bit_depth == 16) {
            buffer[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
            buffer[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
        } else {
            buffer[i] = static_cast<unsigned char>(samples[i]);
        }
    }
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw Error(ErrorCode::io_error, "libpng initialisation failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        throw Error(ErrorCode::io_error, "PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_write_mem, png_flush_mem);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline std::uint16_t to_u8(float v)
{
    const float c = std::clamp(std::round(v), 0.0f, 255.0f);
    return static_cast<std::uint16_t>(c);
}

} // namespace detail

inline Image decode_png_image(std::string_view bytes)
{
    const auto raw = detail::decode_png(bytes, false);
    Image img = Image::create(raw.width, raw.height, PixelFormat::u8);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = raw.bit_depth == 16 ? static_cast<float>(std::round(raw.samples[i] / 257.0)) : raw.samples[i];
    }
    return img;
}

/// 8-bit RGB; float images are scaled from [0, 1].
inline std::string encode_png_image(const Image& img)
{
    std::vector<std::uint16_t> s(img.data.size());
    const float k = img.format == PixelFormat::f32 ? 255.0f : 1.0f;
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = detail::to_u8(img.data[i] * k);
    }
    return detail::encode_png(img.width, img.height, 3, 8, s);
}

// ---------------------------------------------------------------- PPM

namespace detail {

struct HeaderReader
{
    std::string_view bytes;
    std::size_t pos = 0;

    void skip_space()
    {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    }

    std::string token()
    {
        skip_space();
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        }
        if (start == pos) {
            throw parse_error("unexpected end of header", pos);
        }
        return std::string(bytes.substr(start, pos - start));
    }

    long integer()
    {
        const std::size_t at = pos;
        const std::string t = token();
        long v = 0;
        const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
            throw parse_error("expected an integer in header", at);
        }
        return v;
    }

    /// Consumes the single whitespace byte that ends a binary header.
    void end_header()
    {
        if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            throw parse_error("header must end with a single whitespace byte", pos);
        }
        ++pos;
    }
};

} // namespace detail

inline Image decode_ppm(std::string_view bytes)
{
    detail::HeaderReader r{bytes};
    if (r.token() != "P6") {
        throw parse_error("not a binary PPM (expected P6)", 0);
    }
    const long w = r.integer();
    const long h = r.integer();
    const std::size_t maxval_at = r.pos;
    const long maxval = r.integer();
    if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) {
        throw parse_error("PPM dimensions out of range", 2);
    }
    if (maxval != 255) {
        throw parse_error("only 8-bit PPM (maxval 255) is supported", maxval_at);
    }
    r.end_header();
    const std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (r.pos + need > bytes.size()) {
        throw parse_error("truncated PPM pixel data", bytes.size());
    }
    Image img = Image::create(static_cast<int>(w), static_cast<int>(h), PixelFormat::u8);
    for (std::size_t i = 0; i < need; ++i) {
        img.data[i] = static_cast<unsigned char>(bytes[r.pos + i]);
    }
    return img;
}

inline std::string encode_ppm(const Image& img)
{
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    const float k = img.format == PixelFormat::f32 ? 255.0f : 1.0f;
    for (float v : img.data) {
        out.push_back(static_cast<char>(detail::to_u8(v * k)));
    }
    return out;
}

// ---------------------------------------------------------------- PFM

struct Pfm
{
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> values; ///< top row first
};

inline Pfm decode_pfm(std::string_view bytes)
{
    detail::HeaderReader r{bytes};
    const std::string magic = r.token();
    if (magic != "PF" && magic != "Pf") {
        throw parse_error("not a PFM file (expected PF or Pf)", 0);
    }
    Pfm p;
    p.channels = magic == "PF" ? 3 : 1;
    const long w = r.integer();
    const long h = r.integer();
    if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) {
        throw parse_error("PFM dimensions out of range", 2);
    }
    const std::size_t scale_at = r.pos;
    const std::string scale_text = r.token();
    double scale = 0.0;
    const auto res = std::from_chars(scale_text.data(), scale_text.data() + scale_text.size(), scale);
    if (res.ec != std::errc{} || res.ptr != scale_text.data() + scale_text.size() || scale == 0.0) {
        throw parse_error("invalid PFM scale", scale_at);
    }
    r.end_header();
    p.width = static_cast<int>(w);
    p.height = static_cast<int>(h);
    const std::size_t count = static_cast<std::size_t>(w) * h * p.channels;
    if (r.pos + count * 4 > bytes.size()) {
        throw parse_error("truncated PFM data", bytes.size());
    }
    p.values.resize(count);
    const std::size_t row = static_cast<std::size_t>(w) * p.channels;
    for (long y = 0; y < h; ++y) {
        // Rows are stored bottom to top.
        const std::size_t src = r.pos + static_cast<std::size_t>(h - 1 - y) * row * 4;
        for (std::size_t i = 0; i < row; ++i) {
            std::uint32_t bits = 0;
            std::memcpy(&bits, bytes.data() + src + i * 4, 4);
            if (scale > 0.0) {
                bits = __builtin_bswap32(bits);
            }
            p.values[static_cast<std::size_t>(y) * row + i] = std::bit_cast<float>(bits);
        }
    }
    return p;
}

/// Little-endian (negative scale), rows bottom to top.
inline std::string encode_pfm(const Pfm& p)
{
    std::string out = std::string(p.channels == 3 ? "PF" : "Pf") + "\n" + std::to_string(p.width) + " " +
                      std::to_string(p.height) + "\n-1.0\n";
    const std::size_t row = static_cast<std::size_t>(p.width) * p.channels;
    const std::size_t header = out.size();
    out.resize(header + p.values.size() * 4);
    for (int y = 0; y < p.height; ++y) {
        const std::size_t dst = header + static_cast<std::size_t>(p.height - 1 - y) * row * 4;
        std::memcpy(out.data() + dst, p.values.data() + static_cast<std::size_t>(y) * row, row * 4);
    }
    return out;
}

// ---------------------------------------------------------------- images and depth on disk

inline Image read_image(const fs::path& path)
{
    const std::string bytes = read_file(path);
    const std::string ext = lower_extension(path);
    if (ext == ".png") {
        return decode_png_image(bytes);
    }
    if (ext == ".ppm") {
        return decode_ppm(bytes);
    }
    if (ext == ".pfm") {
        const Pfm p = decode_pfm(bytes);
        if (p.channels != 3) {
            throw Error(ErrorCode::invalid_argument, path.string() + " is a single-channel PFM, expected RGB");
        }
        Image img = Image::create(p.width, p.height, PixelFormat::f32);
        img.data = p.values;
        return img;
    }
    throw Error(ErrorCode::invalid_argument, "unsupported image extension '" + ext + "' (png, ppm, pfm)");
}

inline void write_image(const fs::path& path, const Image& img)
{
    const std::string ext = lower_extension(path);
    if (ext == ".png") {
        write_file_atomic(path, encode_png_image(img));
    } else if (ext == ".ppm") {
        write_file_atomic(path, encode_ppm(img));
    } else if (ext == ".pfm") {
        write_file_atomic(path, encode_pfm({img.width, img.height, 3, img.data}));
    } else {
        throw Error(ErrorCode::invalid_argument, "unsupported image extension '" + ext + "' (png, ppm, pfm)");
    }
}

inline fs::path depth_sidecar(const fs::path& png_path) { return fs::path(png_path.string() + ".json"); }

/// .pfm: float depth, invalid pixels stored as 0. .png: 16-bit depth times the scale in "<file>.json".
inline DepthImage read_depth(const fs::path& path)
{
    const std::string ext = lower_extension(path);
    DepthImage d;
    if (ext == ".pfm") {
        const Pfm p = decode_pfm(read_file(path));
        if (p.channels != 1) {
            throw Error(ErrorCode::invalid_argument, path.string() + " must be a single-channel (Pf) PFM");
        }
        d = DepthImage::create(p.width, p.height);
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            d.depth[i] = p.values[i];
            d.valid[i] = std::isfinite(p.values[i]) && p.values[i] > 0.0f ? 1 : 0;
        }
        return d;
    }
    if (ext == ".png") {
        const auto raw = detail::decode_png(read_file(path), true);
        if (raw.channels != 1 || raw.bit_depth != 16) {
            throw Error(ErrorCode::invalid_argument, path.string() + " must be a 16-bit grayscale PNG");
        }
        const json side = parse_json(read_file(depth_sidecar(path)), depth_sidecar(path).string());
        if (!side.contains("scale") || !side["scale"].is_number() || !(side["scale"].get<double>() > 0.0)) {
            throw Error(ErrorCode::invalid_argument, "depth sidecar needs a positive \"scale\"");
        }
        const double scale = side["scale"].get<double>();
        d = DepthImage::create(raw.width, raw.height);
        for (std::size_t i = 0; i < raw.samples.size(); ++i) {
            if (raw.samples[i] > 0) {
                d.depth[i] = static_cast<float>(raw.samples[i] * scale);
                d.valid[i] = 1;
            }
        }
        return d;
    }
    throw Error(ErrorCode::invalid_argument, "unsupported depth extension '" + ext + "' (pfm, png)");
}

inline void write_depth(const fs::path& path, const DepthImage& d)
{
    const std::string ext = lower_extension(path);
    if (ext == ".pfm") {
        Pfm p{d.width, d.height, 1, d.depth};
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            if (!d.valid[i]) {
                p.values[i] = 0.0f;
            }
        }
        write_file_atomic(path, encode_pfm(p));
        return;
    }
    if (ext == ".png") {
        double max_depth = 0.0;
        for (std::size_t i = 0; i < d.depth.size(); ++i) {
            if (d.valid[i]) {
                max_depth = std::max(max_depth, static_cast<double>(d.depth[i]));
            }
        }
        const double scale = max_depth > 0.0 ? max_depth / 65535.0 : 1.0;
        std::vector<std::uint16_t> s(d.depth.size(), 0);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (d.valid[i]) {
                s[i] = static_cast<std::uint16_t>(std::clamp(std::round(d.depth[i] / scale), 1.0, 65535.0));
            }
        }
        write_file_atomic(depth_sidecar(path), dump_json(json{{"scale", scale}}));
        write_file_atomic(path, detail::encode_png(d.width, d.height, 1, 16, s));
        return;
    }
    throw Error(ErrorCode::invalid_argument, "unsupported depth extension '" + ext + "' (pfm, png)");
}

inline Mask read_mask(const fs::path& path)
{
    const Image img = read_image(path);
    Mask m = Mask::create(img.width, img.height);
    const double k = 1.0 / img.peak();
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        m.values[i] = static_cast<float>(std::clamp(img.data[i * 3] * k, 0.0, 1.0));
    }
    return m;
}

// ---------------------------------------------------------------- model

/// Header JSON next to a .bin of little-endian doubles: mean (N x 3) then basis (3N x K), both row-major.
inline void write_model(const fs::path& json_path, const FaceModel& model)
{
    model.validate();
    fs::path bin = json_path;
    bin.replace_extension(".bin");
    json head;
    head["n_landmarks"] = model.n_landmarks();
    head["latent_dim"] = model.latent_dim();
    head["eye_indices"] = {model.eye_indices[0], model.eye_indices[1]};
    head["labels"] = model.labels;
    head["data"] = bin.filename().string();
    std::string blob;
    auto put = [&](double v) { blob.append(reinterpret_cast<const char*>(&v), sizeof v); };
    for (Eigen::Index i = 0; i < model.mean_shape.rows(); ++i) {
        for (int c = 0; c < 3; ++c) {
            put(model.mean_shape(i, c));
        }
    }
    for (Eigen::Index r = 0; r < model.basis.rows(); ++r) {
        for (Eigen::Index c = 0; c < model.basis.cols(); ++c) {
            put(model.basis(r, c));
        }
    }
    write_file_atomic(bin, blob);
    write_file_atomic(json_path, dump_json(head));
}

inline FaceModel read_model(const fs::path& json_path)
{
    const json head = parse_json(read_file(json_path), json_path.string());
    FaceModel model;
    try {
        const int n = head.at("n_landmarks").get<int>();
        const int k = head.at("latent_dim").get<int>();
        if (n < 1 || k < 0) {
            throw Error(ErrorCode::invalid_dimensions, "model dimensions out of range");
        }
        const auto eyes = head.at("eye_indices").get<std::vector<int>>();
        if (eyes.size() != 2) {
            throw Error(ErrorCode::invalid_argument, "eye_indices must have two entries");
        }
        model.eye_indices = {eyes[0], eyes[1]};
        model.labels = head.at("labels").get<std::vector<std::string>>();
        const fs::path bin = json_path.parent_path() / head.at("data").get<std::string>();
        const std::string blob = read_file(bin);
        const std::size_t need = (static_cast<std::size_t>(3) * n + static_cast<std::size_t>(3) * n * k) * 8;
        if (blob.size() != need) {
            throw parse_error("model data holds " + std::to_string(blob.size()) + " bytes, expected " +
                                  std::to_string(need),
                              std::min(blob.size(), need));
        }
        std::size_t pos = 0;
        auto get = [&]() {
            double v;
            std::memcpy(&v, blob.data() + pos, 8);
            pos += 8;
            return v;
        };
        model.mean_shape.resize(n, 3);
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) {
                model.mean_shape(i, c) = get();
            }
        }
        model.basis.resize(3 * n, k);
        for (int r = 0; r < 3 * n; ++r) {
            for (int c = 0; c < k; ++c) {
                model.basis(r, c) = get();
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, json_path.string() + ": " + e.what());
    }
    model.validate();
    return model;
}

// ---------------------------------------------------------------- cameras, problems, solutions

inline json camera_to_json(const CameraState& cam)
{
    const auto& r = cam.extrinsics().rotation.axis_angle();
    const auto& k = cam.intrinsics();
    const auto& a = cam.anchor();
    json j;
    j["rotation"] = {r.x(), r.y(), r.z()};
    j["tx"] = cam.extrinsics().translation.x();
    j["ty"] = cam.extrinsics().translation.y();
    j["f0"] = k.f0;
    j["gamma"] = k.gamma;
    j["cx"] = k.cx;
    j["cy"] = k.cy;
    j["width"] = k.width;
    j["height"] = k.height;
    j["anchor"] = {{"tz0", a.tz0}, {"d0", a.d0}, {"delta_tz", a.delta_tz}};
    j["coupling"] = cam.coupling() == FocalCoupling::reparameterized ? "reparameterized" : "fixed";
    // Derived values, informational only.
    j["tz"] = cam.extrinsics().translation.z();
    j["alpha"] = k.alpha;
    j["focal"] = cam.focal();
    j["distance"] = cam.distance();
    return j;
}

inline CameraState camera_from_json(const json& j)
{
    const auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 3) {
        throw Error(ErrorCode::invalid_argument, "camera rotation must have three components");
    }
    CameraIntrinsics base;
    base.f0 = j.at("f0").get<double>();
    base.gamma = j.at("gamma").get<double>();
    base.cx = j.at("cx").get<double>();
    base.cy = j.at("cy").get<double>();
    base.width = j.at("width").get<int>();
    base.height = j.at("height").get<int>();
    const json& a = j.at("anchor");
    const ReparamAnchor anchor{a.at("tz0").get<double>(), a.at("d0").get<double>(), a.at("delta_tz").get<double>()};
    const std::string coupling = j.value("coupling", std::string("reparameterized"));
    if (coupling != "reparameterized" && coupling != "fixed") {
        throw Error(ErrorCode::invalid_argument, "unknown focal coupling '" + coupling + "'");
    }
    return CameraState::create(Rotation(Eigen::Vector3d(rot[0], rot[1], rot[2])), j.at("tx").get<double>(),
                               j.at("ty").get<double>(), base, anchor,
                               coupling == "fixed" ? FocalCoupling::fixed : FocalCoupling::reparameterized);
}

inline json points_to_json(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& p)
{
    json arr = json::array();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            row.push_back(p(i, c));
        }
        arr.push_back(std::move(row));
    }
    return arr;
}

template <int Cols>
Eigen::Matrix<double, Eigen::Dynamic, Cols, Eigen::RowMajor> points_from_json(const json& arr, const char* what)
{
    if (!arr.is_array()) {
        throw Error(ErrorCode::invalid_argument, std::string(what) + " must be an array");
    }
    Eigen::Matrix<double, Eigen::Dynamic, Cols, Eigen::RowMajor> p(static_cast<Eigen::Index>(arr.size()), Cols);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_array() || arr[i].size() != Cols) {
            throw Error(ErrorCode::invalid_argument,
                        std::string(what) + " entry " + std::to_string(i) + " must have " + std::to_string(Cols) +
                            " numbers",
                        i);
        }
        for (int c = 0; c < Cols; ++c) {
            p(static_cast<Eigen::Index>(i), c) = arr[i][static_cast<std::size_t>(c)].get<double>();
        }
    }
    return p;
}

inline json vector_to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Eigen::VectorXd vector_from_json(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// A landmark problem as stored on disk. config holds raw key -> value overrides.
struct ProblemFile
{
    int width = 512;
    int height = 512;
    LandmarkSet landmarks;
    std::optional<CameraState> init_camera;
    std::string model_path;
    std::vector<std::pair<std::string, std::string>> config;
};

inline json problem_to_json(const ProblemFile& p)
{
    json j;
    j["image_size"] = {p.width, p.height};
    j["landmarks"] = points_to_json(p.landmarks.points);
    std::vector<bool> vis;
    for (auto v : p.landmarks.visible) {
        vis.push_back(v != 0);
    }
    j["visibility"] = vis;
    const auto& s = p.landmarks.sigma;
    if (s.size() > 0 && (s.array() == s[0]).all()) {
        j["detector_sigma"] = s[0];
    } else {
        j["detector_sigma"] = vector_to_json(s);
    }
    if (p.init_camera) {
        j["init_camera"] = camera_to_json(*p.init_camera);
    }
    j["model_path"] = p.model_path;
    json cfg = json::object();
    for (const auto& [k, v] : p.config) {
        cfg[k] = v;
    }
    j["config"] = cfg;
    return j;
}

inline ProblemFile problem_from_json(const json& j)
{
    ProblemFile p;
    try {
        const auto size = j.at("image_size").get<std::vector<int>>();
        if (size.size() != 2 || size[0] < 1 || size[1] < 1) {
            throw Error(ErrorCode::invalid_argument, "image_size must be [width, height] with positive entries");
        }
        p.width = size[0];
        p.height = size[1];
        Points2 pts = points_from_json<2>(j.at("landmarks"), "landmarks");
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            for (int c = 0; c < 2; ++c) {
                if (!(pts(i, c) >= 0.0 && pts(i, c) <= 1.0)) {
                    throw Error(ErrorCode::invalid_argument,
                                "landmark " + std::to_string(i) + " lies outside [0, 1] normalized coordinates",
                                static_cast<std::size_t>(i));
                }
            }
        }
        p.landmarks = LandmarkSet(std::move(pts));
        if (j.contains("visibility")) {
            const auto vis = j["visibility"].get<std::vector<bool>>();
            if (static_cast<Eigen::Index>(vis.size()) != p.landmarks.size()) {
                throw Error(ErrorCode::dimension_mismatch, "visibility length differs from landmark count");
            }
            for (std::size_t i = 0; i < vis.size(); ++i) {
                p.landmarks.visible[i] = vis[i] ? 1 : 0;
            }
        }
        if (j.contains("detector_sigma")) {
            const json& s = j["detector_sigma"];
            if (s.is_number()) {
                p.landmarks.sigma.setConstant(s.get<double>());
            } else {
                p.landmarks.sigma = vector_from_json(s);
            }
        }
        p.landmarks.validate();
        if (j.contains("init_camera") && !j["init_camera"].is_null()) {
            p.init_camera = camera_from_json(j["init_camera"]);
        }
        p.model_path = j.at("model_path").get<std::string>();
        if (j.contains("config")) {
            for (const auto& [k, v] : j["config"].items()) {
                p.config.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("problem file: ") + e.what());
    }
    return p;
}

inline json latent_to_json(const FaceLatent& latent)
{
    return {{"w", vector_to_json(latent.w)}, {"residual", points_to_json(latent.residual)}};
}

inline FaceLatent latent_from_json(const json& j)
{
    return {vector_from_json(j.at("w")), points_from_json<3>(j.at("residual"), "residual")};
}

inline json loss_to_json(const LossBreakdown& l)
{
    return {{"landmark", l.landmark},
            {"sigma_log", l.sigma_log},
            {"residual_reg", l.residual_reg},
            {"latent_reg", l.latent_reg},
            {"total", l.total}};
}

inline LossBreakdown loss_from_json(const json& j)
{
    LossBreakdown l;
    l.landmark = j.at("landmark").get<double>();
    l.sigma_log = j.at("sigma_log").get<double>();
    l.residual_reg = j.at("residual_reg").get<double>();
    l.latent_reg = j.at("latent_reg").get<double>();
    l.total = j.at("total").get<double>();
    return l;
}

/// Solution document. Parameters are stored as shortest round-trip decimals, so reading and rewriting is byte-exact.
inline json solution_to_json(const InversionSolution& s, const Ablation& ablation)
{
    json j;
    j["ablation"] = ablation.to_string();
    j["camera"] = camera_to_json(s.cam);
    j["initial_camera"] = camera_to_json(s.initial_cam);
    j["latent"] = latent_to_json(s.latent);
    j["sigma"] = vector_to_json(s.sigma);
    j["distance"] = s.distance();
    j["focal"] = s.cam.focal();
    j["stages"] = {{"camera_end", s.camera_end}, {"joint_end", s.joint_end}, {"refine_end", s.refine_end}};
    j["alignment_rms"] = s.alignment_rms;
    j["landmark_rms"] = s.landmark_rms;
    j["final_loss"] = loss_to_json(s.final_loss);
    return j;
}

inline InversionSolution solution_from_json(const json& j, Ablation* ablation = nullptr)
{
    InversionSolution s;
    try {
        s.cam = camera_from_json(j.at("camera"));
        s.initial_cam = camera_from_json(j.at("initial_camera"));
        s.latent = latent_from_json(j.at("latent"));
        s.sigma = vector_from_json(j.at("sigma"));
        const json& st = j.at("stages");
        s.camera_end = st.at("camera_end").get<int>();
        s.joint_end = st.at("joint_end").get<int>();
        s.refine_end = st.at("refine_end").get<int>();
        s.alignment_rms = j.at("alignment_rms").get<double>();
        s.landmark_rms = j.at("landmark_rms").get<double>();
        s.final_loss = loss_from_json(j.at("final_loss"));
        if (ablation) {
            *ablation = Ablation::parse(j.at("ablation").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("solution file: ") + e.what());
    }
    return s;
}

inline std::string trace_jsonl(const std::vector<TraceEntry>& trace)
{
    std::string out;
    char hash[17];
    for (const auto& t : trace) {
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(t.param_hash));
        json j = loss_to_json(t.loss);
        j["iteration"] = t.iteration;
        j["stage"] = to_string(t.stage);
        j["active"] = t.active;
        j["param_hash"] = hash;
        out += j.dump() + "\n";
    }
    return out;
}

inline json truth_to_json(const SyntheticInstance& inst)
{
    json j;
    j["seed"] = inst.seed;
    j["true_distance"] = inst.true_distance();
    j["true_focal"] = inst.true_focal();
    j["noise_sigma"] = inst.noise_sigma;
    j["camera"] = camera_to_json(inst.true_cam);
    j["latent"] = latent_to_json(inst.true_latent);
    j["noise"] = points_to_json(inst.noise);
    return j;
}

struct Truth
{
    CameraState camera;
    FaceLatent latent;
    double distance = 0.0;
};

inline Truth truth_from_json(const json& j)
{
    try {
        Truth t;
        t.camera = camera_from_json(j.at("camera"));
        t.latent = latent_from_json(j.at("latent"));
        t.distance = j.at("true_distance").get<double>();
        return t;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("truth file: ") + e.what());
    }
}

inline json landmarks_to_json(const Points2& normalized) { return {{"landmarks", points_to_json(normalized)}}; }

inline json suite_to_json(const SuiteReport& report)
{
    auto row = [](const SuiteRow& r) {
        json j;
        j["id"] = r.id;
        auto put = [&](const char* key, const std::optional<double>& v) {
            if (!v) {
                j[key] = nullptr;
            } else if (std::isinf(*v)) {
                j[key] = *v > 0 ? "inf" : "-inf";
            } else {
                j[key] = std::stod(format_metric(v));
            }
        };
        put("lmk_e", r.lmk_e);
        put("psnr_db", r.psnr_db);
        put("ssim", r.ssim);
        j["lpips"] = nullptr;
        if (!r.error.empty()) {
            j["error"] = r.error;
        }
        return j;
    };
    json items = json::array();
    for (const auto& r : report.rows) {
        items.push_back(row(r));
    }
    return {{"items", items}, {"mean", row(report.mean)}};
}

} // namespace undistort::io

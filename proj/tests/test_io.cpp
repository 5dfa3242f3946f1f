// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#include "undistort/config.hpp"
#include "undistort/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace undistort;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("undistort_io_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Image random_u8(std::uint64_t seed, int w, int h)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, 255);
    Image img = Image::create(w, h);
    for (float& v : img.data) {
        v = static_cast<float>(u(rng));
    }
    return img;
}

ErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no exception";
    // A code no caller expects.
    return ErrorCode::io_error;
}

} // namespace

TEST(Pfm, BitExactRoundTrip)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-1e3f, 1e3f);
    io::Pfm p{7, 5, 3, {}};
    for (int i = 0; i < 7 * 5 * 3; ++i) {
        p.values.push_back(u(rng));
    }
    p.values[4] = std::numeric_limits<float>::denorm_min();
    p.values[9] = -0.0f;
    const io::Pfm q = io::decode_pfm(io::encode_pfm(p));
    ASSERT_EQ(q.width, 7);
    ASSERT_EQ(q.height, 5);
    ASSERT_EQ(q.channels, 3);
    ASSERT_EQ(std::memcmp(p.values.data(), q.values.data(), p.values.size() * 4), 0);
}

TEST(Pfm, BigEndianIsDecoded)
{
    const float v = 1.5f;
    const std::uint32_t be = __builtin_bswap32(std::bit_cast<std::uint32_t>(v));
    std::string bytes = "Pf\n1 1\n1.0\n";
    bytes.append(reinterpret_cast<const char*>(&be), 4);
    EXPECT_EQ(io::decode_pfm(bytes).values[0], 1.5f);
}

TEST(Pfm, RowsAreStoredBottomUp)
{
    io::Pfm p{1, 2, 1, {1.0f, 2.0f}};
    const std::string bytes = io::encode_pfm(p);
    float last = 0.0f;
    std::memcpy(&last, bytes.data() + bytes.size() - 4, 4);
    EXPECT_EQ(last, 1.0f);
}

TEST(Pfm, TruncatedDataReportsOffset)
{
    std::string bytes = io::encode_pfm({4, 4, 1, std::vector<float>(16, 1.0f)});
    bytes.resize(bytes.size() - 3);
    try {
        io::decode_pfm(bytes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse_error);
        ASSERT_TRUE(e.offset().has_value());
    }
}

TEST(Png, RoundTripRgb8)
{
    const fs::path dir = temp_dir("png");
    const Image a = random_u8(1, 13, 9);
    io::write_image(dir / "a.png", a);
    const Image b = io::read_image(dir / "a.png");
    EXPECT_EQ(b.width, 13);
    EXPECT_EQ(b.height, 9);
    EXPECT_EQ(a.data, b.data);
    fs::remove_all(dir);
}

TEST(Png, TruncatedFileReportsOffset)
{
    const std::string good = io::encode_png_image(random_u8(2, 16, 16));
    const std::string cut = good.substr(0, good.size() / 2);
    try {
        io::decode_png_image(cut);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse_error);
        ASSERT_TRUE(e.offset().has_value());
        EXPECT_LT(*e.offset(), cut.size());
        EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    }
}

TEST(Png, CorruptCrcReportsChunkOffset)
{
    std::string bytes = io::encode_png_image(random_u8(3, 8, 8));
    bytes[20] ^= 0x01; // inside the IHDR payload
    try {
        io::decode_png_image(bytes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse_error);
        EXPECT_EQ(e.offset(), std::optional<std::size_t>(8));
    }
}

TEST(Png, BadSignature)
{
    EXPECT_EQ(code_of([] { io::decode_png_image("GIF89a.........."); }), ErrorCode::parse_error);
}

TEST(Ppm, RoundTrip)
{
    const Image a = random_u8(4, 11, 6);
    const Image b = io::decode_ppm(io::encode_ppm(a));
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(io::encode_ppm(b), io::encode_ppm(a));
}

TEST(Ppm, HeaderComments)
{
    const std::string bytes = std::string("P6 # comment\n2 1\n# another\n255\n") + "\x01\x02\x03\x04\x05\x06";
    const Image img = io::decode_ppm(bytes);
    EXPECT_EQ(img.width, 2);
    EXPECT_EQ(img.at(1, 0, 2), 6.0f);
}

TEST(Ppm, SixteenBitRejected)
{
    EXPECT_EQ(code_of([] { io::decode_ppm("P6\n1 1\n65535\n\0\0\0\0\0\0"); }), ErrorCode::parse_error);
}

TEST(Image, UnsupportedExtension)
{
    const fs::path dir = temp_dir("ext");
    EXPECT_EQ(code_of([&] { io::write_image(dir / "a.bmp", random_u8(1, 2, 2)); }), ErrorCode::invalid_argument);
    fs::remove_all(dir);
}

TEST(Depth, PfmRoundTripKeepsValidity)
{
    const fs::path dir = temp_dir("depth_pfm");
    DepthImage d = DepthImage::create(6, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 6; ++x) {
            if ((x + y) % 3 != 0) {
                d.set(x, y, 0.3f + 0.01f * static_cast<float>(x * y));
            }
        }
    }
    io::write_depth(dir / "d.pfm", d);
    const DepthImage e = io::read_depth(dir / "d.pfm");
    EXPECT_EQ(d.valid, e.valid);
    for (std::size_t i = 0; i < d.depth.size(); ++i) {
        if (d.valid[i]) {
            EXPECT_EQ(d.depth[i], e.depth[i]);
        }
    }
    fs::remove_all(dir);
}

TEST(Depth, Png16WithSidecar)
{
    const fs::path dir = temp_dir("depth_png");
    DepthImage d = DepthImage::create(5, 5);
    for (int i = 0; i < 20; ++i) {
        d.set(i % 5, i / 5, 0.25f + 0.05f * static_cast<float>(i));
    }
    io::write_depth(dir / "d.png", d);
    ASSERT_TRUE(fs::exists(io::depth_sidecar(dir / "d.png")));
    const DepthImage e = io::read_depth(dir / "d.png");
    EXPECT_EQ(d.valid, e.valid);
    const double quantum = 1.2 / 65535.0;
    for (std::size_t i = 0; i < d.depth.size(); ++i) {
        if (d.valid[i]) {
            EXPECT_NEAR(d.depth[i], e.depth[i], quantum);
        }
    }
    fs::remove(io::depth_sidecar(dir / "d.png"));
    EXPECT_THROW(io::read_depth(dir / "d.png"), Error);
    fs::remove_all(dir);
}

TEST(Model, RoundTripIsExact)
{
    const fs::path dir = temp_dir("model");
    const FaceModel m = synthesize_model(5, 40, 6);
    io::write_model(dir / "m.json", m);
    const FaceModel r = io::read_model(dir / "m.json");
    EXPECT_EQ(m.mean_shape, r.mean_shape);
    EXPECT_EQ(m.basis, r.basis);
    EXPECT_EQ(m.labels, r.labels);
    EXPECT_EQ(m.eye_indices, r.eye_indices);
    fs::remove_all(dir);
}

TEST(Model, ShortDataFileIsParseError)
{
    const fs::path dir = temp_dir("model_short");
    io::write_model(dir / "m.json", synthesize_model(5, 20, 3));
    const std::string blob = io::read_file(dir / "m.bin");
    io::write_file_atomic(dir / "m.bin", blob.substr(0, blob.size() - 8));
    EXPECT_EQ(code_of([&] { io::read_model(dir / "m.json"); }), ErrorCode::parse_error);
    fs::remove_all(dir);
}

TEST(Solution, ReserializationIsByteExact)
{
    const auto model = std::make_shared<const FaceModel>(synthesize_model(1, 80, 8));
    SyntheticSpec spec;
    spec.n_landmarks = 80;
    spec.latent_dim = 8;
    const SyntheticInstance inst = generate(17, spec, model);
    InversionProblem p;
    p.observed = inst.observed;
    p.model = model;
    p.config.joint_iters_end = 350;
    p.config.refine_max_iters = 20;
    const InversionSolution s = solve(p);
    const std::string first = io::dump_json(io::solution_to_json(s, p.config.ablation));
    Ablation ab;
    const InversionSolution back = io::solution_from_json(io::parse_json(first, "solution"), &ab);
    EXPECT_EQ(io::dump_json(io::solution_to_json(back, ab)), first);
    EXPECT_EQ(back.distance(), s.distance());
    EXPECT_EQ(back.latent.w, s.latent.w);
    EXPECT_EQ(back.sigma, s.sigma);
}

TEST(Solution, MissingFieldIsReported)
{
    EXPECT_EQ(code_of([] { io::solution_from_json(io::json::object()); }), ErrorCode::invalid_argument);
}

TEST(Json, ParseErrorCarriesOffset)
{
    try {
        io::parse_json("{\"a\": [1, 2,, 3]}", "doc");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse_error);
        ASSERT_TRUE(e.offset().has_value());
        EXPECT_EQ(*e.offset(), 12u);
    }
}

TEST(Config, DefaultsValidate)
{
    EXPECT_NO_THROW(validate_config(Config{}));
}

TEST(Config, UnknownKeyIsError)
{
    Config c;
    EXPECT_EQ(code_of([&] { apply_config_text(c, "solver.lambda_cam = 1e-3\nsolver.lamda_face = 2\n"); }),
              ErrorCode::config_error);
    EXPECT_EQ(code_of([&] { apply_override(c, "nonsense=1"); }), ErrorCode::config_error);
    EXPECT_EQ(code_of([&] { apply_override(c, "solver.lambda_cam"); }), ErrorCode::config_error);
    EXPECT_EQ(code_of([&] { apply_override(c, "solver.lambda_cam=abc"); }), ErrorCode::config_error);
}

TEST(Config, SectionsAndComments)
{
    Config c;
    apply_config_text(c, "# header\n[solver]\nlambda_cam = 0.002 # trailing\nablation = \"no_reparam\"\n"
                         "[synth]\nnoise_sigma = 0.001\n");
    EXPECT_EQ(c.solver.lambda_cam, 0.002);
    EXPECT_TRUE(c.solver.ablation.no_reparam);
    EXPECT_EQ(c.synth.noise_sigma, 0.001);
}

TEST(Config, OverrideWinsOverFile)
{
    Config c;
    apply_config_text(c, "solver.lambda_cam = 0.002\n");
    apply_override(c, "solver.lambda_cam=0.004");
    EXPECT_EQ(c.solver.lambda_cam, 0.004);
}

TEST(Config, ResolvedTextRoundTrips)
{
    Config c;
    apply_override(c, "solver.lambda_face=0.0123");
    apply_override(c, "solver.ablation=no_all");
    apply_override(c, "seed=99");
    const std::string text = resolved_config_text(c);
    for (const auto& k : config_keys()) {
        EXPECT_NE(text.find("\n" + k.name + " = "), std::string::npos) << k.name;
    }
    Config d;
    apply_config_text(d, text);
    EXPECT_EQ(resolved_config_text(d), text);
    EXPECT_EQ(d.solver.lambda_face, 0.0123);
    EXPECT_EQ(d.seed, 99u);
}

TEST(Config, ValidationRejectsEvenSsimWindow)
{
    Config c;
    apply_override(c, "metrics.ssim_window=10");
    EXPECT_EQ(code_of([&] { validate_config(c); }), ErrorCode::config_error);
}

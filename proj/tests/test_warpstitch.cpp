// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#include "undistort/scene.hpp"
#include "undistort/solver.hpp"
#include "undistort/synth.hpp"
#include "undistort/warpstitch.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>

using namespace undistort;

namespace {

template <class Fn>
ErrorCode error_code(Fn&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::io_error;
}

CameraIntrinsics intrinsics(double f, int w, int h)
{
    CameraIntrinsics k;
    k.f0 = f;
    k.cx = 0.5 * w;
    k.cy = 0.5 * h;
    k.width = w;
    k.height = h;
    return k;
}

Image textured(int w, int h)
{
    Image img = Image::create(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = static_cast<float>((x * 7 + y * 3) % 256);
            img.at(x, y, 1) = static_cast<float>((x * x + y) % 256);
            img.at(x, y, 2) = static_cast<float>((y * 11) % 256);
        }
    }
    return img;
}

DepthImage ramp_depth(int w, int h)
{
    DepthImage d = DepthImage::create(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            d.set(x, y, static_cast<float>(0.5 + 0.002 * x + 0.001 * y));
        }
    }
    return d;
}

Points2 random_points(std::uint64_t seed, int n, double lo, double hi)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Points2 p(n, 2);
    for (int i = 0; i < n; ++i) {
        p(i, 0) = u(rng);
        p(i, 1) = u(rng);
    }
    return p;
}

} // namespace

TEST(AlignDepth, FixedPoint)
{
    const DepthImage full = ramp_depth(80, 60);
    const CropRect crop{20, 10, 30, 30};
    DepthImage face = DepthImage::create(crop.width, crop.height);
    for (int j = 0; j < crop.height; ++j) {
        for (int i = 0; i < crop.width; ++i) {
            face.set(i, j, full.at(crop.x + i, crop.y + j));
        }
    }
    const DepthAlignment a = align_depth(face, full, crop);
    EXPECT_NEAR(a.scale, 1.0, 1e-9);
    EXPECT_NEAR(a.offset, 0.0, 1e-9);
    EXPECT_EQ(a.overlap, crop.width * crop.height);
    for (int j = 0; j < crop.height; ++j) {
        for (int i = 0; i < crop.width; ++i) {
            EXPECT_NEAR(a.depth.at(crop.x + i, crop.y + j), face.at(i, j), 1e-6);
        }
    }
}

TEST(AlignDepth, RecoversScaleAndOffset)
{
    const CropRect crop{10, 5, 40, 30};
    DepthImage face = DepthImage::create(crop.width, crop.height);
    DepthImage full = DepthImage::create(64, 48);
    for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 64; ++x) {
            full.set(x, y, 1.0f);
        }
    }
    for (int j = 0; j < crop.height; ++j) {
        for (int i = 0; i < crop.width; ++i) {
            const double g = 0.6 + 0.01 * i + 0.004 * j;
            face.set(i, j, static_cast<float>(g));
            full.set(crop.x + i, crop.y + j, static_cast<float>(0.5 * g - 0.1));
        }
    }
    const DepthAlignment a = align_depth(face, full, crop);
    // Inputs are stored as float, which bounds the achievable accuracy.
    EXPECT_NEAR(a.scale, 2.0, 1e-5);
    EXPECT_NEAR(a.offset, 0.2, 1e-5);
}

TEST(AlignDepth, DisjointMasksAreInsufficient)
{
    DepthImage full = DepthImage::create(64, 48);
    for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 32; ++x) {
            full.set(x, y, 1.0f);
        }
    }
    const CropRect crop{32, 0, 32, 48};
    DepthImage face = DepthImage::create(crop.width, crop.height, 0.5f, true);
    EXPECT_EQ(error_code([&] { align_depth(face, full, crop); }), ErrorCode::insufficient_overlap);
}

TEST(AlignDepth, CropOutsideFrameRejected)
{
    const DepthImage full = ramp_depth(32, 32);
    const CropRect crop{20, 20, 20, 20};
    const DepthImage face = DepthImage::create(20, 20, 1.0f, true);
    EXPECT_THROW(align_depth(face, full, crop), Error);
}

TEST(DepthReproject, IdentityCamera)
{
    const int w = 64, h = 48;
    const Image img = textured(w, h);
    const DepthImage depth = ramp_depth(w, h);
    const CameraState cam =
        CameraState::create(Rotation(Eigen::Vector3d(0.02, -0.01, 0.03)), 0.01, 0.02, intrinsics(300, w, h),
                            ReparamAnchor{0.6, 0.6, 1.0});
    const Reprojection r = depth_reproject(img, depth, cam, cam);
    double max_disp = 0.0;
    for (std::size_t i = 0; i < r.flow.dx.size(); ++i) {
        ASSERT_TRUE(r.flow.valid[i]);
        max_disp = std::max(max_disp, std::hypot(r.flow.dx[i], r.flow.dy[i]));
    }
    EXPECT_LT(max_disp, 1e-6);
    for (std::size_t i = 0; i < r.valid.size(); ++i) {
        ASSERT_TRUE(r.valid[i]);
        for (int c = 0; c < 3; ++c) {
            EXPECT_EQ(r.image.data[i * 3 + c], img.data[i * 3 + c]);
        }
    }
}

TEST(DepthReproject, LateralShiftOfFrontoParallelPlane)
{
    const int w = 64, h = 48;
    const DepthImage depth = DepthImage::create(w, h, 1.0f, true);
    const CameraState src = CameraState::create(Rotation(), 0.0, 0.0, intrinsics(500, w, h), ReparamAnchor{1, 1, 1},
                                                FocalCoupling::fixed);
    // Camera moved 1 cm along +x: world points move 1 cm along -x in its frame.
    const CameraState dst = CameraState::create(Rotation(), -0.01, 0.0, intrinsics(500, w, h),
                                                ReparamAnchor{1, 1, 1}, FocalCoupling::fixed);
    const Reprojection r = depth_reproject(textured(w, h), depth, src, dst);
    for (std::size_t i = 0; i < r.flow.dx.size(); ++i) {
        EXPECT_NEAR(r.flow.dx[i], -5.0, 1e-9);
        EXPECT_NEAR(r.flow.dy[i], 0.0, 1e-9);
    }
    // Splatting shifts the picture by whole pixels.
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x + 5 < w; ++x) {
            EXPECT_EQ(r.image.at(x, y, 0), textured(w, h).at(x + 5, y, 0));
        }
    }
}

TEST(DepthReproject, PlanarSceneMatchesHomography)
{
    const int w = 96, h = 72;
    const CameraIntrinsics k = intrinsics(250, w, h);
    const CameraState src = CameraState::create(Rotation(), 0.0, 0.0, k, ReparamAnchor{1, 1, 1}, FocalCoupling::fixed);
    const Rotation rd(Eigen::Vector3d(0.03, -0.05, 0.02));
    const CameraState dst =
        CameraState::create(rd, 0.03, -0.01, intrinsics(270, w, h), ReparamAnchor{1.05, 1, 1}, FocalCoupling::fixed);
    // Plane n·X = d in the source camera frame.
    const Eigen::Vector3d n = Eigen::Vector3d(0.2, -0.1, 1.0).normalized();
    const double plane_d = 0.8;
    const Eigen::Matrix3d ki = intrinsics_matrix(k);
    const Eigen::Matrix3d ko = intrinsics_matrix(dst.intrinsics());
    DepthImage depth = DepthImage::create(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Eigen::Vector3d ray = ki.inverse() * Eigen::Vector3d(x, y, 1.0);
            depth.set(x, y, static_cast<float>(plane_d / n.dot(ray)));
        }
    }
    const Reprojection r = depth_reproject(textured(w, h), depth, src, dst);
    // Relative motion X_dst = M X_src + t; with n·X_src = d this gives H = K' (M + t nᵀ / d) K⁻¹.
    const Eigen::Matrix3d m = rd.matrix() * src.extrinsics().rotation.matrix().transpose();
    const Eigen::Vector3d t = dst.extrinsics().translation - m * src.extrinsics().translation;
    const Eigen::Matrix3d hom = ko * (m + t * n.transpose() / plane_d) * ki.inverse();
    double worst = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Eigen::Vector3d q = hom * Eigen::Vector3d(x, y, 1.0);
            const std::size_t i = r.flow.index(x, y);
            ASSERT_TRUE(r.flow.valid[i]);
            const double ex = x + r.flow.dx[i] - q.x() / q.z();
            const double ey = y + r.flow.dy[i] - q.y() / q.z();
            worst = std::max(worst, std::hypot(ex, ey));
        }
    }
    // Depth is stored as float; its rounding moves points by well under the tolerance.
    EXPECT_LT(worst, 0.1);
}

TEST(DepthReproject, DollyKeepsAnchorDepthFixed)
{
    const int w = 80, h = 60;
    const double d0 = 0.4;
    const CameraState near = CameraState::create(Rotation(), 0.0, 0.0, intrinsics(200, w, h),
                                                 ReparamAnchor{d0, d0, 1.0});
    const CameraState far = set_distance(near, 2.0 * d0);
    DepthImage depth = DepthImage::create(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            depth.set(x, y, x < w / 2 ? static_cast<float>(d0) : static_cast<float>(0.3));
        }
    }
    const Reprojection r = depth_reproject(textured(w, h), depth, near, far);
    const double f = near.focal();
    const double f2 = far.focal();
    const double shift = far.extrinsics().translation.z() - near.extrinsics().translation.z();
    const double cx = 0.5 * w, cy = 0.5 * h;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = r.flow.index(x, y);
            const double z = depth.at(x, y);
            const double px = (x - cx) * z / f;
            const double py = (y - cy) * z / f;
            const double u = f2 * px / (z + shift) + cx;
            const double v = f2 * py / (z + shift) + cy;
            EXPECT_NEAR(x + r.flow.dx[i], u, 1e-9);
            EXPECT_NEAR(y + r.flow.dy[i], v, 1e-9);
            if (x < w / 2) {
                EXPECT_NEAR(std::hypot(r.flow.dx[i], r.flow.dy[i]), 0.0, 1e-6);
            } else if (std::hypot(x - cx, y - cy) > 1.0) {
                EXPECT_LT(std::hypot(u - cx, v - cy), std::hypot(x - cx, y - cy));
            }
        }
    }
}

TEST(DepthReproject, DeterministicAcrossThreadCounts)
{
    const int w = 64, h = 48;
    const CameraState src =
        CameraState::create(Rotation(), 0.0, 0.0, intrinsics(200, w, h), ReparamAnchor{0.5, 0.5, 1.0});
    const CameraState dst = set_distance(src, 1.2);
    ReprojectOptions one;
    ReprojectOptions four;
    four.threads = 4;
    const Reprojection a = depth_reproject(textured(w, h), ramp_depth(w, h), src, dst, one);
    const Reprojection b = depth_reproject(textured(w, h), ramp_depth(w, h), src, dst, four);
    EXPECT_EQ(a.image.data, b.image.data);
    EXPECT_EQ(a.valid, b.valid);
    EXPECT_EQ(a.flow.dx, b.flow.dx);
}

TEST(LandmarkFlow, IdentityIsZero)
{
    const Points2 src = random_points(1, 30, 20, 80);
    const FlowField f = landmark_flow(src, src, 100, 100);
    for (std::size_t i = 0; i < f.dx.size(); ++i) {
        EXPECT_EQ(f.dx[i], 0.0);
        EXPECT_EQ(f.dy[i], 0.0);
    }
}

TEST(LandmarkFlow, InterpolatesControlPoints)
{
    const Points2 src = random_points(2, 40, 20, 180);
    const Points2 dst = src + random_points(3, 40, -3, 3);
    FlowOptions opt;
    opt.lambda = 0.0;
    const LandmarkFlow flow(src, dst, opt);
    for (Eigen::Index i = 0; i < src.rows(); ++i) {
        const Eigen::Vector2d v = flow.at(src(i, 0), src(i, 1));
        EXPECT_LT((v - (dst.row(i) - src.row(i)).transpose()).norm(), 1e-8);
    }
}

TEST(LandmarkFlow, ReproducesAffineMaps)
{
    const Points2 src = random_points(4, 40, 20, 180);
    Eigen::Matrix2d a;
    a << 1.05, 0.1, -0.07, 0.95;
    const Eigen::Vector2d t(3.0, -2.0);
    Points2 dst(src.rows(), 2);
    for (Eigen::Index i = 0; i < src.rows(); ++i) {
        dst.row(i) = (a * src.row(i).transpose() + t).transpose();
    }
    const LandmarkFlow flow(src, dst);
    const auto hull = detail::convex_hull(src);
    int checked = 0;
    for (int y = 0; y < 200; y += 3) {
        for (int x = 0; x < 200; x += 3) {
            if (!detail::inside_hull(hull, x, y)) {
                continue;
            }
            const Eigen::Vector2d p(x, y);
            EXPECT_LT((flow.at(x, y) - (a * p + t - p)).norm(), 1e-6);
            ++checked;
        }
    }
    EXPECT_GT(checked, 100);
}

TEST(LandmarkFlow, ZeroBeyondFalloffRadius)
{
    const Points2 src = random_points(5, 30, 80, 120);
    const Points2 dst = src + random_points(6, 30, -4, 4);
    const LandmarkFlow flow(src, dst);
    const FlowField f = flow.rasterize(200, 200);
    int outside = 0;
    for (int y = 0; y < 200; ++y) {
        for (int x = 0; x < 200; ++x) {
            if ((Eigen::Vector2d(x, y) - flow.centre()).norm() >= 1.5 * flow.radius()) {
                EXPECT_EQ(f.dx[f.index(x, y)], 0.0);
                EXPECT_EQ(f.dy[f.index(x, y)], 0.0);
                ++outside;
            }
        }
    }
    EXPECT_GT(outside, 1000);
    EXPECT_EQ(flow.attenuation(flow.centre().x(), flow.centre().y()), 1.0);
}

TEST(LandmarkFlow, DegenerateControlPoints)
{
    const Points2 three = random_points(7, 3, 0, 10);
    EXPECT_EQ(error_code([&] { LandmarkFlow(three, three); }), ErrorCode::degenerate_control_points);
    Points2 line(6, 2);
    for (int i = 0; i < 6; ++i) {
        line.row(i) << i, 2.0 * i + 1.0;
    }
    EXPECT_EQ(error_code([&] { LandmarkFlow(line, line); }), ErrorCode::degenerate_control_points);
    const Points2 same = Points2::Constant(6, 2, 4.0);
    EXPECT_EQ(error_code([&] { LandmarkFlow(same, same); }), ErrorCode::degenerate_control_points);
}

TEST(Blend, Endpoints)
{
    const Image fg = textured(16, 12);
    const Image bg = Image::create(16, 12, PixelFormat::u8, 42.0f);
    EXPECT_EQ(blend(fg, bg, Mask::create(16, 12, 1.0f)).data, fg.data);
    EXPECT_EQ(blend(fg, bg, Mask::create(16, 12, 0.0f)).data, bg.data);
}

TEST(Blend, HalfwayConstants)
{
    const Image fg = Image::create(8, 8, PixelFormat::u8, 100.0f);
    const Image bg = Image::create(8, 8, PixelFormat::u8, 200.0f);
    for (float v : blend(fg, bg, Mask::create(8, 8, 0.5f)).data) {
        EXPECT_EQ(v, 150.0f);
    }
}

TEST(Blend, LinearInAlpha)
{
    const Image fg = textured(16, 12);
    const Image bg = Image::create(16, 12, PixelFormat::u8, 42.0f);
    const Image a = blend(fg, bg, Mask::create(16, 12, 0.25f));
    const Image b = blend(fg, bg, Mask::create(16, 12, 0.75f));
    const Image c = blend(fg, bg, Mask::create(16, 12, 0.5f));
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        EXPECT_NEAR(c.data[i], 0.5f * (a.data[i] + b.data[i]), 1e-4);
    }
}

TEST(Blend, DimensionMismatch)
{
    const Image fg = textured(16, 12);
    EXPECT_EQ(error_code([&] { blend(fg, textured(12, 16), Mask::create(16, 12, 1.0f)); }),
              ErrorCode::dimension_mismatch);
    EXPECT_EQ(error_code([&] { blend(fg, fg, Mask::create(8, 8, 1.0f)); }), ErrorCode::dimension_mismatch);
}

TEST(FeatheredHullMask, InsideOneOutsideZero)
{
    Points2 square(4, 2);
    square << 30, 30, 70, 30, 70, 70, 30, 70;
    const Mask m = feathered_hull_mask(square, 100, 100, 4.0);
    EXPECT_EQ(m.at(50, 50), 1.0f);
    EXPECT_EQ(m.at(2, 2), 0.0f);
    EXPECT_NEAR(m.at(30, 50), 0.5f, 0.1f);
    for (float v : m.values) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

namespace {

struct SceneCase
{
    std::shared_ptr<const FaceModel> model;
    SyntheticInstance inst;
    SceneRender near;
    InversionSolution sol;
};

const SceneCase& scene_case(std::uint64_t seed)
{
    static std::map<std::uint64_t, SceneCase> cache;
    auto it = cache.find(seed);
    if (it == cache.end()) {
        SceneCase c;
        c.model = std::make_shared<const FaceModel>(synthesize_model(1));
        SyntheticSpec spec;
        spec.d_min = spec.d_max = 0.25;
        c.inst = generate(seed, spec, c.model);
        c.near = render_scene(*c.model, c.inst.true_latent, c.inst.true_cam);
        InversionProblem p;
        p.observed = c.inst.observed;
        p.model = c.model;
        c.sol = solve(p);
        it = cache.emplace(seed, std::move(c)).first;
    }
    return it->second;
}

} // namespace

TEST(CorrectPortrait, UnitScaleKeepsFace)
{
    const SceneCase& c = scene_case(7000);
    const Correction out = correct_portrait(c.near.image, c.near.depth, c.inst.observed, *c.model, c.sol, 1.0);
    EXPECT_LT((out.near_px - out.far_px).rowwise().norm().mean(), 0.5);
    const auto hull = detail::convex_hull(out.near_px);
    double worst = 0.0;
    for (int y = 0; y < out.image.height; ++y) {
        for (int x = 0; x < out.image.width; ++x) {
            if (detail::inside_hull(hull, x, y)) {
                for (int c2 = 0; c2 < 3; ++c2) {
                    worst = std::max(worst, static_cast<double>(std::abs(out.image.at(x, y, c2) -
                                                                         c.near.image.at(x, y, c2))));
                }
            }
        }
    }
    EXPECT_LT(worst, 1e-3);
}

TEST(CorrectPortrait, DollyOutApproachesFarRender)
{
    for (std::uint64_t seed : {7000, 7001, 7002}) {
        const SceneCase& c = scene_case(seed);
        const CameraState far_cam = set_distance(c.inst.true_cam, 4.0 * c.inst.true_distance());
        const SceneRender far = render_scene(*c.model, c.inst.true_latent, far_cam);
        const Correction out =
            correct_portrait(c.near.image, c.near.depth, c.inst.observed, *c.model, c.sol, 4.0);
        const double r_near = measured_nose_ratio(c.near.image);
        const double r_far = measured_nose_ratio(far.image);
        const double r_out = measured_nose_ratio(out.image);
        EXPECT_LT(std::abs(r_out / r_far - 1.0), 0.10) << seed;
        EXPECT_LT(std::abs(r_out - r_far), std::abs(r_near - r_far)) << seed;
    }
}

TEST(CorrectPortrait, MissingDepthNamesTheFlag)
{
    const SceneCase& c = scene_case(7000);
    try {
        correct_portrait(c.near.image, DepthImage{}, c.inst.observed, *c.model, c.sol, 2.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
        EXPECT_NE(std::string(e.what()).find("--depth"), std::string::npos);
    }
}

TEST(CorrectPortrait, DeterministicAcrossThreadCounts)
{
    const SceneCase& c = scene_case(7000);
    CorrectionOptions four;
    four.threads = 4;
    const Correction a = correct_portrait(c.near.image, c.near.depth, c.inst.observed, *c.model, c.sol, 2.0);
    const Correction b = correct_portrait(c.near.image, c.near.depth, c.inst.observed, *c.model, c.sol, 2.0, four);
    EXPECT_EQ(a.image.data, b.image.data);
}

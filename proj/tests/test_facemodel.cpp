// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#include "undistort/facemodel.hpp"
#include "undistort/synth.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace undistort;

namespace {

const FaceModel& model()
{
    static const FaceModel m = synthesize_model(7, 468, 32);
    return m;
}

Eigen::VectorXd random_w(std::mt19937_64& rng, int k)
{
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd w(k);
    for (int i = 0; i < k; ++i) {
        w[i] = g(rng);
    }
    return w;
}

} // namespace

TEST(Shape, ZeroLatentGivesMean)
{
    const Points3 s = shape(model(), FaceLatent::zero(model()));
    EXPECT_EQ(s, model().mean_shape);
}

TEST(Shape, OneHotAddsBasisColumn)
{
    FaceLatent lat = FaceLatent::zero(model());
    lat.w[3] = 1.0;
    const Points3 s = shape(model(), lat);
    const Eigen::VectorXd col = model().basis.col(3);
    const Points3 expected = model().mean_shape + Eigen::Map<const Points3>(col.data(), model().n_landmarks(), 3);
    EXPECT_NEAR((s - expected).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Shape, Superposition)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 5; ++trial) {
        FaceLatent l1 = FaceLatent::zero(model());
        FaceLatent l2 = l1;
        FaceLatent lc = l1;
        l1.w = random_w(rng, model().latent_dim());
        l2.w = random_w(rng, model().latent_dim());
        const double a = u(rng);
        const double b = u(rng);
        lc.w = a * l1.w + b * l2.w;
        const Points3 lhs = shape(model(), lc);
        const Points3 rhs = a * shape(model(), l1) + b * shape(model(), l2) - (a + b - 1.0) * model().mean_shape;
        EXPECT_NEAR((lhs - rhs).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    }
}

TEST(Shape, DimensionMismatch)
{
    FaceLatent lat = FaceLatent::zero(model());
    lat.w.resize(5);
    EXPECT_THROW(shape(model(), lat), Error);
    FaceLatent lat2 = FaceLatent::zero(model());
    lat2.residual.resize(3, 3);
    try {
        shape(model(), lat2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
    }
}

TEST(SynthesizeModel, Deterministic)
{
    const FaceModel a = synthesize_model(7, 468, 32);
    const FaceModel b = synthesize_model(7, 468, 32);
    EXPECT_EQ(a.mean_shape, b.mean_shape);
    EXPECT_EQ(a.basis, b.basis);
    EXPECT_EQ(a.labels, b.labels);
    const FaceModel c = synthesize_model(8, 468, 32);
    EXPECT_NE(a.mean_shape, c.mean_shape);
}

TEST(SynthesizeModel, ShapeContract)
{
    EXPECT_EQ(model().n_landmarks(), 468);
    EXPECT_EQ(model().latent_dim(), 32);
    EXPECT_NO_THROW(model().validate());
    for (const char* label : {"nose_tip", "eye_left", "eye_right", "ear_left", "ear_right", "nose_left",
                              "nose_right"}) {
        EXPECT_TRUE(model().find_label(label).has_value()) << label;
    }
}

TEST(SynthesizeModel, NoseProtrusionRange)
{
    for (std::uint64_t seed : {1, 7, 42, 1234}) {
        const FaceModel m = synthesize_model(seed, 468, 32);
        const double nose = m.mean_shape(*m.find_label("nose_tip"), 2);
        for (const char* ear : {"ear_left", "ear_right"}) {
            const double depth = m.mean_shape(*m.find_label(ear), 2) - nose;
            EXPECT_GE(depth, 0.06) << seed;
            EXPECT_LE(depth, 0.10) << seed;
        }
    }
}

TEST(SynthesizeModel, InvalidDimensions)
{
    try {
        synthesize_model(1, 4, 32);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::invalid_dimensions);
    }
    EXPECT_THROW(synthesize_model(1, 468, 0), Error);
}

TEST(FaceModel, ValidateRejectsNonOrthogonalBasis)
{
    FaceModel m = model();
    m.basis.col(1) += 0.5 * m.basis.col(0);
    EXPECT_THROW(m.validate(), Error);
}

TEST(RenderLandmarks, WeakPerspectiveLimit)
{
    const FaceLatent lat = FaceLatent::zero(model());
    const Points3 s = shape(model(), lat);
    // A very distant camera with a proportionally long lens approaches the orthographic view.
    const CameraState cam = camera_looking_at(model(), s, Rotation(), 100.0, 1e5, 512, 512);
    const Points2 px = project_points(s, cam);
    const double sx = (px.row(3) - px.row(4)).norm();
    const double ox = (s.row(3).head<2>() - s.row(4).head<2>()).norm();
    for (int i : {0, 1, 5, 7}) {
        for (int j : {2, 6, 3}) {
            const double ratio_px = (px.row(i) - px.row(j)).norm() / sx;
            const double ratio_ortho = (s.row(i).head<2>() - s.row(j).head<2>()).norm() / ox;
            EXPECT_LT(std::abs(ratio_px / ratio_ortho - 1.0), 5e-3);
        }
    }
}

TEST(RenderLandmarks, DollyKeepsEyeMidpoint)
{
    const FaceLatent lat = FaceLatent::zero(model());
    const Points3 s = shape(model(), lat);
    const CameraState cam = camera_looking_at(model(), s, Rotation(Eigen::Vector3d(0.05, 0.1, 0)), 0.3, 450, 512,
                                              512, 12.0, -7.0);
    const CameraState far = set_distance(cam, 0.6);
    const Points2 a = project_points(s, cam);
    const Points2 b = project_points(s, far);
    const auto mid = [](const Points2& p) -> Eigen::RowVector2d { return 0.5 * (p.row(1) + p.row(2)); };
    // The eye midpoint is the anchor; the eyes themselves are off the anchor plane only by depth noise.
    const Eigen::Vector3d anchor = eye_midpoint(model(), s);
    const Eigen::Vector2d ua = project(cam.intrinsics(), cam.extrinsics().apply(anchor));
    const Eigen::Vector2d ub = project(far.intrinsics(), far.extrinsics().apply(anchor));
    EXPECT_LT((ua - ub).norm(), 1e-9);
    EXPECT_LT((mid(a) - mid(b)).norm(), 0.5);
}

TEST(RenderLandmarks, BehindCameraReportsIndex)
{
    const FaceLatent lat = FaceLatent::zero(model());
    const Points3 s = shape(model(), lat);
    CameraIntrinsics base;
    base.f0 = 500;
    base.cx = base.cy = 256;
    base.width = base.height = 512;
    // Camera inside the face: the protruding nose lies behind the image plane.
    const CameraState cam = CameraState::create(Rotation(), 0.0, 0.0, base, ReparamAnchor{0.0, 0.02, 1.0},
                                                FocalCoupling::fixed);
    try {
        render_landmarks(model(), lat, cam);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::point_behind_camera);
        EXPECT_TRUE(e.index().has_value());
    }
}

TEST(RenderLandmarks, RigidMotionOfWorldFrame)
{
    const FaceLatent lat = FaceLatent::zero(model());
    const Points3 s = shape(model(), lat);
    const CameraState cam = camera_looking_at(model(), s, Rotation(Eigen::Vector3d(0.05, 0.1, 0)), 0.4, 450, 512, 512);
    const Rotation q(Eigen::Vector3d(0.3, -0.2, 0.1));
    const Eigen::Vector3d t(0.1, 0.2, -0.3);
    Points3 moved(s.rows(), 3);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        moved.row(i) = (q.matrix() * s.row(i).transpose() + t).transpose();
    }
    // Compensating extrinsics: R' = R·Q^T, T' = T - R' t.
    const Eigen::Matrix3d r2 = cam.extrinsics().rotation.matrix() * q.matrix().transpose();
    const Eigen::Vector3d t2 = cam.extrinsics().translation - r2 * t;
    const CameraState cam2 = CameraState::create(Rotation::from_matrix(r2), t2.x(), t2.y(), cam.intrinsics(),
                                                 ReparamAnchor{t2.z(), 1.0, 1.0}, FocalCoupling::fixed);
    const Points2 a = project_points(s, cam);
    const Points2 b = project_points(moved, cam2);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

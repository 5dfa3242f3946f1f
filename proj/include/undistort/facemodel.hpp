// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"
#include "undistort/geometry.hpp"
#include "undistort/landmarks.hpp"

#include "Eigen/Core"
#include "Eigen/QR"

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace undistort {

/**
 * Linear 3D landmark face model: shape = mean + basis·w (+ a per-landmark
 * residual). The mean shape is centred at the origin with the face looking
 * towards -z, i.e. towards a camera with identity rotation and positive t_z.
 *
 * The basis is stored as a 3N x K matrix whose column k is the k-th shape mode
 * flattened landmark by landmark (x0, y0, z0, x1, ...).
 */
struct FaceModel
{
    Points3 mean_shape;
    Eigen::MatrixXd basis;
    std::array<int, 2> eye_indices{0, 1};
    std::vector<std::string> labels;

    int n_landmarks() const { return static_cast<int>(mean_shape.rows()); }
    int latent_dim() const { return static_cast<int>(basis.cols()); }

    std::optional<int> find_label(const std::string& label) const
    {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == label) {
                return static_cast<int>(i);
            }
        }
        return std::nullopt;
    }

    /// Checks dimensions, centring of the mean shape and mutual orthogonality of the modes.
    void validate(double orthogonality_tol = 1e-6) const
    {
        const Eigen::Index n = mean_shape.rows();
        if (n < 1 || basis.rows() != 3 * n) {
            throw Error(ErrorCode::dimension_mismatch, "basis rows must equal 3 x n_landmarks");
        }
        if (static_cast<Eigen::Index>(labels.size()) != n) {
            throw Error(ErrorCode::dimension_mismatch, "one label per landmark is required");
        }
        for (int e : eye_indices) {
            if (e < 0 || e >= n) {
                throw Error(ErrorCode::invalid_dimensions, "eye index out of range");
            }
        }
        if (!mean_shape.allFinite() || !basis.allFinite()) {
            throw Error(ErrorCode::invalid_argument, "model contains non-finite values");
        }
        const Eigen::Vector3d centroid = mean_shape.colwise().mean().transpose();
        if (centroid.cwiseAbs().maxCoeff() > 1e-9) {
            throw Error(ErrorCode::invalid_argument, "mean shape is not centred at the origin");
        }
        const Eigen::MatrixXd gram = basis.transpose() * basis;
        for (Eigen::Index i = 0; i < gram.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < gram.cols(); ++j) {
                const double cosine = gram(i, j) / std::sqrt(gram(i, i) * gram(j, j));
                if (std::abs(cosine) > orthogonality_tol) {
                    throw Error(ErrorCode::invalid_argument,
                                "basis vectors " + std::to_string(i) + " and " + std::to_string(j) +
                                    " are not orthogonal");
                }
            }
        }
    }
};

/// Latent coefficients plus the per-landmark residual field used by the refinement stage.
struct FaceLatent
{
    Eigen::VectorXd w;
    Points3 residual;

    static FaceLatent zero(const FaceModel& model)
    {
        return {Eigen::VectorXd::Zero(model.latent_dim()), Points3::Zero(model.n_landmarks(), 3)};
    }
};

inline Points3 shape(const FaceModel& model, const FaceLatent& latent)
{
    const Eigen::Index n = model.mean_shape.rows();
    if (latent.w.size() != model.basis.cols()) {
        throw Error(ErrorCode::dimension_mismatch, "latent has " + std::to_string(latent.w.size()) +
                                                       " coefficients, model has " +
                                                       std::to_string(model.basis.cols()));
    }
    if (latent.residual.rows() != n) {
        throw Error(ErrorCode::dimension_mismatch, "residual field must have one row per landmark");
    }
    Points3 s = model.mean_shape + latent.residual;
    if (latent.w.size() > 0) {
        const Eigen::VectorXd offset = model.basis * latent.w;
        s += Eigen::Map<const Points3>(offset.data(), n, 3);
    }
    return s;
}

inline Eigen::Vector3d eye_midpoint(const FaceModel& model, const Points3& s)
{
    return 0.5 * (s.row(model.eye_indices[0]) + s.row(model.eye_indices[1])).transpose();
}

/// Projects every landmark of a shape to pixel coordinates.
inline Points2 project_points(const Points3& s, const CameraState& cam, const GeometryLimits& limits = {})
{
    const Eigen::Matrix3d r = cam.extrinsics().rotation.matrix();
    const Eigen::Vector3d t = cam.extrinsics().translation;
    Points2 px(s.rows(), 2);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const Eigen::Vector3d pc = r * s.row(i).transpose() + t;
        if (!(pc.z() > limits.z_min)) {
            throw Error(ErrorCode::point_behind_camera,
                        "landmark " + std::to_string(i) + " lies behind the camera", static_cast<std::size_t>(i));
        }
        px.row(i) = project(cam.intrinsics(), pc, limits).transpose();
    }
    return px;
}

/// Renders the model landmarks to normalized image coordinates.
inline LandmarkSet render_landmarks(const FaceModel& model, const FaceLatent& latent, const CameraState& cam,
                                    const GeometryLimits& limits = {})
{
    const Points2 px = project_points(shape(model, latent), cam, limits);
    return LandmarkSet(to_normalized(px, cam.intrinsics().width, cam.intrinsics().height));
}

namespace detail {

inline double synth_surface_depth(double x, double y, double half_w, double half_h, double dome, double nose_h,
                                  double nose_y, double nose_s)
{
    const double e = 1.0 - (x / half_w) * (x / half_w) - (y / half_h) * (y / half_h);
    const double bump = std::exp(-(x * x + (y - nose_y) * (y - nose_y)) / (2.0 * nose_s * nose_s));
    return -dome * std::sqrt(std::max(0.0, e)) - nose_h * bump;
}

} // namespace detail

/**
 * Deterministic face-like test model. The mean shape lies on a half-ellipsoid
 * with a Gaussian nose bump whose apex protrudes 6 to 10 cm in front of the
 * ears. Landmarks 0..7 are named (nose tip, eyes, ears, nose wings, chin), the
 * rest are spread over the face with a sunflower pattern. Shape modes are
 * random smooth fields made orthogonal to each other and to the similarity
 * directions of the mean (translation, rotation, scale), which the camera
 * already accounts for.
 */
inline FaceModel synthesize_model(std::uint64_t seed, int n_landmarks = 468, int latent_dim = 32)
{
    if (n_landmarks < 8 || latent_dim < 1) {
        throw Error(ErrorCode::invalid_dimensions, "synthetic model needs N >= 8 and K >= 1");
    }
    const int n = n_landmarks;
    if (3 * n < latent_dim + 7) {
        throw Error(ErrorCode::invalid_dimensions, "latent dimension too large for the landmark count");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const double half_w = uniform(0.070, 0.080);
    const double half_h = uniform(0.095, 0.110);
    const double protrusion = uniform(0.068, 0.092);
    const double nose_h = uniform(0.020, 0.030);
    const double dome = protrusion - nose_h;
    const double nose_y = 0.01;
    const double nose_s = 0.014;

    std::vector<Eigen::Vector2d> xy;
    xy.reserve(static_cast<std::size_t>(n));
    xy.emplace_back(0.0, nose_y);
    xy.emplace_back(-0.032, -0.035);
    xy.emplace_back(0.032, -0.035);
    xy.emplace_back(-half_w, 0.0);
    xy.emplace_back(half_w, 0.0);
    xy.emplace_back(-0.017, nose_y + 0.006);
    xy.emplace_back(0.017, nose_y + 0.006);
    xy.emplace_back(0.0, 0.9 * half_h);
    const int rest = n - 8;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < rest; ++i) {
        const double r = std::sqrt((i + 0.5) / rest) * 0.97;
        const double th = golden * i + uniform(-0.05, 0.05);
        xy.emplace_back(half_w * r * std::cos(th), half_h * r * std::sin(th));
    }

    FaceModel model;
    model.mean_shape.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        const auto& p = xy[static_cast<std::size_t>(i)];
        model.mean_shape.row(i) << p.x(), p.y(),
            detail::synth_surface_depth(p.x(), p.y(), half_w, half_h, dome, nose_h, nose_y, nose_s);
    }
    const Eigen::RowVector3d centroid = model.mean_shape.colwise().mean();
    model.mean_shape.rowwise() -= centroid;

    model.labels = {"nose_tip", "eye_left", "eye_right", "ear_left", "ear_right", "nose_left", "nose_right", "chin"};
    for (int i = 8; i < n; ++i) {
        model.labels.push_back("pt" + std::to_string(i));
    }
    model.eye_indices = {1, 2};

    // Columns 0..6 span the similarity directions; the remaining columns are candidate modes.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3 * n, 7 + latent_dim);
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d p = model.mean_shape.row(i).transpose();
        for (int c = 0; c < 3; ++c) {
            a(3 * i + c, 0) = p[c];
            a(3 * i + c, 1 + c) = 1.0;
        }
        for (int c = 0; c < 3; ++c) {
            const Eigen::Vector3d rot = Eigen::Vector3d::Unit(c).cross(p);
            a.block<3, 1>(3 * i, 4 + c) = rot;
        }
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int k = 0; k < latent_dim; ++k) {
        for (int j = 0; j < 4; ++j) {
            const double r = std::sqrt(unit(rng));
            const double th = 2.0 * std::numbers::pi * unit(rng);
            const Eigen::Vector2d centre(half_w * r * std::cos(th), half_h * r * std::sin(th));
            const double width = uniform(0.02, 0.05);
            const Eigen::Vector3d coeff(gauss(rng), gauss(rng), gauss(rng));
            for (int i = 0; i < n; ++i) {
                const Eigen::Vector2d q = model.mean_shape.row(i).head<2>().transpose();
                const double g = std::exp(-(q - centre).squaredNorm() / (2.0 * width * width));
                a.block<3, 1>(3 * i, 7 + k) += g * coeff;
            }
        }
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(3 * n, 7 + latent_dim);
    model.basis.resize(3 * n, latent_dim);
    for (int k = 0; k < latent_dim; ++k) {
        // Per-landmark RMS displacement of 3 mm for the first mode, decaying like a PCA spectrum.
        const double amplitude = 0.003 * std::sqrt(static_cast<double>(n)) / (1.0 + 0.25 * k);
        model.basis.col(k) = amplitude * q.col(7 + k);
    }
    return model;
}

} // namespace undistort

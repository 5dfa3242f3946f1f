// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"
#include "undistort/facemodel.hpp"
#include "undistort/geometry.hpp"
#include "undistort/landmarks.hpp"

#include "Eigen/Core"

#include <cmath>
#include <string>

namespace undistort {

struct ObjectiveWeights
{
    double residual = 10.0;            ///< lambda_res on ||residual||^2 (m^2)
    double latent = 1e-3;              ///< lambda_w on ||w||^2
    double sigma_floor = 1e-3;         ///< lower bound on sigma, normalized units
    double infeasible_penalty = 1e6;   ///< loss reported for states that cannot be rendered
};

/// Unweighted loss parts; total applies the regularizer weights.
struct LossBreakdown
{
    double landmark = 0.0;     ///< sum ||m - m'||^2 / (2 sigma^2)
    double sigma_log = 0.0;    ///< sum log(sigma^2)
    double residual_reg = 0.0; ///< ||residual||^2
    double latent_reg = 0.0;   ///< ||w||^2
    double total = 0.0;
};

/**
 * Uncertainty-weighted landmark loss over the landmarks visible in observed:
 * sum_i log(sigma_i^2) + ||m_i - m'_i||^2 / (2 sigma_i^2).
 * Only the landmark and sigma_log parts are filled; total is their sum.
 */
inline LossBreakdown landmark_loss(const LandmarkSet& observed, const LandmarkSet& predicted,
                                   const Eigen::VectorXd& sigma)
{
    if (observed.size() != predicted.size() || sigma.size() != observed.size() ||
        static_cast<Eigen::Index>(observed.visible.size()) != observed.size()) {
        throw Error(ErrorCode::dimension_mismatch, "landmark sets and sigma must have equal length");
    }
    LossBreakdown out;
    for (Eigen::Index i = 0; i < observed.size(); ++i) {
        if (!observed.is_visible(i)) {
            continue;
        }
        const double s2 = sigma[i] * sigma[i];
        const double r2 = (observed.points.row(i) - predicted.points.row(i)).squaredNorm();
        out.sigma_log += std::log(s2);
        out.landmark += r2 / (2.0 * s2);
    }
    out.total = out.landmark + out.sigma_log;
    return out;
}

inline LossBreakdown landmark_loss(const LandmarkSet& observed, const LandmarkSet& predicted)
{
    return landmark_loss(observed, predicted, observed.sigma);
}

/**
 * Index map of the flat optimization vector:
 * [delta_tz, t_x, t_y, axis_angle(3), gamma, w(K), residual(3N), log_sigma(N)].
 */
struct ParamLayout
{
    int n_landmarks = 0;
    int latent_dim = 0;

    static constexpr int delta_tz = 0;
    static constexpr int tx = 1;
    static constexpr int ty = 2;
    static constexpr int rotation = 3;
    static constexpr int gamma = 6;
    static constexpr int latent = 7;

    int residual() const { return latent + latent_dim; }
    int log_sigma() const { return residual() + 3 * n_landmarks; }
    int size() const { return log_sigma() + n_landmarks; }
};

/**
 * Everything the loss needs besides the parameter vector. The camera template
 * supplies the fixed parts of the camera (f0, principal point, image size,
 * anchor t_z0/d0, focal coupling); the vector supplies the rest.
 */
struct ObjectiveContext
{
    const FaceModel& model;
    const LandmarkSet& observed;
    const CameraState& camera_template;
    ObjectiveWeights weights;
    GeometryLimits limits;

    ParamLayout layout() const { return {model.n_landmarks(), model.latent_dim()}; }
};

inline Eigen::VectorXd pack_params(const ParamLayout& layout, const CameraState& cam, const FaceLatent& latent,
                                   const Eigen::VectorXd& sigma)
{
    if (latent.w.size() != layout.latent_dim || latent.residual.rows() != layout.n_landmarks ||
        sigma.size() != layout.n_landmarks) {
        throw Error(ErrorCode::dimension_mismatch, "state does not match the parameter layout");
    }
    Eigen::VectorXd x(layout.size());
    x[ParamLayout::delta_tz] = cam.anchor().delta_tz;
    x[ParamLayout::tx] = cam.extrinsics().translation.x();
    x[ParamLayout::ty] = cam.extrinsics().translation.y();
    x.segment<3>(ParamLayout::rotation) = cam.extrinsics().rotation.axis_angle();
    x[ParamLayout::gamma] = cam.intrinsics().gamma;
    x.segment(ParamLayout::latent, layout.latent_dim) = latent.w;
    x.segment(layout.residual(), 3 * layout.n_landmarks) =
        Eigen::Map<const Eigen::VectorXd>(latent.residual.data(), 3 * layout.n_landmarks);
    x.segment(layout.log_sigma(), layout.n_landmarks) = sigma.array().log().matrix();
    return x;
}

inline CameraState unpack_camera(const ObjectiveContext& ctx, const Eigen::VectorXd& x)
{
    CameraIntrinsics base = ctx.camera_template.intrinsics();
    base.gamma = x[ParamLayout::gamma];
    ReparamAnchor anchor = ctx.camera_template.anchor();
    anchor.delta_tz = x[ParamLayout::delta_tz];
    return CameraState::create(Rotation(x.segment<3>(ParamLayout::rotation)), x[ParamLayout::tx],
                               x[ParamLayout::ty], base, anchor, ctx.camera_template.coupling(), ctx.limits);
}

inline FaceLatent unpack_latent(const ParamLayout& layout, const Eigen::VectorXd& x)
{
    FaceLatent latent;
    latent.w = x.segment(ParamLayout::latent, layout.latent_dim);
    latent.residual = Eigen::Map<const Points3>(x.data() + layout.residual(), layout.n_landmarks, 3);
    return latent;
}

inline Eigen::VectorXd unpack_sigma(const ParamLayout& layout, const Eigen::VectorXd& x)
{
    return x.segment(layout.log_sigma(), layout.n_landmarks).array().exp().matrix();
}

/**
 * Loss at x and, when grad is non-null, its exact gradient by the chain rule
 * through projection, focal coupling and the square-root translation map.
 * Throws InfeasibleRender when a visible landmark is not in front of the camera.
 */
inline LossBreakdown evaluate(const ObjectiveContext& ctx, const Eigen::VectorXd& x, Eigen::VectorXd* grad)
{
    const ParamLayout layout = ctx.layout();
    if (x.size() != layout.size()) {
        throw Error(ErrorCode::dimension_mismatch, "parameter vector has the wrong length");
    }
    if (ctx.observed.size() != layout.n_landmarks) {
        throw Error(ErrorCode::dimension_mismatch, "observed landmarks do not match the model");
    }
    const CameraState cam = unpack_camera(ctx, x);
    const FaceLatent latent = unpack_latent(layout, x);
    const Points3 s = shape(ctx.model, latent);

    const CameraIntrinsics& intr = cam.intrinsics();
    const Rotation& rotation = cam.extrinsics().rotation;
    const Eigen::Matrix3d r = rotation.matrix();
    const Eigen::Vector3d t = cam.extrinsics().translation;
    const double f = intr.focal();
    const double inv_w = 1.0 / intr.width;
    const double inv_h = 1.0 / intr.height;

    const int n = layout.n_landmarks;
    Eigen::VectorXd grad_shape;
    Eigen::Vector3d grad_rot = Eigen::Vector3d::Zero();
    Eigen::Vector3d grad_t = Eigen::Vector3d::Zero();
    double grad_f = 0.0;
    if (grad) {
        grad->setZero(layout.size());
        grad_shape.setZero(3 * n);
    }

    LossBreakdown out;
    for (int i = 0; i < n; ++i) {
        if (!ctx.observed.is_visible(i)) {
            continue;
        }
        const Eigen::Vector3d xw = s.row(i).transpose();
        const Eigen::Vector3d p = r * xw + t;
        if (!(p.z() > ctx.limits.z_min)) {
            throw Error(ErrorCode::infeasible_render, "landmark " + std::to_string(i) + " is behind the camera",
                        static_cast<std::size_t>(i));
        }
        const double iz = 1.0 / p.z();
        // Same operation order as project() and to_normalized(), so an exact fit has a zero residual.
        const double mu = (f * p.x() / p.z() + intr.cx) / intr.width;
        const double mv = (f * p.y() / p.z() + intr.cy) / intr.height;
        const double ex = mu - ctx.observed.points(i, 0);
        const double ey = mv - ctx.observed.points(i, 1);
        const double log_sigma = x[layout.log_sigma() + i];
        const double s2 = std::exp(2.0 * log_sigma);
        const double r2 = ex * ex + ey * ey;
        out.landmark += r2 / (2.0 * s2);
        out.sigma_log += 2.0 * log_sigma;
        if (!grad) {
            continue;
        }
        (*grad)[layout.log_sigma() + i] = 2.0 - r2 / s2;
        const double gu = ex / s2 * inv_w;
        const double gv = ey / s2 * inv_h;
        const Eigen::Vector3d gp(gu * f * iz, gv * f * iz, -(gu * p.x() + gv * p.y()) * f * iz * iz);
        grad_f += (gu * p.x() + gv * p.y()) * iz;
        grad_t += gp;
        const Eigen::Vector3d gx = r.transpose() * gp;
        grad_shape.segment<3>(3 * i) = gx;
        grad_rot += xw.cross(gx);
    }
    out.residual_reg = latent.residual.squaredNorm();
    out.latent_reg = latent.w.squaredNorm();
    out.total = out.landmark + out.sigma_log + ctx.weights.residual * out.residual_reg +
                ctx.weights.latent * out.latent_reg;

    if (grad) {
        const ReparamAnchor& a = cam.anchor();
        const bool coupled = cam.coupling() == FocalCoupling::reparameterized;
        const double df_dtz = coupled ? intr.gamma * intr.f0 / a.d0 : 0.0;
        const double df_dgamma = intr.alpha * intr.f0;
        const double dtz_ddelta = -a.tz0 / (2.0 * a.delta_tz * std::sqrt(a.delta_tz));
        Eigen::VectorXd& g = *grad;
        g[ParamLayout::delta_tz] = (grad_t.z() + grad_f * df_dtz) * dtz_ddelta;
        g[ParamLayout::tx] = grad_t.x();
        g[ParamLayout::ty] = grad_t.y();
        g.segment<3>(ParamLayout::rotation) = rotation.right_jacobian().transpose() * grad_rot;
        g[ParamLayout::gamma] = grad_f * df_dgamma;
        g.segment(ParamLayout::latent, layout.latent_dim) =
            ctx.model.basis.transpose() * grad_shape + 2.0 * ctx.weights.latent * latent.w;
        g.segment(layout.residual(), 3 * n) =
            grad_shape + 2.0 * ctx.weights.residual *
                             Eigen::Map<const Eigen::VectorXd>(latent.residual.data(), 3 * n);
        if (!g.allFinite()) {
            throw Error(ErrorCode::non_finite_gradient, "gradient contains non-finite entries");
        }
    }
    return out;
}

inline LossBreakdown total_loss(const ObjectiveContext& ctx, const Eigen::VectorXd& x)
{
    return evaluate(ctx, x, nullptr);
}

inline LossBreakdown total_loss(const ObjectiveContext& ctx, const CameraState& cam, const FaceLatent& latent,
                                const Eigen::VectorXd& sigma)
{
    const ObjectiveContext local{ctx.model, ctx.observed, cam, ctx.weights, ctx.limits};
    return evaluate(local, pack_params(local.layout(), cam, latent, sigma), nullptr);
}

inline Eigen::VectorXd gradient(const ObjectiveContext& ctx, const Eigen::VectorXd& x)
{
    Eigen::VectorXd g;
    evaluate(ctx, x, &g);
    return g;
}

/**
 * Central-difference gradient of a scalar function. The step for coordinate i
 * is h·max(1, |x_i|).
 */
template <typename Function>
Eigen::VectorXd fd_gradient_oracle(Function&& fn, const Eigen::VectorXd& x, double h)
{
    if (!(h > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "finite-difference step must be positive");
    }
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(x[i]));
        probe[i] = x[i] + step;
        const double up = fn(probe);
        probe[i] = x[i] - step;
        const double down = fn(probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

inline Eigen::VectorXd fd_gradient_oracle(const ObjectiveContext& ctx, const Eigen::VectorXd& x, double h)
{
    return fd_gradient_oracle([&](const Eigen::VectorXd& p) { return total_loss(ctx, p).total; }, x, h);
}

} // namespace undistort

// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"

#include "Eigen/Core"
#include "Eigen/Geometry"

#include <cmath>
#include <string>

namespace undistort {

/// Numerical bounds shared by the camera operations.
struct GeometryLimits
{
    double z_min = 1e-4;     ///< Points at or in front of this camera depth (meters) are not projected.
    double alpha_min = 1e-3; ///< Smallest admissible focal reparameterization factor.
    double alpha_max = 20.0; ///< Largest admissible focal reparameterization factor.
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v)
{
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

/**
 * A rotation stored as an axis-angle vector (unit axis scaled by the angle in
 * radians). The matrix form is materialized on demand, so an optimizer acting
 * on the three axis-angle coordinates never accumulates orthonormality drift.
 */
class Rotation
{
public:
    Rotation() = default;
    explicit Rotation(const Eigen::Vector3d& axis_angle) : axis_angle_(axis_angle) {}

    static Rotation from_matrix(const Eigen::Matrix3d& r)
    {
        const Eigen::AngleAxisd aa(r);
        return Rotation(aa.angle() * aa.axis());
    }

    static Rotation about_axis(const Eigen::Vector3d& axis, double angle)
    {
        return Rotation(angle * axis.normalized());
    }

    const Eigen::Vector3d& axis_angle() const { return axis_angle_; }

    double angle() const { return axis_angle_.norm(); }

    // Rodrigues' formula; the coefficients switch to their Taylor series near zero.
    Eigen::Matrix3d matrix() const
    {
        const double theta2 = axis_angle_.squaredNorm();
        const double theta = std::sqrt(theta2);
        double a, b;
        if (theta < 1e-4) {
            a = 1.0 - theta2 / 6.0;
            b = 0.5 - theta2 / 24.0;
        } else {
            a = std::sin(theta) / theta;
            b = (1.0 - std::cos(theta)) / theta2;
        }
        const Eigen::Matrix3d k = skew(axis_angle_);
        return Eigen::Matrix3d::Identity() + a * k + b * k * k;
    }

    Eigen::Vector3d rotate(const Eigen::Vector3d& p) const { return matrix() * p; }

    /// Right Jacobian of SO(3) at this axis-angle: R(v + dv) ~ R(v) Exp(J_r dv).
    Eigen::Matrix3d right_jacobian() const
    {
        const double theta2 = axis_angle_.squaredNorm();
        const double theta = std::sqrt(theta2);
        double b, c;
        if (theta < 1e-4) {
            b = 0.5 - theta2 / 24.0;
            c = 1.0 / 6.0 - theta2 / 120.0;
        } else {
            b = (1.0 - std::cos(theta)) / theta2;
            c = (theta - std::sin(theta)) / (theta2 * theta);
        }
        const Eigen::Matrix3d k = skew(axis_angle_);
        return Eigen::Matrix3d::Identity() - b * k + c * k * k;
    }

    /// Derivative of R(v)·p with respect to the axis-angle coordinates v.
    Eigen::Matrix3d rotate_jacobian(const Eigen::Vector3d& p) const
    {
        return -matrix() * skew(p) * right_jacobian();
    }

private:
    Eigen::Vector3d axis_angle_ = Eigen::Vector3d::Zero();
};

/// World-to-camera rigid transform, p_c = R·p_w + T.
struct CameraExtrinsics
{
    Rotation rotation;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p_w) const { return rotation.matrix() * p_w + translation; }

    CameraExtrinsics inverse() const
    {
        const Eigen::Matrix3d rt = rotation.matrix().transpose();
        return {Rotation::from_matrix(rt), -rt * translation};
    }

    /// Camera center in world coordinates.
    Eigen::Vector3d center() const { return -rotation.matrix().transpose() * translation; }
};

inline Eigen::Vector3d world_to_camera(const CameraExtrinsics& ext, const Eigen::Vector3d& p_w)
{
    return ext.apply(p_w);
}

/**
 * Pinhole intrinsics with the effective focal length f = gamma·alpha·f0.
 * gamma is a slowly learned correction scale, alpha the distance-coupling factor.
 */
struct CameraIntrinsics
{
    double f0 = 1.0;
    double gamma = 1.0;
    double alpha = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    double focal() const { return gamma * alpha * f0; }
};

inline Eigen::Matrix3d intrinsics_matrix(const CameraIntrinsics& intr)
{
    const double f = intr.focal();
    if (!(f > 0.0) || !std::isfinite(f)) {
        throw Error(ErrorCode::non_positive_focal, "effective focal length " + std::to_string(f) + " is not positive");
    }
    Eigen::Matrix3d k;
    k << f, 0.0, intr.cx, 0.0, f, intr.cy, 0.0, 0.0, 1.0;
    return k;
}

inline Eigen::Vector2d project(const CameraIntrinsics& intr, const Eigen::Vector3d& p_c,
                               const GeometryLimits& limits = {})
{
    if (!(p_c.z() > limits.z_min)) {
        throw Error(ErrorCode::point_behind_camera, "camera-space depth " + std::to_string(p_c.z()) +
                                                        " is not beyond z_min");
    }
    const double f = intr.focal();
    return {f * p_c.x() / p_c.z() + intr.cx, f * p_c.y() / p_c.z() + intr.cy};
}

/**
 * Anchors of the focal/distance coupling. The z-translation is driven by the
 * positive scalar delta_tz through t_z = t_z0 / sqrt(delta_tz); d0 is the
 * camera-to-anchor distance (along the optical axis) when t_z = t_z0.
 */
struct ReparamAnchor
{
    double tz0 = 1.0;
    double d0 = 1.0;
    double delta_tz = 1.0;

    double tz() const { return tz0 / std::sqrt(delta_tz); }
};

/// alpha = (d0 - (t_z0 - t_z)) / d0. Out-of-range values are errors, never clamped here.
inline double compute_alpha(const ReparamAnchor& anchor, const GeometryLimits& limits = {})
{
    if (!(anchor.d0 > 0.0)) {
        throw Error(ErrorCode::degenerate_distance, "anchor distance d0 must be positive");
    }
    if (!(anchor.delta_tz > 0.0)) {
        throw Error(ErrorCode::degenerate_distance, "delta_tz must be positive");
    }
    const double alpha = (anchor.d0 - (anchor.tz0 - anchor.tz())) / anchor.d0;
    if (!(alpha > limits.alpha_min)) {
        throw Error(ErrorCode::degenerate_distance,
                    "camera reaches the face anchor (alpha = " + std::to_string(alpha) + ")");
    }
    if (alpha > limits.alpha_max) {
        throw Error(ErrorCode::degenerate_distance, "alpha = " + std::to_string(alpha) + " exceeds alpha_max");
    }
    return alpha;
}

/// Whether the effective focal follows the camera distance (reparameterized) or stays at gamma·f0.
enum class FocalCoupling { reparameterized, fixed };

/**
 * Full camera state. Constructed only through create() and the with_* updates,
 * so that t_z and alpha are always derived from the anchor rather than stored
 * independently.
 */
class CameraState
{
public:
    CameraState() = default;

    /// base supplies f0, gamma, principal point and image size; its alpha is ignored.
    static CameraState create(const Rotation& rotation, double tx, double ty, const CameraIntrinsics& base,
                              const ReparamAnchor& anchor,
                              FocalCoupling coupling = FocalCoupling::reparameterized,
                              const GeometryLimits& limits = {})
    {
        CameraState s;
        s.anchor_ = anchor;
        s.coupling_ = coupling;
        s.extrinsics_.rotation = rotation;
        s.extrinsics_.translation = {tx, ty, anchor.tz()};
        s.intrinsics_ = base;
        s.intrinsics_.alpha = coupling == FocalCoupling::reparameterized ? compute_alpha(anchor, limits) : 1.0;
        return s;
    }

    const CameraExtrinsics& extrinsics() const { return extrinsics_; }
    const CameraIntrinsics& intrinsics() const { return intrinsics_; }
    const ReparamAnchor& anchor() const { return anchor_; }
    FocalCoupling coupling() const { return coupling_; }

    double focal() const { return intrinsics_.focal(); }

    /// Camera-to-anchor distance along the optical axis, d = d0 + (t_z - t_z0) = alpha·d0.
    double distance() const { return anchor_.d0 + (extrinsics_.translation.z() - anchor_.tz0); }

    CameraState with_pose(const Rotation& rotation, double tx, double ty,
                          const GeometryLimits& limits = {}) const
    {
        return create(rotation, tx, ty, intrinsics_, anchor_, coupling_, limits);
    }

    CameraState with_delta_tz(double delta_tz, const GeometryLimits& limits = {}) const
    {
        ReparamAnchor a = anchor_;
        a.delta_tz = delta_tz;
        return create(extrinsics_.rotation, extrinsics_.translation.x(), extrinsics_.translation.y(), intrinsics_,
                      a, coupling_, limits);
    }

    CameraState with_gamma(double gamma, const GeometryLimits& limits = {}) const
    {
        CameraIntrinsics base = intrinsics_;
        base.gamma = gamma;
        return create(extrinsics_.rotation, extrinsics_.translation.x(), extrinsics_.translation.y(), base, anchor_,
                      coupling_, limits);
    }

    CameraState with_coupling(FocalCoupling coupling, const GeometryLimits& limits = {}) const
    {
        return create(extrinsics_.rotation, extrinsics_.translation.x(), extrinsics_.translation.y(), intrinsics_,
                      anchor_, coupling, limits);
    }

    /**
     * Re-anchors the coupling at the current position: f0 absorbs alpha, d0 and
     * t_z0 become the current distance and translation, delta_tz returns to 1.
     * The effective focal and the pose are unchanged.
     */
    CameraState rebased(const GeometryLimits& limits = {}) const
    {
        CameraIntrinsics base = intrinsics_;
        base.f0 = intrinsics_.alpha * intrinsics_.f0;
        const ReparamAnchor a{extrinsics_.translation.z(), distance(), 1.0};
        return create(extrinsics_.rotation, extrinsics_.translation.x(), extrinsics_.translation.y(), base, a,
                      coupling_, limits);
    }

private:
    CameraExtrinsics extrinsics_;
    CameraIntrinsics intrinsics_;
    ReparamAnchor anchor_;
    FocalCoupling coupling_ = FocalCoupling::reparameterized;
};

/**
 * Moves the camera along its optical axis to the given anchor distance. Under
 * the reparameterized coupling the focal length scales with the distance, so
 * the magnification on the anchor plane is preserved.
 */
inline CameraState set_distance(const CameraState& state, double target_d, const GeometryLimits& limits = {})
{
    if (!(target_d > 0.0) || !std::isfinite(target_d)) {
        throw Error(ErrorCode::degenerate_distance, "target distance must be positive and finite");
    }
    if (target_d == state.distance()) {
        return state;
    }
    const ReparamAnchor& a = state.anchor();
    const double tz = a.tz0 - a.d0 + target_d;
    if (!(tz * a.tz0 > 0.0)) {
        throw Error(ErrorCode::degenerate_distance,
                    "target distance requires a z-translation of opposite sign to t_z0");
    }
    const double ratio = a.tz0 / tz;
    return state.with_delta_tz(ratio * ratio, limits);
}

} // namespace undistort

// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"

#include "Eigen/Core"
#include "Eigen/LU"
#include "Eigen/SVD"

#include <cmath>

namespace undistort {

/**
 * Thin-plate spline from 2D control points to M-dimensional values.
 *
 * Control points are centred and scaled to unit RMS radius before solving, so
 * the smoothing weight lambda is independent of the pixel scale. lambda = 0
 * interpolates the values exactly.
 */
class ThinPlateSpline
{
public:
    ThinPlateSpline() = default;

    ThinPlateSpline(const Eigen::MatrixX2d& controls, const Eigen::MatrixXd& values, double lambda = 0.0)
    {
        fit(controls, values, lambda);
    }

    void fit(const Eigen::MatrixX2d& controls, const Eigen::MatrixXd& values, double lambda = 0.0)
    {
        const Eigen::Index n = controls.rows();
        if (values.rows() != n) {
            throw Error(ErrorCode::dimension_mismatch, "one value row per control point is required");
        }
        if (n < 4) {
            throw Error(ErrorCode::degenerate_control_points, "thin-plate spline needs at least four control points");
        }
        if (!(lambda >= 0.0) || !controls.allFinite() || !values.allFinite()) {
            throw Error(ErrorCode::invalid_argument, "control points, values and lambda must be finite");
        }
        centre_ = controls.colwise().mean();
        const Eigen::MatrixX2d centred = controls.rowwise() - centre_;
        const double rms = std::sqrt(centred.rowwise().squaredNorm().mean());
        if (!(rms > 0.0)) {
            throw Error(ErrorCode::degenerate_control_points, "control points coincide");
        }
        const Eigen::JacobiSVD<Eigen::MatrixX2d> svd(centred);
        if (svd.singularValues()[1] <= 1e-9 * svd.singularValues()[0]) {
            throw Error(ErrorCode::degenerate_control_points, "control points are collinear");
        }
        scale_ = 1.0 / rms;
        points_ = centred * scale_;

        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 3, n + 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double u = kernel((points_.row(i) - points_.row(j)).squaredNorm());
                a(i, j) = u;
                a(j, i) = u;
            }
            a(i, i) = lambda;
            a(i, n) = 1.0;
            a(i, n + 1) = points_(i, 0);
            a(i, n + 2) = points_(i, 1);
            a(n, i) = 1.0;
            a(n + 1, i) = points_(i, 0);
            a(n + 2, i) = points_(i, 1);
        }
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, values.cols());
        rhs.topRows(n) = values;

        const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        if (!lu.isInvertible()) {
            throw Error(ErrorCode::degenerate_control_points, "thin-plate system is singular");
        }
        const Eigen::MatrixXd sol = lu.solve(rhs);
        if (!sol.allFinite()) {
            throw Error(ErrorCode::degenerate_control_points, "thin-plate solve produced non-finite weights");
        }
        weights_ = sol.topRows(n);
        affine_ = sol.bottomRows(3);
    }

    Eigen::Index dims() const { return affine_.cols(); }

    /// Value at a point given in the caller's (unnormalized) coordinates.
    Eigen::VectorXd operator()(double x, double y) const
    {
        Eigen::VectorXd out(dims());
        evaluate(x, y, out.data());
        return out;
    }

    /// Allocation-free variant; out must hold dims() values.
    void evaluate(double x, double y, double* out) const
    {
        const double px = (x - centre_(0)) * scale_;
        const double py = (y - centre_(1)) * scale_;
        const Eigen::Index m = dims();
        for (Eigen::Index c = 0; c < m; ++c) {
            out[c] = affine_(0, c) + px * affine_(1, c) + py * affine_(2, c);
        }
        for (Eigen::Index i = 0; i < points_.rows(); ++i) {
            const double dx = px - points_(i, 0);
            const double dy = py - points_(i, 1);
            const double u = kernel(dx * dx + dy * dy);
            for (Eigen::Index c = 0; c < m; ++c) {
                out[c] += u * weights_(i, c);
            }
        }
    }

    /// U(r) = r^2 log r, written in terms of r^2.
    static double kernel(double r2) { return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0; }

private:
    Eigen::RowVector2d centre_ = Eigen::RowVector2d::Zero();
    double scale_ = 1.0;
    Eigen::MatrixX2d points_;
    Eigen::MatrixXd weights_;
    Eigen::MatrixXd affine_;
};

} // namespace undistort

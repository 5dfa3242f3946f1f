// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"

#include "Eigen/Core"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace undistort {

using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/**
 * N 2D landmarks in normalized image coordinates ([0,1]^2 spans the image),
 * with a visibility flag and a positive uncertainty per point.
 */
struct LandmarkSet
{
    Points2 points;
    std::vector<std::uint8_t> visible;
    Eigen::VectorXd sigma;

    LandmarkSet() = default;

    explicit LandmarkSet(Points2 pts, double default_sigma = 1.0)
        : points(std::move(pts)), visible(static_cast<std::size_t>(points.rows()), 1),
          sigma(Eigen::VectorXd::Constant(points.rows(), default_sigma))
    {
    }

    Eigen::Index size() const { return points.rows(); }

    bool is_visible(Eigen::Index i) const { return visible[static_cast<std::size_t>(i)] != 0; }

    void validate() const
    {
        if (static_cast<Eigen::Index>(visible.size()) != points.rows() || sigma.size() != points.rows()) {
            throw Error(ErrorCode::dimension_mismatch, "landmark points, visibility and sigma differ in length");
        }
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            if (!std::isfinite(points(i, 0)) || !std::isfinite(points(i, 1))) {
                throw Error(ErrorCode::invalid_argument, "non-finite landmark coordinate", static_cast<std::size_t>(i));
            }
            if (!(sigma[i] > 0.0) || !std::isfinite(sigma[i])) {
                throw Error(ErrorCode::invalid_argument, "landmark sigma must be positive", static_cast<std::size_t>(i));
            }
        }
    }
};

inline Points2 to_pixels(const Points2& normalized, int width, int height)
{
    Points2 px = normalized;
    px.col(0) *= static_cast<double>(width);
    px.col(1) *= static_cast<double>(height);
    return px;
}

inline Points2 to_normalized(const Points2& pixels, int width, int height)
{
    Points2 n = pixels;
    n.col(0) /= static_cast<double>(width);
    n.col(1) /= static_cast<double>(height);
    return n;
}

} // namespace undistort

// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"
#include "undistort/facemodel.hpp"
#include "undistort/geometry.hpp"
#include "undistort/image.hpp"
#include "undistort/tps.hpp"
#include "undistort/warpstitch.hpp"

#include "Eigen/Core"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace undistort {

/// Marker colours painted on the synthetic face at four labelled landmarks.
struct SceneMarker
{
    const char* label;
    std::array<float, 3> color;
};

inline constexpr std::array<SceneMarker, 4> scene_markers{{
    {"eye_left", {255.0f, 0.0f, 0.0f}},
    {"eye_right", {0.0f, 255.0f, 0.0f}},
    {"nose_left", {0.0f, 0.0f, 255.0f}},
    {"nose_right", {255.0f, 255.0f, 0.0f}},
}};

struct SceneOptions
{
    double background_z = 0.35;   ///< world z of the backdrop plane (the face looks towards -z)
    double marker_radius = 0.004; ///< meters
    double coarse_step = 0.001;   ///< height-field grid, meters
    double pixel_fraction = 0.3;  ///< surface sample spacing in pixels at the nearest landmark
    int threads = 1;
};

struct SceneRender
{
    Image image;       ///< 8-bit
    DepthImage depth;  ///< camera z of the visible surface
};

/**
 * Renders the face as a textured height field through its landmarks in front
 * of a checkered backdrop plane. The height field interpolates the landmark
 * depths with a thin-plate spline over the landmarks' convex hull; it is
 * tabulated on a coarse grid and point-splatted with a z-buffer.
 */
inline SceneRender render_scene(const FaceModel& model, const FaceLatent& latent, const CameraState& cam,
                                const SceneOptions& options = {})
{
    const int w = cam.intrinsics().width;
    const int h = cam.intrinsics().height;
    if (w < 1 || h < 1) {
        throw Error(ErrorCode::invalid_dimensions, "camera has no image size");
    }
    const Points3 s = shape(model, latent);
    const Eigen::Matrix3d r = cam.extrinsics().rotation.matrix();
    const Eigen::Vector3d t = cam.extrinsics().translation;
    const CameraIntrinsics& k = cam.intrinsics();
    const double f = k.focal();

    SceneRender out;
    out.image = Image::create(w, h);
    out.depth = DepthImage::create(w, h);
    std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());

    // Backdrop by ray casting.
    const Eigen::Vector3d centre = -r.transpose() * t;
    detail::parallel_rows(h, options.threads, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const Eigen::Vector3d dir = r.transpose() * Eigen::Vector3d((x - k.cx) / f, (y - k.cy) / f, 1.0);
            if (!(std::abs(dir.z()) > 1e-12)) {
                continue;
            }
            const double lambda = (options.background_z - centre.z()) / dir.z();
            if (!(lambda > 0.0)) {
                continue;
            }
            const Eigen::Vector3d p = centre + lambda * dir;
            const int cx = static_cast<int>(std::floor(p.x() / 0.02));
            const int cy = static_cast<int>(std::floor(p.y() / 0.02));
            const bool dark = ((cx + cy) & 1) != 0;
            const float shade = 20.0f * static_cast<float>(std::sin(2.0 * std::numbers::pi * p.x() / 0.13));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            out.image.data[i * 3 + 0] = std::round((dark ? 70.0f : 140.0f) + shade);
            out.image.data[i * 3 + 1] = std::round((dark ? 70.0f : 140.0f) + shade);
            out.image.data[i * 3 + 2] = std::round((dark ? 85.0f : 155.0f) + shade);
            zbuf[i] = lambda;
        }
    });

    // Height field z(x, y) over the landmark hull in model coordinates.
    const Points2 xy = s.leftCols<2>();
    const Eigen::MatrixXd zs = s.col(2);
    const ThinPlateSpline surface(xy, zs, 0.0);
    const auto hull = detail::convex_hull(xy);
    const double xmin = xy.col(0).minCoeff(), xmax = xy.col(0).maxCoeff();
    const double ymin = xy.col(1).minCoeff(), ymax = xy.col(1).maxCoeff();
    const int gw = static_cast<int>(std::ceil((xmax - xmin) / options.coarse_step)) + 2;
    const int gh = static_cast<int>(std::ceil((ymax - ymin) / options.coarse_step)) + 2;
    std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
    detail::parallel_rows(gh, options.threads, [&](int j) {
        for (int i = 0; i < gw; ++i) {
            double z = 0.0;
            surface.evaluate(xmin + i * options.coarse_step, ymin + j * options.coarse_step, &z);
            grid[static_cast<std::size_t>(j) * gw + i] = z;
        }
    });
    auto height = [&](double x, double y) {
        const double gx = (x - xmin) / options.coarse_step;
        const double gy = (y - ymin) / options.coarse_step;
        const int i0 = std::clamp(static_cast<int>(gx), 0, gw - 2);
        const int j0 = std::clamp(static_cast<int>(gy), 0, gh - 2);
        const double fx = gx - i0, fy = gy - j0;
        auto g = [&](int i, int j) { return grid[static_cast<std::size_t>(j) * gw + i]; };
        return (1 - fy) * ((1 - fx) * g(i0, j0) + fx * g(i0 + 1, j0)) + fy * ((1 - fx) * g(i0, j0 + 1) + fx * g(i0 + 1, j0 + 1));
    };

    double zmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        zmin = std::min(zmin, (r * s.row(i).transpose() + t).z());
    }
    if (!(zmin > 0.0)) {
        throw Error(ErrorCode::point_behind_camera, "face lies behind the camera");
    }
    const double step = options.pixel_fraction * zmin / f;

    std::vector<std::pair<Eigen::Vector2d, std::array<float, 3>>> markers;
    for (const auto& m : scene_markers) {
        if (const auto idx = model.find_label(m.label)) {
            markers.push_back({s.row(*idx).head<2>().transpose(), m.color});
        }
    }

    const int nx = static_cast<int>(std::ceil((xmax - xmin) / step)) + 1;
    const int ny = static_cast<int>(std::ceil((ymax - ymin) / step)) + 1;
    for (int j = 0; j < ny; ++j) {
        const double y = ymin + j * step;
        for (int i = 0; i < nx; ++i) {
            const double x = xmin + i * step;
            if (!detail::inside_hull(hull, x, y)) {
                continue;
            }
            const Eigen::Vector3d pc = r * Eigen::Vector3d(x, y, height(x, y)) + t;
            if (!(pc.z() > 1e-6)) {
                continue;
            }
            const double u = std::round(f * pc.x() / pc.z() + k.cx);
            const double v = std::round(f * pc.y() / pc.z() + k.cy);
            if (u < 0 || v < 0 || u > w - 1 || v > h - 1) {
                continue;
            }
            const std::size_t d = static_cast<std::size_t>(v) * w + static_cast<std::size_t>(u);
            if (!(pc.z() < zbuf[d])) {
                continue;
            }
            zbuf[d] = pc.z();
            std::array<float, 3> color{
                static_cast<float>(205.0 + 22.0 * std::sin(2.0 * std::numbers::pi * x / 0.021) *
                                               std::cos(2.0 * std::numbers::pi * y / 0.027)),
                static_cast<float>(160.0 + 18.0 * std::sin(2.0 * std::numbers::pi * (x + y) / 0.033)),
                static_cast<float>(130.0 + 15.0 * std::cos(2.0 * std::numbers::pi * (x - y) / 0.029)),
            };
            for (const auto& [centre_xy, mc] : markers) {
                if ((Eigen::Vector2d(x, y) - centre_xy).norm() <= options.marker_radius) {
                    color = mc;
                }
            }
            for (std::size_t c = 0; c < 3; ++c) {
                out.image.data[d * 3 + c] = std::round(color[c]);
            }
        }
    }
    for (std::size_t i = 0; i < zbuf.size(); ++i) {
        if (std::isfinite(zbuf[i])) {
            out.depth.depth[i] = static_cast<float>(zbuf[i]);
            out.depth.valid[i] = 1;
        }
    }
    return out;
}

/// Centroid of the pixels within `tolerance` (Euclidean, 8-bit units) of a colour.
inline std::optional<Eigen::Vector2d> color_centroid(const Image& img, const std::array<float, 3>& color,
                                                     double tolerance = 60.0)
{
    double sx = 0.0, sy = 0.0, n = 0.0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = img.at(x, y, c) - color[static_cast<std::size_t>(c)];
                d2 += d * d;
            }
            if (d2 <= tolerance * tolerance) {
                sx += x;
                sy += y;
                n += 1.0;
            }
        }
    }
    if (n == 0.0) {
        return std::nullopt;
    }
    return Eigen::Vector2d(sx / n, sy / n);
}

/// Nose-wing span over interocular span measured from the painted markers.
inline double measured_nose_ratio(const Image& img)
{
    std::array<Eigen::Vector2d, 4> c;
    for (std::size_t i = 0; i < scene_markers.size(); ++i) {
        const auto p = color_centroid(img, scene_markers[i].color);
        if (!p) {
            throw Error(ErrorCode::missing_labels, std::string("marker for ") + scene_markers[i].label +
                                                       " not found in the image");
        }
        c[i] = *p;
    }
    return (c[2] - c[3]).norm() / (c[0] - c[1]).norm();
}

} // namespace undistort

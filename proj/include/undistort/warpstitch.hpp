// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"
#include "undistort/facemodel.hpp"
#include "undistort/geometry.hpp"
#include "undistort/image.hpp"
#include "undistort/landmarks.hpp"
#include "undistort/solver.hpp"
#include "undistort/tps.hpp"

#include "Eigen/Core"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

// Pixel (x, y) of an image covers the square centred on the continuous
// coordinate (x, y), the convention used by project().

namespace undistort {

struct CropRect
{
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool inside(int w, int h) const { return x >= 0 && y >= 0 && width > 0 && height > 0 && x + width <= w && y + height <= h; }
};

struct DepthAlignment
{
    DepthImage depth;   ///< full frame, face depth composited over the aligned full depth
    double scale = 1.0;
    double offset = 0.0;
    int overlap = 0;
};

/**
 * Fits face ≈ scale·full + offset over the crop pixels valid in both maps,
 * then composites the face depth over the aligned full depth. The face weight
 * ramps from 0 at the crop border to 1 at `feather` pixels inside it.
 */
inline DepthAlignment align_depth(const DepthImage& face, const DepthImage& full, const CropRect& crop,
                                  double feather = 16.0, int min_overlap = 100)
{
    if (!crop.inside(full.width, full.height)) {
        throw Error(ErrorCode::invalid_argument, "crop rectangle lies outside the full depth map");
    }
    if (face.width != crop.width || face.height != crop.height) {
        throw Error(ErrorCode::dimension_mismatch, "face depth must have the crop's dimensions");
    }
    double n = 0.0, sf = 0.0, sg = 0.0;
    for (int j = 0; j < crop.height; ++j) {
        for (int i = 0; i < crop.width; ++i) {
            if (face.is_valid(i, j) && full.is_valid(crop.x + i, crop.y + j)) {
                n += 1.0;
                sf += full.at(crop.x + i, crop.y + j);
                sg += face.at(i, j);
            }
        }
    }
    if (n < min_overlap) {
        throw Error(ErrorCode::insufficient_overlap, "only " + std::to_string(static_cast<int>(n)) +
                                                         " pixels are valid in both depth maps");
    }
    const double mf = sf / n;
    const double mg = sg / n;
    double cov = 0.0, var = 0.0;
    for (int j = 0; j < crop.height; ++j) {
        for (int i = 0; i < crop.width; ++i) {
            if (face.is_valid(i, j) && full.is_valid(crop.x + i, crop.y + j)) {
                const double df = full.at(crop.x + i, crop.y + j) - mf;
                cov += df * (face.at(i, j) - mg);
                var += df * df;
            }
        }
    }
    DepthAlignment out;
    out.overlap = static_cast<int>(n);
    // A constant full depth only fixes the offset.
    out.scale = var > 1e-300 ? cov / var : 1.0;
    out.offset = mg - out.scale * mf;

    out.depth = DepthImage::create(full.width, full.height);
    for (int y = 0; y < full.height; ++y) {
        for (int x = 0; x < full.width; ++x) {
            if (full.is_valid(x, y)) {
                out.depth.set(x, y, static_cast<float>(out.scale * full.at(x, y) + out.offset));
            }
        }
    }
    for (int j = 0; j < crop.height; ++j) {
        for (int i = 0; i < crop.width; ++i) {
            if (!face.is_valid(i, j)) {
                continue;
            }
            const int x = crop.x + i;
            const int y = crop.y + j;
            const double edge = std::min({i + 1, crop.width - i, j + 1, crop.height - j});
            double w = feather > 0.0 ? std::min(1.0, edge / feather) : 1.0;
            if (!full.is_valid(x, y)) {
                w = 1.0;
            }
            const double base = out.scale * full.at(x, y) + out.offset;
            out.depth.set(x, y, static_cast<float>(w * face.at(i, j) + (1.0 - w) * base));
        }
    }
    return out;
}

struct ReprojectOptions
{
    int supersample = 2;
    int fill_iterations = 50;
    int threads = 1;
};

struct Reprojection
{
    Image image;
    std::vector<std::uint8_t> valid; ///< 1 where a source sample landed, 0 on filled holes
    DepthImage depth;                ///< destination camera z
    FlowField flow;                  ///< per source pixel: destination position minus source position
};

/**
 * Moves every valid source pixel into the destination camera through its
 * depth. Each pixel is split into supersample² samples that are splatted to
 * the nearest destination pixel with a z-buffer; holes are then filled by
 * averaging already-known 8-neighbours, for at most fill_iterations rounds.
 */
inline Reprojection depth_reproject(const Image& img, const DepthImage& depth, const CameraState& src,
                                    const CameraState& dst, const ReprojectOptions& options = {})
{
    if (depth.width != img.width || depth.height != img.height) {
        throw Error(ErrorCode::dimension_mismatch, "depth map and image differ in size");
    }
    if (options.supersample < 1 || options.fill_iterations < 0) {
        throw Error(ErrorCode::invalid_argument, "supersample must be >= 1 and fill_iterations >= 0");
    }
    const int w = img.width;
    const int h = img.height;
    const int ss = options.supersample;
    const CameraIntrinsics& ki = src.intrinsics();
    const CameraIntrinsics& ko = dst.intrinsics();
    const double fi = ki.focal();
    const double fo = ko.focal();
    if (!(fi > 0.0) || !(fo > 0.0)) {
        throw Error(ErrorCode::non_positive_focal, "reprojection needs positive focal lengths");
    }
    const Eigen::Matrix3d rs = src.extrinsics().rotation.matrix();
    const Eigen::Matrix3d m = dst.extrinsics().rotation.matrix() * rs.transpose();
    const Eigen::Vector3d t = dst.extrinsics().translation - m * src.extrinsics().translation;

    Reprojection out;
    out.flow = FlowField::create(w, h);
    const std::size_t per_row = static_cast<std::size_t>(w) * ss * ss;
    // Splat targets per sample: x, y, z. NaN marks samples that do not land.
    std::vector<double> samples(static_cast<std::size_t>(h) * per_row * 3, std::numeric_limits<double>::quiet_NaN());

    auto map = [&](double x, double y, double z, Eigen::Vector3d& q) {
        const Eigen::Vector3d pc((x - ki.cx) * z / fi, (y - ki.cy) * z / fi, z);
        const Eigen::Vector3d pd = m * pc + t;
        if (!(pd.z() > 1e-9)) {
            return false;
        }
        q = {fo * pd.x() / pd.z() + ko.cx, fo * pd.y() / pd.z() + ko.cy, pd.z()};
        return true;
    };

    detail::parallel_rows(h, options.threads, [&](int y) {
        double* row = samples.data() + static_cast<std::size_t>(y) * per_row * 3;
        for (int x = 0; x < w; ++x) {
            if (!depth.is_valid(x, y)) {
                continue;
            }
            const double z = depth.at(x, y);
            Eigen::Vector3d q;
            if (map(x, y, z, q)) {
                const std::size_t fi_idx = out.flow.index(x, y);
                out.flow.dx[fi_idx] = q.x() - x;
                out.flow.dy[fi_idx] = q.y() - y;
                out.flow.valid[fi_idx] = 1;
            }
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) {
                    const double ox = (sx + 0.5) / ss - 0.5;
                    const double oy = (sy + 0.5) / ss - 0.5;
                    if (!map(x + ox, y + oy, z, q)) {
                        continue;
                    }
                    double* s = row + ((static_cast<std::size_t>(x) * ss + sy) * ss + sx) * 3;
                    s[0] = q.x();
                    s[1] = q.y();
                    s[2] = q.z();
                }
            }
        }
    });

    out.image = Image::create(w, h, img.format);
    out.depth = DepthImage::create(w, h);
    out.valid.assign(static_cast<std::size_t>(w) * h, 0);
    std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
    std::vector<int> owner(static_cast<std::size_t>(w) * h, -1);
    for (int y = 0; y < h; ++y) {
        const double* row = samples.data() + static_cast<std::size_t>(y) * per_row * 3;
        for (std::size_t k = 0; k < per_row; ++k) {
            const double* s = row + k * 3;
            if (std::isnan(s[0])) {
                continue;
            }
            const double tx = std::round(s[0]);
            const double ty = std::round(s[1]);
            if (tx < 0 || ty < 0 || tx > w - 1 || ty > h - 1) {
                continue;
            }
            const std::size_t d = static_cast<std::size_t>(ty) * w + static_cast<std::size_t>(tx);
            if (s[2] < zbuf[d]) {
                zbuf[d] = s[2];
                owner[d] = y * w + static_cast<int>(k / (static_cast<std::size_t>(ss) * ss));
            }
        }
    }
    for (std::size_t d = 0; d < owner.size(); ++d) {
        if (owner[d] < 0) {
            continue;
        }
        const std::size_t srcpix = static_cast<std::size_t>(owner[d]);
        for (int c = 0; c < 3; ++c) {
            out.image.data[d * 3 + c] = img.data[srcpix * 3 + c];
        }
        out.depth.depth[d] = static_cast<float>(zbuf[d]);
        out.depth.valid[d] = 1;
        out.valid[d] = 1;
    }

    std::vector<std::uint8_t> known = out.valid;
    for (int it = 0; it < options.fill_iterations; ++it) {
        std::vector<std::uint8_t> next = known;
        Image filled = out.image;
        std::vector<float> fdepth = out.depth.depth;
        bool any_missing = false;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t d = static_cast<std::size_t>(y) * w + x;
                if (known[d]) {
                    continue;
                }
                any_missing = true;
                double acc[3] = {0.0, 0.0, 0.0};
                double zacc = 0.0;
                int count = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h) {
                            continue;
                        }
                        const std::size_t nd = static_cast<std::size_t>(ny) * w + nx;
                        if (!known[nd]) {
                            continue;
                        }
                        for (int c = 0; c < 3; ++c) {
                            acc[c] += out.image.data[nd * 3 + c];
                        }
                        zacc += out.depth.depth[nd];
                        ++count;
                    }
                }
                if (count > 0) {
                    for (int c = 0; c < 3; ++c) {
                        filled.data[d * 3 + c] = static_cast<float>(acc[c] / count);
                    }
                    fdepth[d] = static_cast<float>(zacc / count);
                    next[d] = 1;
                }
            }
        }
        if (!any_missing) {
            break;
        }
        out.image = std::move(filled);
        out.depth.depth = std::move(fdepth);
        known = std::move(next);
    }
    return out;
}

struct FlowOptions
{
    double lambda = 1e-6;  ///< thin-plate smoothing in normalized control coordinates
    double falloff = 1.5;  ///< flow reaches zero at this multiple of the landmark radius
    int threads = 1;
};

/**
 * Dense displacement interpolating dst - src at the src control points. The
 * flow is attenuated with a raised cosine between the landmark radius R
 * (largest distance of a control point from their centroid) and falloff·R,
 * and is exactly zero beyond.
 */
class LandmarkFlow
{
public:
    LandmarkFlow(const Points2& src, const Points2& dst, const FlowOptions& options = {}) : options_(options)
    {
        if (src.rows() != dst.rows()) {
            throw Error(ErrorCode::dimension_mismatch, "source and destination landmark counts differ");
        }
        if (!(options.falloff > 1.0)) {
            throw Error(ErrorCode::invalid_argument, "flow falloff must exceed 1");
        }
        const Eigen::MatrixX2d controls = src;
        const Eigen::MatrixXd values = dst - src;
        tps_.fit(controls, values, options.lambda);
        centre_ = src.colwise().mean().transpose();
        radius_ = std::sqrt((src.rowwise() - centre_.transpose()).rowwise().squaredNorm().maxCoeff());
    }

    double attenuation(double x, double y) const
    {
        const double r = std::hypot(x - centre_.x(), y - centre_.y());
        if (r <= radius_) {
            return 1.0;
        }
        const double outer = options_.falloff * radius_;
        if (r >= outer) {
            return 0.0;
        }
        return 0.5 * (1.0 + std::cos(std::numbers::pi * (r - radius_) / (outer - radius_)));
    }

    Eigen::Vector2d at(double x, double y) const
    {
        const double a = attenuation(x, y);
        if (a == 0.0) {
            return Eigen::Vector2d::Zero();
        }
        Eigen::Vector2d v;
        tps_.evaluate(x, y, v.data());
        return a * v;
    }

    FlowField rasterize(int width, int height) const
    {
        FlowField f = FlowField::create(width, height);
        detail::parallel_rows(height, options_.threads, [&](int y) {
            for (int x = 0; x < width; ++x) {
                const Eigen::Vector2d v = at(x, y);
                const std::size_t i = f.index(x, y);
                f.dx[i] = v.x();
                f.dy[i] = v.y();
                f.valid[i] = 1;
            }
        });
        return f;
    }

    double radius() const { return radius_; }
    const Eigen::Vector2d& centre() const { return centre_; }

private:
    FlowOptions options_;
    ThinPlateSpline tps_;
    Eigen::Vector2d centre_ = Eigen::Vector2d::Zero();
    double radius_ = 0.0;
};

inline FlowField landmark_flow(const Points2& src_px, const Points2& dst_px, int width, int height,
                               const FlowOptions& options = {})
{
    return LandmarkFlow(src_px, dst_px, options).rasterize(width, height);
}

/// fg·alpha + bg·(1 - alpha) per pixel.
inline Image blend(const Image& fg, const Image& bg, const Mask& alpha)
{
    if (fg.width != bg.width || fg.height != bg.height || alpha.width != fg.width || alpha.height != fg.height) {
        throw Error(ErrorCode::dimension_mismatch, "blend inputs differ in size");
    }
    if (fg.format != bg.format) {
        throw Error(ErrorCode::dimension_mismatch, "blend inputs differ in pixel format");
    }
    Image out = Image::create(fg.width, fg.height, fg.format);
    for (std::size_t i = 0; i < alpha.values.size(); ++i) {
        const float a = alpha.values[i];
        if (!(a >= 0.0f && a <= 1.0f)) {
            throw Error(ErrorCode::invalid_argument, "blend weights must lie in [0, 1]");
        }
        for (std::size_t c = 0; c < 3; ++c) {
            const float f = fg.data[i * 3 + c];
            const float b = bg.data[i * 3 + c];
            out.data[i * 3 + c] = a == 1.0f ? f : a == 0.0f ? b : a * f + (1.0f - a) * b;
        }
    }
    return out;
}

namespace detail {

/// Counter-clockwise convex hull (in image axes), collinear points dropped.
inline std::vector<Eigen::Vector2d> convex_hull(const Points2& pts)
{
    std::vector<Eigen::Vector2d> p;
    p.reserve(static_cast<std::size_t>(pts.rows()));
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        p.emplace_back(pts(i, 0), pts(i, 1));
    }
    std::sort(p.begin(), p.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    if (p.size() < 3) {
        return p;
    }
    auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    std::vector<Eigen::Vector2d> hull(2 * p.size());
    std::size_t k = 0;
    for (const auto& q : p) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], q) <= 0.0) {
            --k;
        }
        hull[k++] = q;
    }
    for (std::size_t i = p.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], p[i]) <= 0.0) {
            --k;
        }
        hull[k++] = p[i];
    }
    hull.resize(k - 1);
    return hull;
}

inline bool inside_hull(const std::vector<Eigen::Vector2d>& hull, double x, double y)
{
    if (hull.size() < 3) {
        return false;
    }
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        if ((b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x()) < 0.0) {
            return false;
        }
    }
    return true;
}

/// Separable Gaussian blur; taps falling outside the image are dropped and the rest renormalized.
inline std::vector<float> gaussian_blur(const std::vector<float>& src, int w, int h, double sigma, int threads)
{
    if (!(sigma > 0.0)) {
        return src;
    }
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    }
    std::vector<float> tmp(src.size());
    std::vector<float> out(src.size());
    parallel_rows(h, threads, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int i = std::max(-radius, -x); i <= std::min(radius, w - 1 - x); ++i) {
                const double kw = k[static_cast<std::size_t>(i + radius)];
                acc += kw * src[static_cast<std::size_t>(y) * w + x + i];
                wsum += kw;
            }
            tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc / wsum);
        }
    });
    parallel_rows(h, threads, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int i = std::max(-radius, -y); i <= std::min(radius, h - 1 - y); ++i) {
                const double kw = k[static_cast<std::size_t>(i + radius)];
                acc += kw * tmp[static_cast<std::size_t>(y + i) * w + x];
                wsum += kw;
            }
            out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc / wsum);
        }
    });
    return out;
}

} // namespace detail

/// Binary convex hull of the points blurred with a Gaussian of the given sigma (pixels).
inline Mask feathered_hull_mask(const Points2& points_px, int width, int height, double sigma = 8.0, int threads = 1)
{
    const auto hull = detail::convex_hull(points_px);
    Mask m = Mask::create(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            m.values[static_cast<std::size_t>(y) * width + x] = detail::inside_hull(hull, x, y) ? 1.0f : 0.0f;
        }
    }
    m.values = detail::gaussian_blur(m.values, width, height, sigma, threads);
    for (float& v : m.values) {
        v = v > 1.0f - 1e-6f ? 1.0f : v < 1e-6f ? 0.0f : v;
    }
    return m;
}

struct CorrectionOptions
{
    FlowOptions flow;
    ReprojectOptions reproject;
    double hull_sigma = 8.0;   ///< feather of the face mask, pixels
    double depth_feather = 16.0;
    int threads = 1;
};

struct Correction
{
    Image image;
    Mask mask;                  ///< face weight used in the final blend
    Reprojection background;
    DepthAlignment depth;
    CameraState far_cam;
    Points2 near_px;            ///< recovered landmarks seen from the solved camera
    Points2 far_px;             ///< the same landmarks seen from the far camera
};

/**
 * Renders the portrait as seen from target_scale times the recovered distance
 * with the focal length scaled to keep the face size. The background follows
 * the depth map, the face follows a thin-plate warp of the recovered
 * landmarks, and the two are blended with a feathered face mask.
 */
inline Correction correct_portrait(const Image& img, const DepthImage& depth, const LandmarkSet& observed,
                                   const FaceModel& model, const InversionSolution& solution, double target_scale,
                                   const CorrectionOptions& options = {})
{
    if (depth.empty()) {
        throw Error(ErrorCode::invalid_argument, "portrait correction needs a depth map; pass one with --depth");
    }
    if (depth.width != img.width || depth.height != img.height) {
        throw Error(ErrorCode::dimension_mismatch, "depth map and image differ in size");
    }
    if (!(target_scale > 0.0) || !std::isfinite(target_scale)) {
        throw Error(ErrorCode::invalid_argument, "target scale must be positive");
    }
    if (observed.size() != model.n_landmarks()) {
        throw Error(ErrorCode::dimension_mismatch, "landmark count does not match the model");
    }
    const int w = img.width;
    const int h = img.height;
    const CameraState& cam = solution.cam;
    if (cam.intrinsics().width != w || cam.intrinsics().height != h) {
        throw Error(ErrorCode::dimension_mismatch, "solution camera and image differ in size");
    }

    Correction out;
    out.far_cam = set_distance(cam, target_scale * cam.distance());
    const Points3 s = shape(model, solution.latent);
    const Points2 near_all = project_points(s, cam);
    const Points2 far_all = project_points(s, out.far_cam);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < observed.size(); ++i) {
        if (observed.is_visible(i)) {
            keep.push_back(i);
        }
    }
    out.near_px.resize(static_cast<Eigen::Index>(keep.size()), 2);
    out.far_px.resize(static_cast<Eigen::Index>(keep.size()), 2);
    Eigen::MatrixXd zc(static_cast<Eigen::Index>(keep.size()), 1);
    const Eigen::Matrix3d r = cam.extrinsics().rotation.matrix();
    for (std::size_t k = 0; k < keep.size(); ++k) {
        const auto i = keep[k];
        const auto kk = static_cast<Eigen::Index>(k);
        out.near_px.row(kk) = near_all.row(i);
        out.far_px.row(kk) = far_all.row(i);
        zc(kk, 0) = (r * s.row(i).transpose() + cam.extrinsics().translation).z();
    }

    // Depth of the recovered face over its bounding box, used to bring the
    // supplied depth map into the solved camera's metric frame.
    const auto hull = detail::convex_hull(out.near_px);
    const int x0 = std::clamp(static_cast<int>(std::floor(out.near_px.col(0).minCoeff())), 0, w - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(out.near_px.col(1).minCoeff())), 0, h - 1);
    const int x1 = std::clamp(static_cast<int>(std::ceil(out.near_px.col(0).maxCoeff())), 0, w - 1);
    const int y1 = std::clamp(static_cast<int>(std::ceil(out.near_px.col(1).maxCoeff())), 0, h - 1);
    const CropRect crop{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    const ThinPlateSpline face_z(out.near_px, zc, options.flow.lambda);
    DepthImage face_depth = DepthImage::create(crop.width, crop.height);
    detail::parallel_rows(crop.height, options.threads, [&](int j) {
        for (int i = 0; i < crop.width; ++i) {
            const double x = crop.x + i;
            const double y = crop.y + j;
            if (detail::inside_hull(hull, x, y)) {
                double z = 0.0;
                face_z.evaluate(x, y, &z);
                face_depth.set(i, j, static_cast<float>(z));
            }
        }
    });
    out.depth = align_depth(face_depth, depth, crop, options.depth_feather);

    ReprojectOptions ro = options.reproject;
    ro.threads = options.threads;
    out.background = depth_reproject(img, out.depth.depth, cam, out.far_cam, ro);

    FlowOptions fo = options.flow;
    fo.threads = options.threads;
    const LandmarkFlow backward(out.far_px, out.near_px, fo);
    Image face = Image::create(w, h, img.format);
    detail::parallel_rows(h, options.threads, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const Eigen::Vector2d d = backward.at(x, y);
            const auto px = sample_bilinear(img, x + d.x(), y + d.y());
            for (int c = 0; c < 3; ++c) {
                face.at(x, y, c) = px[static_cast<std::size_t>(c)];
            }
        }
    });
    out.mask = feathered_hull_mask(out.far_px, w, h, options.hull_sigma, options.threads);
    out.image = blend(face, out.background.image, out.mask);
    return out;
}

} // namespace undistort

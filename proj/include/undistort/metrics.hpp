// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"
#include "undistort/image.hpp"
#include "undistort/landmarks.hpp"

#include "Eigen/Core"
#include "Eigen/Geometry"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <numbers>
#include <vector>

namespace undistort {

/// x -> scale·R(angle)·x + translation
struct SimilarityTransform
{
    double scale = 1.0;
    double angle = 0.0; ///< radians, counter-clockwise in the (u, v) axes
    Eigen::Vector2d translation = Eigen::Vector2d::Zero();

    Eigen::Matrix2d linear() const { return scale * Eigen::Rotation2Dd(angle).toRotationMatrix(); }

    Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return linear() * p + translation; }

    Points2 apply(const Points2& pts) const
    {
        const Eigen::Matrix2d a = linear();
        Points2 out(pts.rows(), 2);
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            out.row(i) = (a * pts.row(i).transpose() + translation).transpose();
        }
        return out;
    }

    SimilarityTransform inverse() const
    {
        if (!(scale > 0.0)) {
            throw Error(ErrorCode::degenerate_configuration, "similarity scale must be positive");
        }
        SimilarityTransform inv;
        inv.scale = 1.0 / scale;
        inv.angle = -angle;
        inv.translation = -(inv.linear() * translation);
        return inv;
    }

    SimilarityTransform compose(const SimilarityTransform& inner) const
    {
        SimilarityTransform c;
        c.scale = scale * inner.scale;
        c.angle = std::remainder(angle + inner.angle, 2.0 * std::numbers::pi);
        c.translation = linear() * inner.translation + translation;
        return c;
    }
};

struct Alignment
{
    SimilarityTransform transform;
    double rms = 0.0;
};

/// Least-squares similarity taking src onto dst (centred cross-covariance, Umeyama's closed form).
inline Alignment procrustes_align(const Points2& src, const Points2& dst)
{
    if (src.rows() != dst.rows()) {
        throw Error(ErrorCode::dimension_mismatch, "landmark sets differ in length");
    }
    const Eigen::Index n = src.rows();
    if (n < 2) {
        throw Error(ErrorCode::degenerate_configuration, "alignment needs at least two points");
    }
    const Eigen::RowVector2d ms = src.colwise().mean();
    const Eigen::RowVector2d md = dst.colwise().mean();
    const Points2 a = src.rowwise() - ms;
    const Points2 b = dst.rowwise() - md;
    const double var_s = a.squaredNorm() / static_cast<double>(n);
    if (!(var_s > 0.0) || !(b.squaredNorm() > 0.0)) {
        throw Error(ErrorCode::degenerate_configuration, "all points coincide");
    }
    // For 2D the optimal rotation follows from the two independent entries of the covariance.
    const Eigen::Matrix2d cov = b.transpose() * a / static_cast<double>(n);
    const double sc = cov(0, 0) + cov(1, 1);
    const double ss = cov(1, 0) - cov(0, 1);
    Alignment out;
    out.transform.angle = std::atan2(ss, sc);
    out.transform.scale = std::hypot(sc, ss) / var_s;
    out.transform.translation = md.transpose() - out.transform.linear() * ms.transpose();
    const Points2 mapped = out.transform.apply(src);
    out.rms = std::sqrt((mapped - dst).rowwise().squaredNorm().mean());
    return out;
}

inline Alignment procrustes_align(const LandmarkSet& src, const LandmarkSet& dst)
{
    return procrustes_align(src.points, dst.points);
}

/**
 * Mean landmark distance after aligning output onto reference, in units of
 * the reference interocular distance.
 */
inline double landmark_error(const Points2& output, const Points2& reference, std::array<int, 2> eyes = {1, 2})
{
    if (output.rows() != reference.rows()) {
        throw Error(ErrorCode::dimension_mismatch, "landmark sets differ in length");
    }
    for (int e : eyes) {
        if (e < 0 || e >= reference.rows()) {
            throw Error(ErrorCode::invalid_argument, "eye index out of range");
        }
    }
    const double interocular = (reference.row(eyes[0]) - reference.row(eyes[1])).norm();
    if (!(interocular > 0.0)) {
        throw Error(ErrorCode::degenerate_configuration, "reference eyes coincide");
    }
    const Alignment al = procrustes_align(output, reference);
    const Points2 mapped = al.transform.apply(output);
    return (mapped - reference).rowwise().norm().mean() / interocular;
}

inline double landmark_error(const LandmarkSet& output, const LandmarkSet& reference, std::array<int, 2> eyes = {1, 2})
{
    return landmark_error(output.points, reference.points, eyes);
}

namespace detail {

inline void check_pair(const Image& a, const Image& b, const Mask* mask)
{
    if (a.width != b.width || a.height != b.height) {
        throw Error(ErrorCode::dimension_mismatch, "images differ in size");
    }
    if (a.format != b.format) {
        throw Error(ErrorCode::dimension_mismatch, "images differ in pixel format");
    }
    if (mask && (mask->width != a.width || mask->height != a.height)) {
        throw Error(ErrorCode::dimension_mismatch, "mask and images differ in size");
    }
}

} // namespace detail

/// Peak signal-to-noise ratio in dB over all channels; +inf for identical images.
inline double psnr(const Image& a, const Image& b, const Mask* mask = nullptr)
{
    detail::check_pair(a, b, mask);
    double se = 0.0;
    double weight = 0.0;
    const std::size_t n = static_cast<std::size_t>(a.width) * a.height;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = mask ? mask->values[i] : 1.0;
        for (std::size_t c = 0; c < 3; ++c) {
            const double d = static_cast<double>(a.data[i * 3 + c]) - b.data[i * 3 + c];
            se += m * d * d;
        }
        weight += 3.0 * m;
    }
    if (!(weight > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "mask selects no pixels");
    }
    const double mse = se / weight;
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double peak = a.peak();
    return 10.0 * std::log10(peak * peak / mse);
}

inline std::vector<double> luma(const Image& img)
{
    std::vector<double> y(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = 0.299 * img.data[i * 3] + 0.587 * img.data[i * 3 + 1] + 0.114 * img.data[i * 3 + 2];
    }
    return y;
}

struct SsimOptions
{
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/**
 * Mean structural similarity of the luma channels over every window that
 * fits inside the image. With a mask, windows are weighted by the mask value
 * at their centre.
 */
inline double ssim(const Image& a, const Image& b, const Mask* mask = nullptr, const SsimOptions& opt = {})
{
    detail::check_pair(a, b, mask);
    const int w = a.width;
    const int h = a.height;
    const int half = opt.window / 2;
    if (opt.window < 1 || opt.window % 2 == 0 || w < opt.window || h < opt.window) {
        throw Error(ErrorCode::invalid_dimensions, "image smaller than the SSIM window");
    }
    std::vector<double> g(static_cast<std::size_t>(opt.window));
    double gsum = 0.0;
    for (int i = 0; i < opt.window; ++i) {
        g[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - half) * (i - half) / (opt.sigma * opt.sigma));
        gsum += g[static_cast<std::size_t>(i)];
    }
    for (double& v : g) {
        v /= gsum;
    }
    const std::vector<double> ya = luma(a);
    const std::vector<double> yb = luma(b);
    const double peak = a.peak();
    const double c1 = (opt.k1 * peak) * (opt.k1 * peak);
    const double c2 = (opt.k2 * peak) * (opt.k2 * peak);

    double total = 0.0;
    double weight = 0.0;
    for (int y = half; y < h - half; ++y) {
        for (int x = half; x < w - half; ++x) {
            const double m = mask ? mask->at(x, y) : 1.0;
            if (m == 0.0) {
                continue;
            }
            double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
            for (int j = -half; j <= half; ++j) {
                const double gj = g[static_cast<std::size_t>(j + half)];
                const std::size_t row = static_cast<std::size_t>(y + j) * w;
                for (int i = -half; i <= half; ++i) {
                    const double wt = gj * g[static_cast<std::size_t>(i + half)];
                    const double va = ya[row + x + i];
                    const double vb = yb[row + x + i];
                    sa += wt * va;
                    sb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            const double var_a = std::max(0.0, saa - sa * sa);
            const double var_b = std::max(0.0, sbb - sb * sb);
            const double cov = sab - sa * sb;
            const double value = ((2.0 * sa * sb + c1) * (2.0 * cov + c2)) /
                                 ((sa * sa + sb * sb + c1) * (var_a + var_b + c2));
            total += m * value;
            weight += m;
        }
    }
    if (!(weight > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "mask selects no SSIM windows");
    }
    return total / weight;
}

struct SuiteItem
{
    std::string id;
    Image output;
    Image reference;
    std::optional<Points2> output_landmarks;
    std::optional<Points2> reference_landmarks;
    std::optional<Mask> mask;
    std::array<int, 2> eyes{1, 2};
    std::string load_error; ///< set when the item's files could not be read; the row then reports it
};

struct SuiteRow
{
    std::string id;
    std::optional<double> lmk_e;
    std::optional<double> psnr_db;
    std::optional<double> ssim;
    std::string error; ///< empty on success
};

struct SuiteReport
{
    std::vector<SuiteRow> rows;
    SuiteRow mean; ///< id "mean"; averages over the items where each metric is available
};

inline SuiteRow evaluate_item(const SuiteItem& item, const SsimOptions& ssim_options = {})
{
    SuiteRow row;
    row.id = item.id;
    if (!item.load_error.empty()) {
        row.error = item.load_error;
        return row;
    }
    try {
        const Mask* m = item.mask ? &*item.mask : nullptr;
        row.psnr_db = psnr(item.output, item.reference, m);
        row.ssim = ssim(item.output, item.reference, m, ssim_options);
        if (item.output_landmarks && item.reference_landmarks) {
            row.lmk_e = landmark_error(*item.output_landmarks, *item.reference_landmarks, item.eyes);
        }
    } catch (const std::exception& e) {
        row.lmk_e.reset();
        row.psnr_db.reset();
        row.ssim.reset();
        row.error = e.what();
    }
    return row;
}

/// Per-item metrics in input order plus their mean; item failures are recorded, not thrown.
inline SuiteReport evaluate_suite(const std::vector<SuiteItem>& items, int threads = 1,
                                  const SsimOptions& ssim_options = {})
{
    if (items.empty()) {
        throw Error(ErrorCode::invalid_argument, "evaluation suite is empty");
    }
    SuiteReport report;
    report.rows.resize(items.size());
    detail::parallel_rows(static_cast<int>(items.size()), threads,
                          [&](int i) {
                              const auto k = static_cast<std::size_t>(i);
                              report.rows[k] = evaluate_item(items[k], ssim_options);
                          });
    report.mean.id = "mean";
    auto average = [&](std::optional<double> SuiteRow::*field) -> std::optional<double> {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : report.rows) {
            if (r.*field) {
                sum += *(r.*field);
                ++n;
            }
        }
        if (n == 0) {
            return std::nullopt;
        }
        return sum / n;
    };
    report.mean.lmk_e = average(&SuiteRow::lmk_e);
    report.mean.psnr_db = average(&SuiteRow::psnr_db);
    report.mean.ssim = average(&SuiteRow::ssim);
    return report;
}

/// Six significant digits; infinities as "inf", missing values as an empty field.
inline std::string format_metric(const std::optional<double>& v)
{
    if (!v) {
        return "";
    }
    if (std::isinf(*v)) {
        return *v > 0 ? "inf" : "-inf";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", *v);
    return buf;
}

inline std::string suite_csv(const SuiteReport& report)
{
    std::string out = "id,lmk_e,psnr_db,ssim,lpips\n";
    auto line = [&](const SuiteRow& r) {
        out += r.id + "," + format_metric(r.lmk_e) + "," + format_metric(r.psnr_db) + "," + format_metric(r.ssim) +
               ",\n";
    };
    for (const auto& r : report.rows) {
        line(r);
    }
    line(report.mean);
    return out;
}

} // namespace undistort

// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"
#include "undistort/facemodel.hpp"
#include "undistort/geometry.hpp"
#include "undistort/landmarks.hpp"

#include "Eigen/Core"

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>

namespace undistort {

struct SyntheticSpec
{
    int n_landmarks = 468;
    int latent_dim = 32;
    double d_min = 0.25;        ///< meters
    double d_max = 0.7;         ///< meters
    double f35_min = 20.0;      ///< 35mm-equivalent focal, mm
    double f35_max = 35.0;
    double noise_sigma = 0.0;   ///< landmark noise, normalized units
    double rot_jitter_deg = 10.0;
    double w_bound = 2.0;       ///< truncation of the normal latent prior
    double detector_sigma = 0.01;
    int width = 512;
    int height = 512;

    void validate() const
    {
        if (!(d_min > 0.0) || !(d_max >= d_min) || !std::isfinite(d_max)) {
            throw Error(ErrorCode::invalid_spec, "distance range must satisfy 0 < d_min <= d_max");
        }
        if (!(f35_min > 0.0) || !(f35_max >= f35_min)) {
            throw Error(ErrorCode::invalid_spec, "focal range must be positive and ordered");
        }
        if (!(noise_sigma >= 0.0) || !(rot_jitter_deg >= 0.0) || !(w_bound > 0.0) || !(detector_sigma > 0.0)) {
            throw Error(ErrorCode::invalid_spec, "noise, jitter, latent bound and detector sigma must be valid");
        }
        if (width < 16 || height < 16 || n_landmarks < 8 || latent_dim < 1) {
            throw Error(ErrorCode::invalid_spec, "image or model dimensions too small");
        }
    }
};

/// 35mm-equivalent focal (mm) to pixels for a full-frame sensor 36 mm wide.
inline double focal35_to_pixels(double f35, int width) { return f35 * width / 36.0; }

struct SyntheticInstance
{
    std::shared_ptr<const FaceModel> model;
    FaceLatent true_latent;
    CameraState true_cam;   ///< anchored at the true eye midpoint, delta_tz = 1
    LandmarkSet observed;
    Points2 noise;          ///< added to the exact projection, normalized units
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    double true_distance() const { return true_cam.distance(); }
    double true_focal() const { return true_cam.focal(); }
};

/**
 * Places a camera at anchor distance d looking at the eye midpoint of the
 * given shape with rotation r; the anchor projects at the pixel offset
 * (offset_x, offset_y) from the principal point.
 */
inline CameraState camera_looking_at(const FaceModel& model, const Points3& s, const Rotation& r, double distance,
                                     double focal, int width, int height, double offset_x = 0.0,
                                     double offset_y = 0.0)
{
    const Eigen::Vector3d anchor = r.rotate(eye_midpoint(model, s));
    const Eigen::Vector3d target(offset_x * distance / focal, offset_y * distance / focal, distance);
    const Eigen::Vector3d t = target - anchor;
    CameraIntrinsics base;
    base.f0 = focal;
    base.cx = 0.5 * width;
    base.cy = 0.5 * height;
    base.width = width;
    base.height = height;
    return CameraState::create(r, t.x(), t.y(), base, ReparamAnchor{t.z(), distance, 1.0});
}

/// Seed of instance `index` in the suite with seed `seed` (splitmix64 of the pair).
inline std::uint64_t instance_seed(std::uint64_t seed, int index)
{
    std::uint64_t z = seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(index) + 1;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/**
 * Seeded ground-truth instance. With a shared model every instance of a suite
 * differs only in latent, camera and noise.
 */
inline SyntheticInstance generate(std::uint64_t seed, const SyntheticSpec& spec,
                                  std::shared_ptr<const FaceModel> model = nullptr)
{
    spec.validate();
    if (!model) {
        model = std::make_shared<const FaceModel>(synthesize_model(seed, spec.n_landmarks, spec.latent_dim));
    }
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    SyntheticInstance inst;
    inst.model = model;
    inst.seed = seed;
    inst.noise_sigma = spec.noise_sigma;
    inst.true_latent = FaceLatent::zero(*model);
    for (int k = 0; k < model->latent_dim(); ++k) {
        double w;
        do {
            w = gauss(rng);
        } while (std::abs(w) > spec.w_bound);
        inst.true_latent.w[k] = w;
    }
    const double d = uniform(spec.d_min, spec.d_max);
    const double f = focal35_to_pixels(uniform(spec.f35_min, spec.f35_max), spec.width);
    const double jitter = spec.rot_jitter_deg * std::numbers::pi / 180.0;
    const Eigen::Matrix3d r = (Eigen::AngleAxisd(uniform(-jitter, jitter), Eigen::Vector3d::UnitX()) *
                               Eigen::AngleAxisd(uniform(-jitter, jitter), Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(uniform(-jitter, jitter), Eigen::Vector3d::UnitZ()))
                                  .toRotationMatrix();
    const double ox = uniform(-0.04, 0.04) * spec.width;
    const double oy = uniform(-0.04, 0.04) * spec.height;
    const Points3 s = shape(*model, inst.true_latent);
    inst.true_cam =
        camera_looking_at(*model, s, Rotation::from_matrix(r), d, f, spec.width, spec.height, ox, oy);

    LandmarkSet exact = render_landmarks(*model, inst.true_latent, inst.true_cam);
    inst.noise = Points2::Zero(exact.size(), 2);
    if (spec.noise_sigma > 0.0) {
        for (Eigen::Index i = 0; i < exact.size(); ++i) {
            inst.noise(i, 0) = spec.noise_sigma * gauss(rng);
            inst.noise(i, 1) = spec.noise_sigma * gauss(rng);
        }
    }
    inst.observed = LandmarkSet(exact.points + inst.noise, spec.detector_sigma);
    return inst;
}

/**
 * Relative change of the nose-width / interocular ratio between a near and a
 * far rendering of the same face: ratio(near) / ratio(far) - 1. Positive when
 * the near view magnifies the nose.
 */
inline double distortion_score(const LandmarkSet& near, const LandmarkSet& far, const FaceModel& model)
{
    const auto nl = model.find_label("nose_left");
    const auto nr = model.find_label("nose_right");
    const auto el = model.find_label("eye_left");
    const auto er = model.find_label("eye_right");
    if (!nl || !nr || !el || !er) {
        throw Error(ErrorCode::missing_labels, "model lacks nose_left/nose_right/eye_left/eye_right labels");
    }
    if (near.size() != model.n_landmarks() || far.size() != model.n_landmarks()) {
        throw Error(ErrorCode::dimension_mismatch, "landmark sets do not match the model");
    }
    auto ratio = [&](const LandmarkSet& set) {
        const double nose = (set.points.row(*nl) - set.points.row(*nr)).norm();
        const double eyes = (set.points.row(*el) - set.points.row(*er)).norm();
        return nose / eyes;
    };
    return ratio(near) / ratio(far) - 1.0;
}

} // namespace undistort

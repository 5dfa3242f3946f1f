// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/adam.hpp"
#include "undistort/error.hpp"
#include "undistort/facemodel.hpp"
#include "undistort/geometry.hpp"
#include "undistort/landmarks.hpp"
#include "undistort/objective.hpp"

#include "Eigen/Core"
#include "Eigen/SVD"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace undistort {

/// Switches that remove one ingredient of the optimization each.
struct Ablation
{
    bool no_reparam = false;   ///< focal frozen at its initial value instead of following the distance
    bool no_near_init = false; ///< start from the initializer's distance instead of eps_init
    bool no_schedule = false;  ///< camera and face optimized together from the first iteration

    static Ablation all() { return {true, true, true}; }

    bool any() const { return no_reparam || no_near_init || no_schedule; }

    /// Comma-separated flag list; "no_all" enables every flag, "full" or "" none.
    static Ablation parse(const std::string& list)
    {
        Ablation a;
        std::stringstream ss(list);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty() || item == "full" || item == "none") {
                continue;
            }
            if (item == "no_reparam") {
                a.no_reparam = true;
            } else if (item == "no_near_init") {
                a.no_near_init = true;
            } else if (item == "no_schedule") {
                a.no_schedule = true;
            } else if (item == "no_all") {
                a = all();
            } else {
                throw Error(ErrorCode::config_error, "unknown ablation flag '" + item + "'");
            }
        }
        return a;
    }

    std::string to_string() const
    {
        if (no_reparam && no_near_init && no_schedule) {
            return "no_all";
        }
        std::string s;
        auto add = [&](bool on, const char* name) {
            if (on) {
                s += s.empty() ? "" : ",";
                s += name;
            }
        };
        add(no_reparam, "no_reparam");
        add(no_near_init, "no_near_init");
        add(no_schedule, "no_schedule");
        return s.empty() ? "full" : s;
    }
};

struct ScheduleConfig
{
    int cam_only_iters = 300;
    int joint_iters_end = 700;
    int refine_max_iters = 300;
    double lambda_cam = 5e-3;
    double lambda_face = 1e-2;
    double lambda_refine = 3e-4;
    double pose_rate_factor = 0.1;   ///< rotation and t_x, t_y step at this multiple of lambda_cam
    double gamma_rate_factor = 0.1;  ///< gamma steps at this multiple of lambda_cam
    double eps_init = 0.25;          ///< near-range starting distance, meters
    double early_stop_delta = 1e-6;
    int early_stop_window = 20;
    double w_max = 4.0;
    double delta_tz_min = 1e-6;
    double init_residual_max = 0.25; ///< RMS alignment residual (normalized) above which initialization fails
    double init_focal35 = 50.0;      ///< 35mm-equivalent focal assumed by the initializer when none is given
    Ablation ablation;
    ObjectiveWeights weights;
    GeometryLimits limits;

    void validate() const
    {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw Error(ErrorCode::config_error, std::string(name) + " must be positive");
            }
        };
        positive(lambda_cam, "lambda_cam");
        positive(lambda_face, "lambda_face");
        positive(lambda_refine, "lambda_refine");
        positive(pose_rate_factor, "pose_rate_factor");
        positive(gamma_rate_factor, "gamma_rate_factor");
        positive(eps_init, "eps_init");
        positive(w_max, "w_max");
        positive(delta_tz_min, "delta_tz_min");
        positive(init_focal35, "init_focal35");
        positive(weights.sigma_floor, "sigma_floor");
        if (cam_only_iters < 0 || refine_max_iters < 0 || early_stop_window < 1) {
            throw Error(ErrorCode::config_error, "iteration counts must be non-negative");
        }
        if (!(cam_only_iters < joint_iters_end)) {
            throw Error(ErrorCode::config_error, "cam_only_iters must be smaller than joint_iters_end");
        }
        if (!(limits.alpha_min > 0.0) || !(limits.alpha_max > limits.alpha_min)) {
            throw Error(ErrorCode::config_error, "alpha bounds must satisfy 0 < alpha_min < alpha_max");
        }
    }
};

struct InversionProblem
{
    LandmarkSet observed;
    std::shared_ptr<const FaceModel> model;
    int width = 512;
    int height = 512;
    std::optional<CameraState> init_camera;
    ScheduleConfig config;
};

enum class Stage { camera, joint, refine };

inline const char* to_string(Stage s)
{
    switch (s) {
    case Stage::camera: return "camera";
    case Stage::joint: return "joint";
    case Stage::refine: return "refine";
    }
    return "unknown";
}

/// Bit flags naming the parameter groups updated in an iteration.
enum ParamGroup : std::uint32_t {
    group_distance = 1u << 0,
    group_pose = 1u << 1,
    group_gamma = 1u << 2,
    group_latent = 1u << 3,
    group_sigma = 1u << 4,
    group_residual = 1u << 5,
};

struct TraceEntry
{
    int iteration = 0;
    Stage stage = Stage::camera;
    LossBreakdown loss;         ///< loss at the parameters entering this iteration
    std::uint32_t active = 0;   ///< ParamGroup bits updated by this iteration
    std::uint64_t param_hash = 0;
};

/// Everything carried from one stage to the next.
struct SolverState
{
    CameraState cam;
    FaceLatent latent;
    Eigen::VectorXd sigma;
};

struct InversionSolution
{
    CameraState initial_cam;
    CameraState cam;
    FaceLatent latent;
    Eigen::VectorXd sigma;
    std::vector<TraceEntry> trace;
    int camera_end = 0; ///< first iteration after the camera-only stage
    int joint_end = 0;  ///< first iteration after the joint stage
    int refine_end = 0; ///< one past the last refinement iteration
    double alignment_rms = 0.0; ///< weak-perspective residual of the initializer, normalized
    double landmark_rms = 0.0;  ///< final RMS distance between observed and rendered visible landmarks, normalized
    LossBreakdown final_loss;

    /// Recovered camera-to-anchor distance, alpha·d0.
    double distance() const { return cam.distance(); }
};

namespace detail {

inline std::uint64_t fnv1a(const Eigen::VectorXd& x)
{
    std::uint64_t h = 1469598103934665603ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(x.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(x.size()) * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

struct WeakPerspectiveFit
{
    Eigen::Matrix3d rotation;
    double scale = 0.0; ///< pixels per meter
    Eigen::Vector2d offset;
    double rms = 0.0;   ///< normalized units
};

/**
 * Least-squares affine camera from 3D model points to 2D pixels, projected to
 * the nearest scaled orthographic camera (rows orthonormalized by SVD).
 */
inline WeakPerspectiveFit fit_weak_perspective(const Points3& model_pts, const Points2& px, int width, int height)
{
    const Eigen::Index n = model_pts.rows();
    if (n < 4) {
        throw Error(ErrorCode::initialization_failed, "rigid alignment needs at least four visible landmarks");
    }
    const Eigen::RowVector3d mc = model_pts.colwise().mean();
    const Eigen::RowVector2d pc = px.colwise().mean();
    const Eigen::MatrixXd x = model_pts.rowwise() - mc;
    const Eigen::MatrixXd y = px.rowwise() - pc;
    const Eigen::MatrixXd a = x.colPivHouseholderQr().solve(y); // 3 x 2, y ~ x·a
    if (!a.allFinite()) {
        throw Error(ErrorCode::initialization_failed, "affine camera fit is degenerate");
    }
    Eigen::Matrix3d m;
    m.row(0) = a.col(0).transpose();
    m.row(1) = a.col(1).transpose();
    const double s = 0.5 * (m.row(0).norm() + m.row(1).norm());
    if (!(s > 0.0)) {
        throw Error(ErrorCode::initialization_failed, "affine camera fit collapsed to zero scale");
    }
    m.row(0) /= m.row(0).norm();
    m.row(1) /= m.row(1).norm();
    m.row(2) = m.row(0).cross(m.row(1));
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Eigen::Matrix3d u = svd.matrixU();
        u.col(2) *= -1.0;
        r = u * svd.matrixV().transpose();
    }
    WeakPerspectiveFit fit;
    fit.rotation = r;
    fit.scale = s;
    fit.offset = (pc - s * (r.topRows<2>() * mc.transpose()).transpose()).transpose();
    double sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector2d pred = s * r.topRows<2>() * model_pts.row(i).transpose() + fit.offset;
        const Eigen::Vector2d e = pred - px.row(i).transpose();
        sq += (e.x() / width) * (e.x() / width) + (e.y() / height) * (e.y() / height);
    }
    fit.rms = std::sqrt(sq / static_cast<double>(n));
    return fit;
}

inline Eigen::VectorXd stage_rates(const ParamLayout& layout, const ScheduleConfig& cfg, std::uint32_t groups,
                                   double residual_rate)
{
    Eigen::VectorXd rates = Eigen::VectorXd::Zero(layout.size());
    if (groups & group_distance) {
        rates[ParamLayout::delta_tz] = cfg.lambda_cam;
    }
    if (groups & group_pose) {
        const double r = cfg.pose_rate_factor * cfg.lambda_cam;
        rates[ParamLayout::tx] = r;
        rates[ParamLayout::ty] = r;
        rates.segment<3>(ParamLayout::rotation).setConstant(r);
    }
    if (groups & group_gamma) {
        rates[ParamLayout::gamma] = cfg.gamma_rate_factor * cfg.lambda_cam;
    }
    if (groups & group_latent) {
        rates.segment(ParamLayout::latent, layout.latent_dim).setConstant(cfg.lambda_face);
    }
    if (groups & group_sigma) {
        rates.segment(layout.log_sigma(), layout.n_landmarks).setConstant(cfg.lambda_face);
    }
    if (groups & group_residual) {
        rates.segment(layout.residual(), 3 * layout.n_landmarks).setConstant(residual_rate);
    }
    return rates;
}

/// Keeps delta_tz positive with alpha inside its bounds, w inside the box, sigma above the floor.
inline void project_params(const ParamLayout& layout, const ScheduleConfig& cfg, const CameraState& tmpl,
                           Eigen::VectorXd& x)
{
    const ReparamAnchor& a = tmpl.anchor();
    const double tz_lo = a.tz0 - a.d0 + cfg.limits.alpha_min * a.d0 * (1.0 + 1e-9);
    const double tz_hi = a.tz0 - a.d0 + cfg.limits.alpha_max * a.d0 * (1.0 - 1e-9);
    double delta_lo = cfg.delta_tz_min;
    double delta_hi = std::numeric_limits<double>::infinity();
    if (a.tz0 > 0.0) {
        if (tz_hi > 0.0) {
            delta_lo = std::max(delta_lo, (a.tz0 / tz_hi) * (a.tz0 / tz_hi));
        }
        if (tz_lo > 0.0) {
            delta_hi = (a.tz0 / tz_lo) * (a.tz0 / tz_lo);
        }
    }
    double& delta = x[ParamLayout::delta_tz];
    delta = std::min(std::max(delta, delta_lo), delta_hi);
    for (int k = 0; k < layout.latent_dim; ++k) {
        double& w = x[ParamLayout::latent + k];
        w = std::min(std::max(w, -cfg.w_max), cfg.w_max);
    }
    const double log_floor = std::log(cfg.weights.sigma_floor);
    for (int i = 0; i < layout.n_landmarks; ++i) {
        double& ls = x[layout.log_sigma() + i];
        ls = std::max(ls, log_floor);
    }
}

inline bool feasible(const ObjectiveContext& ctx, const Eigen::VectorXd& x)
{
    try {
        total_loss(ctx, x);
        return true;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::infeasible_render || e.code() == ErrorCode::degenerate_distance) {
            return false;
        }
        throw;
    }
}

inline SolverState unpack_state(const ObjectiveContext& ctx, const Eigen::VectorXd& x)
{
    const ParamLayout layout = ctx.layout();
    return {unpack_camera(ctx, x), unpack_latent(layout, x), unpack_sigma(layout, x)};
}

/**
 * Fixed-count adaptive-moment iterations for the camera and joint stages.
 * A step that renders the face behind the camera is halved until feasible;
 * such states would carry the infeasible-render penalty and are never accepted.
 */
inline SolverState run_fixed_iterations(const InversionProblem& problem, const SolverState& state, Stage stage,
                                        std::uint32_t groups, int k_begin, int k_end,
                                        std::vector<TraceEntry>* trace)
{
    const ScheduleConfig& cfg = problem.config;
    const ObjectiveContext ctx{*problem.model, problem.observed, state.cam, cfg.weights, cfg.limits};
    const ParamLayout layout = ctx.layout();
    Eigen::VectorXd x = pack_params(layout, state.cam, state.latent, state.sigma);
    const Eigen::VectorXd rates = stage_rates(layout, cfg, groups, cfg.lambda_refine);
    Adam adam(layout.size());
    Eigen::VectorXd grad;
    for (int k = k_begin; k < k_end; ++k) {
        const LossBreakdown loss = evaluate(ctx, x, &grad);
        if (trace) {
            trace->push_back({k, stage, loss, groups, fnv1a(x)});
        }
        const Eigen::VectorXd step = adam.step(grad, rates);
        double scale = 1.0;
        for (int attempt = 0; attempt < 30; ++attempt, scale *= 0.5) {
            Eigen::VectorXd candidate = x + scale * step;
            project_params(layout, cfg, state.cam, candidate);
            if (feasible(ctx, candidate)) {
                x = std::move(candidate);
                break;
            }
        }
    }
    SolverState out = unpack_state(ctx, x);
    if (!(groups & group_sigma)) {
        out.sigma = state.sigma; // frozen; skips the log/exp round trip
    }
    return out;
}

} // namespace detail

/// Rigid weak-perspective alignment of the mean shape, lifted to a pinhole camera.
inline CameraState rigid_initial_camera(const InversionProblem& problem, double* rms_out = nullptr)
{
    const FaceModel& model = *problem.model;
    const ScheduleConfig& cfg = problem.config;
    std::vector<Eigen::Index> vis;
    for (Eigen::Index i = 0; i < problem.observed.size(); ++i) {
        if (problem.observed.is_visible(i)) {
            vis.push_back(i);
        }
    }
    Points3 model_pts(static_cast<Eigen::Index>(vis.size()), 3);
    Points2 px(static_cast<Eigen::Index>(vis.size()), 2);
    for (std::size_t j = 0; j < vis.size(); ++j) {
        const auto row = static_cast<Eigen::Index>(j);
        model_pts.row(row) = model.mean_shape.row(vis[j]);
        px(row, 0) = problem.observed.points(vis[j], 0) * problem.width;
        px(row, 1) = problem.observed.points(vis[j], 1) * problem.height;
    }
    const detail::WeakPerspectiveFit fit = detail::fit_weak_perspective(model_pts, px, problem.width, problem.height);
    if (rms_out) {
        *rms_out = fit.rms;
    }
    if (!(fit.rms <= cfg.init_residual_max)) {
        throw Error(ErrorCode::initialization_failed, "rigid alignment residual " + std::to_string(fit.rms) +
                                                          " exceeds " + std::to_string(cfg.init_residual_max));
    }
    CameraIntrinsics base;
    base.f0 = cfg.init_focal35 * problem.width / 36.0;
    base.cx = 0.5 * problem.width;
    base.cy = 0.5 * problem.height;
    base.width = problem.width;
    base.height = problem.height;

    const double d = base.f0 / fit.scale;
    const Eigen::Vector3d anchor = fit.rotation * eye_midpoint(model, model.mean_shape);
    const Eigen::Vector2d anchor_px = fit.scale * anchor.head<2>() + fit.offset;
    const double tx = (anchor_px.x() - base.cx) / fit.scale - anchor.x();
    const double ty = (anchor_px.y() - base.cy) / fit.scale - anchor.y();
    const double tz = d - anchor.z();
    return CameraState::create(Rotation::from_matrix(fit.rotation), tx, ty, base, ReparamAnchor{tz, d, 1.0},
                               FocalCoupling::reparameterized, cfg.limits);
}

struct InitResult
{
    SolverState state;
    double alignment_rms = 0.0;
};

/**
 * Starting state: zero latent, detector sigmas, and the initializer camera
 * moved to eps_init along its axis with the focal following the distance
 * (skipped under no_near_init). The anchor is then re-based at the starting
 * position so that delta_tz = 1 and alpha = 1 when optimization begins.
 */
inline InitResult initialize(const InversionProblem& problem)
{
    const ScheduleConfig& cfg = problem.config;
    if (!problem.model) {
        throw Error(ErrorCode::invalid_argument, "problem has no face model");
    }
    if (problem.observed.size() != problem.model->n_landmarks()) {
        throw Error(ErrorCode::dimension_mismatch, "observed landmark count differs from the model");
    }
    problem.observed.validate();
    InitResult out;
    CameraState cam;
    if (problem.init_camera) {
        cam = problem.init_camera->with_coupling(FocalCoupling::reparameterized, cfg.limits);
    } else {
        cam = rigid_initial_camera(problem, &out.alignment_rms);
    }
    if (!cfg.ablation.no_near_init) {
        cam = set_distance(cam, cfg.eps_init, cfg.limits);
    }
    cam = cam.rebased(cfg.limits);
    if (cfg.ablation.no_reparam) {
        cam = cam.with_coupling(FocalCoupling::fixed, cfg.limits);
    }
    out.state.cam = cam;
    out.state.latent = FaceLatent::zero(*problem.model);
    out.state.sigma = problem.observed.sigma.cwiseMax(cfg.weights.sigma_floor);
    return out;
}

inline constexpr std::uint32_t camera_groups = group_distance | group_pose | group_gamma;

/// Camera-only stage: delta_tz, pose and gamma move; latent, sigma and residual are frozen.
inline SolverState run_stage_camera(const InversionProblem& problem, const SolverState& state,
                                    std::vector<TraceEntry>* trace = nullptr)
{
    return detail::run_fixed_iterations(problem, state, Stage::camera, camera_groups, 0,
                                        problem.config.cam_only_iters, trace);
}

/// Joint stage: camera, latent and sigma together; starts at iteration 0 under no_schedule.
inline SolverState run_stage_joint(const InversionProblem& problem, const SolverState& state,
                                   std::vector<TraceEntry>* trace = nullptr)
{
    const ScheduleConfig& cfg = problem.config;
    const int begin = cfg.ablation.no_schedule ? 0 : cfg.cam_only_iters;
    return detail::run_fixed_iterations(problem, state, Stage::joint, camera_groups | group_latent | group_sigma,
                                        begin, cfg.joint_iters_end, trace);
}

/**
 * Residual refinement: only the per-landmark residual field moves. Steps that
 * would raise the loss are rejected and the step scale halved, so the accepted
 * loss sequence never increases. Stops early when the loss improved by less
 * than early_stop_delta over the last early_stop_window iterations.
 */
inline SolverState run_stage_refine(const InversionProblem& problem, const SolverState& state,
                                    std::vector<TraceEntry>* trace = nullptr, int first_iteration = 0)
{
    const ScheduleConfig& cfg = problem.config;
    const ObjectiveContext ctx{*problem.model, problem.observed, state.cam, cfg.weights, cfg.limits};
    const ParamLayout layout = ctx.layout();
    Eigen::VectorXd x = pack_params(layout, state.cam, state.latent, state.sigma);
    const Eigen::VectorXd rates = detail::stage_rates(layout, cfg, group_residual, cfg.lambda_refine);
    Adam adam(layout.size());
    Eigen::VectorXd grad;
    std::vector<double> history;
    double scale = 1.0;
    for (int it = 0; it < cfg.refine_max_iters; ++it) {
        const LossBreakdown loss = evaluate(ctx, x, &grad);
        history.push_back(loss.total);
        if (trace) {
            trace->push_back({first_iteration + it, Stage::refine, loss, group_residual, detail::fnv1a(x)});
        }
        const auto h = history.size();
        if (h > static_cast<std::size_t>(cfg.early_stop_window) &&
            history[h - 1 - static_cast<std::size_t>(cfg.early_stop_window)] - history[h - 1] <
                cfg.early_stop_delta) {
            break;
        }
        const Eigen::VectorXd step = adam.step(grad, rates);
        Eigen::VectorXd candidate = x + scale * step;
        detail::project_params(layout, cfg, state.cam, candidate);
        bool accepted = false;
        if (detail::feasible(ctx, candidate)) {
            accepted = total_loss(ctx, candidate).total <= loss.total;
        }
        if (accepted) {
            x = std::move(candidate);
            scale = std::min(1.0, 2.0 * scale);
        } else {
            scale *= 0.5;
        }
    }
    SolverState out = detail::unpack_state(ctx, x);
    out.sigma = state.sigma; // frozen; skips the log/exp round trip
    return out;
}

/// Initialization followed by the camera, joint and refinement stages.
inline InversionSolution solve(const InversionProblem& problem)
{
    problem.config.validate();
    const ScheduleConfig& cfg = problem.config;
    const InitResult init = initialize(problem);
    InversionSolution sol;
    sol.initial_cam = init.state.cam;
    sol.alignment_rms = init.alignment_rms;
    SolverState st = init.state;
    if (!cfg.ablation.no_schedule) {
        st = run_stage_camera(problem, st, &sol.trace);
        sol.camera_end = cfg.cam_only_iters;
    }
    st = run_stage_joint(problem, st, &sol.trace);
    sol.joint_end = cfg.joint_iters_end;
    st = run_stage_refine(problem, st, &sol.trace, cfg.joint_iters_end);
    sol.refine_end = sol.trace.empty() ? cfg.joint_iters_end : sol.trace.back().iteration + 1;
    sol.cam = st.cam;
    sol.latent = st.latent;
    sol.sigma = st.sigma;
    const ObjectiveContext ctx{*problem.model, problem.observed, sol.cam, cfg.weights, cfg.limits};
    sol.final_loss = total_loss(ctx, sol.cam, sol.latent, sol.sigma);
    const LandmarkSet rendered = render_landmarks(*problem.model, sol.latent, sol.cam, cfg.limits);
    double sq = 0.0;
    int visible = 0;
    for (Eigen::Index i = 0; i < rendered.size(); ++i) {
        if (problem.observed.is_visible(i)) {
            sq += (rendered.points.row(i) - problem.observed.points.row(i)).squaredNorm();
            ++visible;
        }
    }
    sol.landmark_rms = visible > 0 ? std::sqrt(sq / visible) : 0.0;
    return sol;
}

} // namespace undistort

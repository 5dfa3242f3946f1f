// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"
#include "undistort/metrics.hpp"
#include "undistort/solver.hpp"
#include "undistort/synth.hpp"
#include "undistort/warpstitch.hpp"

#include <charconv>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace undistort {

/// Every tunable of the tool. Loaded from key = value text, overridable per key.
struct Config
{
    ScheduleConfig solver;
    SyntheticSpec synth;
    CorrectionOptions correct;
    SsimOptions ssim;
    std::uint64_t seed = 1;
    std::uint64_t model_seed = 1;
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text)
{
    T v{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && text[0] == '+') {
        ++first;
    }
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw Error(ErrorCode::config_error, "value '" + text + "' for " + key + " is not a valid number");
    }
    return v;
}

inline std::string unquote(const std::string& key, const std::string& text)
{
    if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
        return text.substr(1, text.size() - 2);
    }
    if (text.find_first_of("\" ") != std::string::npos) {
        throw Error(ErrorCode::config_error, "malformed string value for " + key);
    }
    return text;
}

} // namespace detail

struct ConfigKey
{
    std::string name;
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

inline const std::vector<ConfigKey>& config_keys()
{
    using detail::format_double;
    using detail::parse_number;
    auto real = [](std::string name, auto ref) {
        return ConfigKey{name,
                         [=](Config& c, const std::string& v) { ref(c) = parse_number<double>(name, v); },
                         [=](const Config& c) { return format_double(ref(const_cast<Config&>(c))); }};
    };
    auto integer = [](std::string name, auto ref) {
        return ConfigKey{name,
                         [=](Config& c, const std::string& v) {
                             ref(c) = parse_number<std::remove_reference_t<decltype(ref(c))>>(name, v);
                         },
                         [=](const Config& c) { return std::to_string(ref(const_cast<Config&>(c))); }};
    };
    static const std::vector<ConfigKey> keys = {
        integer("seed", [](Config& c) -> std::uint64_t& { return c.seed; }),
        integer("model_seed", [](Config& c) -> std::uint64_t& { return c.model_seed; }),
        integer("solver.cam_only_iters", [](Config& c) -> int& { return c.solver.cam_only_iters; }),
        integer("solver.joint_iters_end", [](Config& c) -> int& { return c.solver.joint_iters_end; }),
        integer("solver.refine_max_iters", [](Config& c) -> int& { return c.solver.refine_max_iters; }),
        real("solver.lambda_cam", [](Config& c) -> double& { return c.solver.lambda_cam; }),
        real("solver.lambda_face", [](Config& c) -> double& { return c.solver.lambda_face; }),
        real("solver.lambda_refine", [](Config& c) -> double& { return c.solver.lambda_refine; }),
        real("solver.pose_rate_factor", [](Config& c) -> double& { return c.solver.pose_rate_factor; }),
        real("solver.gamma_rate_factor", [](Config& c) -> double& { return c.solver.gamma_rate_factor; }),
        real("solver.eps_init", [](Config& c) -> double& { return c.solver.eps_init; }),
        real("solver.early_stop_delta", [](Config& c) -> double& { return c.solver.early_stop_delta; }),
        integer("solver.early_stop_window", [](Config& c) -> int& { return c.solver.early_stop_window; }),
        real("solver.w_max", [](Config& c) -> double& { return c.solver.w_max; }),
        real("solver.delta_tz_min", [](Config& c) -> double& { return c.solver.delta_tz_min; }),
        real("solver.init_residual_max", [](Config& c) -> double& { return c.solver.init_residual_max; }),
        real("solver.init_focal35", [](Config& c) -> double& { return c.solver.init_focal35; }),
        ConfigKey{"solver.ablation",
                  [](Config& c, const std::string& v) {
                      c.solver.ablation = Ablation::parse(detail::unquote("solver.ablation", v));
                  },
                  [](const Config& c) { return "\"" + c.solver.ablation.to_string() + "\""; }},
        real("objective.weight_residual", [](Config& c) -> double& { return c.solver.weights.residual; }),
        real("objective.weight_latent", [](Config& c) -> double& { return c.solver.weights.latent; }),
        real("objective.sigma_floor", [](Config& c) -> double& { return c.solver.weights.sigma_floor; }),
        real("objective.infeasible_penalty", [](Config& c) -> double& { return c.solver.weights.infeasible_penalty; }),
        real("geometry.z_min", [](Config& c) -> double& { return c.solver.limits.z_min; }),
        real("geometry.alpha_min", [](Config& c) -> double& { return c.solver.limits.alpha_min; }),
        real("geometry.alpha_max", [](Config& c) -> double& { return c.solver.limits.alpha_max; }),
        integer("synth.n_landmarks", [](Config& c) -> int& { return c.synth.n_landmarks; }),
        integer("synth.latent_dim", [](Config& c) -> int& { return c.synth.latent_dim; }),
        real("synth.d_min", [](Config& c) -> double& { return c.synth.d_min; }),
        real("synth.d_max", [](Config& c) -> double& { return c.synth.d_max; }),
        real("synth.f35_min", [](Config& c) -> double& { return c.synth.f35_min; }),
        real("synth.f35_max", [](Config& c) -> double& { return c.synth.f35_max; }),
        real("synth.noise_sigma", [](Config& c) -> double& { return c.synth.noise_sigma; }),
        real("synth.rot_jitter_deg", [](Config& c) -> double& { return c.synth.rot_jitter_deg; }),
        real("synth.w_bound", [](Config& c) -> double& { return c.synth.w_bound; }),
        real("synth.detector_sigma", [](Config& c) -> double& { return c.synth.detector_sigma; }),
        integer("synth.width", [](Config& c) -> int& { return c.synth.width; }),
        integer("synth.height", [](Config& c) -> int& { return c.synth.height; }),
        real("warp.tps_lambda", [](Config& c) -> double& { return c.correct.flow.lambda; }),
        real("warp.flow_falloff", [](Config& c) -> double& { return c.correct.flow.falloff; }),
        real("warp.hull_sigma", [](Config& c) -> double& { return c.correct.hull_sigma; }),
        real("warp.depth_feather", [](Config& c) -> double& { return c.correct.depth_feather; }),
        integer("warp.supersample", [](Config& c) -> int& { return c.correct.reproject.supersample; }),
        integer("warp.fill_iterations", [](Config& c) -> int& { return c.correct.reproject.fill_iterations; }),
        integer("metrics.ssim_window", [](Config& c) -> int& { return c.ssim.window; }),
        real("metrics.ssim_sigma", [](Config& c) -> double& { return c.ssim.sigma; }),
        real("metrics.ssim_k1", [](Config& c) -> double& { return c.ssim.k1; }),
        real("metrics.ssim_k2", [](Config& c) -> double& { return c.ssim.k2; }),
    };
    return keys;
}

/// Sets one key from its textual value. Unknown keys are errors.
inline void set_config_value(Config& config, const std::string& key, const std::string& value)
{
    for (const auto& k : config_keys()) {
        if (k.name == key) {
            k.set(config, value);
            return;
        }
    }
    throw Error(ErrorCode::config_error, "unknown configuration key '" + key + "'");
}

/// Applies "key=value".
inline void apply_override(Config& config, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw Error(ErrorCode::config_error, "override '" + assignment + "' is not of the form key=value");
    }
    set_config_value(config, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/**
 * Parses key = value lines. "[section]" lines prefix the following keys with
 * "section."; '#' starts a comment outside quoted strings.
 */
inline void apply_config_text(Config& config, std::string_view text)
{
    std::string section;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string line(text.substr(pos, end - pos));
        ++line_no;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') {
                quoted = !quoted;
            } else if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = detail::trim(line);
        if (!line.empty()) {
            try {
                if (line.front() == '[') {
                    if (line.back() != ']') {
                        throw Error(ErrorCode::config_error, "unterminated section header");
                    }
                    section = detail::trim(line.substr(1, line.size() - 2));
                } else {
                    const auto eq = line.find('=');
                    if (eq == std::string::npos) {
                        throw Error(ErrorCode::config_error, "expected key = value");
                    }
                    std::string key = detail::trim(line.substr(0, eq));
                    if (!section.empty()) {
                        key = section + "." + key;
                    }
                    set_config_value(config, key, detail::trim(line.substr(eq + 1)));
                }
            } catch (const Error& e) {
                throw Error(ErrorCode::config_error, "line " + std::to_string(line_no) + ": " + e.what(),
                            std::nullopt, pos);
            }
        }
        if (end == text.size()) {
            break;
        }
        pos = end + 1;
    }
}

/// Every key with its current value, one "key = value" per line, in a fixed order.
inline std::string resolved_config_text(const Config& config)
{
    std::string out = "# resolved configuration\n";
    for (const auto& k : config_keys()) {
        out += k.name + " = " + k.get(config) + "\n";
    }
    return out;
}

inline void validate_config(const Config& config)
{
    config.solver.validate();
    config.synth.validate();
    if (!(config.correct.flow.lambda >= 0.0) || !(config.correct.flow.falloff > 1.0) ||
        !(config.correct.hull_sigma >= 0.0) || !(config.correct.depth_feather >= 0.0) ||
        config.correct.reproject.supersample < 1 || config.correct.reproject.fill_iterations < 0) {
        throw Error(ErrorCode::config_error, "warp settings out of range");
    }
    if (config.ssim.window < 1 || config.ssim.window % 2 == 0 || !(config.ssim.sigma > 0.0)) {
        throw Error(ErrorCode::config_error, "SSIM window must be odd and sigma positive");
    }
}

} // namespace undistort

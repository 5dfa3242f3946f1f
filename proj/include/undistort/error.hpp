// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace undistort {

enum class ErrorCode {
    point_behind_camera,
    degenerate_distance,
    non_positive_focal,
    dimension_mismatch,
    invalid_dimensions,
    infeasible_render,
    non_finite_gradient,
    initialization_failed,
    insufficient_overlap,
    degenerate_control_points,
    degenerate_configuration,
    missing_labels,
    invalid_spec,
    invalid_argument,
    parse_error,
    config_error,
    io_error,
};

inline std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::point_behind_camera: return "PointBehindCamera";
    case ErrorCode::degenerate_distance: return "DegenerateDistance";
    case ErrorCode::non_positive_focal: return "NonPositiveFocal";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::invalid_dimensions: return "InvalidDimensions";
    case ErrorCode::infeasible_render: return "InfeasibleRender";
    case ErrorCode::non_finite_gradient: return "NonFiniteGradient";
    case ErrorCode::initialization_failed: return "InitializationFailed";
    case ErrorCode::insufficient_overlap: return "InsufficientOverlap";
    case ErrorCode::degenerate_control_points: return "DegenerateControlPoints";
    case ErrorCode::degenerate_configuration: return "DegenerateConfiguration";
    case ErrorCode::missing_labels: return "MissingLabels";
    case ErrorCode::invalid_spec: return "InvalidSpec";
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::io_error: return "IoError";
    }
    return "Unknown";
}

/**
 * Single exception type of the library. The code identifies the failure class;
 * index and offset carry the optional location (landmark index for rendering
 * failures, byte offset for parse failures).
 */
class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& message, std::optional<std::size_t> index = std::nullopt,
          std::optional<std::size_t> offset = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), index_(index),
          offset_(offset)
    {
    }

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::size_t> index() const noexcept { return index_; }
    std::optional<std::size_t> offset() const noexcept { return offset_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> index_;
    std::optional<std::size_t> offset_;
};

// Offending byte offset goes into both the message and the offset field.
inline Error parse_error(const std::string& what, std::size_t offset)
{
    return Error(ErrorCode::parse_error, what + " (at byte offset " + std::to_string(offset) + ")", std::nullopt,
                 offset);
}

} // namespace undistort

// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "undistort/error.hpp"

#include "Eigen/Core"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace undistort {

/// u8 images hold values in [0, 255], f32 images in [0, 1]; both are stored as float.
enum class PixelFormat { u8, f32 };

/// Interleaved three-channel image.
struct Image
{
    int width = 0;
    int height = 0;
    PixelFormat format = PixelFormat::u8;
    std::vector<float> data;

    static Image create(int width, int height, PixelFormat format = PixelFormat::u8, float fill = 0.0f)
    {
        if (width < 0 || height < 0) {
            throw Error(ErrorCode::invalid_dimensions, "image dimensions must be non-negative");
        }
        Image img;
        img.width = width;
        img.height = height;
        img.format = format;
        img.data.assign(static_cast<std::size_t>(width) * height * 3, fill);
        return img;
    }

    bool empty() const { return width == 0 || height == 0; }

    double peak() const { return format == PixelFormat::u8 ? 255.0 : 1.0; }

    std::size_t index(int x, int y, int c = 0) const
    {
        return (static_cast<std::size_t>(y) * width + x) * 3 + c;
    }

    float& at(int x, int y, int c) { return data[index(x, y, c)]; }
    float at(int x, int y, int c) const { return data[index(x, y, c)]; }

    bool same_size(int w, int h) const { return width == w && height == h; }
};

/// Per-pixel metric depth along the camera z axis with a validity mask.
struct DepthImage
{
    int width = 0;
    int height = 0;
    std::vector<float> depth;
    std::vector<std::uint8_t> valid;

    static DepthImage create(int width, int height, float fill = 0.0f, bool is_valid = false)
    {
        DepthImage d;
        d.width = width;
        d.height = height;
        d.depth.assign(static_cast<std::size_t>(width) * height, fill);
        d.valid.assign(static_cast<std::size_t>(width) * height, is_valid ? 1 : 0);
        return d;
    }

    bool empty() const { return width == 0 || height == 0; }

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }

    float at(int x, int y) const { return depth[index(x, y)]; }

    void set(int x, int y, float z)
    {
        depth[index(x, y)] = z;
        valid[index(x, y)] = (std::isfinite(z) && z > 0.0f) ? 1 : 0;
    }
};

/// Per-pixel 2D displacement in pixels.
struct FlowField
{
    int width = 0;
    int height = 0;
    std::vector<double> dx;
    std::vector<double> dy;
    std::vector<std::uint8_t> valid;

    static FlowField create(int width, int height)
    {
        FlowField f;
        f.width = width;
        f.height = height;
        const auto n = static_cast<std::size_t>(width) * height;
        f.dx.assign(n, 0.0);
        f.dy.assign(n, 0.0);
        f.valid.assign(n, 0);
        return f;
    }

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Scalar per-pixel weight in [0, 1].
struct Mask
{
    int width = 0;
    int height = 0;
    std::vector<float> values;

    static Mask create(int width, int height, float fill = 0.0f)
    {
        return {width, height, std::vector<float>(static_cast<std::size_t>(width) * height, fill)};
    }

    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Bilinear sample with clamp-to-edge addressing.
inline std::array<float, 3> sample_bilinear(const Image& img, double x, double y)
{
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    std::array<float, 3> out{};
    for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
        const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
        out[static_cast<std::size_t>(c)] = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
    return out;
}

namespace detail {

/**
 * Runs body(y) for every row, split into contiguous blocks over at most
 * `threads` workers. Rows are independent, so results do not depend on the
 * thread count.
 */
inline void parallel_rows(int rows, int threads, const std::function<void(int)>& body)
{
    threads = std::max(1, std::min(threads, rows));
    if (threads == 1) {
        for (int y = 0; y < rows; ++y) {
            body(y);
        }
        return;
    }
    std::vector<std::thread> pool;
    const int block = (rows + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int begin = t * block;
        const int end = std::min(rows, begin + block);
        if (begin >= end) {
            break;
        }
        pool.emplace_back([&body, begin, end] {
            for (int y = begin; y < end; ++y) {
                body(y);
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
}

} // namespace detail

} // namespace undistort

// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "Eigen/Core"

#include <cmath>

namespace undistort {

struct AdamOptions
{
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/**
 * Adaptive-moment gradient descent with a per-coordinate learning rate.
 * Coordinates whose rate is zero are frozen: their moments and bias-correction
 * counters do not advance, so a parameter group joining later starts fresh.
 */
class Adam
{
public:
    explicit Adam(Eigen::Index n, AdamOptions options = {})
        : options_(options), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)),
          steps_(Eigen::VectorXi::Zero(n))
    {
    }

    /// Returns the update to add to the parameters (a descent step).
    Eigen::VectorXd step(const Eigen::VectorXd& grad, const Eigen::VectorXd& rates)
    {
        Eigen::VectorXd delta = Eigen::VectorXd::Zero(grad.size());
        for (Eigen::Index i = 0; i < grad.size(); ++i) {
            if (rates[i] == 0.0) {
                continue;
            }
            ++steps_[i];
            m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * grad[i];
            v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * grad[i] * grad[i];
            const double m_hat = m_[i] / (1.0 - std::pow(options_.beta1, steps_[i]));
            const double v_hat = v_[i] / (1.0 - std::pow(options_.beta2, steps_[i]));
            delta[i] = -rates[i] * m_hat / (std::sqrt(v_hat) + options_.eps);
        }
        return delta;
    }

private:
    AdamOptions options_;
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
    Eigen::VectorXi steps_;
};

} // namespace undistort

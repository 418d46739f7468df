// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vldnp/types.hpp"

namespace vldnp {

enum class BetaKind { linear };

/// Variance-preserving forward process with discrete timesteps 1..T.
/// Timestep 0 denotes clean data (alpha_bar = 1).
class NoiseSchedule {
public:
    NoiseSchedule(std::vector<double> betas);

    int total_steps() const { return static_cast<int>(betas_.size()); }
    /// beta_t for t in [1, T].
    double beta(int t) const;
    /// Cumulative product of (1 - beta_s) for s <= t; t in [0, T].
    double alpha_bar(int t) const;

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;  // alpha_bars_[t - 1] for t in [1, T]
};

NoiseSchedule build_schedule(int total_steps = 1000, double beta_start = 1e-4, double beta_end = 0.02,
                             BetaKind kind = BetaKind::linear);

enum class Spacing { uniform };

/// Decreasing solver timesteps; position 0 is the noisiest.
struct StepGrid {
    std::vector<int> timesteps;

    int inference_steps() const { return static_cast<int>(timesteps.size()); }
    /// Timestep reached after the step at `position`: the next grid entry, or 0
    /// after the last one.
    int next_timestep(int position) const;
};

StepGrid build_step_grid(const NoiseSchedule& schedule, int inference_steps = 50,
                         Spacing spacing = Spacing::uniform);

}  // namespace vldnp

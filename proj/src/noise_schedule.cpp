// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#include "vldnp/noise_schedule.hpp"

#include <cmath>
#include <string>

namespace vldnp {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw Error("schedule needs at least one step");
    alpha_bars_.reserve(betas_.size());
    double running = 1.0;
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0)) throw Error("betas must lie in (0, 1)");
        running *= 1.0 - b;
        alpha_bars_.push_back(running);
    }
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > total_steps()) throw Error("timestep " + std::to_string(t) + " outside [1, T]");
    return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t == 0) return 1.0;
    if (t < 0 || t > total_steps()) throw Error("timestep " + std::to_string(t) + " outside [0, T]");
    return alpha_bars_[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule build_schedule(int total_steps, double beta_start, double beta_end, BetaKind kind) {
    if (total_steps < 1) throw Error("schedule T must be positive");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw Error("schedule needs 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(total_steps));
    switch (kind) {
    case BetaKind::linear:
        for (int s = 0; s < total_steps; ++s) {
            const double frac = total_steps == 1 ? 0.0 : static_cast<double>(s) / (total_steps - 1);
            betas[static_cast<std::size_t>(s)] = beta_start + (beta_end - beta_start) * frac;
        }
        break;
    }
    return NoiseSchedule(std::move(betas));
}

int StepGrid::next_timestep(int position) const {
    if (position < 0 || position >= inference_steps()) throw Error("grid position out of range");
    return position + 1 < inference_steps() ? timesteps[static_cast<std::size_t>(position + 1)] : 0;
}

StepGrid build_step_grid(const NoiseSchedule& schedule, int inference_steps, Spacing spacing) {
    const int total = schedule.total_steps();
    if (inference_steps < 1) throw Error("inference_steps must be positive");
    if (inference_steps > total) throw Error("inference_steps exceeds schedule length");
    StepGrid grid;
    switch (spacing) {
    case Spacing::uniform: {
        // t_i = T - i * T / n rounded; strictly decreasing since T / n >= 1.
        const double stride = static_cast<double>(total) / inference_steps;
        for (int i = 0; i < inference_steps; ++i) {
            grid.timesteps.push_back(static_cast<int>(std::lround(total - i * stride)));
        }
        break;
    }
    }
    return grid;
}

}  // namespace vldnp

// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vldnp/detector.hpp"
#include "vldnp/guidance.hpp"
#include "vldnp/mixture_world.hpp"
#include "vldnp/noise_schedule.hpp"

namespace vldnp {

/// Steps at which the detector is queried, counted down from the noisy end:
/// entry e fires at grid position (inference_steps - 1 - e). Entries that map
/// outside the grid never fire.
struct QuerySchedule {
    std::vector<int> entries{45, 44, 43, 41, 38, 34, 29, 23, 16, 8};

    /// Throws on duplicate or non-positive entries.
    void validate() const;
    /// Grid positions that fire for a grid of `inference_steps`, increasing.
    std::vector<int> positions(int inference_steps) const;
};

bool is_query_step(const QuerySchedule& qs, int grid_position, int inference_steps);

enum class SamplerKind { ancestral, dpm_solver_pp_1, dpm_solver_pp_2m };

std::string_view to_string(SamplerKind k);
SamplerKind parse_sampler_kind(std::string_view name, int order = 2);

enum class EventKind { query, neg_update, step };
std::string_view to_string(EventKind k);

struct Event {
    int step = 0;  // grid position
    EventKind kind = EventKind::step;
    nlohmann::json payload;
};

struct TrajectoryState {
    Vec2 x = Vec2::Zero();
    int grid_position = 0;
    NegativeCondition active_negative;
    std::mt19937_64 rng;
    std::vector<Event> events;
    bool record_steps = false;

    // Multistep memory for the second-order solver.
    std::optional<Vec2> previous_x0;
    double previous_h = 0.0;

    /// Fresh state: seeds the generator and draws x_T ~ N(0, I) from it.
    static TrajectoryState initial(std::uint64_t seed);
};

/// One reverse step with the DDPM posterior mean built from the composed
/// score and noise variance beta_{t|s} = 1 - alpha_bar_t / alpha_bar_s. The
/// last step returns the data prediction without noise.
TrajectoryState step_ancestral(const MixtureWorld& world, const NoiseSchedule& schedule, const StepGrid& grid,
                               TrajectoryState state, const GuidanceConfig& cfg);

/// One DPM-Solver++ step in data-prediction form (order 1 or 2M multistep).
TrajectoryState step_dpmpp(const MixtureWorld& world, const NoiseSchedule& schedule, const StepGrid& grid,
                           TrajectoryState state, const GuidanceConfig& cfg, int order);

/// Raised when a trajectory cannot finish; carries the grid position.
class TrajectoryError : public Error {
public:
    TrajectoryError(const std::string& what, int step, std::vector<Event> events = {})
        : Error(what), step_(step), events_(std::move(events)) {}
    int step() const { return step_; }
    /// Events logged before the failure.
    const std::vector<Event>& events() const { return events_; }

private:
    int step_;
    std::vector<Event> events_;
};

struct RunOptions {
    SamplerKind sampler = SamplerKind::dpm_solver_pp_2m;
    QuerySchedule query_schedule;
    bool record_steps = false;
};

struct TrajectoryResult {
    Vec2 x0 = Vec2::Zero();
    std::vector<Event> events;
};

/// Full generation loop. cfg_only never queries the detector; negprompt_v1
/// and mixed_v2 query it once at grid position 0 and keep that negative;
/// dynamic_v5 queries it at every scheduled position and keeps the latest
/// reply until the next query. `detector` may be null only for cfg_only.
TrajectoryResult run_trajectory(const MixtureWorld& world, const NoiseSchedule& schedule, const StepGrid& grid,
                                const GuidanceConfig& cfg, const Detector* detector, std::uint64_t seed,
                                const RunOptions& options = {});

std::string events_to_jsonl(const std::vector<Event>& events);

}  // namespace vldnp

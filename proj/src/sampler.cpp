// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#include "vldnp/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace vldnp {

void QuerySchedule::validate() const {
    std::set<int> seen;
    for (int e : entries) {
        if (e < 1) throw Error("query schedule entries must be positive");
        if (!seen.insert(e).second) throw Error("duplicate query schedule entry " + std::to_string(e));
    }
}

std::vector<int> QuerySchedule::positions(int inference_steps) const {
    std::vector<int> out;
    for (int e : entries) {
        const int pos = inference_steps - 1 - e;
        if (e >= 1 && pos >= 0) out.push_back(pos);
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool is_query_step(const QuerySchedule& qs, int grid_position, int inference_steps) {
    const int countdown = inference_steps - 1 - grid_position;
    return std::find(qs.entries.begin(), qs.entries.end(), countdown) != qs.entries.end();
}

std::string_view to_string(SamplerKind k) {
    switch (k) {
    case SamplerKind::ancestral: return "ancestral";
    case SamplerKind::dpm_solver_pp_1: return "dpm_solver_pp_1";
    case SamplerKind::dpm_solver_pp_2m: return "dpm_solver_pp_2m";
    }
    return "?";
}

SamplerKind parse_sampler_kind(std::string_view name, int order) {
    if (name == "ancestral") return SamplerKind::ancestral;
    if (name == "dpm_solver_pp_1") return SamplerKind::dpm_solver_pp_1;
    if (name == "dpm_solver_pp_2m") return SamplerKind::dpm_solver_pp_2m;
    if (name == "dpm_solver_pp") {
        if (order == 1) return SamplerKind::dpm_solver_pp_1;
        if (order == 2) return SamplerKind::dpm_solver_pp_2m;
        throw Error("sampler order must be 1 or 2");
    }
    throw Error("unknown sampler kind '" + std::string(name) + "'");
}

std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::query: return "query";
    case EventKind::neg_update: return "neg_update";
    case EventKind::step: return "step";
    }
    return "?";
}

TrajectoryState TrajectoryState::initial(std::uint64_t seed) {
    TrajectoryState state;
    state.rng.seed(seed);
    std::normal_distribution<double> normal;
    const double z0 = normal(state.rng);
    const double z1 = normal(state.rng);
    state.x = Vec2(z0, z1);
    return state;
}

namespace {

void record_step(TrajectoryState& state, int t, int s) {
    if (!state.record_steps) return;
    state.events.push_back(
        {state.grid_position, EventKind::step, {{"t", t}, {"next_t", s}, {"x", {state.x.x(), state.x.y()}}}});
}

void check_position(const TrajectoryState& state, const StepGrid& grid) {
    if (state.grid_position < 0 || state.grid_position >= grid.inference_steps())
        throw Error("trajectory already finished");
}

}  // namespace

TrajectoryState step_ancestral(const MixtureWorld& world, const NoiseSchedule& schedule, const StepGrid& grid,
                               TrajectoryState state, const GuidanceConfig& cfg) {
    check_position(state, grid);
    const int t = grid.timesteps[static_cast<std::size_t>(state.grid_position)];
    const int s = grid.next_timestep(state.grid_position);
    const double ab_t = schedule.alpha_bar(t);
    const double ab_s = schedule.alpha_bar(s);

    const Vec2 x0 = data_prediction(state.x, ab_t, composed_score(world, state.x, ab_t, cfg, state.active_negative));
    if (s == 0) {
        state.x = x0;
    } else {
        const double alpha_ts = ab_t / ab_s;
        const double beta_ts = 1.0 - alpha_ts;
        const Vec2 mean = (std::sqrt(ab_s) * beta_ts / (1.0 - ab_t)) * x0 +
                          (std::sqrt(alpha_ts) * (1.0 - ab_s) / (1.0 - ab_t)) * state.x;
        std::normal_distribution<double> normal;
        const double z0 = normal(state.rng);
        const double z1 = normal(state.rng);
        state.x = mean + std::sqrt(beta_ts) * Vec2(z0, z1);
    }
    record_step(state, t, s);
    ++state.grid_position;
    return state;
}

TrajectoryState step_dpmpp(const MixtureWorld& world, const NoiseSchedule& schedule, const StepGrid& grid,
                           TrajectoryState state, const GuidanceConfig& cfg, int order) {
    check_position(state, grid);
    if (order != 1 && order != 2) throw Error("DPM-Solver++ order must be 1 or 2");
    const int t = grid.timesteps[static_cast<std::size_t>(state.grid_position)];
    const int s = grid.next_timestep(state.grid_position);
    const double ab_t = schedule.alpha_bar(t);

    const Vec2 x0 = data_prediction(state.x, ab_t, composed_score(world, state.x, ab_t, cfg, state.active_negative));
    if (s == 0) {
        // lambda_s = +inf: the update degenerates to the data prediction.
        state.x = x0;
        state.previous_x0.reset();
    } else {
        const double ab_s = schedule.alpha_bar(s);
        const double alpha_t = std::sqrt(ab_t), sigma_t = std::sqrt(1.0 - ab_t);
        const double alpha_s = std::sqrt(ab_s), sigma_s = std::sqrt(1.0 - ab_s);
        const double h = std::log(alpha_s / sigma_s) - std::log(alpha_t / sigma_t);

        Vec2 d = x0;
        if (order == 2 && state.previous_x0) {
            const double r = state.previous_h / h;
            d = (1.0 + 0.5 / r) * x0 - (0.5 / r) * *state.previous_x0;
        }
        state.x = (sigma_s / sigma_t) * state.x - alpha_s * std::expm1(-h) * d;
        state.previous_x0 = x0;
        state.previous_h = h;
    }
    record_step(state, t, s);
    ++state.grid_position;
    return state;
}

TrajectoryResult run_trajectory(const MixtureWorld& world, const NoiseSchedule& schedule, const StepGrid& grid,
                                const GuidanceConfig& cfg, const Detector* detector, std::uint64_t seed,
                                const RunOptions& options) {
    cfg.validate();
    options.query_schedule.validate();
    const bool uses_negative = cfg.variant != GuidanceVariant::cfg_only;
    if (uses_negative && detector == nullptr)
        throw Error("guidance variant " + std::string(to_string(cfg.variant)) + " needs a detector");
    const bool dynamic = cfg.variant == GuidanceVariant::dynamic_v5;

    TrajectoryState state = TrajectoryState::initial(seed);
    state.record_steps = options.record_steps;
    const int n = grid.inference_steps();

    for (int pos = 0; pos < n; ++pos) {
        const bool query = uses_negative && (dynamic ? is_query_step(options.query_schedule, pos, n) : pos == 0);
        if (query) {
            const int t = grid.timesteps[static_cast<std::size_t>(pos)];
            const Vec2 x0_hat = predict_x0(world, state.x, schedule.alpha_bar(t), cfg);
            NegativeCondition reply;
            try {
                reply = detector->detect(x0_hat, pos);
            } catch (const std::exception& e) {
                throw TrajectoryError("detector failed at step " + std::to_string(pos) + ": " + e.what(), pos,
                                      std::move(state.events));
            }
            reply.issued_at = pos;
            state.events.push_back({pos,
                                    EventKind::query,
                                    {{"t", t},
                                     {"x0_hat", {x0_hat.x(), x0_hat.y()}},
                                     {"concepts", world.names_of(reply.concepts)}}});
            if (reply.concepts != state.active_negative.concepts) {
                state.events.push_back({pos,
                                        EventKind::neg_update,
                                        {{"from", world.names_of(state.active_negative.concepts)},
                                         {"to", world.names_of(reply.concepts)}}});
            }
            state.active_negative = reply;
        }
        try {
            switch (options.sampler) {
            case SamplerKind::ancestral: state = step_ancestral(world, schedule, grid, std::move(state), cfg); break;
            case SamplerKind::dpm_solver_pp_1: state = step_dpmpp(world, schedule, grid, std::move(state), cfg, 1); break;
            case SamplerKind::dpm_solver_pp_2m: state = step_dpmpp(world, schedule, grid, std::move(state), cfg, 2); break;
            }
        } catch (const Error& e) {
            throw TrajectoryError("step " + std::to_string(pos) + ": " + e.what(), pos, std::move(state.events));
        }
        if (!state.x.allFinite())
            throw TrajectoryError("non-finite state at step " + std::to_string(pos), pos, std::move(state.events));
    }
    return {state.x, std::move(state.events)};
}

std::string events_to_jsonl(const std::vector<Event>& events) {
    std::ostringstream out;
    for (const auto& e : events) {
        out << nlohmann::json{{"step", e.step}, {"kind", to_string(e.kind)}, {"payload", e.payload}}.dump() << '\n';
    }
    return out.str();
}

}  // namespace vldnp

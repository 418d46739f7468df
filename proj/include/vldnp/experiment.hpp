// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vldnp/detector.hpp"
#include "vldnp/guidance.hpp"
#include "vldnp/metrics.hpp"
#include "vldnp/mixture_world.hpp"
#include "vldnp/noise_schedule.hpp"
#include "vldnp/sampler.hpp"

namespace vldnp {

struct ScheduleParams {
    int total_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int inference_steps = 50;
};

/// Resolved experiment configuration. Every field has a default, so an
/// empty JSON document is a valid config.
///
/// Each sweep cell runs `trajectories` paired seeds twice: once with the
/// safety prompt (ASR and toxic rate are measured there) and once with the
/// fidelity prompt (alignment and the Frechet distance to exact samples of
/// p(x0 | fidelity prompt) are measured there).
struct ExperimentConfig {
    MixtureWorld world = triad_world();
    nlohmann::json world_source = "triad";
    ScheduleParams schedule;
    SamplerKind sampler = SamplerKind::dpm_solver_pp_2m;
    QuerySchedule query_schedule;
    GuidanceConfig guidance;  // variant and omega_neg are used by single runs
    DetectorSpec detector;    // drives dynamic_v5 cells and single runs

    std::vector<GuidanceVariant> variants{GuidanceVariant::dynamic_v5, GuidanceVariant::mixed_v2};
    std::vector<double> omega_neg_sweep{0.0, 7.5, 15.0, 20.0, 25.0};
    std::vector<std::string> safety_prompt{"cat", "nsfw"};
    std::vector<std::string> fidelity_prompt{"cat"};
    double tau_asr = 0.5;
    std::size_t trajectories = 2000;
    std::size_t reference_samples = 50000;
    std::size_t audit_trajectories = 1;
    std::uint64_t seed = 0;
    int threads = 1;

    static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
    static ExperimentConfig load(const std::filesystem::path& path);
    /// Resolved configuration, including defaults.
    nlohmann::json to_json() const;
    /// FNV-1a digest of the resolved configuration without the thread count.
    std::string digest() const;
    void validate() const;

    NoiseSchedule build_noise_schedule() const;
    StepGrid build_grid(const NoiseSchedule& schedule) const;
};

/// Method family name used in reports: "cfg", "static" or "dynamic".
std::string method_name(GuidanceVariant v);

/// Detector used by sweep cells of variant `v`: none for cfg_only, a static
/// detector over the full unsafe vocabulary for negprompt_v1 and mixed_v2,
/// and the configured detector for dynamic_v5.
std::optional<DetectorSpec> cell_detector(const ExperimentConfig& config, GuidanceVariant v);

struct AuditTrail {
    std::string name;  // file stem
    std::vector<Event> events;
    std::string error;
};

struct SweepResult {
    std::vector<MetricsReport> reports;
    std::vector<AuditTrail> audits;
};

/// One report per (variant, omega_neg) cell, variants outermost. Trajectory
/// seeds depend only on the master seed and the trajectory index, so every
/// cell sees the same noise. A failing trajectory marks its cell failed.
SweepResult run_sweep(const ExperimentConfig& config);

struct ParetoPoint {
    std::string label;
    double safety = 0.0;
    double alignment = 0.0;
    std::map<std::string, double> extra;

    /// "safety", "alignment" or a key of `extra`; throws if missing.
    double metric(const std::string& name) const;
};

/// Safety = 1 - asr; extra carries frechet, neg_frechet and toxic_rate.
/// Failed reports are skipped.
std::vector<ParetoPoint> pareto_points(const std::vector<MetricsReport>& reports);

/// Indices (in input order) of points not dominated on `axes`, all of which
/// are larger-is-better.
std::vector<std::size_t> pareto_front_indices(const std::vector<ParetoPoint>& points,
                                              const std::vector<std::string>& axes);
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points, const std::vector<std::string>& axes);

inline const std::vector<std::string> kFigureAxes{"safety", "alignment"};
inline const std::vector<std::string> kFullAxes{"safety", "alignment", "neg_frechet"};

/// Header "label,safety,alignment,frechet,dominated,dominated_3axis"; the
/// dominated flag uses the safety/alignment axes.
std::string pareto_csv(const std::vector<ParetoPoint>& points);

/// Writes results.csv, pareto.csv, config.json and events/*.jsonl. Refuses a
/// non-empty directory unless `force`.
void emit_report(const SweepResult& result, const ExperimentConfig& config, const std::filesystem::path& output_dir,
                 bool force);

}  // namespace vldnp

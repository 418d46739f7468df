// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion, with the
// measured values, and exits nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "vldnp/experiment.hpp"
#include "vldnp/oracle.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a macro named _res.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace vldnp;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double time_limit_seconds;  // 0 means no limit
    std::function<Outcome()> run;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

const MixtureWorld& triad() {
    static const MixtureWorld world = triad_world();
    return world;
}

ConceptSet cset(const char* name) { return ConceptSet::single(triad().concept_index(name)); }

GuidanceConfig guidance(GuidanceVariant v, double wp, double wn, ConceptSet positive) {
    GuidanceConfig g;
    g.variant = v;
    g.omega_pos = wp;
    g.omega_neg = wn;
    g.positive = positive;
    return g;
}

std::vector<Vec2> run_many(const MixtureWorld& world, const NoiseSchedule& schedule, const StepGrid& grid,
                           const GuidanceConfig& g, const Detector* det, std::size_t n, std::uint64_t master,
                           SamplerKind sampler) {
    RunOptions opts;
    opts.sampler = sampler;
    std::vector<Vec2> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(run_trajectory(world, schedule, grid, g, det, derive_seed(master, i), opts).x0);
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 1 -------------------------------------------------------------------------
Outcome score_correctness() {
    const double err = finite_diff_score_check(triad(), build_schedule(), 1000, 1e-5, 2026);
    return {err < 1e-5, "max abs error " + fmt(err) + " (limit 1e-5)"};
}

// 2 -------------------------------------------------------------------------
Outcome tweedie_identity() {
    const auto schedule = build_schedule();
    auto g = guidance(GuidanceVariant::cfg_only, 0.0, 0.0, cset("cat"));
    g.unguided_x0 = true;
    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> ux(-4, 4);
    std::uniform_int_distribution<int> ut(1, schedule.total_steps());
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double x0 = ux(rng), x1 = ux(rng);
        const double ab = schedule.alpha_bar(ut(rng));
        const Vec2 x(x0, x1);
        worst = std::max(worst, (predict_x0(triad(), x, ab, g) - posterior_mean_by_quadrature(triad(), x, ab))
                                    .cwiseAbs()
                                    .maxCoeff());
    }
    return {worst < 1e-3, "max abs error " + fmt(worst) + " over 100 points (limit 1e-3)"};
}

// 3 -------------------------------------------------------------------------
Outcome collapse_identities() {
    const auto& world = triad();
    const auto schedule = build_schedule();
    const auto grid = build_step_grid(schedule, 50);
    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> ux(-4, 4), uw(0, 25);
    std::uniform_int_distribution<int> ut(1, 1000);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        const double x0 = ux(rng), x1 = ux(rng);
        const Vec2 x(x0, x1);
        const double ab = schedule.alpha_bar(ut(rng));
        const double wp = uw(rng), wn = uw(rng);
        auto cfg = guidance(GuidanceVariant::cfg_only, wp, 0.0, cset("cat"));
        const Vec2 mixed = mixed_v2_score(world, x, ab, guidance(GuidanceVariant::mixed_v2, wp, 0.0, cset("cat")),
                                          {cset("nsfw"), 0});
        mismatches += mixed != cfg_score(world, x, ab, cfg);
        cfg.base_score = BaseScore::conditional;
        const Vec2 dyn = dynamic_v5_score(world, x, ab, guidance(GuidanceVariant::dynamic_v5, wp, wn, cset("cat")), {});
        mismatches += dyn != cfg_score(world, x, ab, cfg);
    }

    const auto null_detector = make_detector({.kind = DetectorKind::null}, world);
    auto dyn = guidance(GuidanceVariant::dynamic_v5, 7.5, 20.0, cset("cat") | cset("nsfw"));
    auto cfg = guidance(GuidanceVariant::cfg_only, 7.5, 0.0, cset("cat") | cset("nsfw"));
    cfg.base_score = BaseScore::conditional;
    int trajectory_mismatches = 0, trajectories = 0;
    for (auto kind : {SamplerKind::ancestral, SamplerKind::dpm_solver_pp_1, SamplerKind::dpm_solver_pp_2m}) {
        RunOptions opts;
        opts.sampler = kind;
        for (std::uint64_t i = 0; i < 500; ++i) {
            const auto seed = derive_seed(2026, i);
            const auto a = run_trajectory(world, schedule, grid, dyn, null_detector.get(), seed, opts).x0;
            const auto b = run_trajectory(world, schedule, grid, cfg, nullptr, seed, opts).x0;
            trajectory_mismatches += a != b;
            ++trajectories;
        }
    }
    return {mismatches == 0 && trajectory_mismatches == 0,
            std::to_string(mismatches) + " score mismatches in 2000 bitwise comparisons, " +
                std::to_string(trajectory_mismatches) + " of " + std::to_string(trajectories) +
                " paired trajectories differ"};
}

// 4 -------------------------------------------------------------------------
Outcome tilted_identity() {
    const auto& world = triad();
    const ConceptSet cat = cset("cat"), nsfw = cset("nsfw");

    // Oracle agreement over the omega_neg sweep at the default omega_pos.
    double worst_oracle = 0.0;
    for (double wn : {0.0, 7.5, 15.0, 20.0, 25.0}) {
        const TiltParams tilt{cat, nsfw, 7.5, wn};
        const auto samples = rejection_sample_tilted(world, tilt, 50000, derive_seed(2026, 4));
        worst_oracle =
            std::max(worst_oracle, tv_distance(histogram(samples, 4.0, 40), tilted_density(world, tilt, 4.0, 40)));
    }

    // Guided sampler against the tilted grid as the step count grows.
    const TiltParams tilt{cat, nsfw, 2.0, 0.2};
    const auto target = tilted_density(world, tilt, 4.0, 40);
    const auto schedule = build_schedule();
    const auto fixed = make_detector({.kind = DetectorKind::fixed, .vocabulary = nsfw, .static_concepts = nsfw}, world);
    const auto g = guidance(GuidanceVariant::mixed_v2, tilt.omega_pos, tilt.omega_neg, cat);
    std::vector<double> tvs;
    for (int steps : {10, 25, 50}) {
        const auto grid = build_step_grid(schedule, steps);
        const auto samples = run_many(world, schedule, grid, g, fixed.get(), 50000, 2026, SamplerKind::ancestral);
        tvs.push_back(tv_distance(histogram(samples, 4.0, 40), target));
    }
    const bool monotone = tvs[1] < tvs[0] && tvs[2] < tvs[1];
    return {worst_oracle < 0.03 && monotone,
            "oracle TV max " + fmt(worst_oracle) + " (limit 0.03); sampler TV at 10/25/50 steps " + fmt(tvs[0]) + " / " +
                fmt(tvs[1]) + " / " + fmt(tvs[2]) + (monotone ? " (decreasing)" : " (NOT decreasing)")};
}

// 5 -------------------------------------------------------------------------
Outcome solver_validation() {
    const auto schedule = build_schedule();
    const auto grid = build_step_grid(schedule, 50);

    const auto sn = standard_normal_world();
    const auto g0 = guidance(GuidanceVariant::cfg_only, 0.0, 0.0, sn.all_concepts());
    const Vec2 x_T(0.8, -1.1);  // the ODE has zero drift here, so x_0 = x_T
    const auto solve = [&](int order) {
        TrajectoryState state;
        state.x = x_T;
        for (int i = 0; i < grid.inference_steps(); ++i) state = step_dpmpp(sn, schedule, grid, std::move(state), g0, order);
        return (state.x - x_T).norm() / x_T.norm();
    };
    const double err1 = solve(1), err2 = solve(2);

    const auto& world = triad();
    const auto g = guidance(GuidanceVariant::cfg_only, 1.0, 0.0, cset("cat"));
    const auto anc = run_many(world, schedule, grid, g, nullptr, 20000, 2026, SamplerKind::ancestral);
    const auto ode = run_many(world, schedule, grid, g, nullptr, 20000, 2026, SamplerKind::dpm_solver_pp_2m);
    const double tv = tv_distance(histogram(anc, 4.0, 40), histogram(ode, 4.0, 40));

    // Two-sample noise level for exact draws of the same target, for context.
    const auto e1 = sample_prior(world, 20000, derive_seed(2026, 51), cset("cat"));
    const auto e2 = sample_prior(world, 20000, derive_seed(2026, 52), cset("cat"));
    const double floor = tv_distance(histogram(e1, 4.0, 40), histogram(e2, 4.0, 40));

    const bool ok = err1 < 1e-2 && err2 < err1 && tv < 0.05;
    return {ok, "order-1 rel error " + fmt(err1) + " (limit 1e-2), order-2 rel error " + fmt(err2) +
                    "; ancestral vs ODE TV " + fmt(tv) + " (limit 0.05, exact two-sample TV " + fmt(floor) + ")"};
}

// 6 -------------------------------------------------------------------------
ExperimentConfig sweep_config(std::vector<GuidanceVariant> variants) {
    auto cfg = ExperimentConfig::from_json(nlohmann::json::object());
    cfg.variants = std::move(variants);
    cfg.trajectories = 2000;
    cfg.seed = 2026;
    return cfg;
}

Outcome safety_monotonicity() {
    const auto reports = run_sweep(sweep_config({GuidanceVariant::dynamic_v5})).reports;
    bool monotone = true;
    std::string series;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (reports[i].failed) return {false, "cell failed: " + reports[i].error};
        if (i > 0) monotone = monotone && reports[i].asr <= reports[i - 1].asr;
        series += (i ? " " : "") + fmt(reports[i].asr);
    }
    const double at0 = reports[0].asr, at20 = reports[3].asr;
    const bool ratio = at20 <= 0.2 * at0;
    return {monotone && ratio && at0 > 0.0, "ASR over omega_neg {0,7.5,15,20,25}: " + series +
                                                (monotone ? " (non-increasing)" : " (NOT monotone)") +
                                                "; ASR(20)/ASR(0) = " + fmt(at20 / at0) + " (limit 0.2)"};
}

// 7 -------------------------------------------------------------------------
Outcome tradeoff_asymmetry() {
    const auto reports = run_sweep(sweep_config({GuidanceVariant::dynamic_v5, GuidanceVariant::mixed_v2})).reports;
    const std::size_t k = reports.size() / 2;
    bool ok = true;
    int matched = 0;
    std::string detail;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& d = reports[i];
        const auto& s = reports[k + i];
        if (d.failed || s.failed) return {false, "failed cell"};
        if (d.omega_neg == 0.0 || std::abs(d.asr - s.asr) > 0.05) continue;
        ++matched;
        const bool align_ok = d.alignment >= s.alignment;
        const bool frechet_ok = d.frechet <= s.frechet;
        ok = ok && align_ok && frechet_ok;
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s w=%g: align %.15g vs %.15g%s, frechet %.4g vs %.4g%s", detail.empty() ? "" : ";",
                      d.omega_neg, d.alignment, s.alignment, align_ok ? "" : " (worse)", d.frechet, s.frechet,
                      frechet_ok ? "" : " (worse)");
        detail += buf;
    }
    const auto points = pareto_points(reports);
    const auto front = pareto_front_indices(points, kFullAxes);
    const std::size_t static_high = points.size() - 1;
    const bool dominated = std::find(front.begin(), front.end(), static_high) == front.end();
    ok = ok && matched > 0 && dominated;
    return {ok, std::to_string(matched) + " matched pairs (dynamic vs static):" + detail + "; " + points[static_high].label +
                    (dominated ? " dominated" : " NOT dominated") + " on (safety, alignment, -frechet)"};
}

// 8 -------------------------------------------------------------------------
Outcome determinism() {
    const fs::path base = fs::temp_directory_path() / ("vldnp_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(base);
    fs::create_directories(base);
    std::vector<std::string> csvs;
    std::string how;
#ifdef VLDNP_CLI_PATH
    how = "CLI sweep";
    for (int threads : {1, 4, 1, 3}) {
        const fs::path out = base / ("t" + std::to_string(csvs.size()));
        const std::string cmd = std::string(VLDNP_CLI_PATH) + " sweep --seed 7 --threads " + std::to_string(threads) +
                                " --out " + out.string() + " > /dev/null";
        if (std::system(cmd.c_str()) != 0) return {false, "sweep command failed: " + cmd};
        csvs.push_back(slurp(out / "results.csv"));
    }
#else
    how = "library sweep";
    for (int threads : {1, 4, 1, 3}) {
        auto cfg = sweep_config({GuidanceVariant::dynamic_v5, GuidanceVariant::mixed_v2});
        cfg.seed = 7;
        cfg.threads = threads;
        const fs::path out = base / ("t" + std::to_string(csvs.size()));
        emit_report(run_sweep(cfg), cfg, out, false);
        csvs.push_back(slurp(out / "results.csv"));
    }
#endif
    fs::remove_all(base);
    bool same = !csvs[0].empty();
    for (const auto& c : csvs) same = same && c == csvs[0];
    return {same, how + " with threads 1, 4, 1, 3: results.csv " + (same ? "byte-identical" : "DIFFERS") + " (" +
                      std::to_string(csvs[0].size()) + " bytes)"};
}

// 9 -------------------------------------------------------------------------
Outcome detector_protocol() {
    const auto& world = triad();
    DetectorSpec served;
    served.vocabulary = world.unsafe_concepts();
    MockDetectorServer server(world, served);
    const int port = server.start("127.0.0.1", 0);

    DetectorSpec remote = served;
    remote.kind = DetectorKind::remote;
    remote.endpoint = server.endpoint();
    const auto client = make_detector(remote, world);
    const auto oracle = make_detector(served, world);
    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> u(-3, 4);
    int agree = 0, detections = 0;
    for (int i = 0; i < 100; ++i) {
        const double x0 = u(rng), x1 = u(rng);
        const auto want = oracle->detect(Vec2(x0, x1), i);
        agree += client->detect(Vec2(x0, x1), i) == want;
        detections += !want.empty();
    }

    httplib::Client raw("127.0.0.1", port);
    const auto status = [&](const std::string& body) {
        const auto res = raw.Post("/detect", body, "application/json");
        return res ? res->status : -1;
    };
    const int s_garbage = status("{not json");
    const int s_missing = status(R"({"step": 3, "vocabulary": ["nsfw"]})");
    const int s_outside = status(R"({"x0": [0, 2], "step": 3, "vocabulary": ["cat"]})");
    const bool ok = agree == 100 && s_garbage == 400 && s_missing == 400 && s_outside == 422;
    return {ok, std::to_string(agree) + "/100 remote replies equal the oracle (" + std::to_string(detections) +
                    " non-empty); malformed -> " + std::to_string(s_garbage) + ", missing x0 -> " +
                    std::to_string(s_missing) + ", outside vocabulary -> " + std::to_string(s_outside)};
}

// 10 ------------------------------------------------------------------------
Outcome query_scheduling() {
    const auto cfg = ExperimentConfig::from_json(nlohmann::json::object());
    const auto schedule = cfg.build_noise_schedule();
    const auto grid = cfg.build_grid(schedule);
    const auto detector = make_detector(cfg.detector, cfg.world);
    auto g = cfg.guidance;
    g.variant = GuidanceVariant::dynamic_v5;
    RunOptions opts;
    opts.query_schedule = cfg.query_schedule;
    std::vector<int> logged;
    for (const auto& e : run_trajectory(cfg.world, schedule, grid, g, detector.get(), 2026, opts).events) {
        if (e.kind == EventKind::query) logged.push_back(e.step);
    }
    const std::vector<int> expected{4, 5, 6, 8, 11, 15, 20, 26, 33, 41};
    std::string got;
    for (int p : logged) got += (got.empty() ? "" : ",") + std::to_string(p);
    return {logged == expected, std::to_string(logged.size()) + " queries at positions {" + got + "}"};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "score correctness", 5, score_correctness},
        {2, "Tweedie identity", 30, tweedie_identity},
        {3, "guidance collapse identities", 0, collapse_identities},
        {4, "tilted-distribution identity", 300, tilted_identity},
        {5, "solver validation", 0, solver_validation},
        {6, "safety monotonicity", 0, safety_monotonicity},
        {7, "trade-off asymmetry", 0, tradeoff_asymmetry},
        {8, "determinism", 0, determinism},
        {9, "detector protocol", 0, detector_protocol},
        {10, "query scheduling", 0, query_scheduling},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = c.time_limit_seconds <= 0 || secs < c.time_limit_seconds;
        const bool pass = out.ok && in_time;
        failures += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << out.detail << " ["
                  << fmt(secs) << " s";
        if (c.time_limit_seconds > 0) std::cout << ", limit " << fmt(c.time_limit_seconds) << " s";
        std::cout << "]" << std::endl;
    }
    std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}

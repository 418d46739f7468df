// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end: validate, sample, sweep, pareto and serve-mock.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "vldnp/experiment.hpp"
#include "vldnp/oracle.hpp"

namespace fs = std::filesystem;
using namespace vldnp;

namespace {

struct GlobalOptions {
    std::string config;
    std::string out;
    bool force = false;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
};

ExperimentConfig load_config(const GlobalOptions& g) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig::from_json(nlohmann::json::object())
                                            : ExperimentConfig::load(g.config);
    if (g.threads) cfg.threads = *g.threads;
    if (g.seed) cfg.seed = *g.seed;
    cfg.validate();
    return cfg;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// validate -----------------------------------------------------------------

struct Check {
    std::string name;
    bool ok;
    std::string detail;
};

std::vector<Check> run_checks(const ExperimentConfig& cfg) {
    std::vector<Check> checks;
    const auto schedule = cfg.build_noise_schedule();
    const auto& world = cfg.world;
    const auto fmt = [](double v) { return format_double(v); };

    const double fd = finite_diff_score_check(world, schedule, 1000, 1e-5, cfg.seed);
    checks.push_back({"score matches finite differences", fd < 1e-5, "max abs error " + fmt(fd)});

    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    std::uniform_real_distribution<double> ux(-4, 4);
    std::uniform_int_distribution<int> ut(1, schedule.total_steps());
    GuidanceConfig g = cfg.guidance;
    g.unguided_x0 = true;
    double tweedie = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double x0 = ux(rng), x1 = ux(rng);
        const double ab = schedule.alpha_bar(ut(rng));
        const Vec2 x(x0, x1);
        tweedie = std::max(tweedie, (predict_x0(world, x, ab, g) - posterior_mean_by_quadrature(world, x, ab))
                                        .cwiseAbs()
                                        .maxCoeff());
    }
    checks.push_back({"x0 prediction matches posterior mean", tweedie < 1e-3, "max abs error " + fmt(tweedie)});

    const ConceptSet positive = world.concepts_of(cfg.fidelity_prompt);
    const ConceptSet negative = world.unsafe_concepts();
    for (double wn : cfg.omega_neg_sweep) {
        const TiltParams tilt{positive, negative, cfg.guidance.omega_pos, wn};
        const auto samples = rejection_sample_tilted(world, tilt, 50000, derive_seed(cfg.seed, 2));
        const double tv = tv_distance(histogram(samples, 4.0, 40), tilted_density(world, tilt, 4.0, 40));
        checks.push_back({"tilted oracles agree at omega_neg=" + fmt(wn), tv < 0.03, "TV " + fmt(tv)});
    }
    return checks;
}

int cmd_validate(const GlobalOptions& g) {
    const auto cfg = load_config(g);
    bool all = true;
    for (const auto& c : run_checks(cfg)) {
        std::cout << (c.ok ? "ok    " : "FAIL  ") << c.name << " (" << c.detail << ")\n";
        all = all && c.ok;
    }
    return all ? 0 : 1;
}

// sample -------------------------------------------------------------------

int cmd_sample(const GlobalOptions& g, std::uint64_t index, bool record_steps) {
    const auto cfg = load_config(g);
    const auto schedule = cfg.build_noise_schedule();
    const auto grid = cfg.build_grid(schedule);
    std::unique_ptr<Detector> detector;
    if (auto spec = cell_detector(cfg, cfg.guidance.variant)) detector = make_detector(*spec, cfg.world);
    RunOptions opts;
    opts.sampler = cfg.sampler;
    opts.query_schedule = cfg.query_schedule;
    opts.record_steps = record_steps;
    const auto seed = derive_seed(cfg.seed, index);
    const auto result = run_trajectory(cfg.world, schedule, grid, cfg.guidance, detector.get(), seed, opts);
    std::cout << nlohmann::json{{"x0", {result.x0.x(), result.x0.y()}}, {"seed", seed}}.dump() << '\n'
              << events_to_jsonl(result.events);
    return 0;
}

// sweep --------------------------------------------------------------------

int cmd_sweep(const GlobalOptions& g) {
    if (g.out.empty()) throw Error("sweep needs --out <dir>");
    const fs::path out = g.out;
    if (fs::exists(out) && !fs::is_empty(out) && !g.force)
        throw Error("output directory " + out.string() + " is not empty (use --force to overwrite)");
    const auto cfg = load_config(g);
    const auto result = run_sweep(cfg);
    emit_report(result, cfg, out, g.force);
    std::cout << metrics_csv_header() << '\n';
    for (const auto& r : result.reports) std::cout << metrics_csv_row(r) << '\n';
    std::size_t failed = 0;
    for (const auto& r : result.reports) failed += r.failed;
    if (failed > 0) std::cerr << failed << " cell(s) failed; see " << (out / "events").string() << '\n';
    return 0;
}

// pareto -------------------------------------------------------------------

int cmd_pareto(const GlobalOptions& g, std::string results) {
    if (results.empty()) {
        if (g.out.empty()) throw Error("pareto needs a results.csv path or --out <dir>");
        results = (fs::path(g.out) / "results.csv").string();
    }
    const auto points = pareto_points(parse_metrics_csv(read_file(results)));
    const auto csv = pareto_csv(points);
    if (!g.out.empty()) {
        const fs::path target = fs::path(g.out) / "pareto.csv";
        if (fs::exists(target) && !g.force && read_file(target) != csv)
            throw Error(target.string() + " exists and differs (use --force to overwrite)");
        fs::create_directories(g.out);
        std::ofstream(target, std::ios::binary) << csv;
    }
    std::cout << csv;
    return 0;
}

// serve-mock ---------------------------------------------------------------

int cmd_serve_mock(const GlobalOptions& g, const std::string& host, int port) {
    const auto cfg = load_config(g);
    DetectorSpec spec = cfg.detector;
    spec.kind = DetectorKind::oracle;

    // Block the stop signals before any thread starts so that only sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    MockDetectorServer server(cfg.world, spec);
    const int bound = server.start(host, port);
    std::cout << "mock detector listening on http://" << host << ':' << bound << std::endl;
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic negative guidance lab on Gaussian-mixture worlds"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--force", g.force, "Overwrite a non-empty output directory");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", g.seed, "Master seed");

    auto* validate = app.add_subcommand("validate", "Run the oracle checks; nonzero exit on failure");

    std::uint64_t index = 0;
    bool record_steps = false;
    auto* sample = app.add_subcommand("sample", "Run one trajectory and print x0 and its events");
    sample->add_option("--index", index, "Trajectory index under the master seed");
    sample->add_flag("--record-steps", record_steps, "Also log every solver step");

    auto* sweep = app.add_subcommand("sweep", "Run the full omega_neg sweep and write the report");

    std::string results;
    auto* pareto = app.add_subcommand("pareto", "Recompute Pareto flags from results.csv");
    pareto->add_option("results", results, "Path to results.csv (defaults to <out>/results.csv)");

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve-mock", "Serve the oracle detector over HTTP");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_validate(g);
        if (*sample) return cmd_sample(g, index, record_steps);
        if (*sweep) return cmd_sweep(g);
        if (*pareto) return cmd_pareto(g, results);
        if (*serve) return cmd_serve_mock(g, host, port);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

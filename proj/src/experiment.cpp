// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#include "vldnp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace vldnp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kConfigGroups{"world",   "schedule",   "guidance", "sampler", "query_schedule",
                                          "detector", "experiment", "prompts",  "metrics"};

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename T>
T get_or(const json& group, const char* key, T fallback) {
    return group.contains(key) ? group.at(key).get<T>() : fallback;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw Error("config must be a JSON object");
    for (const auto& [key, _] : doc.items()) {
        if (!kConfigGroups.contains(key)) throw Error("unknown config group '" + key + "'");
    }
    ExperimentConfig cfg;
    try {
        if (doc.contains("world")) {
            const auto& w = doc.at("world");
            cfg.world_source = w;
            if (w.is_object()) {
                cfg.world = MixtureWorld::from_json(w);
            } else if (w.get<std::string>() == "triad") {
                cfg.world = triad_world();
            } else {
                fs::path p = w.get<std::string>();
                if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
                cfg.world = MixtureWorld::load(p.string());
            }
        }
        const json empty = json::object();
        const auto group = [&](const char* name) -> const json& { return doc.contains(name) ? doc.at(name) : empty; };

        const auto& sch = group("schedule");
        cfg.schedule.total_steps = get_or(sch, "T", cfg.schedule.total_steps);
        cfg.schedule.beta_start = get_or(sch, "beta_start", cfg.schedule.beta_start);
        cfg.schedule.beta_end = get_or(sch, "beta_end", cfg.schedule.beta_end);
        cfg.schedule.inference_steps = get_or(sch, "inference_steps", cfg.schedule.inference_steps);

        const auto& smp = group("sampler");
        cfg.sampler = parse_sampler_kind(get_or<std::string>(smp, "kind", "dpm_solver_pp"), get_or(smp, "order", 2));
        cfg.seed = get_or<std::uint64_t>(smp, "seed", cfg.seed);

        const auto& qs = group("query_schedule");
        cfg.query_schedule.entries = get_or(qs, "entries", cfg.query_schedule.entries);

        const auto& prompts = group("prompts");
        cfg.safety_prompt = get_or(prompts, "safety", cfg.safety_prompt);
        cfg.fidelity_prompt = get_or(prompts, "fidelity", cfg.fidelity_prompt);

        const auto& gd = group("guidance");
        cfg.guidance.variant = parse_guidance_variant(get_or<std::string>(gd, "variant", "dynamic_v5"));
        cfg.guidance.omega_pos = get_or(gd, "omega_pos", cfg.guidance.omega_pos);
        cfg.guidance.omega_neg = get_or(gd, "omega_neg", 20.0);
        const auto base = get_or<std::string>(gd, "base_score", "default");
        if (base != "default") cfg.guidance.base_score = parse_base_score(base);
        cfg.guidance.positive = cfg.world.concepts_of(get_or(gd, "positive", cfg.safety_prompt));

        cfg.detector = DetectorSpec::from_json(group("detector"), cfg.world);

        const auto& ex = group("experiment");
        if (ex.contains("variants")) {
            cfg.variants.clear();
            for (const auto& v : ex.at("variants")) cfg.variants.push_back(parse_guidance_variant(v.get<std::string>()));
        }
        cfg.omega_neg_sweep = get_or(ex, "omega_neg_sweep", cfg.omega_neg_sweep);
        cfg.trajectories = get_or(ex, "trajectories", cfg.trajectories);
        cfg.reference_samples = get_or(ex, "reference_samples", cfg.reference_samples);
        cfg.audit_trajectories = get_or(ex, "audit_trajectories", cfg.audit_trajectories);
        cfg.threads = get_or(ex, "threads", cfg.threads);

        cfg.tau_asr = get_or(group("metrics"), "tau_asr", cfg.tau_asr);
    } catch (const json::exception& e) {
        throw Error(std::string("invalid config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
    return from_json(doc, path.parent_path());
}

json ExperimentConfig::to_json() const {
    json variants_json = json::array();
    for (auto v : variants) variants_json.push_back(to_string(v));
    return {
        {"world", world.to_json()},
        {"schedule",
         {{"T", schedule.total_steps},
          {"beta_start", schedule.beta_start},
          {"beta_end", schedule.beta_end},
          {"inference_steps", schedule.inference_steps}}},
        {"sampler", {{"kind", to_string(sampler)}, {"seed", seed}}},
        {"query_schedule", {{"entries", query_schedule.entries}}},
        {"guidance",
         {{"variant", to_string(guidance.variant)},
          {"omega_pos", guidance.omega_pos},
          {"omega_neg", guidance.omega_neg},
          {"base_score", guidance.base_score ? std::string(to_string(*guidance.base_score)) : std::string("default")},
          {"positive", world.names_of(guidance.positive)}}},
        {"detector", detector.to_json(world)},
        {"experiment",
         {{"variants", variants_json},
          {"omega_neg_sweep", omega_neg_sweep},
          {"trajectories", trajectories},
          {"reference_samples", reference_samples},
          {"audit_trajectories", audit_trajectories},
          {"threads", threads}}},
        {"prompts", {{"safety", safety_prompt}, {"fidelity", fidelity_prompt}}},
        {"metrics", {{"tau_asr", tau_asr}}},
    };
}

std::string ExperimentConfig::digest() const {
    json doc = to_json();
    doc["experiment"].erase("threads");
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << fnv1a(doc.dump());
    return out.str();
}

void ExperimentConfig::validate() const {
    build_grid(build_noise_schedule());
    query_schedule.validate();
    guidance.validate();
    detector.validate(world);
    if (variants.empty()) throw Error("experiment needs at least one variant");
    std::set<double> seen;
    for (double w : omega_neg_sweep) {
        if (!std::isfinite(w) || w < 0.0) throw Error("omega_neg sweep values must be finite and nonnegative");
        if (!seen.insert(w).second) throw Error("omega_neg sweep values must be distinct");
    }
    if (omega_neg_sweep.empty()) throw Error("omega_neg sweep must not be empty");
    if (trajectories < 1) throw Error("trajectories must be at least 1");
    if (reference_samples < 3) throw Error("reference_samples must be at least 3");
    if (threads < 1) throw Error("threads must be at least 1");
    if (!(tau_asr > 0.0 && tau_asr < 1.0)) throw Error("tau_asr must be in (0, 1)");
    if (world.concepts_of(safety_prompt).empty() || world.concepts_of(fidelity_prompt).empty())
        throw Error("prompts must name at least one concept");
}

NoiseSchedule ExperimentConfig::build_noise_schedule() const {
    return build_schedule(schedule.total_steps, schedule.beta_start, schedule.beta_end);
}

StepGrid ExperimentConfig::build_grid(const NoiseSchedule& s) const {
    return build_step_grid(s, schedule.inference_steps);
}

std::string method_name(GuidanceVariant v) {
    switch (v) {
    case GuidanceVariant::cfg_only: return "cfg";
    case GuidanceVariant::negprompt_v1:
    case GuidanceVariant::mixed_v2: return "static";
    case GuidanceVariant::dynamic_v5: return "dynamic";
    }
    return "?";
}

std::optional<DetectorSpec> cell_detector(const ExperimentConfig& config, GuidanceVariant v) {
    switch (v) {
    case GuidanceVariant::cfg_only: return std::nullopt;
    case GuidanceVariant::negprompt_v1:
    case GuidanceVariant::mixed_v2: {
        DetectorSpec spec;
        spec.kind = DetectorKind::fixed;
        spec.vocabulary = config.world.unsafe_concepts();
        spec.static_concepts = spec.vocabulary;
        return spec;
    }
    case GuidanceVariant::dynamic_v5: return config.detector;
    }
    return std::nullopt;
}

namespace {

struct Cell {
    GuidanceConfig guidance;
    std::unique_ptr<Detector> detector;
    std::vector<Vec2> safety_samples;
    std::vector<Vec2> fidelity_samples;
    std::vector<std::string> errors;  // per trajectory, empty when fine
    std::string stem;
};

std::string cell_stem(GuidanceVariant v, double omega_neg) {
    return method_name(v) + "_" + std::string(to_string(v)) + "_w" + format_double(omega_neg);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config) {
    config.validate();
    const auto schedule = config.build_noise_schedule();
    const auto grid = config.build_grid(schedule);
    const auto& world = config.world;
    const ConceptSet safety = world.concepts_of(config.safety_prompt);
    const ConceptSet fidelity = world.concepts_of(config.fidelity_prompt);
    const ConceptSet unsafe = world.unsafe_concepts();
    const std::size_t n = config.trajectories;

    const auto reference = sample_prior(world, config.reference_samples, derive_seed(config.seed, 0x52454631ULL), fidelity);
    const Moments reference_moments = fit_moments(reference);

    std::vector<Cell> cells;
    for (auto v : config.variants) {
        for (double w : config.omega_neg_sweep) {
            Cell cell;
            cell.guidance = config.guidance;
            cell.guidance.variant = v;
            cell.guidance.omega_neg = w;
            if (auto spec = cell_detector(config, v)) cell.detector = make_detector(*spec, world);
            cell.safety_samples.resize(n);
            cell.fidelity_samples.resize(n);
            cell.errors.resize(n);
            cell.stem = cell_stem(v, w);
            cells.push_back(std::move(cell));
        }
    }

    RunOptions options;
    options.sampler = config.sampler;
    options.query_schedule = config.query_schedule;
    RunOptions audit_options = options;
    audit_options.record_steps = true;

    // Audit trails are indexed like tasks so gathering stays deterministic.
    const std::size_t total = cells.size() * n;
    std::vector<std::vector<AuditTrail>> trails(total);

    const auto run_task = [&](std::size_t task) {
        Cell& cell = cells[task / n];
        const std::size_t i = task % n;
        const std::uint64_t seed = derive_seed(config.seed, i);
        const bool audit = i < config.audit_trajectories;
        const RunOptions& opts = audit ? audit_options : options;
        for (int prompt = 0; prompt < 2; ++prompt) {
            GuidanceConfig g = cell.guidance;
            g.positive = prompt == 0 ? safety : fidelity;
            const std::string name = cell.stem + (prompt == 0 ? "_safety" : "_fidelity") + "_seed" + std::to_string(i);
            try {
                auto result = run_trajectory(world, schedule, grid, g, cell.detector.get(), seed, opts);
                (prompt == 0 ? cell.safety_samples : cell.fidelity_samples)[i] = result.x0;
                if (audit) trails[task].push_back({name, std::move(result.events), {}});
            } catch (const TrajectoryError& e) {
                cell.errors[i] = e.what();
                trails[task].push_back({name, e.events(), e.what()});
                return;
            } catch (const std::exception& e) {
                cell.errors[i] = e.what();
                trails[task].push_back({name, {}, e.what()});
                return;
            }
        }
    };

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t task = next++; task < total; task = next++) run_task(task);
    };
    {
        std::vector<std::jthread> pool;
        for (int t = 1; t < config.threads; ++t) pool.emplace_back(worker);
        worker();
    }

    SweepResult out;
    const std::string digest = config.digest();
    for (const auto& cell : cells) {
        MetricsReport r;
        r.method = method_name(cell.guidance.variant);
        r.variant = std::string(to_string(cell.guidance.variant));
        r.omega_pos = cell.guidance.omega_pos;
        r.omega_neg = cell.guidance.omega_neg;
        r.n = n;
        r.seed = config.seed;
        r.config_digest = digest;
        const auto bad = std::find_if(cell.errors.begin(), cell.errors.end(), [](const auto& e) { return !e.empty(); });
        if (bad != cell.errors.end()) {
            r.failed = true;
            r.error = *bad;
        } else {
            r.asr = attack_success_rate(world, cell.safety_samples, unsafe, config.tau_asr);
            r.toxic_rate = toxic_rate(world, cell.safety_samples, unsafe);
            r.alignment = alignment(world, cell.fidelity_samples, fidelity);
            r.frechet = frechet_distance(fit_moments(cell.fidelity_samples), reference_moments);
        }
        out.reports.push_back(r);
    }
    for (auto& t : trails) {
        for (auto& trail : t) out.audits.push_back(std::move(trail));
    }
    return out;
}

double ParetoPoint::metric(const std::string& name) const {
    if (name == "safety") return safety;
    if (name == "alignment") return alignment;
    const auto it = extra.find(name);
    if (it == extra.end()) throw Error("point '" + label + "' lacks axis '" + name + "'");
    return it->second;
}

std::vector<ParetoPoint> pareto_points(const std::vector<MetricsReport>& reports) {
    std::vector<ParetoPoint> out;
    for (const auto& r : reports) {
        if (r.failed) continue;
        ParetoPoint p;
        p.label = r.method + "/" + r.variant + "@" + format_double(r.omega_neg);
        p.safety = 1.0 - r.asr;
        p.alignment = r.alignment;
        p.extra = {{"frechet", r.frechet}, {"neg_frechet", -r.frechet}, {"toxic_rate", r.toxic_rate}};
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<std::size_t> pareto_front_indices(const std::vector<ParetoPoint>& points,
                                              const std::vector<std::string>& axes) {
    if (points.empty()) throw Error("pareto_front needs at least one point");
    if (axes.empty()) throw Error("pareto_front needs at least one axis");
    std::vector<std::vector<double>> values;
    for (const auto& p : points) {
        std::vector<double> row;
        for (const auto& a : axes) row.push_back(p.metric(a));
        values.push_back(std::move(row));
    }
    const auto dominates = [&](std::size_t a, std::size_t b) {
        bool strictly = false;
        for (std::size_t k = 0; k < axes.size(); ++k) {
            if (values[a][k] < values[b][k]) return false;
            strictly = strictly || values[a][k] > values[b][k];
        }
        return strictly;
    };
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j) dominated = j != i && dominates(j, i);
        if (!dominated) front.push_back(i);
    }
    return front;
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points, const std::vector<std::string>& axes) {
    std::vector<ParetoPoint> out;
    for (auto i : pareto_front_indices(points, axes)) out.push_back(points[i]);
    return out;
}

std::string pareto_csv(const std::vector<ParetoPoint>& points) {
    std::ostringstream out;
    out << "label,safety,alignment,frechet,dominated,dominated_3axis\n";
    if (points.empty()) return out.str();
    const auto front2 = pareto_front_indices(points, kFigureAxes);
    const auto front3 = pareto_front_indices(points, kFullAxes);
    const auto in = [](const std::vector<std::size_t>& v, std::size_t i) {
        return std::find(v.begin(), v.end(), i) != v.end();
    };
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        out << p.label << ',' << format_double(p.safety) << ',' << format_double(p.alignment) << ','
            << format_double(p.metric("frechet")) << ',' << (in(front2, i) ? 0 : 1) << ',' << (in(front3, i) ? 0 : 1)
            << '\n';
    }
    return out.str();
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    out.close();
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

void emit_report(const SweepResult& result, const ExperimentConfig& config, const fs::path& output_dir, bool force) {
    std::error_code ec;
    if (fs::exists(output_dir, ec) && !fs::is_empty(output_dir, ec) && !force)
        throw Error("output directory " + output_dir.string() + " is not empty (use --force to overwrite)");
    fs::create_directories(output_dir / "events", ec);
    if (ec) throw Error("cannot create " + (output_dir / "events").string() + ": " + ec.message());

    std::string csv = metrics_csv_header() + "\n";
    for (const auto& r : result.reports) csv += metrics_csv_row(r) + "\n";
    write_file(output_dir / "results.csv", csv);
    write_file(output_dir / "pareto.csv", pareto_csv(pareto_points(result.reports)));
    write_file(output_dir / "config.json", config.to_json().dump(2) + "\n");
    for (const auto& trail : result.audits) {
        std::string body = events_to_jsonl(trail.events);
        if (!trail.error.empty()) body += json{{"kind", "error"}, {"message", trail.error}}.dump() + "\n";
        write_file(output_dir / "events" / (trail.name + ".jsonl"), body);
    }
}

}  // namespace vldnp

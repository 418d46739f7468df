// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Python extension module vldnp._core. Structured values cross the boundary
// as JSON text so that the Python side can use plain dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vldnp/experiment.hpp"
#include "vldnp/oracle.hpp"

namespace py = pybind11;
using namespace vldnp;

namespace {

std::optional<ConceptSet> condition_of(const MixtureWorld& world, const std::optional<std::vector<std::string>>& names) {
    if (!names) return std::nullopt;
    return world.concepts_of(*names);
}

py::array_t<double> to_array(const std::vector<Vec2>& points) {
    py::array_t<double> out({static_cast<py::ssize_t>(points.size()), py::ssize_t{2}});
    auto view = out.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < view.shape(0); ++i) {
        view(i, 0) = points[static_cast<std::size_t>(i)].x();
        view(i, 1) = points[static_cast<std::size_t>(i)].y();
    }
    return out;
}

ExperimentConfig config_from(const std::string& json_text, const std::string& base_dir) {
    auto cfg = ExperimentConfig::from_json(nlohmann::json::parse(json_text), base_dir);
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Dynamic negative guidance on concept-labeled Gaussian mixtures";
    m.attr("__version__") = "0.1.0";
    py::register_exception<Error>(m, "VldnpError", PyExc_ValueError);
    // Malformed JSON text surfaces as ValueError too.
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const nlohmann::json::exception& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    py::class_<MixtureWorld>(m, "World")
        .def_static("triad", &triad_world, "Default cat/dog/nsfw world")
        .def_static("standard_normal", &standard_normal_world)
        .def_static("from_json", [](const std::string& text) { return MixtureWorld::from_json(nlohmann::json::parse(text)); })
        .def("to_json", [](const MixtureWorld& w) { return w.to_json().dump(); })
        .def_property_readonly("concepts",
                               [](const MixtureWorld& w) {
                                   std::vector<std::string> names;
                                   for (const auto& c : w.concepts()) names.push_back(c.name);
                                   return names;
                               })
        .def_property_readonly("unsafe_concepts", [](const MixtureWorld& w) { return w.names_of(w.unsafe_concepts()); })
        .def(
            "log_density",
            [](const MixtureWorld& w, double x, double y, double alpha_bar,
               const std::optional<std::vector<std::string>>& condition) {
                return log_density(w, Vec2(x, y), alpha_bar, condition_of(w, condition));
            },
            py::arg("x"), py::arg("y"), py::arg("alpha_bar") = 1.0, py::arg("condition") = py::none())
        .def(
            "score",
            [](const MixtureWorld& w, double x, double y, double alpha_bar,
               const std::optional<std::vector<std::string>>& condition) {
                const Vec2 s = score(w, Vec2(x, y), alpha_bar, condition_of(w, condition));
                return std::pair{s.x(), s.y()};
            },
            py::arg("x"), py::arg("y"), py::arg("alpha_bar") = 1.0, py::arg("condition") = py::none())
        .def(
            "concept_posterior",
            [](const MixtureWorld& w, double x, double y, const std::vector<std::string>& concepts, double alpha_bar) {
                return concept_posterior(w, Vec2(x, y), w.concepts_of(concepts), alpha_bar);
            },
            py::arg("x"), py::arg("y"), py::arg("concepts"), py::arg("alpha_bar") = 1.0)
        .def(
            "sample",
            [](const MixtureWorld& w, std::size_t n, std::uint64_t seed,
               const std::optional<std::vector<std::string>>& condition) {
                return to_array(sample_prior(w, n, seed, condition_of(w, condition)));
            },
            py::arg("n"), py::arg("seed"), py::arg("condition") = py::none(), "Exact samples as an (n, 2) array");

    m.def(
        "alpha_bars",
        [](int total_steps, double beta_start, double beta_end) {
            return build_schedule(total_steps, beta_start, beta_end).alpha_bars();
        },
        py::arg("total_steps") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02,
        "alpha_bar(t) for t = 1..T");
    m.def(
        "step_grid", [](int total_steps, int inference_steps) {
            return build_step_grid(build_schedule(total_steps), inference_steps).timesteps;
        },
        py::arg("total_steps") = 1000, py::arg("inference_steps") = 50);

    m.def("resolve_config",
          [](const std::string& text, const std::string& base_dir) { return config_from(text, base_dir).to_json().dump(); },
          py::arg("config_json"), py::arg("base_dir") = "", "Resolved configuration with every default filled in");
    m.def("config_digest",
          [](const std::string& text, const std::string& base_dir) { return config_from(text, base_dir).digest(); },
          py::arg("config_json"), py::arg("base_dir") = "");

    m.def(
        "sample",
        [](const std::string& text, std::uint64_t index, bool record_steps, const std::string& base_dir) {
            const auto cfg = config_from(text, base_dir);
            const auto schedule = cfg.build_noise_schedule();
            const auto grid = cfg.build_grid(schedule);
            std::unique_ptr<Detector> detector;
            if (auto spec = cell_detector(cfg, cfg.guidance.variant)) detector = make_detector(*spec, cfg.world);
            RunOptions opts;
            opts.sampler = cfg.sampler;
            opts.query_schedule = cfg.query_schedule;
            opts.record_steps = record_steps;
            TrajectoryResult result;
            {
                py::gil_scoped_release release;
                result = run_trajectory(cfg.world, schedule, grid, cfg.guidance, detector.get(),
                                        derive_seed(cfg.seed, index), opts);
            }
            return py::make_tuple(py::make_tuple(result.x0.x(), result.x0.y()), events_to_jsonl(result.events));
        },
        py::arg("config_json"), py::arg("index") = 0, py::arg("record_steps") = false, py::arg("base_dir") = "",
        "One trajectory: ((x, y), events as JSON lines)");

    m.def(
        "sweep",
        [](const std::string& text, const std::string& out_dir, bool force, const std::string& base_dir) {
            const auto cfg = config_from(text, base_dir);
            SweepResult result;
            {
                py::gil_scoped_release release;
                result = run_sweep(cfg);
                if (!out_dir.empty()) emit_report(result, cfg, out_dir, force);
            }
            std::string csv = metrics_csv_header() + "\n";
            for (const auto& r : result.reports) csv += metrics_csv_row(r) + "\n";
            return csv;
        },
        py::arg("config_json"), py::arg("out_dir") = "", py::arg("force") = false, py::arg("base_dir") = "",
        "Runs the sweep and returns results.csv text; writes the report when out_dir is given");

    m.def(
        "pareto",
        [](const std::string& results_csv) { return pareto_csv(pareto_points(parse_metrics_csv(results_csv))); },
        py::arg("results_csv"), "pareto.csv text for the given results.csv text");

    m.def(
        "tilted_samples",
        [](const std::vector<std::string>& positive, const std::vector<std::string>& negative, double omega_pos,
           double omega_neg, std::size_t n, std::uint64_t seed) {
            const auto world = triad_world();
            const TiltParams tilt{world.concepts_of(positive), world.concepts_of(negative), omega_pos, omega_neg};
            return to_array(rejection_sample_tilted(world, tilt, n, seed));
        },
        py::arg("positive"), py::arg("negative"), py::arg("omega_pos"), py::arg("omega_neg"), py::arg("n"),
        py::arg("seed"), "Exact samples of the tilted triad density by rejection");
}

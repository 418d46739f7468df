// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#include "vldnp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "vldnp/metrics.hpp"

namespace vldnp {

GridDensity::GridDensity(double extent, int resolution, std::vector<double> values)
    : extent_(extent), resolution_(resolution), values_(std::move(values)) {
    if (!(extent > 0.0)) throw Error("grid extent must be positive");
    if (resolution < 1) throw Error("grid resolution must be positive");
    if (values_.size() != static_cast<std::size_t>(resolution) * resolution) throw Error("grid value count mismatch");
}

Vec2 GridDensity::cell_center(int i, int j) const {
    const double h = cell_size();
    return Vec2(-extent_ + (i + 0.5) * h, -extent_ + (j + 0.5) * h);
}

double GridDensity::mass() const {
    double sum = 0.0;
    for (double v : values_) sum += v;
    return sum * cell_area();
}

double GridDensity::mass_within(const Vec2& center, double radius) const {
    double sum = 0.0;
    for (int i = 0; i < resolution_; ++i) {
        for (int j = 0; j < resolution_; ++j) {
            if ((cell_center(i, j) - center).norm() <= radius) sum += value(i, j);
        }
    }
    return sum * cell_area();
}

std::string GridDensity::to_csv() const {
    std::ostringstream out;
    out << "x,y,density\n";
    for (int i = 0; i < resolution_; ++i) {
        for (int j = 0; j < resolution_; ++j) {
            const Vec2 c = cell_center(i, j);
            out << format_double(c.x()) << ',' << format_double(c.y()) << ',' << format_double(value(i, j)) << '\n';
        }
    }
    return out.str();
}

GridDensity histogram(std::span<const Vec2> samples, double extent, int resolution) {
    std::vector<double> counts(static_cast<std::size_t>(resolution) * resolution, 0.0);
    const double h = 2.0 * extent / resolution;
    std::size_t inside = 0;
    for (const auto& x : samples) {
        const double fi = std::floor((x.x() + extent) / h);
        const double fj = std::floor((x.y() + extent) / h);
        if (fi < 0 || fj < 0 || fi >= resolution || fj >= resolution) continue;
        counts[static_cast<std::size_t>(fi) * resolution + static_cast<std::size_t>(fj)] += 1.0;
        ++inside;
    }
    if (inside > 0) {
        for (double& c : counts) c /= static_cast<double>(inside) * h * h;
    }
    return GridDensity(extent, resolution, std::move(counts));
}

double tv_distance(const GridDensity& a, const GridDensity& b) {
    if (a.resolution() != b.resolution() || a.extent() != b.extent()) throw Error("grid mismatch in tv_distance");
    const double ma = a.mass() / a.cell_area();
    const double mb = b.mass() / b.cell_area();
    if (!(ma > 0.0) || !(mb > 0.0)) throw Error("tv_distance needs grids with positive mass");
    double sum = 0.0;
    for (std::size_t k = 0; k < a.values().size(); ++k) sum += std::abs(a.values()[k] / ma - b.values()[k] / mb);
    return 0.5 * sum;
}

namespace {

double log_tilt(const MixtureWorld& world, const TiltParams& tilt, const Vec2& x) {
    double lv = 0.0;
    if (tilt.omega_pos != 0.0) lv += tilt.omega_pos * log_concept_posterior(world, x, tilt.positive);
    if (tilt.omega_neg != 0.0) {
        const double ln = std::max(log_concept_posterior(world, x, tilt.negative), std::log(kPosteriorClamp));
        lv -= tilt.omega_neg * ln;
    }
    return lv;
}

// Cell averages of exp(log_fn) normalized to unit mass on the grid.
template <typename LogFn>
std::vector<double> normalized_cells(double extent, int resolution, int subsamples, LogFn log_fn) {
    if (subsamples < 1) throw Error("subsamples must be positive");
    const double h = 2.0 * extent / resolution;
    const double sub = h / subsamples;
    const std::size_t per_cell = static_cast<std::size_t>(subsamples) * subsamples;
    std::vector<double> logs(static_cast<std::size_t>(resolution) * resolution * per_cell);
    double max_log = -std::numeric_limits<double>::infinity();
    std::size_t idx = 0;
    for (int i = 0; i < resolution; ++i) {
        for (int j = 0; j < resolution; ++j) {
            for (int a = 0; a < subsamples; ++a) {
                for (int b = 0; b < subsamples; ++b) {
                    const Vec2 x(-extent + i * h + (a + 0.5) * sub, -extent + j * h + (b + 0.5) * sub);
                    const double lv = log_fn(x);
                    if (std::isnan(lv) || lv == std::numeric_limits<double>::infinity())
                        throw Error("tilted density is not normalizable (non-finite log value)");
                    logs[idx++] = lv;
                    max_log = std::max(max_log, lv);
                }
            }
        }
    }
    if (!std::isfinite(max_log)) throw Error("tilted density is not normalizable (zero mass on grid)");
    std::vector<double> cells(static_cast<std::size_t>(resolution) * resolution, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < per_cell; ++k) acc += std::exp(logs[c * per_cell + k] - max_log);
        cells[c] = acc / static_cast<double>(per_cell);
        total += cells[c];
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw Error("tilted density is not normalizable");
    const double norm = total * h * h;
    for (double& v : cells) v /= norm;
    return cells;
}

}  // namespace

GridDensity tilted_density(const MixtureWorld& world, const TiltParams& tilt, double extent, int resolution,
                           int subsamples) {
    if (resolution < 32) throw Error("grid resolution must be at least 32");
    if (tilt.omega_pos < 0.0 || tilt.omega_neg < 0.0) throw Error("tilt weights must be nonnegative");
    if (tilt.omega_pos > 0.0 && tilt.positive.empty()) throw Error("positive tilt needs a concept set");
    if (tilt.omega_neg > 0.0 && tilt.negative.empty()) throw Error("negative tilt needs a concept set");

    // Coverage of the untilted density, by midpoint rule on the same cells.
    const double h = 2.0 * extent / resolution;
    double covered = 0.0;
    for (int i = 0; i < resolution; ++i) {
        for (int j = 0; j < resolution; ++j) {
            const Vec2 c(-extent + (i + 0.5) * h, -extent + (j + 0.5) * h);
            covered += std::exp(log_density(world, c, 1.0));
        }
    }
    covered *= h * h;
    if (covered < 0.999) throw Error("grid extent covers less than 99.9% of the base mass");

    auto cells = normalized_cells(extent, resolution, subsamples,
                                  [&](const Vec2& x) { return log_density(world, x, 1.0) + log_tilt(world, tilt, x); });
    return GridDensity(extent, resolution, std::move(cells));
}

std::vector<Vec2> rejection_sample_tilted(const MixtureWorld& world, const TiltParams& tilt, std::size_t n,
                                          std::uint64_t seed) {
    if (tilt.omega_pos < 0.0 || tilt.omega_neg < 0.0) throw Error("tilt weights must be nonnegative");
    // Sup of the ratio: p(c+|x)^w_pos <= 1 and max(p(c-|x), eps)^-w_neg <= eps^-w_neg.
    const double log_envelope = -tilt.omega_neg * std::log(kPosteriorClamp);
    constexpr std::size_t batch = 1 << 16;
    constexpr std::size_t min_proposals_for_verdict = 1 << 22;

    std::mt19937_64 uniform_rng(derive_seed(seed, ~std::uint64_t{0}));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<Vec2> out;
    out.reserve(n);
    std::size_t proposed = 0;
    for (std::uint64_t b = 0; out.size() < n; ++b) {
        const auto proposals = sample_prior(world, batch, derive_seed(seed, b));
        for (const auto& x : proposals) {
            ++proposed;
            const double u = uniform(uniform_rng);
            if (std::log(u) < log_tilt(world, tilt, x) - log_envelope) {
                out.push_back(x);
                if (out.size() == n) break;
            }
        }
        if (proposed >= min_proposals_for_verdict &&
            static_cast<double>(out.size()) < 1e-6 * static_cast<double>(proposed))
            throw Error("degenerate envelope");
    }
    return out;
}

double finite_diff_score_check(const MixtureWorld& world, const NoiseSchedule& schedule, int n_points, double step,
                               std::uint64_t seed) {
    if (!(step >= 1e-7 && step <= 1e-3)) throw Error("finite difference step must lie in [1e-7, 1e-3]");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(-4.0, 4.0);
    std::uniform_int_distribution<int> timestep(0, schedule.total_steps());
    const std::uint64_t all = world.all_concepts().bits();
    std::uniform_int_distribution<std::uint64_t> subset(0, all);
    double worst = 0.0;
    for (int k = 0; k < n_points; ++k) {
        const Vec2 x(coord(rng), coord(rng));
        const double ab = schedule.alpha_bar(timestep(rng));
        // 0 means unconditional.
        std::optional<ConceptSet> cond;
        const std::uint64_t bits = subset(rng) & all;
        if (bits != 0) cond = ConceptSet(bits);
        const Vec2 analytic = score(world, x, ab, cond);
        for (int d = 0; d < 2; ++d) {
            Vec2 hi = x, lo = x;
            hi[d] += step;
            lo[d] -= step;
            const double fd = (log_density(world, hi, ab, cond) - log_density(world, lo, ab, cond)) / (2.0 * step);
            worst = std::max(worst, std::abs(fd - analytic[d]));
        }
    }
    return worst;
}

Vec2 posterior_mean_by_quadrature(const MixtureWorld& world, const Vec2& x_t, double alpha_bar, int cells_per_sigma) {
    if (!(alpha_bar > 0.0 && alpha_bar < 1.0)) throw Error("posterior mean needs alpha_bar in (0, 1)");
    if (cells_per_sigma < 2) throw Error("cells_per_sigma must be at least 2");
    const double lik_sd = std::sqrt((1.0 - alpha_bar) / alpha_bar);
    const Vec2 lik_center = x_t / std::sqrt(alpha_bar);

    // Bounding box of the prior (means +- 10 sd) intersected with the likelihood window.
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    double min_sd = lik_sd;
    for (const auto& c : world.components()) {
        Eigen::SelfAdjointEigenSolver<Mat2> eig(c.covariance, Eigen::EigenvaluesOnly);
        const double sd_max = std::sqrt(eig.eigenvalues().maxCoeff());
        min_sd = std::min(min_sd, std::sqrt(eig.eigenvalues().minCoeff()));
        lo = lo.cwiseMin(c.mean - Vec2::Constant(10.0 * sd_max));
        hi = hi.cwiseMax(c.mean + Vec2::Constant(10.0 * sd_max));
    }
    lo = lo.cwiseMax(lik_center - Vec2::Constant(10.0 * lik_sd));
    hi = hi.cwiseMin(lik_center + Vec2::Constant(10.0 * lik_sd));
    if ((hi.array() <= lo.array()).any()) throw Error("posterior has no mass in the prior window");

    const double h = min_sd / cells_per_sigma;
    const int nx = std::max(1, static_cast<int>(std::ceil((hi.x() - lo.x()) / h)));
    const int ny = std::max(1, static_cast<int>(std::ceil((hi.y() - lo.y()) / h)));
    const double hx = (hi.x() - lo.x()) / nx, hy = (hi.y() - lo.y()) / ny;
    const double sqrt_ab = std::sqrt(alpha_bar);

    std::vector<double> logs(static_cast<std::size_t>(nx) * ny);
    double max_log = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            const Vec2 x0(lo.x() + (i + 0.5) * hx, lo.y() + (j + 0.5) * hy);
            const double lv = log_density(world, x0, 1.0) - (x_t - sqrt_ab * x0).squaredNorm() / (2.0 * (1.0 - alpha_bar));
            logs[static_cast<std::size_t>(i) * ny + j] = lv;
            max_log = std::max(max_log, lv);
        }
    }
    double total = 0.0;
    Vec2 first = Vec2::Zero();
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            const double w = std::exp(logs[static_cast<std::size_t>(i) * ny + j] - max_log);
            total += w;
            first += w * Vec2(lo.x() + (i + 0.5) * hx, lo.y() + (j + 0.5) * hy);
        }
    }
    return first / total;
}

}  // namespace vldnp

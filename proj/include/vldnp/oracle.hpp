// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vldnp/mixture_world.hpp"
#include "vldnp/noise_schedule.hpp"

namespace vldnp {

/// Piecewise-constant density on the square [-extent, extent]^2 with
/// `resolution` cells per axis. values[i * resolution + j] belongs to the
/// cell whose x index is i and y index is j.
class GridDensity {
public:
    GridDensity(double extent, int resolution, std::vector<double> values);

    double extent() const { return extent_; }
    int resolution() const { return resolution_; }
    double cell_size() const { return 2.0 * extent_ / resolution_; }
    double cell_area() const { return cell_size() * cell_size(); }
    Vec2 cell_center(int i, int j) const;
    const std::vector<double>& values() const { return values_; }
    double value(int i, int j) const { return values_[static_cast<std::size_t>(i) * resolution_ + j]; }

    /// Sum of value * cell area.
    double mass() const;
    /// Mass in cells whose centers lie within `radius` of `center`.
    double mass_within(const Vec2& center, double radius) const;

    /// Rows "x,y,density" with a header line.
    std::string to_csv() const;

private:
    double extent_;
    int resolution_;
    std::vector<double> values_;
};

/// Normalized histogram of the samples falling inside the grid.
GridDensity histogram(std::span<const Vec2> samples, double extent, int resolution);

/// Half the L1 distance between the two mass-normalized grids.
double tv_distance(const GridDensity& a, const GridDensity& b);

inline constexpr double kPosteriorClamp = 1e-12;

struct TiltParams {
    ConceptSet positive;
    ConceptSet negative;
    double omega_pos = 0.0;
    double omega_neg = 0.0;
};

/// p(x0) p(c+|x0)^w_pos / max(p(c-|x0), 1e-12)^w_neg normalized on the grid.
/// Each cell holds the average over subsamples x subsamples midpoints.
/// Throws when the grid misses more than 0.1% of p(x0) or the tilt cannot
/// be normalized.
GridDensity tilted_density(const MixtureWorld& world, const TiltParams& tilt, double extent = 6.0,
                           int resolution = 240, int subsamples = 4);

/// Exact samples of the tilted density by rejection from p(x0). The
/// envelope constant is 1e-12^(-w_neg). Throws "degenerate envelope" when
/// the acceptance rate falls below 1e-6.
std::vector<Vec2> rejection_sample_tilted(const MixtureWorld& world, const TiltParams& tilt, std::size_t n,
                                          std::uint64_t seed);

/// Largest |score - central difference of log_density| over `n_points`
/// random (x, t, condition) triples; x uniform on [-4, 4]^2, t uniform on
/// [0, T], condition either none or a random non-empty concept set.
double finite_diff_score_check(const MixtureWorld& world, const NoiseSchedule& schedule, int n_points,
                               double step, std::uint64_t seed);

/// E[x0 | x_t] by midpoint quadrature of p(x0) N(x_t; sqrt(ab) x0, (1 - ab) I)
/// over x0. Independent of the score code path.
Vec2 posterior_mean_by_quadrature(const MixtureWorld& world, const Vec2& x_t, double alpha_bar,
                                  int cells_per_sigma = 8);

}  // namespace vldnp

// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "vldnp/mixture_world.hpp"

namespace vldnp {

struct Moments {
    Vec2 mean = Vec2::Zero();
    Mat2 covariance = Mat2::Zero();
};

/// Fraction of samples whose largest unsafe-concept posterior exceeds tau.
double attack_success_rate(const MixtureWorld& world, std::span<const Vec2> samples, ConceptSet unsafe,
                           double tau = 0.5);

/// Mean over samples of the largest unsafe-concept posterior.
double toxic_rate(const MixtureWorld& world, std::span<const Vec2> samples, ConceptSet unsafe);

/// Mean posterior of the positive set.
double alignment(const MixtureWorld& world, std::span<const Vec2> samples, ConceptSet positive);

/// Sample mean and unbiased covariance; needs at least three samples.
Moments fit_moments(std::span<const Vec2> samples);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the root
/// is taken from the eigenvalues of S_a^{1/2} S_b S_a^{1/2}. Throws on
/// asymmetric or indefinite covariances.
double frechet_distance(const Moments& a, const Moments& b);

struct MetricsReport {
    std::string method;
    std::string variant;
    double omega_pos = 0.0;
    double omega_neg = 0.0;
    std::size_t n = 0;
    double asr = 0.0;
    double toxic_rate = 0.0;
    double alignment = 0.0;
    double frechet = 0.0;
    std::uint64_t seed = 0;
    std::string config_digest;
    bool failed = false;
    std::string error;
};

/// results.csv header and rows. Numbers use shortest round-trip formatting.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& r);
/// Parses a results.csv produced by metrics_csv_header/row.
std::vector<MetricsReport> parse_metrics_csv(const std::string& text);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace vldnp

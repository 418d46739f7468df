// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#include "vldnp/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace vldnp {

namespace {

void require_samples(std::span<const Vec2> samples) {
    if (samples.empty()) throw Error("metric needs at least one sample");
}

double max_unsafe_posterior(const MixtureWorld& world, const Vec2& x, ConceptSet unsafe) {
    double best = 0.0;
    for (auto c : unsafe.indices()) best = std::max(best, concept_posterior(world, x, ConceptSet::single(c)));
    return best;
}

Mat2 psd_sqrt(const Mat2& m) {
    Eigen::SelfAdjointEigenSolver<Mat2> eig(m);
    const Vec2 roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

void require_psd(const Mat2& m, const char* which) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if (!m.allFinite() || std::abs(m(0, 1) - m(1, 0)) > 1e-9 * scale)
        throw Error(std::string("covariance ") + which + " is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat2> eig(m, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12 * scale)
        throw Error(std::string("covariance ") + which + " is not positive semidefinite");
}

}  // namespace

double attack_success_rate(const MixtureWorld& world, std::span<const Vec2> samples, ConceptSet unsafe, double tau) {
    require_samples(samples);
    std::size_t hits = 0;
    for (const auto& x : samples) {
        if (max_unsafe_posterior(world, x, unsafe) > tau) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double toxic_rate(const MixtureWorld& world, std::span<const Vec2> samples, ConceptSet unsafe) {
    require_samples(samples);
    double sum = 0.0;
    for (const auto& x : samples) sum += max_unsafe_posterior(world, x, unsafe);
    return sum / static_cast<double>(samples.size());
}

double alignment(const MixtureWorld& world, std::span<const Vec2> samples, ConceptSet positive) {
    require_samples(samples);
    double sum = 0.0;
    for (const auto& x : samples) sum += concept_posterior(world, x, positive);
    return sum / static_cast<double>(samples.size());
}

Moments fit_moments(std::span<const Vec2> samples) {
    if (samples.size() < 3) throw Error("fit_moments needs at least 3 samples");
    Moments m;
    for (const auto& x : samples) m.mean += x;
    m.mean /= static_cast<double>(samples.size());
    for (const auto& x : samples) {
        const Vec2 d = x - m.mean;
        m.covariance += d * d.transpose();
    }
    m.covariance /= static_cast<double>(samples.size() - 1);
    return m;
}

double frechet_distance(const Moments& a, const Moments& b) {
    require_psd(a.covariance, "a");
    require_psd(b.covariance, "b");
    const Mat2 sa = 0.5 * (a.covariance + a.covariance.transpose());
    const Mat2 sb = 0.5 * (b.covariance + b.covariance.transpose());
    const Mat2 root_a = psd_sqrt(sa);
    const Mat2 inner = root_a * sb * root_a;
    Eigen::SelfAdjointEigenSolver<Mat2> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double trace_root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * trace_root;
    return std::max(0.0, d);
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("number formatting failed");
    return std::string(buf, end);
}

std::string metrics_csv_header() {
    return "method,variant,omega_pos,omega_neg,n,asr,toxic_rate,alignment,frechet,seed,config_digest,status";
}

std::string metrics_csv_row(const MetricsReport& r) {
    std::ostringstream out;
    const auto num = [&](double v) { return r.failed ? std::string("nan") : format_double(v); };
    out << r.method << ',' << r.variant << ',' << format_double(r.omega_pos) << ',' << format_double(r.omega_neg)
        << ',' << r.n << ',' << num(r.asr) << ',' << num(r.toxic_rate) << ',' << num(r.alignment) << ','
        << num(r.frechet) << ',' << r.seed << ',' << r.config_digest << ',' << (r.failed ? "failed" : "ok");
    return out.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s) {
    if (s == "nan") return std::nan("");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw Error("bad number '" + s + "' in results.csv");
    return v;
}

}  // namespace

std::vector<MetricsReport> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != metrics_csv_header()) throw Error("results.csv header mismatch");
    std::vector<MetricsReport> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 12) throw Error("results.csv row has " + std::to_string(cells.size()) + " columns");
        MetricsReport r;
        r.method = cells[0];
        r.variant = cells[1];
        r.omega_pos = parse_number(cells[2]);
        r.omega_neg = parse_number(cells[3]);
        r.n = static_cast<std::size_t>(std::stoull(cells[4]));
        r.asr = parse_number(cells[5]);
        r.toxic_rate = parse_number(cells[6]);
        r.alignment = parse_number(cells[7]);
        r.frechet = parse_number(cells[8]);
        r.seed = std::stoull(cells[9]);
        r.config_digest = cells[10];
        r.failed = cells[11] != "ok";
        out.push_back(r);
    }
    return out;
}

}  // namespace vldnp

// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#include "vldnp/mixture_world.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace vldnp {

std::vector<std::size_t> ConceptSet::indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < max_concepts; ++i) {
        if (contains(i)) out.push_back(i);
    }
    return out;
}

MixtureWorld::MixtureWorld(std::vector<Concept> concepts, std::vector<MixtureComponent> components)
    : concepts_(std::move(concepts)), components_(std::move(components)) {
    if (concepts_.empty() || concepts_.size() > ConceptSet::max_concepts)
        throw Error("world must declare between 1 and 64 concepts");
    if (components_.empty() || components_.size() > 64)
        throw Error("world must have between 1 and 64 components");

    std::set<std::string> names;
    bool has_safe = false;
    for (const auto& c : concepts_) {
        if (c.name.empty()) throw Error("concept name must be non-empty");
        if (!names.insert(c.name).second) throw Error("duplicate concept name '" + c.name + "'");
        has_safe = has_safe || c.polarity == Polarity::safe;
    }
    if (!has_safe) throw Error("world must declare at least one safe concept");

    const ConceptSet declared = all_concepts();
    ConceptSet used;
    double total = 0.0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const auto& comp = components_[k];
        const std::string where = "component " + std::to_string(k);
        if (!(comp.weight > 0.0 && comp.weight <= 1.0)) throw Error(where + ": weight must be in (0, 1]");
        if (!comp.mean.allFinite()) throw Error(where + ": mean must be finite");
        if (!comp.covariance.allFinite() || std::abs(comp.covariance(0, 1) - comp.covariance(1, 0)) > 1e-12)
            throw Error(where + ": covariance must be symmetric");
        Eigen::SelfAdjointEigenSolver<Mat2> eig(comp.covariance, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() <= 0.0) throw Error(where + ": covariance must be positive definite");
        if (comp.labels.empty()) throw Error(where + ": needs at least one label");
        if ((comp.labels.bits() & ~declared.bits()) != 0) throw Error(where + ": label references undeclared concept");
        used = used | comp.labels;
        total += comp.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error("component weights must sum to 1");
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        if (!used.contains(i)) throw Error("concept '" + concepts_[i].name + "' labels no component");
    }
}

std::optional<std::size_t> MixtureWorld::find_concept(std::string_view name) const {
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        if (concepts_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t MixtureWorld::concept_index(std::string_view name) const {
    auto idx = find_concept(name);
    if (!idx) throw Error("undeclared concept '" + std::string(name) + "'");
    return *idx;
}

ConceptSet MixtureWorld::concepts_of(const std::vector<std::string>& names) const {
    ConceptSet out;
    for (const auto& n : names) out.insert(concept_index(n));
    return out;
}

std::vector<std::string> MixtureWorld::names_of(ConceptSet set) const {
    std::vector<std::string> out;
    for (auto i : set.indices()) out.push_back(concepts_.at(i).name);
    return out;
}

ConceptSet MixtureWorld::all_concepts() const {
    ConceptSet out;
    for (std::size_t i = 0; i < concepts_.size(); ++i) out.insert(i);
    return out;
}

ConceptSet MixtureWorld::unsafe_concepts() const {
    ConceptSet out;
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        if (is_unsafe(i)) out.insert(i);
    }
    return out;
}

std::uint64_t MixtureWorld::support(const std::optional<ConceptSet>& condition) const {
    std::uint64_t mask = 0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
        if (!condition || components_[k].labels.intersects(*condition)) mask |= std::uint64_t{1} << k;
    }
    if (mask == 0) throw Error("empty condition support");
    return mask;
}

MixtureWorld MixtureWorld::from_json(const nlohmann::json& doc) {
    try {
        std::vector<Concept> concepts;
        for (const auto& c : doc.at("concepts")) {
            const auto pol = c.at("polarity").get<std::string>();
            if (pol != "safe" && pol != "unsafe") throw Error("polarity must be 'safe' or 'unsafe'");
            concepts.push_back({c.at("name").get<std::string>(), pol == "safe" ? Polarity::safe : Polarity::unsafe});
        }
        auto index_of = [&](const std::string& name) -> std::size_t {
            for (std::size_t i = 0; i < concepts.size(); ++i) {
                if (concepts[i].name == name) return i;
            }
            throw Error("undeclared concept '" + name + "'");
        };
        std::vector<MixtureComponent> components;
        for (const auto& c : doc.at("components")) {
            MixtureComponent comp;
            comp.weight = c.at("weight").get<double>();
            const auto mean = c.at("mean").get<std::vector<double>>();
            const auto cov = c.at("covariance").get<std::vector<double>>();
            if (mean.size() != 2) throw Error("mean must have 2 entries");
            if (cov.size() != 4) throw Error("covariance must have 4 entries (row-major)");
            comp.mean = Vec2(mean[0], mean[1]);
            comp.covariance << cov[0], cov[1], cov[2], cov[3];
            for (const auto& label : c.at("labels")) comp.labels.insert(index_of(label.get<std::string>()));
            components.push_back(comp);
        }
        return MixtureWorld(std::move(concepts), std::move(components));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("invalid world document: ") + e.what());
    }
}

MixtureWorld MixtureWorld::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open world file " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(path + ": " + e.what());
    }
    return from_json(doc);
}

nlohmann::json MixtureWorld::to_json() const {
    nlohmann::json doc;
    doc["concepts"] = nlohmann::json::array();
    for (const auto& c : concepts_) {
        doc["concepts"].push_back({{"name", c.name}, {"polarity", c.polarity == Polarity::safe ? "safe" : "unsafe"}});
    }
    doc["components"] = nlohmann::json::array();
    for (const auto& comp : components_) {
        const auto& s = comp.covariance;
        doc["components"].push_back({{"weight", comp.weight},
                                     {"mean", {comp.mean.x(), comp.mean.y()}},
                                     {"covariance", {s(0, 0), s(0, 1), s(1, 0), s(1, 1)}},
                                     {"labels", names_of(comp.labels)}});
    }
    return doc;
}

MixtureWorld triad_world() {
    const Mat2 cov = 0.25 * Mat2::Identity();
    std::vector<Concept> concepts{{"cat", Polarity::safe}, {"dog", Polarity::safe}, {"nsfw", Polarity::unsafe}};
    std::vector<MixtureComponent> comps{
        {1.0 / 3.0, Vec2(-2.0, 0.0), cov, ConceptSet::single(0)},
        {1.0 / 3.0, Vec2(2.0, 0.0), cov, ConceptSet::single(1)},
        {1.0 / 3.0, Vec2(0.0, 2.0), cov, ConceptSet::single(2)},
    };
    return MixtureWorld(std::move(concepts), std::move(comps));
}

MixtureWorld standard_normal_world() {
    return MixtureWorld({{"x", Polarity::safe}}, {{1.0, Vec2::Zero(), Mat2::Identity(), ConceptSet::single(0)}});
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct NoisedTerm {
    double log_weighted_density;  // log pi_k + log N(x; m_k, C_k)
    Vec2 component_score;         // -C_k^{-1} (x - m_k)
};

NoisedTerm noised_term(const MixtureComponent& comp, const Vec2& x, double alpha_bar) {
    const Mat2 cov = alpha_bar * comp.covariance + (1.0 - alpha_bar) * Mat2::Identity();
    const Vec2 diff = x - std::sqrt(alpha_bar) * comp.mean;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    Mat2 inv;
    inv << cov(1, 1), -cov(0, 1), -cov(1, 0), cov(0, 0);
    inv /= det;
    const Vec2 solved = inv * diff;
    const double maha = diff.dot(solved);
    return {std::log(comp.weight) - 0.5 * maha - 0.5 * std::log(det) - kLog2Pi, -solved};
}

void check_alpha_bar(double alpha_bar) {
    if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw Error("alpha_bar must be in (0, 1]");
}

// Log-sum-exp of the selected terms, and optionally the responsibility-weighted score.
struct Accumulated {
    double log_mass;
    double log_weight;
    Vec2 score;
};

Accumulated accumulate(const MixtureWorld& world, const Vec2& x, double alpha_bar, std::uint64_t mask,
                       bool want_score) {
    check_alpha_bar(alpha_bar);
    const auto& comps = world.components();
    double max_log = -std::numeric_limits<double>::infinity();
    // Small fixed buffer: worlds carry at most 64 components.
    std::array<NoisedTerm, 64> terms;
    double weight = 0.0;
    for (std::size_t k = 0; k < comps.size(); ++k) {
        if (!((mask >> k) & 1U)) continue;
        terms[k] = noised_term(comps[k], x, alpha_bar);
        max_log = std::max(max_log, terms[k].log_weighted_density);
        weight += comps[k].weight;
    }
    double sum = 0.0;
    Vec2 acc = Vec2::Zero();
    for (std::size_t k = 0; k < comps.size(); ++k) {
        if (!((mask >> k) & 1U)) continue;
        const double r = std::exp(terms[k].log_weighted_density - max_log);
        sum += r;
        if (want_score) acc += r * terms[k].component_score;
    }
    return {max_log + std::log(sum), std::log(weight), want_score ? Vec2(acc / sum) : Vec2::Zero()};
}

}  // namespace

double log_density(const MixtureWorld& world, const Vec2& x, double alpha_bar,
                   const std::optional<ConceptSet>& condition) {
    const auto acc = accumulate(world, x, alpha_bar, world.support(condition), false);
    return acc.log_mass - acc.log_weight;
}

Vec2 score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const std::optional<ConceptSet>& condition) {
    return accumulate(world, x, alpha_bar, world.support(condition), true).score;
}

double log_concept_posterior(const MixtureWorld& world, const Vec2& x, ConceptSet concepts, double alpha_bar) {
    if ((concepts.bits() & ~world.all_concepts().bits()) != 0) throw Error("undeclared concept in posterior query");
    const std::uint64_t all = world.support(std::nullopt);
    std::uint64_t labeled = 0;
    for (std::size_t k = 0; k < world.components().size(); ++k) {
        if (world.components()[k].labels.intersects(concepts)) labeled |= std::uint64_t{1} << k;
    }
    if (labeled == 0) return -std::numeric_limits<double>::infinity();
    if (labeled == all) return 0.0;
    const double num = accumulate(world, x, alpha_bar, labeled, false).log_mass;
    const double den = accumulate(world, x, alpha_bar, all, false).log_mass;
    return std::min(0.0, num - den);
}

double concept_posterior(const MixtureWorld& world, const Vec2& x, ConceptSet concepts, double alpha_bar) {
    return std::exp(log_concept_posterior(world, x, concepts, alpha_bar));
}

std::vector<Vec2> sample_prior(const MixtureWorld& world, std::size_t n, std::uint64_t seed,
                               const std::optional<ConceptSet>& condition) {
    if (n == 0) throw Error("sample_prior needs n >= 1");
    const std::uint64_t mask = world.support(condition);
    const auto& comps = world.components();
    std::vector<double> weights(comps.size(), 0.0);
    std::vector<Mat2> factors(comps.size());
    for (std::size_t k = 0; k < comps.size(); ++k) {
        if ((mask >> k) & 1U) weights[k] = comps[k].weight;
        factors[k] = comps[k].covariance.llt().matrixL();
    }
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::normal_distribution<double> normal;
    std::vector<Vec2> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        const double z0 = normal(rng);
        const double z1 = normal(rng);
        out.emplace_back(comps[k].mean + factors[k] * Vec2(z0, z1));
    }
    return out;
}

}  // namespace vldnp

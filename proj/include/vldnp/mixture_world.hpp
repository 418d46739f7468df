// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vldnp/types.hpp"

namespace vldnp {

enum class Polarity { safe, unsafe };

struct Concept {
    std::string name;
    Polarity polarity = Polarity::safe;
};

/// Set of concepts of one world, stored as a bitmask over the world's
/// concept indices. A world holds at most 64 concepts.
class ConceptSet {
public:
    static constexpr std::size_t max_concepts = 64;

    constexpr ConceptSet() = default;
    constexpr explicit ConceptSet(std::uint64_t bits) : bits_(bits) {}

    static ConceptSet single(std::size_t index) { return ConceptSet(std::uint64_t{1} << index); }

    constexpr bool empty() const { return bits_ == 0; }
    constexpr std::uint64_t bits() const { return bits_; }
    bool contains(std::size_t index) const { return (bits_ >> index) & 1U; }
    bool intersects(ConceptSet other) const { return (bits_ & other.bits_) != 0; }
    int size() const { return __builtin_popcountll(bits_); }

    void insert(std::size_t index) { bits_ |= std::uint64_t{1} << index; }
    ConceptSet operator|(ConceptSet other) const { return ConceptSet(bits_ | other.bits_); }
    ConceptSet operator&(ConceptSet other) const { return ConceptSet(bits_ & other.bits_); }

    /// Indices of the members in increasing order.
    std::vector<std::size_t> indices() const;

    friend constexpr bool operator==(ConceptSet, ConceptSet) = default;

private:
    std::uint64_t bits_ = 0;
};

struct MixtureComponent {
    double weight = 0.0;
    Vec2 mean = Vec2::Zero();
    Mat2 covariance = Mat2::Identity();
    ConceptSet labels;
};

/// Concept-labeled Gaussian mixture in two dimensions.
///
/// Every density below is evaluated for the variance-preserving noised
/// marginal at cumulative signal level `alpha_bar` (1.0 means clean data):
/// component k becomes N(sqrt(alpha_bar) mu_k, alpha_bar Sigma_k + (1 - alpha_bar) I).
/// Conditioning on a concept set restricts the mixture to components whose
/// labels intersect the set and renormalizes their weights.
class MixtureWorld {
public:
    /// Validates and builds a world. Throws vldnp::Error on any invariant
    /// violation (weights, covariance, undeclared or unused concepts).
    MixtureWorld(std::vector<Concept> concepts, std::vector<MixtureComponent> components);

    static MixtureWorld from_json(const nlohmann::json& doc);
    static MixtureWorld load(const std::string& path);
    nlohmann::json to_json() const;

    const std::vector<Concept>& concepts() const { return concepts_; }
    const std::vector<MixtureComponent>& components() const { return components_; }
    static constexpr int dimension = 2;

    std::optional<std::size_t> find_concept(std::string_view name) const;
    std::size_t concept_index(std::string_view name) const;
    ConceptSet concepts_of(const std::vector<std::string>& names) const;
    std::vector<std::string> names_of(ConceptSet set) const;

    ConceptSet all_concepts() const;
    ConceptSet unsafe_concepts() const;
    bool is_unsafe(std::size_t index) const { return concepts_.at(index).polarity == Polarity::unsafe; }

    /// Mask of component indices whose labels intersect `condition`
    /// (all components when no condition). Throws "empty condition support".
    std::uint64_t support(const std::optional<ConceptSet>& condition) const;

private:
    std::vector<Concept> concepts_;
    std::vector<MixtureComponent> components_;
};

/// The default three-mode world: cat at (-2,0), dog at (2,0), nsfw at (0,2),
/// each with weight 1/3 and covariance 0.25 I. nsfw is the only unsafe concept.
MixtureWorld triad_world();

/// Single standard normal component labeled with one safe concept "x".
MixtureWorld standard_normal_world();

double log_density(const MixtureWorld& world, const Vec2& x, double alpha_bar,
                   const std::optional<ConceptSet>& condition = std::nullopt);

Vec2 score(const MixtureWorld& world, const Vec2& x, double alpha_bar,
           const std::optional<ConceptSet>& condition = std::nullopt);

/// p(concept set | x) under the noised marginal; alpha_bar = 1 gives p(c | x0).
double concept_posterior(const MixtureWorld& world, const Vec2& x, ConceptSet concepts,
                         double alpha_bar = 1.0);

/// log p(concept set | x); -inf when no component carries the set.
double log_concept_posterior(const MixtureWorld& world, const Vec2& x, ConceptSet concepts, double alpha_bar = 1.0);

std::vector<Vec2> sample_prior(const MixtureWorld& world, std::size_t n, std::uint64_t seed,
                               const std::optional<ConceptSet>& condition = std::nullopt);

}  // namespace vldnp

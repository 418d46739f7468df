// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "vldnp/mixture_world.hpp"

namespace vldnp {

/// Score compositions.
///   cfg_only      base + w_pos (s(x|c+) - s(x))
///   negprompt_v1  s(x|c+) + w_pos (s(x|c+) - s(x|c-))
///   mixed_v2      s(x) + w_pos (s(x|c+) - s(x)) - w_neg (s(x|c-) - s(x))
///   dynamic_v5    s(x|c+) + w_pos (s(x|c+) - s(x)) - w_neg (s(x|c-_i) - s(x))
/// where base is s(x) for cfg_only and mixed_v2 and s(x|c+) for the other two.
enum class GuidanceVariant { cfg_only, negprompt_v1, mixed_v2, dynamic_v5 };

enum class BaseScore { unconditional, conditional };

std::string_view to_string(GuidanceVariant v);
GuidanceVariant parse_guidance_variant(std::string_view name);
std::string_view to_string(BaseScore b);
BaseScore parse_base_score(std::string_view name);

/// Leading score a variant uses unless overridden.
BaseScore default_base(GuidanceVariant v);

struct GuidanceConfig {
    double omega_pos = 7.5;
    double omega_neg = 0.0;
    GuidanceVariant variant = GuidanceVariant::cfg_only;
    /// Forces the leading term of any variant; nullopt keeps the variant's own.
    std::optional<BaseScore> base_score;
    ConceptSet positive;
    /// Evaluate predict_x0 with w_pos = 0 (exact posterior mean) instead of
    /// the run's CFG score.
    bool unguided_x0 = false;

    BaseScore base() const { return base_score.value_or(default_base(variant)); }
    /// Throws on non-finite or negative weights or an empty positive set.
    void validate() const;
};

/// Negative condition produced by a detector query.
struct NegativeCondition {
    ConceptSet concepts;
    int issued_at = -1;  // grid position of the query, -1 before any query

    bool empty() const { return concepts.empty(); }
    friend bool operator==(const NegativeCondition&, const NegativeCondition&) = default;
};

Vec2 cfg_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg);

Vec2 negprompt_v1_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg,
                        const NegativeCondition& neg);

Vec2 mixed_v2_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg,
                    const NegativeCondition& neg);

/// An empty negative condition drops the w_neg term entirely.
Vec2 dynamic_v5_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg,
                      const NegativeCondition& neg);

/// Dispatches on cfg.variant.
Vec2 composed_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg,
                    const NegativeCondition& neg);

/// x0_hat = (x_t + (1 - alpha_bar) s_cfg(x_t)) / sqrt(alpha_bar).
Vec2 predict_x0(const MixtureWorld& world, const Vec2& x_t, double alpha_bar, const GuidanceConfig& cfg);

/// Same estimate from an arbitrary score value.
inline Vec2 data_prediction(const Vec2& x_t, double alpha_bar, const Vec2& score_value) {
    return (x_t + (1.0 - alpha_bar) * score_value) / std::sqrt(alpha_bar);
}

}  // namespace vldnp

// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#include "vldnp/guidance.hpp"

#include <cmath>

namespace vldnp {

std::string_view to_string(GuidanceVariant v) {
    switch (v) {
    case GuidanceVariant::cfg_only: return "cfg_only";
    case GuidanceVariant::negprompt_v1: return "negprompt_v1";
    case GuidanceVariant::mixed_v2: return "mixed_v2";
    case GuidanceVariant::dynamic_v5: return "dynamic_v5";
    }
    return "?";
}

GuidanceVariant parse_guidance_variant(std::string_view name) {
    for (auto v : {GuidanceVariant::cfg_only, GuidanceVariant::negprompt_v1, GuidanceVariant::mixed_v2,
                   GuidanceVariant::dynamic_v5}) {
        if (to_string(v) == name) return v;
    }
    throw Error("unknown guidance variant '" + std::string(name) + "'");
}

std::string_view to_string(BaseScore b) {
    return b == BaseScore::unconditional ? "unconditional" : "conditional";
}

BaseScore parse_base_score(std::string_view name) {
    if (name == "unconditional") return BaseScore::unconditional;
    if (name == "conditional") return BaseScore::conditional;
    throw Error("unknown base score '" + std::string(name) + "'");
}

BaseScore default_base(GuidanceVariant v) {
    switch (v) {
    case GuidanceVariant::cfg_only:
    case GuidanceVariant::mixed_v2: return BaseScore::unconditional;
    case GuidanceVariant::negprompt_v1:
    case GuidanceVariant::dynamic_v5: return BaseScore::conditional;
    }
    return BaseScore::unconditional;
}

void GuidanceConfig::validate() const {
    if (!std::isfinite(omega_pos) || !std::isfinite(omega_neg)) throw Error("guidance weights must be finite");
    if (omega_pos < 0.0 || omega_neg < 0.0) throw Error("guidance weights must be nonnegative");
    if (positive.empty()) throw Error("positive condition must be non-empty");
}

namespace {

struct Scores {
    Vec2 uncond;
    Vec2 pos;
};

Scores base_scores(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg) {
    return {score(world, x, alpha_bar), score(world, x, alpha_bar, cfg.positive)};
}

const Vec2& pick_base(const Scores& s, BaseScore base) {
    return base == BaseScore::unconditional ? s.uncond : s.pos;
}

// Shared by cfg_score, mixed_v2 and dynamic_v5 so that their collapse cases
// reproduce each other bit for bit.
Vec2 cfg_part(const Scores& s, BaseScore base, double omega_pos) {
    return pick_base(s, base) + omega_pos * (s.pos - s.uncond);
}

void require_negative(const NegativeCondition& neg, GuidanceVariant v) {
    if (neg.empty()) throw Error("variant requires negative condition (" + std::string(to_string(v)) + ")");
}

}  // namespace

Vec2 cfg_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg) {
    return cfg_part(base_scores(world, x, alpha_bar, cfg), cfg.base_score.value_or(BaseScore::unconditional),
                    cfg.omega_pos);
}

Vec2 negprompt_v1_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg,
                        const NegativeCondition& neg) {
    require_negative(neg, GuidanceVariant::negprompt_v1);
    const auto s = base_scores(world, x, alpha_bar, cfg);
    const Vec2 s_neg = score(world, x, alpha_bar, neg.concepts);
    return pick_base(s, cfg.base_score.value_or(BaseScore::conditional)) + cfg.omega_pos * (s.pos - s_neg);
}

Vec2 mixed_v2_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg,
                    const NegativeCondition& neg) {
    require_negative(neg, GuidanceVariant::mixed_v2);
    const auto s = base_scores(world, x, alpha_bar, cfg);
    const Vec2 s_neg = score(world, x, alpha_bar, neg.concepts);
    return cfg_part(s, cfg.base_score.value_or(BaseScore::unconditional), cfg.omega_pos) -
           cfg.omega_neg * (s_neg - s.uncond);
}

Vec2 dynamic_v5_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg,
                      const NegativeCondition& neg) {
    const auto s = base_scores(world, x, alpha_bar, cfg);
    const Vec2 guided = cfg_part(s, cfg.base_score.value_or(BaseScore::conditional), cfg.omega_pos);
    if (neg.empty()) return guided;
    const Vec2 s_neg = score(world, x, alpha_bar, neg.concepts);
    return guided - cfg.omega_neg * (s_neg - s.uncond);
}

Vec2 composed_score(const MixtureWorld& world, const Vec2& x, double alpha_bar, const GuidanceConfig& cfg,
                    const NegativeCondition& neg) {
    switch (cfg.variant) {
    case GuidanceVariant::cfg_only: return cfg_score(world, x, alpha_bar, cfg);
    case GuidanceVariant::negprompt_v1: return negprompt_v1_score(world, x, alpha_bar, cfg, neg);
    case GuidanceVariant::mixed_v2: return mixed_v2_score(world, x, alpha_bar, cfg, neg);
    case GuidanceVariant::dynamic_v5: return dynamic_v5_score(world, x, alpha_bar, cfg, neg);
    }
    throw Error("unhandled guidance variant");
}

Vec2 predict_x0(const MixtureWorld& world, const Vec2& x_t, double alpha_bar, const GuidanceConfig& cfg) {
    GuidanceConfig plain = cfg;
    plain.variant = GuidanceVariant::cfg_only;
    plain.base_score = BaseScore::unconditional;
    if (cfg.unguided_x0) plain.omega_pos = 0.0;
    return data_prediction(x_t, alpha_bar, cfg_score(world, x_t, alpha_bar, plain));
}

}  // namespace vldnp

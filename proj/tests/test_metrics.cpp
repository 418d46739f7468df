// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "vldnp/metrics.hpp"

using namespace vldnp;

namespace {

class MetricsTest : public ::testing::Test {
protected:
    MixtureWorld world = triad_world();
    ConceptSet cat = ConceptSet::single(world.concept_index("cat"));
    ConceptSet nsfw = ConceptSet::single(world.concept_index("nsfw"));
    std::vector<Vec2> at_unsafe = std::vector<Vec2>(10, Vec2(0, 2));
    std::vector<Vec2> at_cat = std::vector<Vec2>(10, Vec2(-2, 0));
};

Moments moments(Vec2 mean, Mat2 cov) { return {mean, cov}; }

}  // namespace

TEST_F(MetricsTest, AttackSuccessRateAtModes) {
    EXPECT_EQ(attack_success_rate(world, at_unsafe, nsfw), 1.0);
    EXPECT_EQ(attack_success_rate(world, at_cat, nsfw), 0.0);
}

TEST_F(MetricsTest, AttackSuccessRateOfThePriorIsTheUnsafeMass) {
    const auto samples = sample_prior(world, 10000, 31);
    EXPECT_NEAR(attack_success_rate(world, samples, nsfw), 1.0 / 3.0, 0.02);
}

TEST_F(MetricsTest, ToxicRate) {
    EXPECT_NEAR(toxic_rate(world, at_unsafe, nsfw), 1.0, 1e-6);
    EXPECT_LT(toxic_rate(world, at_cat, nsfw), 1e-6);
    std::vector<Vec2> mixed{Vec2(0, 2), Vec2(-0.6, 1.0)};
    const double expected =
        0.5 * (concept_posterior(world, mixed[0], nsfw) + concept_posterior(world, mixed[1], nsfw));
    EXPECT_DOUBLE_EQ(toxic_rate(world, mixed, nsfw), expected);
}

TEST_F(MetricsTest, ToxicRateTakesTheWorstUnsafeConcept) {
    std::vector<Concept> cs{{"cat", Polarity::safe}, {"gore", Polarity::unsafe}, {"nsfw", Polarity::unsafe}};
    const Mat2 cov = 0.25 * Mat2::Identity();
    const MixtureWorld quad(cs, {{0.4, Vec2(-2, 0), cov, ConceptSet(1)},
                                 {0.3, Vec2(2, 0), cov, ConceptSet(2)},
                                 {0.3, Vec2(0, 2), cov, ConceptSet(4)}});
    const std::vector<Vec2> xs{Vec2(2, 0), Vec2(0, 2), Vec2(-2, 0)};
    double expected = 0.0;
    for (const auto& x : xs) {
        expected += std::max(concept_posterior(quad, x, ConceptSet(2)), concept_posterior(quad, x, ConceptSet(4)));
    }
    EXPECT_DOUBLE_EQ(toxic_rate(quad, xs, quad.unsafe_concepts()), expected / 3.0);
    EXPECT_NEAR(attack_success_rate(quad, xs, quad.unsafe_concepts()), 2.0 / 3.0, 1e-15);
}

TEST_F(MetricsTest, Alignment) {
    EXPECT_NEAR(alignment(world, at_cat, cat), 1.0, 1e-6);
    EXPECT_EQ(alignment(world, at_unsafe, world.all_concepts()), 1.0);
    EXPECT_GT(alignment(world, sample_prior(world, 10000, 32, cat), cat), 0.99);
}

TEST_F(MetricsTest, CleanConditionalSamplesAreAlignedAndSafe) {
    const auto samples = sample_prior(world, 10000, 33, cat);
    EXPECT_GT(alignment(world, samples, cat), 0.99);
    EXPECT_LT(attack_success_rate(world, samples, nsfw), 0.01);
}

TEST_F(MetricsTest, EmptySamplesAreRejected) {
    const std::vector<Vec2> none;
    EXPECT_THROW(attack_success_rate(world, none, nsfw), Error);
    EXPECT_THROW(toxic_rate(world, none, nsfw), Error);
    EXPECT_THROW(alignment(world, none, cat), Error);
}

TEST_F(MetricsTest, AttackSuccessRateThresholdProperties) {
    const auto samples = sample_prior(world, 2000, 34);
    double previous = 1.0;
    for (double tau : {0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.999}) {
        const double asr = attack_success_rate(world, samples, nsfw, tau);
        EXPECT_LE(asr, previous);
        previous = asr;
        std::size_t below = 0;
        for (const auto& x : samples) below += concept_posterior(world, x, nsfw) <= tau;
        EXPECT_EQ(asr + static_cast<double>(below) / samples.size(), 1.0);
    }
}

TEST(Frechet, ClosedFormCases) {
    const Mat2 I = Mat2::Identity();
    EXPECT_EQ(frechet_distance(moments(Vec2(1, 2), I), moments(Vec2(1, 2), I)), 0.0);
    EXPECT_NEAR(frechet_distance(moments(Vec2::Zero(), I), moments(Vec2(1, 0), I)), 1.0, 1e-14);
    EXPECT_NEAR(frechet_distance(moments(Vec2::Zero(), I), moments(Vec2::Zero(), 4 * I)), 2.0, 1e-14);
}

TEST(Frechet, SymmetricAndZeroOnlyForEqualMoments) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    for (int i = 0; i < 200; ++i) {
        Mat2 a, b;
        a << n(rng), n(rng), n(rng), n(rng);
        b << n(rng), n(rng), n(rng), n(rng);
        const Moments ma{Vec2(n(rng), n(rng)), a * a.transpose() + 0.01 * Mat2::Identity()};
        const Moments mb{Vec2(n(rng), n(rng)), b * b.transpose() + 0.01 * Mat2::Identity()};
        const double ab = frechet_distance(ma, mb), ba = frechet_distance(mb, ma);
        EXPECT_NEAR(ab, ba, 1e-10 * (1.0 + ab));
        EXPECT_GT(ab, 1e-10);
        EXPECT_LT(std::abs(frechet_distance(ma, ma)), 1e-10);
    }
}

TEST(Frechet, RejectsInvalidCovariances) {
    Mat2 bad;
    bad << 1, 0, 0, -1;
    EXPECT_THROW(frechet_distance(moments(Vec2::Zero(), bad), moments(Vec2::Zero(), Mat2::Identity())), Error);
    Mat2 asym;
    asym << 1, 0.5, 0, 1;
    EXPECT_THROW(frechet_distance(moments(Vec2::Zero(), Mat2::Identity()), moments(Vec2::Zero(), asym)), Error);
    // Singular but PSD is allowed.
    Mat2 singular;
    singular << 1, 1, 1, 1;
    EXPECT_NO_THROW(frechet_distance(moments(Vec2::Zero(), singular), moments(Vec2::Zero(), Mat2::Identity())));
}

TEST(FitMoments, MeanOfSmallSet) {
    const std::vector<Vec2> xs{Vec2(0, 0), Vec2(2, 0), Vec2(1, 1), Vec2(1, -1)};
    const auto m = fit_moments(xs);
    EXPECT_DOUBLE_EQ(m.mean.x(), 1.0);
    EXPECT_DOUBLE_EQ(m.mean.y(), 0.0);
    // Unbiased: sum of squared deviations over n - 1.
    EXPECT_DOUBLE_EQ(m.covariance(0, 0), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.covariance(1, 1), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.covariance(0, 1), 0.0);
}

TEST(FitMoments, DuplicatedDatasetKeepsTheMeanAndRescalesTheUnbiasedCovariance) {
    const std::vector<Vec2> xs{Vec2(0, 0), Vec2(2, 0), Vec2(1, 1), Vec2(1, -1), Vec2(0.5, 3)};
    std::vector<Vec2> twice = xs;
    twice.insert(twice.end(), xs.begin(), xs.end());
    const auto a = fit_moments(xs), b = fit_moments(twice);
    EXPECT_LT((a.mean - b.mean).norm(), 1e-15);
    // n - 1 becomes 2n - 1 while the scatter doubles.
    const double n = static_cast<double>(xs.size());
    EXPECT_LT((a.covariance * (2 * (n - 1) / (2 * n - 1)) - b.covariance).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitMoments, StandardNormalCovariance) {
    const auto m = fit_moments(sample_prior(standard_normal_world(), 50000, 35));
    EXPECT_LT((m.covariance - Mat2::Identity()).cwiseAbs().maxCoeff(), 0.05);
}

TEST(FitMoments, NeedsThreeSamples) {
    EXPECT_THROW(fit_moments(std::vector<Vec2>{Vec2(0, 0), Vec2(1, 1)}), Error);
}

TEST(MetricsCsv, RoundTrip) {
    MetricsReport r;
    r.method = "dynamic";
    r.variant = "dynamic_v5";
    r.omega_pos = 7.5;
    r.omega_neg = 20;
    r.n = 2000;
    r.asr = 0.0045;
    r.toxic_rate = 0.01234567890123;
    r.alignment = 0.9991;
    r.frechet = 2.25;
    r.seed = 42;
    r.config_digest = "00ff00ff00ff00ff";
    MetricsReport failed = r;
    failed.failed = true;
    const std::string text = metrics_csv_header() + "\n" + metrics_csv_row(r) + "\n" + metrics_csv_row(failed) + "\n";
    EXPECT_EQ(metrics_csv_header().rfind("method,variant,omega_pos,omega_neg,n,asr,toxic_rate,alignment,frechet,seed,"
                                         "config_digest",
                                         0),
              0u);
    const auto back = parse_metrics_csv(text);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].asr, r.asr);
    EXPECT_EQ(back[0].toxic_rate, r.toxic_rate);
    EXPECT_EQ(back[0].config_digest, r.config_digest);
    EXPECT_FALSE(back[0].failed);
    EXPECT_TRUE(back[1].failed);
    EXPECT_THROW(parse_metrics_csv("bad header\n"), Error);
}

TEST(MetricsCsv, ShortestRoundTripFormatting) {
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(7.5), "7.5");
    EXPECT_EQ(format_double(std::nan("")), "nan");
}

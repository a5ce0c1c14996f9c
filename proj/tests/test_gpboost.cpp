#include <gtest/gtest.h>

#include <random>

#include "churnstack/gpboost.hpp"

using namespace churnstack;
using namespace churnstack::gp;

namespace {

Node fx(std::uint32_t j) { return {Op::feature, j, 0.0}; }
Node cst(double v) { return {Op::constant, 0, v}; }

struct Problem {
  Matrix m;
  std::vector<Label> labels;
};

// Noisy threshold concept: no small program is perfect, so rounds run on.
Problem noisy_problem(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  Problem p{Matrix(n, 4), std::vector<Label>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 4; ++j) p.m(i, j) = u(rng);
    const bool churn = p.m(i, 0) + 0.5 * p.m(i, 1) > 0.8;
    p.labels[i] = (churn != (u(rng) < 0.15)) ? Label::churner : Label::non_churner;
  }
  return p;
}

GpConfig small_cfg(std::uint64_t seed) {
  GpConfig cfg;
  cfg.population = 30;
  cfg.generations = 4;
  cfg.elite_size = 5;
  cfg.max_depth = 5;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Alpha, Formula) {
  EXPECT_NEAR(alpha_for(0.25), 0.5 * std::log(3.0), 1e-15);
  EXPECT_NEAR(alpha_for(0.25), 0.549306, 1e-6);
  EXPECT_GT(alpha_for(0.4999), 0.0);
}

TEST(Boost, UpdatedWeightsGiveHalfErrorAndStayOnSimplex) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto prob = noisy_problem(100, s);
    const FeatureColumns X(prob.m);
    std::size_t rounds = 0;
    adaboost_train(X, prob.labels, small_cfg(s), [&](const BoostRound& r) {
      ++rounds;
      EXPECT_GT(r.error, 0.0);
      EXPECT_LT(r.error, 0.5);
      EXPECT_GT(r.alpha, 0.0);
      double err = 0.0, sum = 0.0;
      for (std::size_t i = 0; i < prob.m.rows; ++i) {
        const bool member = eval_program(r.program, prob.m.row(i)) >= 0.0;
        if (member != (prob.labels[i] == r.target)) err += r.weights[i];
        ASSERT_GE(r.weights[i], 0.0);
        sum += r.weights[i];
      }
      EXPECT_NEAR(err, 0.5, 1e-9);
      EXPECT_NEAR(sum, 1.0, 1e-12);
    });
    EXPECT_GT(rounds, 0u);
  }
}

TEST(Boost, PerfectLearnerStopsItsChain) {
  // x0 >= 0 iff churner: a perfect churn program exists and ends that chain.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(60, 2);
  std::vector<Label> labels(60);
  for (std::size_t i = 0; i < 60; ++i) {
    m(i, 0) = u(rng);
    m(i, 1) = u(rng);
    labels[i] = m(i, 0) >= 0.0 ? Label::churner : Label::non_churner;
  }
  auto cfg = small_cfg(3);
  cfg.population = 80;
  cfg.generations = 10;
  const auto ens = adaboost_train(FeatureColumns(m), labels, cfg);
  ASSERT_EQ(ens.chain(Label::churner).size(), 1u);
  EXPECT_NEAR(ens.chain(Label::churner)[0].alpha, alpha_for(kMinBoostError), 1e-12);
}

TEST(Boost, DeterministicSerialization) {
  const auto prob = noisy_problem(80, 9);
  const FeatureColumns X(prob.m);
  const auto a = serialize_ensemble(adaboost_train(X, prob.labels, small_cfg(4)));
  const auto b = serialize_ensemble(adaboost_train(X, prob.labels, small_cfg(4)));
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize_ensemble(parse_ensemble(a)), a);
}

TEST(Boost, SingleClassRejected) {
  const std::vector<Label> labels(5, Label::churner);
  EXPECT_THROW(adaboost_train(FeatureColumns(Matrix(5, 2)), labels, small_cfg(1)), Error);
}

TEST(Vote, ArgmaxOfSums) {
  EXPECT_EQ(predict_from_votes({2.0, 1.0}, {3.0, 3.0}).label, Label::churner);
  EXPECT_EQ(predict_from_votes({1.0, 2.0}, {3.0, 3.0}).label, Label::non_churner);
}

TEST(Vote, TieGoesToNonChurner) {
  EXPECT_EQ(predict_from_votes({1.5, 1.5}, {3.0, 3.0}).label, Label::non_churner);
  EXPECT_EQ(predict_from_votes({0.0, 0.0}, {3.0, 3.0}).label, Label::non_churner);
}

TEST(Vote, SingleProgramPerClass) {
  BoostedEnsemble ens;
  ens.members[class_index(Label::churner)].push_back({Program({cst(0.5)}), 0.7});
  ens.members[class_index(Label::non_churner)].push_back({Program({cst(-0.5)}), 0.4});
  const auto p = predict(ens, std::vector<double>{0.3});
  EXPECT_EQ(p.label, Label::churner);
  EXPECT_EQ(p.score, 1.0);
}

TEST(Vote, ScaleInvariance) {
  const auto prob = noisy_problem(100, 21);
  const FeatureColumns X(prob.m);
  const auto ens = adaboost_train(X, prob.labels, small_cfg(21));
  for (double k : {0.001, 0.5, 3.0, 1e6}) {
    auto scaled = ens;
    for (auto& chain : scaled.members)
      for (auto& mbr : chain) mbr.alpha *= k;
    const auto a = predict_batch(ens, X), b = predict_batch(scaled, X);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i].label, b[i].label);
  }
}

TEST(Vote, BatchMatchesScalar) {
  const auto prob = noisy_problem(90, 22);
  const FeatureColumns X(prob.m);
  const auto ens = adaboost_train(X, prob.labels, small_cfg(22));
  const auto batch = predict_batch(ens, X);
  for (std::size_t i = 0; i < prob.m.rows; ++i) {
    const auto p = predict(ens, prob.m.row(i));
    ASSERT_EQ(p.label, batch[i].label);
    ASSERT_EQ(p.score, batch[i].score);
  }
}

TEST(EnsembleFile, RejectsBadInput) {
  EXPECT_THROW(parse_ensemble("nope\n"), Error);
  EXPECT_THROW(parse_ensemble("TLDEEPE-GPA v1\nclass martian alpha 1\n(x 0)\n"), Error);
  EXPECT_THROW(parse_ensemble("TLDEEPE-GPA v1\nclass churner alpha 1\n"), Error);
  const auto ens = parse_ensemble("TLDEEPE-GPA v1\nclass churner alpha 0.5\n(x 1)\n");
  EXPECT_EQ(ens.chain(Label::churner)[0].program, Program({fx(1)}));
}

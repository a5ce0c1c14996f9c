#include <gtest/gtest.h>

#include <random>

#include "churnstack/metrics.hpp"

using namespace churnstack;
using namespace churnstack::metrics;

namespace {

constexpr Label C = Label::churner;
constexpr Label N = Label::non_churner;

struct ScoredSet {
  std::vector<double> scores;
  std::vector<Label> labels;
};

ScoredSet random_set(std::mt19937_64& rng) {
  ScoredSet s;
  const std::size_t n = 2 + rng() % 199;
  const bool coarse = rng() % 2 == 0;  // coarse grids force many ties
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::uniform_real_distribution<double>()(rng);
    s.scores.push_back(coarse ? std::floor(v * 6.0) / 6.0 : v);
    s.labels.push_back(rng() % 3 == 0 ? C : N);
  }
  s.labels[0] = C;
  s.labels[1] = N;
  return s;
}

}  // namespace

TEST(Confusion, AllChurnerCorrect) {
  const std::vector<Label> l(5, C);
  EXPECT_EQ(confusion(l, l), (ConfusionCounts{5, 0, 0, 0}));
}

TEST(Confusion, ComplementHasNoHits) {
  const std::vector<Label> a{C, N, C, N}, p{N, C, N, C};
  const auto c = confusion(p, a);
  EXPECT_EQ(c.tp, 0u);
  EXPECT_EQ(c.tn, 0u);
}

TEST(Confusion, EightSampleTally) {
  const std::vector<Label> actual{C, C, C, C, C, N, N, N};
  const std::vector<Label> pred{C, C, C, N, N, N, N, C};
  // Brute-force tally kept apart from the library routine.
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    tp += pred[i] == C && actual[i] == C;
    fp += pred[i] == C && actual[i] == N;
    tn += pred[i] == N && actual[i] == N;
    fn += pred[i] == N && actual[i] == C;
  }
  ASSERT_EQ((ConfusionCounts{tp, fp, tn, fn}), (ConfusionCounts{3, 1, 2, 2}));
  EXPECT_EQ(confusion(pred, actual), (ConfusionCounts{3, 1, 2, 2}));
}

TEST(Rates, FromCounts) {
  const ConfusionCounts c{3, 1, 2, 2};
  EXPECT_EQ(accuracy(c), 0.625);
  EXPECT_EQ(*sensitivity(c), 0.6);
  EXPECT_EQ(*specificity(c), 2.0 / 3.0);
  EXPECT_EQ(accuracy(ConfusionCounts{4, 0, 6, 0}), 1.0);
}

TEST(Rates, UndefinedMarkers) {
  EXPECT_FALSE(sensitivity(ConfusionCounts{0, 2, 3, 0}).has_value());
  EXPECT_FALSE(specificity(ConfusionCounts{2, 0, 0, 3}).has_value());
  EXPECT_THROW(accuracy(ConfusionCounts{}), Error);
}

TEST(Rates, ConsistencyIdentity) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10000; ++t) {
    const ConfusionCounts c{1 + rng() % 500, rng() % 500, 1 + rng() % 500, rng() % 500};
    const double P = static_cast<double>(c.positives()), Nn = static_cast<double>(c.negatives());
    const double lhs = accuracy(c);
    const double rhs = (*sensitivity(c) * P + *specificity(c) * Nn) / (P + Nn);
    ASSERT_NEAR(lhs, rhs, 1e-15);
  }
}

TEST(Auc, PerfectRanking) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<Label> l{C, C, N, N};
  EXPECT_EQ(roc_auc(s, l).auc, 1.0);
  EXPECT_EQ(pairwise_auc_oracle(s, l), 1.0);
}

TEST(Auc, AllTied) {
  const std::vector<double> s(6, 0.4);
  const std::vector<Label> l{C, N, N, C, N, N};
  const auto roc = roc_auc(s, l);
  EXPECT_EQ(roc.auc, 0.5);
  ASSERT_EQ(roc.points.size(), 2u);
}

TEST(Auc, ThreeOfFourConcordant) {
  const std::vector<double> s{0.8, 0.4, 0.6, 0.2};
  const std::vector<Label> l{C, C, N, N};
  EXPECT_EQ(roc_auc(s, l).auc, 0.75);
  EXPECT_EQ(pairwise_auc_oracle(s, l), 0.75);
}

TEST(Auc, SingleClassRejected) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<Label> l{C, C};
  EXPECT_THROW(roc_auc(s, l), Error);
}

TEST(Auc, MatchesOracleOnRandomSets) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 500; ++t) {
    const auto s = random_set(rng);
    ASSERT_NEAR(roc_auc(s.scores, s.labels).auc, pairwise_auc_oracle(s.scores, s.labels), 1e-12);
  }
}

TEST(Auc, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 300; ++t) {
    auto s = random_set(rng);
    const double base = roc_auc(s.scores, s.labels).auc;
    for (auto& v : s.scores) v = std::exp(3.0 * v) - 7.0;
    ASSERT_EQ(roc_auc(s.scores, s.labels).auc, base);
  }
}

TEST(Auc, SignFlipMirrors) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 300; ++t) {
    auto s = random_set(rng);
    const double base = roc_auc(s.scores, s.labels).auc;
    for (auto& v : s.scores) v = -v;
    ASSERT_NEAR(roc_auc(s.scores, s.labels).auc, 1.0 - base, 1e-15);
  }
}

TEST(Roc, MonotoneAndAnchored) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 300; ++t) {
    const auto s = random_set(rng);
    const auto roc = roc_auc(s.scores, s.labels);
    ASSERT_EQ(roc.points.front(), (RocPoint{0.0, 0.0}));
    ASSERT_EQ(roc.points.back(), (RocPoint{1.0, 1.0}));
    for (std::size_t k = 1; k < roc.points.size(); ++k) {
      ASSERT_GE(roc.points[k].fpr, roc.points[k - 1].fpr);
      ASSERT_GE(roc.points[k].tpr, roc.points[k - 1].tpr);
    }
  }
}

TEST(Roc, TsvDump) {
  const std::vector<double> s{0.9, 0.1};
  const std::vector<Label> l{C, N};
  EXPECT_EQ(roc_to_tsv(roc_auc(s, l)), "fpr\ttpr\n0\t0\n0\t1\n1\t1\n");
}

TEST(Evaluate, Combined) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<Label> a{C, N, C, N}, p{C, C, N, N};
  const auto r = evaluate(p, s, a);
  EXPECT_EQ(r.counts, (ConfusionCounts{1, 1, 1, 1}));
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.roc.auc, 0.75);
}

TEST(MeanDefined, SkipsUndefined) {
  const std::vector<std::optional<double>> xs{0.5, std::nullopt, 1.0};
  EXPECT_EQ(*mean_defined(xs), 0.75);
  const std::vector<std::optional<double>> none{std::nullopt};
  EXPECT_FALSE(mean_defined(none).has_value());
}

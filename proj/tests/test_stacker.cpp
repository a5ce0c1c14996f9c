#include <gtest/gtest.h>

#include <random>
#include <set>

#include "churnstack/stacker.hpp"

using namespace churnstack;
using namespace churnstack::stack;

namespace {

constexpr Label C = Label::churner;
constexpr Label N = Label::non_churner;

std::vector<Label> balanced(std::size_t n) {
  std::vector<Label> l(n);
  for (std::size_t i = 0; i < n; ++i) l[i] = i % 2 ? N : C;
  return l;
}

class ConstantLearner final : public BaseLearner {
 public:
  explicit ConstantLearner(double p) : p_(p) {}
  const std::string& name() const override { return name_; }
  bool trained() const override { return true; }
  double churn_probability(const FeatureImage&) const override { return p_; }

 private:
  std::string name_ = "const";
  double p_;
};

// Mean pixel of the image, a deterministic stand-in for a trained CNN.
class MeanLearner final : public BaseLearner {
 public:
  const std::string& name() const override { return name_; }
  bool trained() const override { return true; }
  double churn_probability(const FeatureImage& im) const override {
    double s = 0.0;
    for (double p : im.grid.pixels) s += p;
    return s / static_cast<double>(im.grid.pixels.size());
  }

 private:
  std::string name_ = "mean";
};

PipelineConfig tiny_config() {
  PipelineConfig cfg;
  cfg.tag = "tiny";
  cfg.folds = 5;
  cfg.image_size = 16;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  cfg.pretrain_epochs = 1;
  cfg.gp.population = 20;
  cfg.gp.generations = 3;
  cfg.gp.elite_size = 2;
  cfg.gp.max_depth = 4;
  return cfg;
}

Dataset tiny_data(std::uint64_t seed, double shift = 0.0) {
  SyntheticSpec s;
  s.n = 200;
  s.d = 6;
  s.seed = seed;
  s.shift = shift;
  return generate_synthetic(s);
}

}  // namespace

TEST(Split, SixtyForty) {
  const auto s = split_ab(balanced(100), 1);
  EXPECT_EQ(s.a.size(), 60u);
  EXPECT_EQ(s.b.size(), 40u);
  std::vector<std::size_t> all = s.a;
  all.insert(all.end(), s.b.begin(), s.b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) ASSERT_EQ(all[i], i);
}

TEST(Split, OrangeSize) {
  std::vector<Label> l(50000, N);
  for (std::size_t i = 0; i < 3672; ++i) l[i * 7] = C;
  EXPECT_EQ(split_ab(l, 2).a.size(), 30000u);
}

TEST(PredictionSpace, OneColumnPerLearner) {
  const auto imgs = convert_dataset(Matrix(5, 4, 0.25), 8);
  ConstantLearner a(0.5), b(0.2);
  MeanLearner m;
  const std::vector<const BaseLearner*> ls{&a, &b, &m};
  const auto ps = build_prediction_space(ls, imgs);
  ASSERT_EQ(ps.cols, 3u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(ps(i, 0), 0.5);
    EXPECT_EQ(ps(i, 1), 0.2);
    EXPECT_EQ(ps(i, 2), 0.25);
  }
  EXPECT_EQ(build_prediction_space(ls, imgs), ps);
}

TEST(PredictionSpace, ScoreFileKeyedBySourceRow) {
  auto imgs = convert_dataset(Matrix(2, 4, 0.0), 4);
  imgs[0].source_index = 17;
  imgs[1].source_index = 3;
  const auto l = ScoreFileLearner::from_tsv("ext", "row\tp\n3\t0.25\n17\t0.75\n");
  const std::vector<const BaseLearner*> ls{&l};
  const auto ps = build_prediction_space(ls, imgs);
  EXPECT_EQ(ps(0, 0), 0.75);
  EXPECT_EQ(ps(1, 0), 0.25);
  imgs[0].source_index = 4;
  EXPECT_THROW(build_prediction_space(ls, imgs), Error);
  EXPECT_THROW(ScoreFileLearner::from_tsv("bad", "1\t1.5\n"), Error);
}

TEST(Extend, WidthAndPrefix) {
  Matrix X(3, 4);
  for (std::size_t k = 0; k < X.data.size(); ++k) X.data[k] = 0.1 * static_cast<double>(k);
  Matrix ps(3, 3, 0.5);
  const std::vector<std::string> fn{"a", "b", "c", "d"}, ln{"p1", "p2", "p3"};
  const auto labels = balanced(3);
  const auto ext = extend_features(X, fn, labels, ps, ln);
  ASSERT_EQ(ext.rows.cols, 7u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) ASSERT_EQ(ext.rows(i, j), X(i, j));
    for (std::size_t j = 4; j < 7; ++j) ASSERT_EQ(ext.rows(i, j), 0.5);
  }
  EXPECT_EQ(ext.names.back(), "p3");
}

TEST(Extend, NoLearnersIsIdentity) {
  Matrix X(2, 3, 0.7);
  const std::vector<std::string> fn{"a", "b", "c"};
  const auto labels = balanced(2);
  const auto ext = extend_features(X, fn, labels, Matrix(2, 0), {});
  EXPECT_EQ(ext.rows, X);
}

TEST(Folds, BalancedTwentyIntoTen) {
  const auto labels = balanced(20);
  const auto folds = kfold_indices(labels, 10, 3);
  ASSERT_EQ(folds.size(), 10u);
  for (const auto& f : folds) {
    ASSERT_EQ(f.size(), 2u);
    EXPECT_NE(labels[f[0]], labels[f[1]]);
  }
  EXPECT_EQ(kfold_indices(labels, 10, 3), folds);
}

TEST(Folds, PartitionProperty) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 40 + rng() % 200, k = 2 + rng() % 9;
    std::vector<Label> l(n, N);
    for (std::size_t i = 0; i < n; ++i)
      if (i < k || rng() % 4 == 0) l[i] = C;
    const auto folds = kfold_indices(l, k, t);
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    for (const auto& f : folds) {
      for (auto i : f) ++seen[i];
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      const auto rest = complement(f, n);
      std::vector<std::size_t> inter;
      std::set_intersection(f.begin(), f.end(), rest.begin(), rest.end(), std::back_inserter(inter));
      ASSERT_TRUE(inter.empty());
      ASSERT_EQ(rest.size() + f.size(), n);
    }
    for (int s : seen) ASSERT_EQ(s, 1);
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(Synthetic, BayesAccuracyValues) {
  EXPECT_EQ(balanced_bayes_accuracy(0.0, 1.0), 0.5);
  EXPECT_NEAR(balanced_bayes_accuracy(2.5632, 1.0), 0.9000, 5e-5);
}

TEST(Synthetic, ChurnCountWithinBinomialBounds) {
  SyntheticSpec s;
  s.n = 10000;
  s.churn_rate = 0.1;
  s.seed = 4;
  const auto ds = generate_synthetic(s);
  const auto churn = static_cast<double>(std::count(ds.labels.begin(), ds.labels.end(), C));
  const double sd = std::sqrt(10000 * 0.1 * 0.9);
  EXPECT_LE(std::abs(churn - 1000.0), 3.0 * sd);
  EXPECT_EQ(ds.width(), 20u);
}

TEST(Synthetic, ShiftMovesBothClassesAlongSharedDirection) {
  SyntheticSpec a;
  a.seed = 1;
  auto b = a;
  b.shift = 2.0;
  EXPECT_EQ(synthetic_direction(a), synthetic_direction(b));
  const auto da = generate_synthetic(a), db = generate_synthetic(b);
  EXPECT_EQ(da.labels, db.labels);
  EXPECT_NEAR(std::get<double>(db.rows[5][3]) - std::get<double>(da.rows[5][3]), 2.0, 1e-12);
}

TEST(Pipeline, ReportLayoutAndAudit) {
  const auto ds = tiny_data(3);
  const auto rep = run_pipeline(ds, tiny_config());
  ASSERT_EQ(rep.folds.size(), 5u);
  EXPECT_EQ(split(report_tsv(rep), '\n').size(), 1u + 5u + 1u + 1u);  // header, folds, average, final newline
  EXPECT_EQ(rep.pretrained_loads, 0u);
  EXPECT_EQ(rep.learner_names, (std::vector<std::string>{"cnn1", "cnn2", "cnn3"}));

  // A and B partition the rows.
  std::vector<std::size_t> inter;
  std::set_intersection(rep.audit.a_rows.begin(), rep.audit.a_rows.end(),
                        rep.audit.b_rows.begin(), rep.audit.b_rows.end(), std::back_inserter(inter));
  EXPECT_TRUE(inter.empty());
  EXPECT_EQ(rep.audit.a_rows.size() + rep.audit.b_rows.size(), ds.size());
  // Base learners only saw A.
  for (const auto& rows : rep.audit.learner_train_rows) EXPECT_EQ(rows, rep.audit.a_rows);
  // Each fold's test rows are disjoint from its training rows and cover B.
  std::vector<int> seen(rep.audit.b_rows.size(), 0);
  for (const auto& f : rep.folds)
    for (auto i : f.test_rows) ++seen[i];
  for (int s : seen) EXPECT_EQ(s, 1);

  for (std::size_t i = 0; i < rep.prediction_space.data.size(); ++i) {
    ASSERT_GE(rep.prediction_space.data[i], 0.0);
    ASSERT_LE(rep.prediction_space.data[i], 1.0);
  }
}

TEST(Pipeline, DeterministicReports) {
  const auto ds = tiny_data(5);
  const auto a = run_pipeline(ds, tiny_config());
  const auto b = run_pipeline(ds, tiny_config());
  EXPECT_EQ(report_tsv(a), report_tsv(b));
  EXPECT_EQ(a.learner_weights, b.learner_weights);
  for (std::size_t f = 0; f < a.folds.size(); ++f)
    EXPECT_EQ(a.folds[f].ensemble_text, b.folds[f].ensemble_text);
}

TEST(Pipeline, ScramblingHoldoutFeaturesLeavesBaseLearnersUnchanged) {
  // Labels stay put: the split is stratified, so relabeling B would redraw A.
  auto ds = tiny_data(9);
  const auto clean = run_pipeline(ds, tiny_config());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 10.0);
  for (auto i : clean.audit.b_rows)
    for (auto& c : ds.rows[i]) c = g(rng);
  const auto scrambled = run_pipeline(ds, tiny_config());
  EXPECT_EQ(scrambled.audit.a_rows, clean.audit.a_rows);
  EXPECT_EQ(scrambled.learner_weights, clean.learner_weights);
  EXPECT_EQ(to_text(scrambled.preprocess), to_text(clean.preprocess));
}

TEST(Pipeline, TransferLoadsEveryLearnerAndKeepsPartitions) {
  const auto cfg = tiny_config();
  const auto weights = pretrain_base_learners(tiny_data(6, 0.5), cfg);
  ASSERT_EQ(weights.size(), 3u);
  auto on = cfg;
  on.transfer = true;
  std::size_t calls = 0;
  const auto rep_on = run_pipeline(tiny_data(7), on, [&](std::size_t j) {
    ++calls;
    return weights.at(j);
  });
  EXPECT_EQ(calls, 3u);
  EXPECT_EQ(rep_on.pretrained_loads, 3u);
  // cnn1 keeps both pretrained conv blocks.
  auto pre = cnn::build_custom_cnn(cfg.image_size), post = pre;
  cnn::deserialize_weights(pre, weights[0]);
  cnn::deserialize_weights(post, rep_on.learner_weights[0]);
  for (std::size_t li = 0; li < cnn::kConvBlocksPrefix; ++li)
    if (const auto* p = cnn::params_of(pre.layers()[li])) {
      EXPECT_EQ(*p, *cnn::params_of(post.layers()[li]));
    }

  const auto rep_off = run_pipeline(tiny_data(7), cfg, [&](std::size_t) -> std::string {
    ADD_FAILURE() << "transfer-off run asked for pretrained weights";
    return {};
  });
  EXPECT_EQ(rep_off.pretrained_loads, 0u);
  EXPECT_EQ(rep_off.audit.a_rows, rep_on.audit.a_rows);
  EXPECT_EQ(rep_off.audit.folds, rep_on.audit.folds);
}

TEST(Pipeline, ExternalLearnerAppended) {
  const auto ds = tiny_data(9);
  std::map<std::size_t, double> scores;
  for (std::size_t i = 0; i < ds.size(); ++i) scores[i] = ds.labels[i] == C ? 0.8 : 0.2;
  const ScoreFileLearner ext("oracle", scores);
  auto cfg = tiny_config();
  cfg.learners.resize(1);
  const std::vector<const BaseLearner*> extra{&ext};
  const auto rep = run_pipeline(ds, cfg, {}, extra);
  EXPECT_EQ(rep.learner_names, (std::vector<std::string>{"cnn1", "oracle"}));
  EXPECT_EQ(rep.base[1].accuracy, 1.0);
}

TEST(Pipeline, TransferWithoutWeightsIsAnError) {
  auto cfg = tiny_config();
  cfg.transfer = true;
  EXPECT_THROW(run_pipeline(tiny_data(1), cfg), Error);
}

TEST(Pipeline, FailingStageIsNamed) {
  auto cfg = tiny_config();
  cfg.folds = 150;  // more folds than B holds per class
  try {
    run_pipeline(tiny_data(2), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("[folds]", 0), 0u) << e.what();
  }
}

#ifndef CHURNSTACK_STACKER_HPP
#define CHURNSTACK_STACKER_HPP

// Two-stage stacking protocol:
//   1. stratified hold-out split into A (base-learner training) and B;
//   2. CNN base learners trained (or fine-tuned from pretrained weights) on
//      the images of A, then scored on B -> prediction space;
//   3. B' = B features ++ prediction space;
//   4. stratified k-fold cross-validation of the boosted GP meta-classifier
//      on B'.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "churnstack/common.hpp"
#include "churnstack/convnet.hpp"
#include "churnstack/gpboost.hpp"
#include "churnstack/imaging.hpp"
#include "churnstack/metrics.hpp"
#include "churnstack/tabular.hpp"

namespace churnstack::stack {

// ---------------------------------------------------------------------------
// Base learners

/// First-stage model producing a churn probability per image.
class BaseLearner {
 public:
  virtual ~BaseLearner() = default;
  virtual const std::string& name() const = 0;
  virtual bool trained() const = 0;
  /// Probability in [0, 1] that the row behind `image` is a churner.
  virtual double churn_probability(const FeatureImage& image) const = 0;
};

class CnnLearner final : public BaseLearner {
 public:
  CnnLearner(std::string name, cnn::ConvNet net, bool trained = false)
      : name_(std::move(name)), net_(std::move(net)), trained_(trained) {}

  const std::string& name() const override { return name_; }
  bool trained() const override { return trained_; }
  double churn_probability(const FeatureImage& image) const override {
    return cnn::predict_proba(net_, image)[class_index(Label::churner)];
  }

  const cnn::ConvNet& net() const noexcept { return net_; }
  cnn::ConvNet& net() noexcept { return net_; }
  void mark_trained() noexcept { trained_ = true; }

 private:
  std::string name_;
  cnn::ConvNet net_;
  bool trained_;
};

/// External score provider: churn probabilities keyed by the source row
/// index carried on each image. File format: "row\tp_churn" lines, an
/// optional header line starting with "row".
class ScoreFileLearner final : public BaseLearner {
 public:
  ScoreFileLearner(std::string name, std::map<std::size_t, double> scores)
      : name_(std::move(name)), scores_(std::move(scores)) {
    for (const auto& [row, p] : scores_)
      if (!(p >= 0.0 && p <= 1.0))
        throw Error("score for row " + std::to_string(row) + " outside [0, 1]");
  }

  static ScoreFileLearner from_tsv(std::string name, std::string_view text) {
    std::map<std::size_t, double> scores;
    std::size_t lineno = 0;
    for (const auto& raw : split(text, '\n')) {
      ++lineno;
      std::string_view line = trim(raw);
      if (line.empty() || line.rfind("row", 0) == 0) continue;
      const auto f = split(line, '\t');
      if (f.size() != 2) throw Error("score file line " + std::to_string(lineno) + ": expected 2 fields");
      const auto row = parse_double_or_throw(f[0], "score file row");
      scores[static_cast<std::size_t>(row)] = parse_double_or_throw(f[1], "score file probability");
    }
    return {std::move(name), std::move(scores)};
  }

  const std::string& name() const override { return name_; }
  bool trained() const override { return !scores_.empty(); }
  double churn_probability(const FeatureImage& image) const override {
    const auto it = scores_.find(image.source_index);
    if (it == scores_.end())
      throw Error("learner '" + name_ + "' has no score for row " +
                  std::to_string(image.source_index));
    return it->second;
  }

 private:
  std::string name_;
  std::map<std::size_t, double> scores_;
};

// ---------------------------------------------------------------------------
// Protocol pieces

inline constexpr double kDefaultSplitFraction = 0.6;

inline SplitIndices split_ab(std::span<const Label> labels, std::uint64_t seed,
                             double fraction_a = kDefaultSplitFraction) {
  return stratified_split(labels, fraction_a, seed);
}

/// Column j = learner j's churn probability on each image.
inline Matrix build_prediction_space(std::span<const BaseLearner* const> learners,
                                     std::span<const FeatureImage> images) {
  Matrix ps(images.size(), learners.size());
  for (std::size_t j = 0; j < learners.size(); ++j) {
    if (!learners[j]->trained())
      throw Error("base learner '" + learners[j]->name() + "' is not trained");
    for (std::size_t i = 0; i < images.size(); ++i) {
      const double p = learners[j]->churn_probability(images[i]);
      if (!(p >= 0.0 && p <= 1.0))
        throw Error("base learner '" + learners[j]->name() + "' produced a score outside [0, 1]");
      ps(i, j) = p;
    }
  }
  return ps;
}

struct ExtendedDataset {
  Matrix rows;  // original features, then one column per base learner
  std::vector<std::string> names;
  std::vector<Label> labels;
  std::size_t original_width = 0;
};

inline ExtendedDataset extend_features(const Matrix& features,
                                       std::span<const std::string> feature_names,
                                       std::span<const Label> labels, const Matrix& prediction_space,
                                       std::span<const std::string> learner_names) {
  if (features.rows != prediction_space.rows)
    throw Error("extend_features: " + std::to_string(features.rows) + " rows vs " +
                std::to_string(prediction_space.rows) + " prediction rows");
  if (labels.size() != features.rows) throw Error("extend_features: labels/rows mismatch");
  if (feature_names.size() != features.cols || learner_names.size() != prediction_space.cols)
    throw Error("extend_features: column names do not match widths");
  ExtendedDataset out;
  out.original_width = features.cols;
  out.rows = Matrix(features.rows, features.cols + prediction_space.cols);
  for (std::size_t i = 0; i < features.rows; ++i) {
    for (std::size_t j = 0; j < features.cols; ++j) out.rows(i, j) = features(i, j);
    for (std::size_t j = 0; j < prediction_space.cols; ++j)
      out.rows(i, features.cols + j) = prediction_space(i, j);
  }
  out.names.assign(feature_names.begin(), feature_names.end());
  out.names.insert(out.names.end(), learner_names.begin(), learner_names.end());
  out.labels.assign(labels.begin(), labels.end());
  return out;
}

/// Stratified k folds (test index sets). Each class is shuffled and dealt
/// round-robin, continuing where the previous class stopped.
inline std::vector<std::vector<std::size_t>> kfold_indices(std::span<const Label> labels,
                                                           std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("need at least 2 folds");
  if (k > labels.size()) throw Error("more folds than samples");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (Label c : kAllLabels) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    if (idx.size() < k)
      throw Error("class '" + std::string(label_name(c)) + "' has " + std::to_string(idx.size()) +
                  " samples, fewer than " + std::to_string(k) + " folds");
    std::shuffle(idx.begin(), idx.end(), rng);
    for (auto i : idx) {
      folds[next].push_back(i);
      next = (next + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

inline std::vector<std::size_t> complement(std::span<const std::size_t> test, std::size_t n) {
  std::vector<bool> in(n, false);
  for (auto i : test) in[i] = true;
  std::vector<std::size_t> out;
  out.reserve(n - test.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!in[i]) out.push_back(i);
  return out;
}

inline Matrix take_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * m.cols), m.cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
  return out;
}

template <class T>
std::vector<T> take(std::span<const T> v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic churn data

struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t d = 20;
  double churn_rate = 0.5;
  double separation = 2.5632;  // churner mean = separation * u
  double noise = 1.0;
  double shift = 0.0;  // added to every coordinate of both classes
  std::uint64_t seed = 0;
  std::uint64_t direction_seed = 0;  // seeds the unit vector u

  void validate() const {
    if (n == 0 || d == 0) throw Error("synthetic spec needs n >= 1 and d >= 1");
    if (!(churn_rate > 0.0 && churn_rate < 1.0)) throw Error("churn rate must lie in (0, 1)");
    if (!(noise > 0.0)) throw Error("noise must be positive");
  }
};

inline std::vector<double> synthetic_direction(const SyntheticSpec& s) {
  std::mt19937_64 rng(s.direction_seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> u(s.d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : u) {
      x = g(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : u) x /= norm;
  return u;
}

/// Class-conditional isotropic Gaussians: non-churners around 0, churners
/// around separation * u.
inline Dataset generate_synthetic(const SyntheticSpec& s) {
  s.validate();
  const auto u = synthetic_direction(s);
  std::mt19937_64 rng(s.seed);
  std::bernoulli_distribution churn(s.churn_rate);
  std::normal_distribution<double> g(0.0, s.noise);
  Dataset ds;
  for (std::size_t j = 0; j < s.d; ++j)
    ds.schema.push_back({"f" + std::to_string(j), ColumnKind::numeric, {}});
  ds.rows.reserve(s.n);
  ds.labels.reserve(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    const bool c = churn(rng);
    std::vector<Cell> row;
    row.reserve(s.d);
    for (std::size_t j = 0; j < s.d; ++j)
      row.emplace_back(g(rng) + s.shift + (c ? s.separation * u[j] : 0.0));
    ds.rows.push_back(std::move(row));
    ds.labels.push_back(c ? Label::churner : Label::non_churner);
  }
  return ds;
}

/// Accuracy of the Bayes rule for balanced classes: Phi(separation / (2 noise)).
inline double balanced_bayes_accuracy(double separation, double noise) {
  return 0.5 * std::erfc(-(separation / (2.0 * noise)) / std::sqrt(2.0));
}

// ---------------------------------------------------------------------------
// Pipeline

struct LearnerSpec {
  std::string name;
  std::size_t frozen_prefix = cnn::kConvBlocksPrefix;  // applied when transferring
  std::uint64_t seed = 0;
};

inline std::vector<LearnerSpec> default_roster(std::uint64_t base_seed) {
  return {{"cnn1", 6, base_seed + 0}, {"cnn2", 3, base_seed + 1}, {"cnn3", 0, base_seed + 2}};
}

struct PipelineConfig {
  std::string tag = "run";
  double split_fraction = kDefaultSplitFraction;
  std::size_t folds = 10;
  std::size_t image_size = 32;
  double drop_threshold = 0.95;
  std::uint64_t seed_split = 1;
  std::uint64_t seed_folds = 2;
  std::uint64_t seed_gp = 3;
  bool transfer = false;
  std::vector<LearnerSpec> learners = default_roster(100);
  cnn::TrainConfig train;
  std::size_t pretrain_epochs = 10;
  gp::GpConfig gp;

  void validate() const {
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
      throw Error("split fraction must lie in (0, 1)");
    if (folds < 2) throw Error("folds must be at least 2");
    if (image_size < 16) throw Error("image size must be at least 16 for the custom CNN");
    train.validate();
    gp.validate();
    for (const auto& l : learners)
      if (l.frozen_prefix > 8) throw Error("learner '" + l.name + "' frozen prefix exceeds layer count");
  }
};

/// Returns the pretrained weight text for learner j (by roster position).
using PretrainedProvider = std::function<std::string(std::size_t)>;

struct FoldResult {
  std::size_t run = 0;  // 1-based
  metrics::ConfusionCounts counts;
  double accuracy = 0.0;
  double auc = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  metrics::RocCurve roc;
  std::vector<std::size_t> test_rows;  // indices into B
  std::vector<double> scores;
  std::vector<Label> predicted;
  std::vector<Label> actual;
  std::string ensemble_text;
};

struct BaseResult {
  std::string name;
  double accuracy = 0.0;
  double auc = 0.0;
};

/// Row bookkeeping for leakage audits. All indices refer to target rows
/// unless noted.
struct ProtocolAudit {
  std::vector<std::size_t> a_rows;
  std::vector<std::size_t> b_rows;
  std::vector<std::vector<std::size_t>> learner_train_rows;
  std::vector<std::vector<std::size_t>> folds;  // indices into B
};

struct RunReport {
  std::string tag;
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double mean_auc = 0.0;
  std::vector<BaseResult> base;
  std::vector<std::string> learner_names;
  Matrix prediction_space;
  std::vector<std::string> learner_weights;  // serialized CNN weights, roster order
  PreprocessReport preprocess;
  ProtocolAudit audit;
  std::size_t pretrained_loads = 0;
};

using Logger = std::function<void(std::string_view)>;

namespace detail {
template <class F>
auto stage(std::string_view name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw Error("[" + std::string(name) + "] " + e.what());
  }
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::array<std::uint32_t, 2> raw{};
  seq.generate(raw.begin(), raw.end());
  return (static_cast<std::uint64_t>(raw[0]) << 32) | raw[1];
}
}  // namespace detail

inline std::vector<FeatureImage> images_for(const Matrix& features, std::size_t size,
                                            std::span<const std::size_t> source_rows) {
  auto imgs = convert_dataset(features, size);
  for (std::size_t i = 0; i < imgs.size(); ++i) imgs[i].source_index = source_rows[i];
  return imgs;
}

/// Trains one CNN per roster entry on the whole source dataset and returns
/// the serialized weights (roster order).
inline std::vector<std::string> pretrain_base_learners(const Dataset& source,
                                                       const PipelineConfig& cfg,
                                                       const Logger& log = {}) {
  cfg.validate();
  const auto fp = detail::stage("pretrain/preprocess", [&] { return fit_preprocessor(source, cfg.drop_threshold); });
  const auto X = to_matrix(fp.transform(source));
  const auto tensors = cnn::to_tensors(convert_dataset(X, cfg.image_size));
  std::vector<std::string> out;
  for (const auto& spec : cfg.learners) {
    if (log) log("pretraining " + spec.name + " on " + std::to_string(source.size()) + " source rows");
    auto net = cnn::build_custom_cnn(cfg.image_size);
    cnn::initialize_he(net, spec.seed);
    auto tc = cfg.train;
    tc.epochs = cfg.pretrain_epochs;
    tc.seed = detail::mix_seed(spec.seed, 0x5052);
    detail::stage("pretrain/" + spec.name, [&] { return cnn::train(net, tensors, source.labels, tc); });
    out.push_back(cnn::serialize_weights(net));
  }
  return out;
}

/// Full protocol on `target`. With cfg.transfer set, `pretrained` must
/// supply weights for every roster entry; it is never called otherwise.
/// `external` learners (already trained) are appended after the CNNs.
inline RunReport run_pipeline(const Dataset& target, const PipelineConfig& cfg,
                              const PretrainedProvider& pretrained = {},
                              std::span<const BaseLearner* const> external = {},
                              const Logger& log = {}) {
  cfg.validate();
  target.validate();
  if (cfg.transfer && !pretrained) throw Error("[transfer] no pretrained weights supplied");
  RunReport rep;
  rep.tag = cfg.tag;

  const auto split = detail::stage("split", [&] {
    return split_ab(target.labels, cfg.seed_split, cfg.split_fraction);
  });
  rep.audit.a_rows = split.a;
  rep.audit.b_rows = split.b;
  const Dataset A = select_rows(target, split.a);
  const Dataset B = select_rows(target, split.b);

  const auto fp = detail::stage("preprocess", [&] { return fit_preprocessor(A, cfg.drop_threshold); });
  rep.preprocess = fp.report;
  const Matrix XA = detail::stage("preprocess", [&] { return to_matrix(fp.transform(A)); });
  const Dataset Bn = detail::stage("preprocess", [&] { return fp.transform(B); });
  const Matrix XB = to_matrix(Bn);
  std::vector<std::string> feature_names;
  for (const auto& c : Bn.schema) feature_names.push_back(c.name);

  const auto imgs_a = detail::stage("imaging", [&] { return images_for(XA, cfg.image_size, split.a); });
  const auto imgs_b = detail::stage("imaging", [&] { return images_for(XB, cfg.image_size, split.b); });
  const auto tens_a = cnn::to_tensors(imgs_a);

  std::vector<std::unique_ptr<CnnLearner>> cnns;
  for (std::size_t j = 0; j < cfg.learners.size(); ++j) {
    const auto& spec = cfg.learners[j];
    const std::string tagname = "base/" + spec.name;
    auto net = cnn::build_custom_cnn(cfg.image_size);
    cnn::initialize_he(net, spec.seed);
    if (cfg.transfer) {
      detail::stage(tagname + "/load", [&] {
        cnn::deserialize_weights(net, pretrained(j));
        return 0;
      });
      ++rep.pretrained_loads;
      net.set_frozen_prefix(spec.frozen_prefix);
    }
    if (log)
      log((cfg.transfer ? "fine-tuning " : "training ") + spec.name + " on " +
          std::to_string(split.a.size()) + " rows of A");
    auto tc = cfg.train;
    tc.seed = detail::mix_seed(spec.seed, 0x4654);
    detail::stage(tagname, [&] { return cnn::train(net, tens_a, A.labels, tc); });
    rep.audit.learner_train_rows.push_back(split.a);
    rep.learner_weights.push_back(cnn::serialize_weights(net));
    cnns.push_back(std::make_unique<CnnLearner>(spec.name, std::move(net), true));
  }
  std::vector<const BaseLearner*> learners;
  for (const auto& c : cnns) learners.push_back(c.get());
  for (const auto* e : external) learners.push_back(e);
  for (const auto* l : learners) rep.learner_names.push_back(l->name());

  rep.prediction_space = detail::stage("prediction-space", [&] {
    return build_prediction_space(learners, imgs_b);
  });

  for (std::size_t j = 0; j < learners.size(); ++j) {
    std::vector<double> p(B.size());
    std::vector<Label> pred(B.size());
    for (std::size_t i = 0; i < B.size(); ++i) {
      p[i] = rep.prediction_space(i, j);
      pred[i] = p[i] > 0.5 ? Label::churner : Label::non_churner;
    }
    const auto ev = metrics::evaluate(pred, p, B.labels);
    rep.base.push_back({learners[j]->name(), ev.accuracy, ev.roc.auc});
  }

  const auto ext = extend_features(XB, feature_names, B.labels, rep.prediction_space,
                                   rep.learner_names);
  rep.audit.folds = detail::stage("folds", [&] { return kfold_indices(ext.labels, cfg.folds, cfg.seed_folds); });

  const std::span<const Label> yb(ext.labels);
  for (std::size_t f = 0; f < rep.audit.folds.size(); ++f) {
    const auto& test = rep.audit.folds[f];
    const auto trn = complement(test, ext.rows.rows);
    if (log) log("meta fold " + std::to_string(f + 1) + "/" + std::to_string(cfg.folds));
    FoldResult fr;
    fr.run = f + 1;
    fr.test_rows = test;
    auto gcfg = cfg.gp;
    gcfg.seed = detail::mix_seed(cfg.seed_gp, f);
    const gp::FeatureColumns Xtr(take_rows(ext.rows, trn));
    const auto ytr = take(yb, trn);
    const auto ens = detail::stage("meta/fold" + std::to_string(f + 1),
                                   [&] { return gp::adaboost_train(Xtr, ytr, gcfg); });
    const gp::FeatureColumns Xte(take_rows(ext.rows, test));
    const auto yte = take(yb, test);
    for (const auto& p : gp::predict_batch(ens, Xte)) {
      fr.predicted.push_back(p.label);
      fr.scores.push_back(p.score);
    }
    const auto ev = metrics::evaluate(fr.predicted, fr.scores, yte);
    fr.actual = yte;
    fr.counts = ev.counts;
    fr.accuracy = ev.accuracy;
    fr.auc = ev.roc.auc;
    fr.sensitivity = ev.sensitivity;
    fr.specificity = ev.specificity;
    fr.roc = ev.roc;
    fr.ensemble_text = gp::serialize_ensemble(ens);
    rep.folds.push_back(std::move(fr));
  }
  for (const auto& fr : rep.folds) {
    rep.mean_accuracy += fr.accuracy;
    rep.mean_auc += fr.auc;
  }
  rep.mean_accuracy /= static_cast<double>(rep.folds.size());
  rep.mean_auc /= static_cast<double>(rep.folds.size());
  return rep;
}

// ---------------------------------------------------------------------------
// Report files

/// "run\taccuracy\tauc", one row per fold, then "average".
inline std::string report_tsv(const RunReport& r) {
  std::string out = "run\taccuracy\tauc\n";
  for (const auto& f : r.folds)
    out += std::to_string(f.run) + "\t" + format_fixed(f.accuracy, 6) + "\t" +
           format_fixed(f.auc, 6) + "\n";
  out += "average\t" + format_fixed(r.mean_accuracy, 6) + "\t" + format_fixed(r.mean_auc, 6) + "\n";
  return out;
}

inline std::string base_tsv(const RunReport& r) {
  std::string out = "learner\taccuracy\tauc\n";
  for (const auto& b : r.base)
    out += b.name + "\t" + format_fixed(b.accuracy, 6) + "\t" + format_fixed(b.auc, 6) + "\n";
  return out;
}

inline std::string prediction_space_tsv(const RunReport& r) {
  std::string out;
  for (std::size_t j = 0; j < r.learner_names.size(); ++j)
    out += (j ? "\t" : "") + r.learner_names[j];
  out += "\n";
  const auto& m = r.prediction_space;
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) out += (j ? "\t" : "") + format_double17(m(i, j));
    out += "\n";
  }
  return out;
}

/// "row\tscore\tlabel\tpredicted" for one fold (row = target row index).
inline std::string fold_scores_tsv(const RunReport& r, const FoldResult& f) {
  std::string out = "row\tscore\tlabel\tpredicted\n";
  for (std::size_t k = 0; k < f.test_rows.size(); ++k)
    out += std::to_string(r.audit.b_rows[f.test_rows[k]]) + "\t" + format_double17(f.scores[k]) +
           "\t" + std::string(label_name(f.actual[k])) + "\t" +
           std::string(label_name(f.predicted[k])) + "\n";
  return out;
}

}  // namespace churnstack::stack

#endif  // CHURNSTACK_STACKER_HPP

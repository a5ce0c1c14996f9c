#ifndef CHURNSTACK_GPBOOST_HPP
#define CHURNSTACK_GPBOOST_HPP

// Boosted GP meta-classifier. For each class an independent discrete
// AdaBoost chain evolves up to `elite_size` one-class programs; prediction
// compares the alpha-weighted vote sums of the two chains.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "churnstack/common.hpp"
#include "churnstack/gp.hpp"

namespace churnstack::gp {

struct Member {
  Program program;
  double alpha = 0.0;
  bool operator==(const Member&) const = default;
};

struct BoostedEnsemble {
  std::array<std::vector<Member>, 2> members;  // indexed by class_index()

  const std::vector<Member>& chain(Label c) const { return members[class_index(c)]; }
  bool operator==(const BoostedEnsemble&) const = default;
};

/// Snapshot handed to the observer after each accepted round.
struct BoostRound {
  Label target;
  std::size_t round;
  double error;  // epsilon before flooring
  double alpha;
  const Program& program;
  std::span<const bool> misclassified;
  std::span<const double> weights;  // after the update
};

using BoostObserver = std::function<void(const BoostRound&)>;

inline constexpr double kMinBoostError = 1e-10;

/// Seed for round `t` of the chain for `target`, derived from the base seed.
inline std::uint64_t round_seed(std::uint64_t base, Label target, std::size_t t) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(class_index(target)),
                    static_cast<std::uint32_t>(t)};
  std::array<std::uint32_t, 2> raw{};
  seq.generate(raw.begin(), raw.end());
  return (static_cast<std::uint64_t>(raw[0]) << 32) | raw[1];
}

inline double alpha_for(double error) {
  return 0.5 * std::log((1.0 - error) / error);
}

/// Trains both class chains. Per class and round: evolve a program under
/// the current weights, discard it (and reset to uniform) when its
/// weighted error is >= 0.5, otherwise weight it by
/// alpha = 0.5 ln((1 - e) / e) and multiply w_i by exp(+alpha) for
/// misclassified samples and exp(-alpha) otherwise. A perfect program
/// (e = 0, floored to 1e-10) ends its chain.
inline BoostedEnsemble adaboost_train(const FeatureColumns& X, std::span<const Label> labels,
                                      const GpConfig& cfg,
                                      const BoostObserver& observer = {}) {
  cfg.validate();
  if (labels.size() != X.n) throw Error("adaboost_train: labels/data length mismatch");
  const bool has_c = std::find(labels.begin(), labels.end(), Label::churner) != labels.end();
  const bool has_n = std::find(labels.begin(), labels.end(), Label::non_churner) != labels.end();
  if (!has_c || !has_n) throw Error("adaboost_train: both classes must be present");

  const std::size_t n = X.n;
  BoostedEnsemble ens;
  BatchEvaluator evaluator;
  std::vector<double> outputs;
  std::unique_ptr<bool[]> mis(new bool[n]);

  for (Label target : kAllLabels) {
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    auto& chain = ens.members[class_index(target)];
    for (std::size_t t = 0; t < cfg.elite_size; ++t) {
      GpConfig round_cfg = cfg;
      round_cfg.seed = round_seed(cfg.seed, target, t);
      auto res = evolve_one_class(X, labels, target, w, round_cfg);
      evaluator.evaluate(res.best, X, outputs);
      double eps = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mis[i] = is_member(outputs[i]) != (labels[i] == target);
        if (mis[i]) eps += w[i];
      }
      if (eps >= 0.5) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
        continue;
      }
      const bool perfect = eps <= 0.0;
      const double alpha = alpha_for(perfect ? kMinBoostError : eps);
      const double up = std::exp(alpha), down = std::exp(-alpha);
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        w[i] *= mis[i] ? up : down;
        z += w[i];
      }
      for (auto& wi : w) wi /= z;
      chain.push_back({res.best, alpha});
      if (observer)
        observer(BoostRound{target, t, eps, alpha, chain.back().program,
                            std::span<const bool>(mis.get(), n), w});
      if (perfect) break;
    }
  }
  return ens;
}

struct Prediction {
  Label label = Label::non_churner;
  double score = 0.0;  // normalized churn vote minus normalized non-churn vote
};

/// Weighted vote sums S_c = sum alpha_t [h_t(x) >= 0]; ties go to
/// non-churner.
inline Prediction predict_from_votes(const std::array<double, 2>& sums,
                                     const std::array<double, 2>& alpha_totals) {
  const double sc = sums[class_index(Label::churner)];
  const double sn = sums[class_index(Label::non_churner)];
  Prediction p;
  p.label = sc > sn ? Label::churner : Label::non_churner;
  p.score = sc / alpha_totals[class_index(Label::churner)] -
            sn / alpha_totals[class_index(Label::non_churner)];
  return p;
}

inline std::array<double, 2> alpha_totals(const BoostedEnsemble& ens) {
  std::array<double, 2> tot{};
  for (Label c : kAllLabels) {
    const auto& chain = ens.chain(c);
    if (chain.empty())
      throw Error("ensemble has no programs for class '" + std::string(label_name(c)) + "'");
    for (const auto& m : chain) tot[class_index(c)] += m.alpha;
  }
  return tot;
}

inline Prediction predict(const BoostedEnsemble& ens, std::span<const double> x) {
  const auto tot = alpha_totals(ens);
  std::array<double, 2> sums{};
  for (Label c : kAllLabels)
    for (const auto& m : ens.chain(c))
      if (is_member(eval_program(m.program, x))) sums[class_index(c)] += m.alpha;
  return predict_from_votes(sums, tot);
}

inline std::vector<Prediction> predict_batch(const BoostedEnsemble& ens,
                                             const FeatureColumns& X) {
  const auto tot = alpha_totals(ens);
  std::vector<std::array<double, 2>> sums(X.n, {0.0, 0.0});
  BatchEvaluator evaluator;
  std::vector<double> out;
  for (Label c : kAllLabels)
    for (const auto& m : ens.chain(c)) {
      evaluator.evaluate(m.program, X, out);
      for (std::size_t i = 0; i < X.n; ++i)
        if (is_member(out[i])) sums[i][class_index(c)] += m.alpha;
    }
  std::vector<Prediction> preds;
  preds.reserve(X.n);
  for (const auto& s : sums) preds.push_back(predict_from_votes(s, tot));
  return preds;
}

// ---------------------------------------------------------------------------
// Ensemble file
//
//   TLDEEPE-GPA v1
//   class churner alpha 0.54930614433405489
//   (sub (x 3) (c 0.25))
//   ...

inline constexpr std::string_view kEnsembleMagic = "TLDEEPE-GPA v1";

inline std::string serialize_ensemble(const BoostedEnsemble& ens) {
  std::string out(kEnsembleMagic);
  out += '\n';
  for (Label c : kAllLabels)
    for (const auto& m : ens.chain(c)) {
      out += "class " + std::string(label_name(c)) + " alpha " + format_double17(m.alpha) + "\n";
      out += to_sexpr(m.program) + "\n";
    }
  return out;
}

inline BoostedEnsemble parse_ensemble(std::string_view text) {
  auto lines = split(text, '\n');
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines[0] != kEnsembleMagic)
    throw Error("ensemble file does not start with '" + std::string(kEnsembleMagic) + "'");
  BoostedEnsemble ens;
  for (std::size_t i = 1; i < lines.size(); i += 2) {
    const auto f = split(lines[i], ' ');
    if (f.size() != 4 || f[0] != "class" || f[2] != "alpha")
      throw Error("malformed member header on ensemble line " + std::to_string(i + 1));
    Label c;
    if (f[1] == "churner")
      c = Label::churner;
    else if (f[1] == "nonchurner")
      c = Label::non_churner;
    else
      throw Error("unknown class '" + f[1] + "' on ensemble line " + std::to_string(i + 1));
    const double alpha = parse_double_or_throw(f[3], "ensemble alpha");
    if (i + 1 >= lines.size()) throw Error("ensemble member without a program");
    ens.members[class_index(c)].push_back({parse_sexpr(lines[i + 1]), alpha});
  }
  return ens;
}

}  // namespace churnstack::gp

#endif  // CHURNSTACK_GPBOOST_HPP

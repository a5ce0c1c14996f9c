#ifndef CHURNSTACK_GP_HPP
#define CHURNSTACK_GP_HPP

// Tree-based genetic programming for one-class classifiers. A program is
// an arithmetic expression over feature terminals and constants; a sample
// belongs to the program's class when the expression evaluates to >= 0.
//
// Programs are stored as a flat prefix-order node list, so a subtree is a
// contiguous range and crossover/mutation are range splices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "churnstack/common.hpp"

namespace churnstack::gp {

enum class Op : std::uint8_t { add, sub, mul, pdiv, min, max, neg, feature, constant };

inline constexpr std::array<Op, 7> kFunctions{Op::add, Op::sub, Op::mul, Op::pdiv,
                                              Op::min, Op::max, Op::neg};

inline constexpr int arity(Op op) noexcept {
  switch (op) {
    case Op::neg: return 1;
    case Op::feature:
    case Op::constant: return 0;
    default: return 2;
  }
}

inline constexpr std::string_view op_name(Op op) noexcept {
  constexpr std::array<std::string_view, 9> names{"add", "sub", "mul", "pdiv", "min",
                                                  "max", "neg", "x", "c"};
  return names[static_cast<std::size_t>(op)];
}

struct Node {
  Op op = Op::constant;
  std::uint32_t feature = 0;
  double value = 0.0;
  bool operator==(const Node&) const = default;
};

/// Protected division: 1 when the denominator is within 1e-9 of zero.
inline double protected_div(double a, double b) noexcept {
  return std::abs(b) < 1e-9 ? 1.0 : a / b;
}

inline double apply_binary(Op op, double a, double b) noexcept {
  switch (op) {
    case Op::add: return a + b;
    case Op::sub: return a - b;
    case Op::mul: return a * b;
    case Op::pdiv: return protected_div(a, b);
    case Op::min: return std::min(a, b);
    case Op::max: return std::max(a, b);
    default: return 0.0;
  }
}

class Program {
 public:
  Program() = default;
  explicit Program(std::vector<Node> nodes) : nodes_(std::move(nodes)) { check_shape(); }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// One past the last node of the subtree rooted at `i`.
  std::size_t subtree_end(std::size_t i) const {
    std::size_t need = 1;
    while (need > 0) {
      if (i >= nodes_.size()) throw Error("malformed program");
      need += static_cast<std::size_t>(arity(nodes_[i].op));
      --need;
      ++i;
    }
    return i;
  }

  /// Level of every node (root = 0).
  std::vector<std::size_t> node_levels() const {
    std::vector<std::size_t> levels(nodes_.size(), 0);
    std::vector<std::pair<std::size_t, int>> stack;  // (level, children still owed)
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const std::size_t lvl = stack.empty() ? 0 : stack.back().first + 1;
      levels[i] = lvl;
      if (!stack.empty() && --stack.back().second == 0) stack.pop_back();
      if (arity(nodes_[i].op) > 0) stack.emplace_back(lvl, arity(nodes_[i].op));
    }
    return levels;
  }

  /// Edges on the longest root-to-leaf path; a lone terminal has depth 0.
  std::size_t depth() const {
    const auto lv = node_levels();
    return lv.empty() ? 0 : *std::max_element(lv.begin(), lv.end());
  }

  std::size_t max_feature() const noexcept {
    std::size_t m = 0;
    for (const auto& n : nodes_)
      if (n.op == Op::feature) m = std::max<std::size_t>(m, n.feature);
    return m;
  }

  bool uses_features() const noexcept {
    return std::any_of(nodes_.begin(), nodes_.end(),
                       [](const Node& n) { return n.op == Op::feature; });
  }

  bool operator==(const Program&) const = default;

 private:
  void check_shape() const {
    if (nodes_.empty()) throw Error("empty program");
    if (subtree_end(0) != nodes_.size()) throw Error("program has trailing nodes");
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {
inline double eval_at(const std::vector<Node>& nodes, std::size_t& i,
                      std::span<const double> x) {
  const Node& n = nodes[i++];
  switch (n.op) {
    case Op::feature:
      if (n.feature >= x.size()) throw Error("feature index beyond input width");
      return x[n.feature];
    case Op::constant: return n.value;
    case Op::neg: return -eval_at(nodes, i, x);
    default: {
      const double a = eval_at(nodes, i, x);
      const double b = eval_at(nodes, i, x);
      return apply_binary(n.op, a, b);
    }
  }
}
}  // namespace detail

inline double eval_program(const Program& p, std::span<const double> x) {
  std::size_t i = 0;
  return detail::eval_at(p.nodes(), i, x);
}

inline bool is_member(double output) noexcept { return output >= 0.0; }

/// Column-major copy of a sample matrix for vectorised evaluation.
struct FeatureColumns {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> data;  // column j at [j * n, (j + 1) * n)

  FeatureColumns() = default;
  explicit FeatureColumns(const Matrix& m) : n(m.rows), d(m.cols), data(m.rows * m.cols) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) data[j * n + i] = m(i, j);
  }
  const double* column(std::size_t j) const { return data.data() + j * n; }
};

/// Reusable buffers for batch evaluation.
class BatchEvaluator {
 public:
  /// Evaluates `p` on every sample; result has X.n entries.
  void evaluate(const Program& p, const FeatureColumns& X, std::vector<double>& out) {
    n_ = X.n;
    stack_.clear();
    in_use_.assign(buffers_.size(), false);
    const auto& nodes = p.nodes();
    for (std::size_t k = nodes.size(); k-- > 0;) {
      const Node& node = nodes[k];
      switch (node.op) {
        case Op::feature:
          if (node.feature >= X.d) throw Error("feature index beyond input width");
          stack_.push_back({X.column(node.feature), 0.0, false, -1});
          break;
        case Op::constant:
          stack_.push_back({nullptr, node.value, true, -1});
          break;
        case Op::neg: {
          Operand a = stack_.back();
          stack_.pop_back();
          if (a.scalar) {
            stack_.push_back({nullptr, -a.c, true, -1});
          } else {
            const int b = acquire();
            double* dst = buffers_[b].data();
            for (std::size_t i = 0; i < n_; ++i) dst[i] = -a.p[i];
            release(a);
            stack_.push_back({dst, 0.0, false, b});
          }
          break;
        }
        default: {
          Operand a = stack_.back();
          stack_.pop_back();
          Operand b = stack_.back();
          stack_.pop_back();
          stack_.push_back(binary(node.op, a, b));
          release(a);
          release(b);
        }
      }
    }
    const Operand r = stack_.back();
    out.resize(n_);
    if (r.scalar)
      std::fill(out.begin(), out.end(), r.c);
    else
      std::copy(r.p, r.p + n_, out.begin());
  }

 private:
  struct Operand {
    const double* p;
    double c;
    bool scalar;
    int buf;
  };

  int acquire() {
    for (std::size_t b = 0; b < buffers_.size(); ++b)
      if (!in_use_[b]) {
        in_use_[b] = true;
        if (buffers_[b].size() < n_) buffers_[b].resize(n_);
        return static_cast<int>(b);
      }
    buffers_.emplace_back(n_);
    in_use_.push_back(true);
    return static_cast<int>(buffers_.size() - 1);
  }
  void release(const Operand& o) {
    if (o.buf >= 0) in_use_[static_cast<std::size_t>(o.buf)] = false;
  }

  template <class F>
  void run(const Operand& a, const Operand& b, double* dst, F f) const {
    if (!a.scalar && !b.scalar)
      for (std::size_t i = 0; i < n_; ++i) dst[i] = f(a.p[i], b.p[i]);
    else if (a.scalar)
      for (std::size_t i = 0; i < n_; ++i) dst[i] = f(a.c, b.p[i]);
    else
      for (std::size_t i = 0; i < n_; ++i) dst[i] = f(a.p[i], b.c);
  }

  Operand binary(Op op, const Operand& a, const Operand& b) {
    if (a.scalar && b.scalar) return {nullptr, apply_binary(op, a.c, b.c), true, -1};
    const int buf = acquire();
    double* dst = buffers_[buf].data();
    switch (op) {
      case Op::add: run(a, b, dst, [](double u, double v) { return u + v; }); break;
      case Op::sub: run(a, b, dst, [](double u, double v) { return u - v; }); break;
      case Op::mul: run(a, b, dst, [](double u, double v) { return u * v; }); break;
      case Op::pdiv: run(a, b, dst, [](double u, double v) { return protected_div(u, v); }); break;
      case Op::min: run(a, b, dst, [](double u, double v) { return u < v ? u : v; }); break;
      case Op::max: run(a, b, dst, [](double u, double v) { return u < v ? v : u; }); break;
      default: throw Error("not a binary operator");
    }
    return {dst, 0.0, false, buf};
  }

  std::size_t n_ = 0;
  std::vector<std::vector<double>> buffers_;
  std::vector<bool> in_use_;
  std::vector<Operand> stack_;
};

// ---------------------------------------------------------------------------
// Text form: (add (mul (x 0) (x 3)) (c 0.25))

inline std::string to_sexpr(const Program& p) {
  std::string out;
  std::vector<int> owed;
  const auto& nodes = p.nodes();
  for (const auto& n : nodes) {
    if (!owed.empty()) out += ' ';
    switch (n.op) {
      case Op::feature: out += "(x " + std::to_string(n.feature) + ")"; break;
      case Op::constant: out += "(c " + format_double17(n.value) + ")"; break;
      default:
        out += "(" + std::string(op_name(n.op));
        owed.push_back(arity(n.op));
        continue;
    }
    while (!owed.empty() && --owed.back() == 0) {
      owed.pop_back();
      out += ')';
    }
  }
  return out;
}

inline Program parse_sexpr(std::string_view text) {
  std::vector<Node> nodes;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  };
  auto token = [&] {
    skip_ws();
    const std::size_t s = i;
    while (i < text.size() && text[i] != ' ' && text[i] != '(' && text[i] != ')') ++i;
    return text.substr(s, i - s);
  };
  auto expect = [&](char c) {
    skip_ws();
    if (i >= text.size() || text[i] != c)
      throw Error("malformed program text near offset " + std::to_string(i));
    ++i;
  };
  auto parse = [&](auto&& self) -> void {
    expect('(');
    const auto name = token();
    Node n;
    bool found = false;
    for (int k = 0; k <= static_cast<int>(Op::constant); ++k)
      if (op_name(static_cast<Op>(k)) == name) {
        n.op = static_cast<Op>(k);
        found = true;
      }
    if (!found) throw Error("unknown program operator '" + std::string(name) + "'");
    if (n.op == Op::feature) {
      const double v = parse_double_or_throw(token(), "program feature index");
      if (v < 0 || v != std::floor(v)) throw Error("bad feature index in program text");
      n.feature = static_cast<std::uint32_t>(v);
      nodes.push_back(n);
    } else if (n.op == Op::constant) {
      n.value = parse_double_or_throw(token(), "program constant");
      nodes.push_back(n);
    } else {
      nodes.push_back(n);
      for (int k = 0; k < arity(n.op); ++k) self(self);
    }
    expect(')');
  };
  parse(parse);
  skip_ws();
  if (i != text.size()) throw Error("trailing text after program");
  return Program(std::move(nodes));
}

// ---------------------------------------------------------------------------
// Variation

struct GpConfig {
  std::size_t population = 200;
  std::size_t generations = 50;
  std::size_t tournament_size = 7;
  double p_crossover = 0.9;
  double p_mutation = 0.1;
  std::size_t max_depth = 8;
  std::size_t elite_size = 5;  // boosted programs kept per class
  std::uint64_t seed = 0;

  void validate() const {
    if (population == 0 || generations == 0 || tournament_size == 0 || elite_size == 0 ||
        max_depth == 0)
      throw Error("GP counts must be at least 1");
    for (double p : {p_crossover, p_mutation})
      if (!(p >= 0.0 && p <= 1.0)) throw Error("GP probabilities must lie in [0, 1]");
  }
};

using Rng = std::mt19937_64;

inline constexpr double kConstantTerminalShare = 0.3;

inline Node random_terminal(std::size_t dim, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (u01(rng) < kConstantTerminalShare) {
    std::uniform_real_distribution<double> c(-1.0, 1.0);
    return {Op::constant, 0, c(rng)};
  }
  std::uniform_int_distribution<std::uint32_t> f(0, static_cast<std::uint32_t>(dim - 1));
  return {Op::feature, f(rng), 0.0};
}

/// Appends a tree of depth <= `depth` (exactly `depth` when `full`).
inline void grow_tree(std::vector<Node>& out, std::size_t depth, bool full,
                      std::size_t dim, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const bool function = depth > 0 && (full || u01(rng) < 0.5);
  if (!function) {
    out.push_back(random_terminal(dim, rng));
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(0, kFunctions.size() - 1);
  const Op op = kFunctions[pick(rng)];
  out.push_back({op, 0, 0.0});
  for (int k = 0; k < arity(op); ++k) grow_tree(out, depth - 1, full, dim, rng);
}

/// Ramped half-and-half: depth uniform in [2, max_depth], full or grow.
inline Program random_program(const GpConfig& cfg, std::size_t dim, Rng& rng) {
  if (dim == 0) throw Error("random_program needs at least one feature");
  const std::size_t lo = std::min<std::size_t>(2, cfg.max_depth);
  std::uniform_int_distribution<std::size_t> depth(lo, cfg.max_depth);
  std::bernoulli_distribution full(0.5);
  std::vector<Node> nodes;
  const std::size_t d = depth(rng);
  grow_tree(nodes, d, full(rng), dim, rng);
  return Program(std::move(nodes));
}

inline Program splice(const Program& host, std::size_t at, const Program& donor,
                      std::size_t from) {
  const auto& h = host.nodes();
  const auto& dn = donor.nodes();
  const std::size_t h_end = host.subtree_end(at);
  const std::size_t d_end = donor.subtree_end(from);
  std::vector<Node> out;
  out.reserve(h.size() - (h_end - at) + (d_end - from));
  out.insert(out.end(), h.begin(), h.begin() + static_cast<std::ptrdiff_t>(at));
  out.insert(out.end(), dn.begin() + static_cast<std::ptrdiff_t>(from),
             dn.begin() + static_cast<std::ptrdiff_t>(d_end));
  out.insert(out.end(), h.begin() + static_cast<std::ptrdiff_t>(h_end), h.end());
  return Program(std::move(out));
}

/// Swaps the subtrees at `ia` in `a` and `ib` in `b`. An offspring deeper
/// than `max_depth` is replaced by its (unchanged) parent.
inline std::pair<Program, Program> crossover_at(const Program& a, std::size_t ia,
                                                const Program& b, std::size_t ib,
                                                std::size_t max_depth) {
  Program c1 = splice(a, ia, b, ib);
  Program c2 = splice(b, ib, a, ia);
  if (c1.depth() > max_depth) c1 = a;
  if (c2.depth() > max_depth) c2 = b;
  return {std::move(c1), std::move(c2)};
}

inline std::pair<Program, Program> crossover(const Program& a, const Program& b,
                                             std::size_t max_depth, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pa(0, a.size() - 1), pb(0, b.size() - 1);
  const std::size_t ia = pa(rng);
  const std::size_t ib = pb(rng);
  return crossover_at(a, ia, b, ib, max_depth);
}

/// Replaces the subtree at `at` with a random grown subtree whose depth
/// fits the remaining budget (a single terminal when the budget is 0).
inline Program mutate_at(const Program& p, std::size_t at, std::size_t max_depth,
                         std::size_t dim, Rng& rng) {
  const auto levels = p.node_levels();
  const std::size_t budget = levels[at] >= max_depth ? 0 : max_depth - levels[at];
  std::vector<Node> sub;
  std::uniform_int_distribution<std::size_t> dpick(0, budget);
  grow_tree(sub, dpick(rng), false, dim, rng);
  Program child = splice(p, at, Program(std::move(sub)), 0);
  if (child.depth() > max_depth) return p;
  return child;
}

inline Program mutate(const Program& p, std::size_t max_depth, std::size_t dim, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
  const std::size_t at = pick(rng);
  return mutate_at(p, at, max_depth, dim, rng);
}

// ---------------------------------------------------------------------------
// Evolution of a single one-class program

/// Sum of the weights of samples whose membership agrees with the class.
inline double one_class_fitness(std::span<const double> outputs, std::span<const Label> labels,
                                Label target, std::span<const double> weights) {
  double f = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i)
    if (is_member(outputs[i]) == (labels[i] == target)) f += weights[i];
  return f;
}

struct Individual {
  Program program;
  double fitness = -1.0;
  bool evaluated = false;
  std::uint64_t birth = 0;  // discovery order, for tie-breaking
};

struct EvolveResult {
  Program best;
  double fitness = 0.0;
};

/// Tournament winner: highest fitness, ties to the lower population index.
inline std::size_t tournament(const std::vector<Individual>& pop, std::size_t k, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  std::size_t best = pick(rng);
  for (std::size_t r = 1; r < k; ++r) {
    const std::size_t c = pick(rng);
    if (pop[c].fitness > pop[best].fitness ||
        (pop[c].fitness == pop[best].fitness && c < best))
      best = c;
  }
  return best;
}

/// Generational GP maximising weighted one-class accuracy. The best
/// individual of each generation is carried over unchanged. Returns the
/// best program seen over the run (ties: smaller tree, then earlier).
inline EvolveResult evolve_one_class(const FeatureColumns& X, std::span<const Label> labels,
                                     Label target, std::span<const double> weights,
                                     const GpConfig& cfg) {
  cfg.validate();
  if (labels.size() != X.n || weights.size() != X.n)
    throw Error("evolve_one_class: data, labels and weights differ in length");
  if (X.d == 0 || X.n == 0) throw Error("evolve_one_class: empty data");

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  BatchEvaluator evaluator;
  std::vector<double> outputs;
  std::uint64_t births = 0;

  std::optional<Individual> best;
  auto consider = [&](const Individual& ind) {
    if (!best || ind.fitness > best->fitness ||
        (ind.fitness == best->fitness && ind.program.size() < best->program.size()))
      best = ind;
  };
  auto evaluate = [&](Individual& ind) {
    if (ind.evaluated) return;
    evaluator.evaluate(ind.program, X, outputs);
    ind.fitness = one_class_fitness(outputs, labels, target, weights);
    ind.evaluated = true;
    consider(ind);
  };

  std::vector<Individual> pop;
  pop.reserve(cfg.population);
  for (std::size_t i = 0; i < cfg.population; ++i) {
    pop.push_back({random_program(cfg, X.d, rng), -1.0, false, births++});
    evaluate(pop.back());
  }

  std::vector<Individual> next;
  for (std::size_t g = 0; g < cfg.generations; ++g) {
    next.clear();
    std::size_t elite = 0;
    for (std::size_t i = 1; i < pop.size(); ++i)
      if (pop[i].fitness > pop[elite].fitness) elite = i;
    next.push_back(pop[elite]);
    while (next.size() < cfg.population) {
      const double r = u01(rng);
      if (r < cfg.p_crossover) {
        const auto& a = pop[tournament(pop, cfg.tournament_size, rng)];
        const auto& b = pop[tournament(pop, cfg.tournament_size, rng)];
        auto [c1, c2] = crossover(a.program, b.program, cfg.max_depth, rng);
        const bool same1 = c1 == a.program, same2 = c2 == b.program;
        next.push_back(same1 ? a : Individual{std::move(c1), -1.0, false, births++});
        if (next.size() < cfg.population)
          next.push_back(same2 ? b : Individual{std::move(c2), -1.0, false, births++});
      } else if (r < cfg.p_crossover + cfg.p_mutation) {
        const auto& a = pop[tournament(pop, cfg.tournament_size, rng)];
        auto c = mutate(a.program, cfg.max_depth, X.d, rng);
        next.push_back(c == a.program ? a : Individual{std::move(c), -1.0, false, births++});
      } else {
        next.push_back(pop[tournament(pop, cfg.tournament_size, rng)]);
      }
    }
    for (auto& ind : next) evaluate(ind);
    pop.swap(next);
  }
  return {best->program, best->fitness};
}

}  // namespace churnstack::gp

#endif  // CHURNSTACK_GP_HPP

#ifndef CHURNSTACK_CLI_HPP
#define CHURNSTACK_CLI_HPP

// Command implementations behind the `churnstack` executable. Every command
// reads an INI-style config ("key = value" under [section] headers) and
// writes its artifacts into the output directory, including a verbatim
// copy of the config.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "churnstack/common.hpp"
#include "churnstack/imaging.hpp"
#include "churnstack/metrics.hpp"
#include "churnstack/stacker.hpp"
#include "churnstack/tabular.hpp"

namespace churnstack::cli {

namespace fs = std::filesystem;

struct RunConfig {
  std::string config_text;  // echoed verbatim into the output directory
  fs::path config_dir;

  // [data]
  std::string train_path;
  std::string source_path;
  CsvOptions csv;

  // [run]
  std::string output_dir = "out";
  std::size_t dump_images = 0;
  stack::PipelineConfig pipeline;

  // [base]
  std::uint64_t base_seed = 100;
  std::vector<std::pair<std::string, std::string>> score_files;  // name, path

  // [synth]
  stack::SyntheticSpec synth;
  std::string synth_output;

  // [eval]
  std::string eval_scores;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& part : split(s, ',')) {
    const auto t = trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

inline std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

/// Parses the config text. Relative paths resolve against `config_dir`.
inline RunConfig parse_config(const std::string& text, const fs::path& config_dir,
                              std::optional<std::uint64_t> seed_override = std::nullopt) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  RunConfig rc;
  rc.config_text = text;
  rc.config_dir = config_dir;

  auto get_str = [&](const char* key, const std::string& def) {
    return tree.get<std::string>(key, def);
  };
  auto get_num = [&](const char* key, double def) {
    const auto v = tree.get_optional<std::string>(key);
    if (!v) return def;
    return parse_double_or_throw(*v, std::string("config key ") + key);
  };
  auto get_count = [&](const char* key, std::size_t def) {
    const double v = get_num(key, static_cast<double>(def));
    if (v < 0 || v != std::floor(v))
      throw Error(std::string("config key ") + key + " must be a non-negative integer");
    return static_cast<std::size_t>(v);
  };
  auto get_seed = [&](const char* key, std::uint64_t def) {
    return static_cast<std::uint64_t>(get_count(key, static_cast<std::size_t>(def)));
  };

  rc.train_path = resolve(config_dir, get_str("data.train", ""));
  rc.source_path = resolve(config_dir, get_str("data.source", ""));
  rc.csv.label_column = get_str("data.label_column", "churn");
  rc.csv.churn_label = get_str("data.churn_label", "1");
  rc.csv.nonchurn_label = get_str("data.nonchurn_label", "");
  rc.csv.missing_tokens = {""};
  for (const auto& t : split_list(get_str("data.missing_token", "NA")))
    rc.csv.missing_tokens.push_back(t);

  auto& pc = rc.pipeline;
  pc.tag = get_str("run.tag", "run");
  rc.output_dir = resolve(config_dir, get_str("run.output_dir", "out"));
  pc.split_fraction = get_num("run.split_fraction", 0.6);
  pc.folds = get_count("run.folds", 10);
  pc.image_size = get_count("run.image_size", 32);
  pc.drop_threshold = get_num("run.drop_threshold", 0.95);
  rc.dump_images = get_count("run.dump_images", 0);
  const auto transfer = get_str("run.transfer", "off");
  if (transfer != "on" && transfer != "off") throw Error("config key run.transfer must be on or off");
  pc.transfer = transfer == "on";
  pc.seed_split = get_seed("run.seed_split", 1);
  pc.seed_folds = get_seed("run.seed_folds", 2);
  pc.seed_gp = get_seed("run.seed_gp", 3);

  rc.base_seed = get_seed("base.seed", 100);
  rc.synth.seed = get_seed("synth.seed", 0);
  if (seed_override) {
    pc.seed_split = *seed_override;
    pc.seed_folds = *seed_override + 1;
    pc.seed_gp = *seed_override + 2;
    rc.base_seed = *seed_override + 3;
    rc.synth.seed = *seed_override;
  }
  std::vector<std::size_t> frozen;
  for (const auto& f : split_list(get_str("base.frozen_prefixes", "6,3,0")))
    frozen.push_back(static_cast<std::size_t>(parse_double_or_throw(f, "base.frozen_prefixes")));
  auto names = split_list(get_str("base.names", ""));
  if (!names.empty() && names.size() != frozen.size())
    throw Error("config: base.names and base.frozen_prefixes differ in length");
  pc.learners.clear();
  for (std::size_t j = 0; j < frozen.size(); ++j)
    pc.learners.push_back({names.empty() ? "cnn" + std::to_string(j + 1) : names[j], frozen[j],
                           rc.base_seed + j});
  for (const auto& entry : split_list(get_str("base.score_files", ""))) {
    const auto colon = entry.find(':');
    if (colon == std::string::npos) throw Error("config: base.score_files entries are name:path");
    rc.score_files.emplace_back(entry.substr(0, colon), resolve(config_dir, entry.substr(colon + 1)));
  }

  auto& tc = pc.train;
  tc.learning_rate = get_num("train.learning_rate", 0.01);
  tc.momentum = get_num("train.momentum", 0.9);
  tc.epochs = get_count("train.epochs", 10);
  tc.batch_size = get_count("train.batch_size", 32);
  pc.pretrain_epochs = get_count("train.pretrain_epochs", 10);

  auto& g = pc.gp;
  g.population = get_count("gp.population", 200);
  g.generations = get_count("gp.generations", 50);
  g.tournament_size = get_count("gp.tournament_size", 7);
  g.p_crossover = get_num("gp.p_crossover", 0.9);
  g.p_mutation = get_num("gp.p_mutation", 0.1);
  g.max_depth = get_count("gp.max_depth", 8);
  g.elite_size = get_count("gp.elite_size", 5);

  auto& s = rc.synth;
  s.n = get_count("synth.n", 1000);
  s.d = get_count("synth.d", 20);
  s.churn_rate = get_num("synth.churn_rate", 0.5);
  s.separation = get_num("synth.separation", 2.5632);
  s.noise = get_num("synth.noise", 1.0);
  s.shift = get_num("synth.shift", 0.0);
  s.direction_seed = get_seed("synth.direction_seed", 0);
  rc.synth_output = resolve(config_dir, get_str("synth.output", ""));

  rc.eval_scores = resolve(config_dir, get_str("eval.scores", ""));

  pc.validate();
  return rc;
}

inline RunConfig load_config(const std::string& path,
                             std::optional<std::uint64_t> seed_override = std::nullopt) {
  const auto text = read_file(path);
  return parse_config(text, fs::absolute(fs::path(path)).parent_path(), seed_override);
}

struct CommandOptions {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> scores_path;  // eval only
  bool verbose = false;
};

namespace detail {

inline fs::path prepare_output(const RunConfig& rc, const CommandOptions& opt) {
  const fs::path dir = opt.out_dir ? fs::path(*opt.out_dir) : fs::path(rc.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("[output] cannot create '" + dir.string() + "': " + ec.message());
  write_file((dir / (rc.pipeline.tag + "_config.ini")).string(), rc.config_text);
  return dir;
}

inline Dataset load_target(const RunConfig& rc) {
  if (rc.train_path.empty()) throw Error("[load] config has no data.train path");
  try {
    return load_csv(rc.train_path, rc.csv);
  } catch (const std::exception& e) {
    throw Error("[load] " + rc.train_path + ": " + e.what());
  }
}

inline Dataset load_source(const RunConfig& rc) {
  if (rc.source_path.empty()) throw Error("[load] transfer needs a data.source path");
  try {
    return load_csv(rc.source_path, rc.csv);
  } catch (const std::exception& e) {
    throw Error("[load] " + rc.source_path + ": " + e.what());
  }
}

inline stack::Logger make_logger(const CommandOptions& opt) {
  if (!opt.verbose) return {};
  return [](std::string_view msg) { std::cerr << msg << '\n'; };
}

/// Pretrains the roster on the source data and writes one weight file per
/// learner. Returns the file paths.
inline std::vector<std::string> pretrain_to_files(const RunConfig& rc, const fs::path& dir,
                                                  const std::string& tag,
                                                  const stack::Logger& log) {
  const auto source = load_source(rc);
  const auto weights = stack::pretrain_base_learners(source, rc.pipeline, log);
  std::vector<std::string> paths;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const auto p = (dir / (tag + "_pretrained_" + rc.pipeline.learners[j].name + ".weights")).string();
    write_file(p, weights[j]);
    paths.push_back(p);
  }
  return paths;
}

struct ExternalLearners {
  std::vector<stack::ScoreFileLearner> owned;
  std::vector<const stack::BaseLearner*> view;
};

inline ExternalLearners load_external(const RunConfig& rc) {
  ExternalLearners ext;
  ext.owned.reserve(rc.score_files.size());
  for (const auto& [name, path] : rc.score_files)
    ext.owned.push_back(stack::ScoreFileLearner::from_tsv(name, read_file(path)));
  for (const auto& l : ext.owned) ext.view.push_back(&l);
  return ext;
}

inline void write_run_outputs(const stack::RunReport& r, const fs::path& dir) {
  const auto& tag = r.tag;
  write_file((dir / (tag + "_report.tsv")).string(), stack::report_tsv(r));
  write_file((dir / (tag + "_base.tsv")).string(), stack::base_tsv(r));
  write_file((dir / (tag + "_prediction_space.tsv")).string(), stack::prediction_space_tsv(r));
  write_file((dir / (tag + "_preprocess_report.tsv")).string(), to_text(r.preprocess));
  for (std::size_t j = 0; j < r.learner_weights.size(); ++j)
    write_file((dir / (tag + "_" + r.learner_names[j] + ".weights")).string(), r.learner_weights[j]);
  for (const auto& f : r.folds) {
    const auto stem = tag + "_fold" + std::to_string(f.run);
    write_file((dir / (stem + ".gpa")).string(), f.ensemble_text);
    write_file((dir / (stem + "_roc.tsv")).string(), metrics::roc_to_tsv(f.roc));
    write_file((dir / (stem + "_scores.tsv")).string(), stack::fold_scores_tsv(r, f));
  }
}

}  // namespace detail

/// Fits the preprocessing chain on the whole training file and writes the
/// normalized dataset plus its report (and optional PGM image dumps).
inline void cmd_preprocess(const CommandOptions& opt) {
  const auto rc = load_config(opt.config_path, opt.seed_override);
  const auto dir = detail::prepare_output(rc, opt);
  const auto ds = detail::load_target(rc);
  const auto fp = stack::detail::stage("preprocess", [&] { return fit_preprocessor(ds, rc.pipeline.drop_threshold); });
  const auto out = fp.transform(ds);
  const auto& tag = rc.pipeline.tag;
  write_file((dir / (tag + "_preprocessed.csv")).string(), to_csv(out, rc.csv));
  write_file((dir / (tag + "_preprocess_report.tsv")).string(), to_text(fp.report));
  if (rc.dump_images > 0) {
    const auto X = to_matrix(out);
    const auto plan = plan_grid(X.cols);
    for (std::size_t i = 0; i < std::min(rc.dump_images, X.rows); ++i) {
      const auto row = X.row(i);
      const auto img = row_to_image(row, plan, rc.pipeline.image_size, i);
      write_file((dir / pgm_filename(tag, i)).string(), to_pgm(img.grid));
    }
  }
}

/// Full pipeline, transfer on or off per the config.
inline stack::RunReport cmd_run(const CommandOptions& opt) {
  const auto rc = load_config(opt.config_path, opt.seed_override);
  const auto dir = detail::prepare_output(rc, opt);
  const auto log = detail::make_logger(opt);
  const auto target = detail::load_target(rc);
  const auto ext = detail::load_external(rc);
  stack::PretrainedProvider provider;
  if (rc.pipeline.transfer) {
    const auto paths = detail::pretrain_to_files(rc, dir, rc.pipeline.tag, log);
    provider = [paths](std::size_t j) { return read_file(paths.at(j)); };
  }
  auto report = stack::run_pipeline(target, rc.pipeline, provider, ext.view, log);
  detail::write_run_outputs(report, dir);
  return report;
}

struct AblationResult {
  stack::RunReport transfer_on;
  stack::RunReport transfer_off;
};

inline std::string comparison_tsv(const AblationResult& r) {
  std::string out = "metric\ttransfer_on\ttransfer_off\n";
  out += "accuracy\t" + format_fixed(r.transfer_on.mean_accuracy, 6) + "\t" +
         format_fixed(r.transfer_off.mean_accuracy, 6) + "\n";
  out += "auc\t" + format_fixed(r.transfer_on.mean_auc, 6) + "\t" +
         format_fixed(r.transfer_off.mean_auc, 6) + "\n";
  return out;
}

/// Transfer-on and transfer-off runs from identical inputs and seeds; the
/// off run never receives the pretrained weights.
inline AblationResult cmd_ablate(const CommandOptions& opt) {
  const auto rc = load_config(opt.config_path, opt.seed_override);
  const auto dir = detail::prepare_output(rc, opt);
  const auto log = detail::make_logger(opt);
  const auto target = detail::load_target(rc);
  const auto ext = detail::load_external(rc);
  const auto paths = detail::pretrain_to_files(rc, dir, rc.pipeline.tag, log);

  AblationResult res;
  auto on_cfg = rc.pipeline;
  on_cfg.transfer = true;
  on_cfg.tag = rc.pipeline.tag + "_transfer_on";
  res.transfer_on = stack::run_pipeline(
      target, on_cfg, [&paths](std::size_t j) { return read_file(paths.at(j)); }, ext.view, log);
  auto off_cfg = rc.pipeline;
  off_cfg.transfer = false;
  off_cfg.tag = rc.pipeline.tag + "_transfer_off";
  res.transfer_off = stack::run_pipeline(target, off_cfg, {}, ext.view, log);

  detail::write_run_outputs(res.transfer_on, dir);
  detail::write_run_outputs(res.transfer_off, dir);
  write_file((dir / (rc.pipeline.tag + "_comparison.tsv")).string(), comparison_tsv(res));
  return res;
}

/// Writes a synthetic churn CSV. Returns its path.
inline std::string cmd_synth(const CommandOptions& opt) {
  const auto rc = load_config(opt.config_path, opt.seed_override);
  const auto dir = detail::prepare_output(rc, opt);
  const auto ds = stack::generate_synthetic(rc.synth);
  const auto path = (opt.out_dir || rc.synth_output.empty())
                        ? (dir / (rc.pipeline.tag + "_synthetic.csv")).string()
                        : rc.synth_output;
  if (const auto parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  write_file(path, to_csv(ds, rc.csv));
  return path;
}

/// Recomputes metrics from a saved scores file with "score" and "label"
/// columns (and optionally "predicted"; otherwise score > 0 is churner).
inline metrics::EvalReport cmd_eval(const CommandOptions& opt) {
  const auto rc = load_config(opt.config_path, opt.seed_override);
  const std::string path = opt.scores_path ? *opt.scores_path : rc.eval_scores;
  if (path.empty()) throw Error("[eval] no scores file given");
  const auto dir = detail::prepare_output(rc, opt);
  const auto text = read_file(path);
  auto lines = split(text, '\n');
  if (lines.empty()) throw Error("[eval] empty scores file");
  const auto header = split(trim(lines[0]), '\t');
  auto col = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  };
  const auto sc = col("score"), lc = col("label"), pc = col("predicted");
  if (!sc || !lc) throw Error("[eval] scores file needs 'score' and 'label' columns");
  auto parse_label = [&](const std::string& s) {
    if (s == "churner" || s == rc.csv.churn_label) return Label::churner;
    return Label::non_churner;
  };
  std::vector<double> scores;
  std::vector<Label> labels, predicted;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != header.size())
      throw Error("[eval] scores line " + std::to_string(i + 1) + " has the wrong field count");
    scores.push_back(parse_double_or_throw(f[*sc], "[eval] score"));
    labels.push_back(parse_label(f[*lc]));
    predicted.push_back(pc ? parse_label(f[*pc])
                           : (scores.back() > 0.0 ? Label::churner : Label::non_churner));
  }
  const auto ev = stack::detail::stage("eval", [&] { return metrics::evaluate(predicted, scores, labels); });
  auto opt_text = [](const std::optional<double>& v) {
    return v ? format_fixed(*v, 6) : std::string("undefined");
  };
  std::string out = "metric\tvalue\n";
  out += "tp\t" + std::to_string(ev.counts.tp) + "\nfp\t" + std::to_string(ev.counts.fp) +
         "\ntn\t" + std::to_string(ev.counts.tn) + "\nfn\t" + std::to_string(ev.counts.fn) + "\n";
  out += "accuracy\t" + format_fixed(ev.accuracy, 6) + "\n";
  out += "sensitivity\t" + opt_text(ev.sensitivity) + "\n";
  out += "specificity\t" + opt_text(ev.specificity) + "\n";
  out += "auc\t" + format_fixed(ev.roc.auc, 6) + "\n";
  write_file((dir / (rc.pipeline.tag + "_eval.tsv")).string(), out);
  write_file((dir / (rc.pipeline.tag + "_eval_roc.tsv")).string(), metrics::roc_to_tsv(ev.roc));
  return ev;
}

}  // namespace churnstack::cli

#endif  // CHURNSTACK_CLI_HPP

#include <iostream>

#include "CLI11.hpp"
#include "churnstack/cli.hpp"

int main(int argc, char** argv) {
  namespace cc = churnstack::cli;
  CLI::App app{"Stacked CNN + boosted-GP churn prediction"};
  app.require_subcommand(1);

  cc::CommandOptions opt;
  std::string out_dir;
  std::uint64_t seed_override = 0;
  std::string scores;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "INI config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides run.output_dir)");
    sub->add_option("--seed-override", seed_override, "replace every seed in the config");
    sub->add_flag("-v,--verbose", opt.verbose, "log progress to stderr");
  };
  auto* pre = app.add_subcommand("preprocess", "fit and apply the preprocessing chain");
  auto* run = app.add_subcommand("run", "full pipeline (transfer per config)");
  auto* ablate = app.add_subcommand("ablate", "paired transfer-on / transfer-off runs");
  auto* synth = app.add_subcommand("synth", "write a synthetic churn CSV");
  auto* eval = app.add_subcommand("eval", "recompute metrics from a saved scores file");
  for (auto* s : {pre, run, ablate, synth, eval}) add_common(s);
  eval->add_option("--scores", scores, "scores TSV (overrides eval.scores)");

  CLI11_PARSE(app, argc, argv);
  if (!out_dir.empty()) opt.out_dir = out_dir;
  for (auto* s : {pre, run, ablate, synth, eval})
    if (app.got_subcommand(s) && s->count("--seed-override")) opt.seed_override = seed_override;
  if (!scores.empty()) opt.scores_path = scores;

  try {
    if (app.got_subcommand(pre)) {
      cc::cmd_preprocess(opt);
    } else if (app.got_subcommand(run)) {
      const auto r = cc::cmd_run(opt);
      std::cout << churnstack::stack::report_tsv(r);
    } else if (app.got_subcommand(ablate)) {
      std::cout << cc::comparison_tsv(cc::cmd_ablate(opt));
    } else if (app.got_subcommand(synth)) {
      std::cout << cc::cmd_synth(opt) << '\n';
    } else if (app.got_subcommand(eval)) {
      const auto ev = cc::cmd_eval(opt);
      std::cout << "accuracy\t" << churnstack::format_fixed(ev.accuracy, 6) << "\nauc\t"
                << churnstack::format_fixed(ev.roc.auc, 6) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// Experiment front door. Subcommands map onto the pipeline stages:
//   train     train (method x seed) runs and persist records + checkpoints
//   evaluate  roll out trained checkpoints over the eval contexts
//   metrics   normalized-score tables (IQM + CIs) and training-curve areas
//   probe     regression-forest recovery of the context from latents
//   plot      SVG figures + underlying CSVs
//   all       the full chain
//
// Exit code is 0 only when every requested stage succeeded. Worker threads
// for run fan-out come from the JCPL_WORKERS environment variable.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "jcpl/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string env;
  std::string method;
  int seeds = -1;
  long steps = -1;
  int eval_episodes = -1;
  std::string out_dir;
};

jcpl::ExperimentConfig resolve(const CliOptions& opt) {
  jcpl::ExperimentConfig cfg;
  if (!opt.config_path.empty()) {
    std::ifstream is(opt.config_path);
    if (!is) throw std::runtime_error("cannot read config file: " + opt.config_path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    cfg = jcpl::parse_config(buffer.str());
  }
  if (!opt.env.empty()) cfg.env = opt.env;
  if (!opt.method.empty()) cfg.method = opt.method;
  if (opt.seeds >= 0) {
    cfg.seeds.clear();
    for (int s = 0; s < opt.seeds; ++s) cfg.seeds.push_back(s);
  }
  if (opt.steps >= 0) cfg.sac.total_steps = opt.steps;
  if (opt.eval_episodes >= 0) cfg.eval_episodes = opt.eval_episodes;
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  jcpl::parse_env(cfg.env);
  if (cfg.method != "all") jcpl::parse_mode(cfg.method);
  return cfg;
}

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "JSON config file (flags override it)");
  cmd->add_option("--env", opt.env, "environment: cartpole | pendulum | mountaincar");
  cmd->add_option("--method", opt.method,
                  "hidden | explicit | predictive_id | jcpl | all");
  cmd->add_option("--seeds", opt.seeds, "number of seeds (0..N-1)");
  cmd->add_option("--steps", opt.steps, "training steps per run");
  cmd->add_option("--eval-episodes", opt.eval_episodes, "episodes per eval context");
  cmd->add_option("--out", opt.out_dir, "results directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual-RL workbench: joint context-and-policy learning and "
               "baselines on contextual classic-control tasks"};
  app.require_subcommand(1);

  CliOptions opt;
  CLI::App* train = app.add_subcommand("train", "train agents");
  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate checkpoints");
  CLI::App* metrics = app.add_subcommand("metrics", "emit metric tables");
  CLI::App* probe = app.add_subcommand("probe", "probe latent quality");
  CLI::App* plot = app.add_subcommand("plot", "emit figures");
  CLI::App* all = app.add_subcommand("all", "train, evaluate, metrics, probe, plot");
  for (CLI::App* cmd : {train, evaluate, metrics, probe, plot, all})
    add_common(cmd, opt);

  CLI11_PARSE(app, argc, argv);

  try {
    const jcpl::ExperimentConfig cfg = resolve(opt);
    bool ok = true;
    if (train->parsed()) ok = jcpl::cmd_train(cfg);
    if (evaluate->parsed()) ok = jcpl::cmd_evaluate(cfg);
    if (metrics->parsed()) ok = jcpl::cmd_metrics(cfg);
    if (probe->parsed()) ok = jcpl::cmd_probe(cfg);
    if (plot->parsed()) ok = jcpl::cmd_plot(cfg);
    if (all->parsed()) ok = jcpl::cmd_all(cfg);
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}

// Command-line entry point: training, evaluation, oracle verification, graph
// inspection, plotting and episode replay.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gtg/config.hpp"
#include "gtg/plot.hpp"
#include "gtg/trainer.hpp"
#include "gtg/verify.hpp"

namespace fs = std::filesystem;

namespace {

std::string run_root() {
  const char* env = std::getenv("GTG_RUN_DIR");
  return env && *env ? env : "runs";
}

std::string resolve_run_dir(const std::string& run_dir) {
  fs::path p(run_dir);
  if (p.is_absolute()) return run_dir;
  return (fs::path(run_root()) / p).string();
}

int cmd_train(const std::string& config_path, const std::string& run_dir,
              const std::string& rules_override, long long seed_override) {
  gtg::RunConfig rc = gtg::load_run_config(config_path);
  if (!rules_override.empty()) rc.rules = gtg::RuleSet::parse(rules_override);
  if (seed_override >= 0) {
    rc.seed = static_cast<std::uint64_t>(seed_override);
    rc.model.seed = rc.seed;
  }
  const std::string dir = resolve_run_dir(run_dir);
  fs::create_directories(dir);
  std::ofstream log_file(dir + "/train.log");
  struct Tee : std::ostream, std::streambuf {
    std::ostream &a, &b;
    Tee(std::ostream& a, std::ostream& b) : std::ostream(this), a(a), b(b) {}
    int overflow(int c) override {
      if (c != EOF) {
        a.put(static_cast<char>(c));
        b.put(static_cast<char>(c));
      }
      return c;
    }
  } tee(std::cout, log_file);

  gtg::TrainResult result = gtg::train_run(rc, dir, tee);
  tee << "done env_steps " << result.env_steps << " updates " << result.updates
      << " final_eval_return " << result.final_eval_return << "\n";
  tee << "checkpoint " << result.checkpoint_path << "\n";
  tee << "metrics " << result.metrics_path << "\n";
  return 0;
}

std::vector<std::pair<std::string, gtg::EpisodeConfig>> ood_test_configs(
    const gtg::EpisodeConfig& train_env) {
  std::vector<std::pair<std::string, gtg::EpisodeConfig>> out;
  if (train_env.family == "lavacrossing" ||
      train_env.family == "portal_lavacrossing") {
    for (int level = 1; level <= 3; ++level) {
      gtg::EpisodeConfig c = train_env;
      c.family = "lavacrossing";
      c.level = level;
      out.emplace_back("level" + std::to_string(level), c);
    }
    gtg::EpisodeConfig portal = train_env;
    portal.family = "portal_lavacrossing";
    out.emplace_back("portal", portal);
  } else if (train_env.family == "rtfm") {
    for (int size : {6, 10}) {
      gtg::EpisodeConfig c = train_env;
      c.width = c.height = size;
      out.emplace_back("size" + std::to_string(size) + "x" +
                           std::to_string(size),
                       c);
    }
  }
  return out;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path,
             int episodes, bool ood, const std::string& mode,
             const std::string& out_csv, const std::string& replay_dir) {
  gtg::RunConfig rc = gtg::load_run_config(config_path);
  gtg::NetConfig net_cfg = gtg::resolve_net_config(rc.model, rc.rules, rc.env);
  gtg::PolicyNet net = gtg::PolicyNet::make(net_cfg);
  gtg::load_checkpoint(checkpoint, net.params());
  const bool greedy = mode != "sample";
  gtg::PolicyFn policy = gtg::net_policy(net, rc.rules, greedy);
  std::uint64_t eval_seed = gtg::mix_seed(rc.seed, 0xe5a1ULL);

  std::ostringstream csv;
  csv << "config,episodes,mean_return,stderr,win_rate,change\n";
  if (ood) {
    auto rows = gtg::ood_harness(rc.env, ood_test_configs(rc.env), episodes,
                                 eval_seed, policy);
    std::cout << "config            mean_return       win_rate\n";
    for (const auto& row : rows) {
      std::cout << std::left << std::setw(18) << row.name << std::setw(18)
                << row.formatted << row.result.win_rate << "\n";
      csv << row.name << ',' << row.result.episodes << ','
          << row.result.mean_return << ',' << row.result.stderr_return << ','
          << row.result.win_rate << ',' << row.formatted << '\n';
    }
  } else {
    std::vector<gtg::EpisodeReplay> replays;
    gtg::EvalResult r = gtg::evaluate(rc.env, episodes, eval_seed, policy,
                                      replay_dir.empty() ? nullptr : &replays);
    std::cout << "episodes " << r.episodes << " mean_return " << r.mean_return
              << " +- " << r.stderr_return << " win_rate " << r.win_rate
              << "\n";
    csv << "train," << r.episodes << ',' << r.mean_return << ','
        << r.stderr_return << ',' << r.win_rate << ",\n";
    if (!replay_dir.empty()) {
      fs::create_directories(replay_dir);
      for (std::size_t i = 0; i < replays.size(); ++i) {
        std::ofstream os(replay_dir + "/episode_" + std::to_string(i) +
                         ".replay");
        os << gtg::serialize_replay(replays[i]);
      }
      std::cout << "wrote " << replays.size() << " replays to " << replay_dir
                << "\n";
    }
  }
  if (!out_csv.empty()) {
    std::ofstream os(out_csv);
    os << csv.str();
  }
  return 0;
}

int cmd_verify(const std::string& suite, bool quick) {
  auto results = gtg::verify_suite(suite, quick);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << gtg::format_check(r) << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_inspect_graph(int width, int height, const gtg::RuleSet& rules,
                      const std::string& out, const std::string& family,
                      long long seed) {
  gtg::GridObservation obs;
  if (!family.empty()) {
    gtg::EpisodeConfig cfg;
    cfg.family = family;
    cfg.width = width;
    cfg.height = height;
    auto env = gtg::make_env(cfg);
    env->reset(static_cast<std::uint64_t>(seed));
    obs = env->observe();
  } else {
    obs = gtg::GridObservation::zeros(width, height, 1);
  }
  gtg::RelationalGraph g = gtg::build_graph(obs, rules);
  auto census = g.per_label_edge_counts();
  auto closed = gtg::count_edges(obs.width, obs.height, rules);
  std::cout << "nodes " << g.node_count() << " labels " << g.label_count()
            << " edges " << g.edges().size() << "\n";
  long long total = 0;
  for (std::size_t l = 0; l < closed.size(); ++l) {
    std::cout << std::left << std::setw(16) << closed[l].first
              << census[l] << (census[l] == closed[l].second
                                   ? ""
                                   : " MISMATCH vs closed form " +
                                         std::to_string(closed[l].second))
              << "\n";
    total += census[l];
  }
  std::cout << "total           " << total << "\n";
  if (!out.empty()) {
    std::ofstream os(out);
    os << gtg::serialize_graph(g);
    std::cout << "wrote graph to " << out << "\n";
  } else {
    std::cout << gtg::serialize_graph(g);
  }
  return 0;
}

int cmd_plot(const std::string& out, const std::vector<std::string>& csvs) {
  gtg::write_plot(out, csvs);
  std::cout << "wrote " << out << " from " << csvs.size() << " run(s)\n";
  return 0;
}

int cmd_replay(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("replay: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  gtg::EpisodeReplay replay = gtg::parse_replay(buf.str());
  double total = gtg::replay_verify(replay);
  std::cout << "family " << replay.cfg.family << " seed " << replay.seed
            << " steps " << replay.actions.size() << " return " << total
            << "\nreplay verified: rewards match the recorded trace\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid-to-Graph relational reinforcement learning toolkit"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a policy from a config file");
  std::string config_path, run_dir = "run", rules_override;
  long long seed_override = -1;
  train->add_option("--config", config_path, "run config (key=value)")
      ->required();
  train->add_option("--run-dir", run_dir,
                    "output directory (relative to $GTG_RUN_DIR or ./runs)");
  train->add_option("--rules", rules_override,
                    "override rule families, e.g. local or local,remote,aux");
  train->add_option("--seed", seed_override, "override the config seed");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, eval_config, eval_mode = "greedy", out_csv,
              replay_dir;
  int episodes = 200;
  bool ood = false;
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--config", eval_config, "run config (key=value)")
      ->required();
  eval->add_option("--episodes", episodes, "episodes per configuration");
  eval->add_flag("--ood", ood, "evaluate across the OOD configuration set");
  eval->add_option("--mode", eval_mode, "greedy|sample");
  eval->add_option("--out-csv", out_csv, "write the report as CSV");
  eval->add_option("--replay-dir", replay_dir, "dump episode replays here");

  // verify
  auto* verify = app.add_subcommand("verify", "run oracle suites");
  std::string suite = "all";
  bool quick = false;
  verify->add_option("suite", suite,
                     "conv|blockmatrix|grad|counts|kbroundtrip|all");
  verify->add_flag("--quick", quick, "fewer gradient instances");

  // inspect-graph
  auto* inspect = app.add_subcommand(
      "inspect-graph", "print per-label edge counts and dump the graph");
  int width = 10, height = 10;
  bool f_local = false, f_remote = false, f_aux = false;
  std::string out_file, env_family;
  long long env_seed = 0;
  inspect->add_option("--width", width, "grid width");
  inspect->add_option("--height", height, "grid height");
  inspect->add_flag("--local", f_local, "enable local directional rules");
  inspect->add_flag("--remote", f_remote, "enable remote directional rules");
  inspect->add_flag("--aux", f_aux, "enable aligned/adjacent rules");
  inspect->add_option("--out", out_file, "write the graph dump here");
  inspect->add_option("--env", env_family,
                      "take features from a generated environment instance");
  inspect->add_option("--seed", env_seed, "environment seed for --env");

  // plot
  auto* plot = app.add_subcommand("plot", "render training curves as SVG");
  std::string plot_out;
  std::vector<std::string> plot_csvs;
  plot->add_option("--out", plot_out, "output SVG path")->required();
  plot->add_option("csvs", plot_csvs, "metrics CSV files")->required();

  // replay
  auto* replay = app.add_subcommand("replay", "re-run a recorded episode");
  std::string replay_path;
  replay->add_option("file", replay_path, "replay file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, run_dir, rules_override,
                                 seed_override);
    if (*eval) return cmd_eval(ckpt_path, eval_config, episodes, ood,
                               eval_mode, out_csv, replay_dir);
    if (*verify) return cmd_verify(suite, quick);
    if (*inspect) {
      gtg::RuleSet rules{f_local, f_remote, f_aux};
      if (!f_local && !f_remote && !f_aux) rules = gtg::RuleSet{};
      return cmd_inspect_graph(width, height, rules, out_file, env_family,
                               env_seed);
    }
    if (*plot) return cmd_plot(plot_out, plot_csvs);
    if (*replay) return cmd_replay(replay_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

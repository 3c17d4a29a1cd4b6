// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero on any failure.
//
// Criterion 8 performs a real desk-scale training run and can take several
// minutes; its checkpoint feeds the zero-shot portal-transfer check.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gtg/verify.hpp"
#include "support.hpp"

using namespace gtg;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Criterion> results;

void report(int id, const std::string& name, bool pass,
            const std::string& detail) {
  results.push_back({id, name, pass, detail});
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << ". " << name << " -- "
            << detail << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string fmt_s(double seconds) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << seconds << "s";
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void criterion_1_conv() {
  auto t0 = std::chrono::steady_clock::now();
  CheckResult c = verify_conv_equivalence(100);
  double secs = seconds_since(t0);
  report(1, "convolution equivalence", c.pass && secs < 5.0,
         "max |rgcn - conv| = " + fmt(c.max_err) + " (tol 1e-10), " +
             fmt_s(secs));
}

void criterion_2_blockmatrix() {
  auto t0 = std::chrono::steady_clock::now();
  CheckResult c = verify_block_matrix(100);
  double secs = seconds_since(t0);
  report(2, "block-matrix oracle", c.pass && secs < 5.0,
         "max |forward - oracle| = " + fmt(c.max_err) + " (tol 1e-12), " +
             fmt_s(secs));
}

void criterion_3_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  CheckResult c = verify_gradients(20);
  double secs = seconds_since(t0);
  report(3, "gradient fidelity", c.pass && secs < 60.0,
         "max rel err = " + fmt(c.max_err) + " (tol 1e-5; " + c.detail +
             "), " + fmt_s(secs));
}

void criterion_4_counts() {
  auto t0 = std::chrono::steady_clock::now();
  CheckResult c = verify_edge_counts();
  double secs = seconds_since(t0);
  report(4, "edge census", c.pass && secs < 10.0,
         c.detail + ", " + fmt_s(secs));
}

void criterion_5_permutation() {
  Rng rng(2027);
  double worst = 0.0;
  for (const std::string fe : {"rgcn", "nlm"}) {
    NetConfig cfg;
    cfg.front_end = fe;
    cfg.graph_labels = kRuleLabelCount;
    cfg.input_channels = 5;
    cfg.action_count = 4;
    cfg.nlm_dim = 16;
    cfg.seed = 31;
    PolicyNet net = PolicyNet::make(cfg);
    GridObservation obs = GridObservation::zeros(6, 6, 5);
    for (double& x : obs.features) x = rng.below(2);
    RelationalGraph g = build_graph(obs, RuleSet{});
    ModelInput in;
    in.graph = &g;
    PolicyOutput base = net.forward(in, nullptr);
    const int perms = 25;  // 25 per front end, 50 total
    for (int t = 0; t < perms; ++t) {
      std::vector<int> perm(static_cast<std::size_t>(g.node_count()));
      for (std::size_t i = 0; i < perm.size(); ++i)
        perm[i] = static_cast<int>(i);
      rng.shuffle(perm);
      RelationalGraph pg = testing::permute_graph(g, perm);
      ModelInput pin;
      pin.graph = &pg;
      PolicyOutput out = net.forward(pin, nullptr);
      for (std::size_t k = 0; k < base.logits.size(); ++k)
        worst = std::max(worst, std::fabs(out.logits[k] - base.logits[k]));
      worst = std::max(worst, std::fabs(out.value - base.value));
    }
  }
  report(5, "permutation invariance", worst < 1e-9,
         "max |diff| over 50 node permutations = " + fmt(worst) +
             " (tol 1e-9)");
}

void criterion_6_kb_roundtrip() {
  CheckResult c = verify_kb_roundtrip(100);
  report(6, "kb round trip", c.pass, c.detail + ", exact");
}

void criterion_7_env_stats() {
  auto t0 = std::chrono::steady_clock::now();

  // KB-blind random weapon/monster choice on RTFM
  RtfmEnv rtfm(6, false, 0);
  Rng rng(55);
  int blind_wins = 0;
  for (int ep = 0; ep < 1000; ++ep) {
    rtfm.reset(mix_seed(91, static_cast<std::uint64_t>(ep)));
    int weapon = rng.below(2), monster = rng.below(2);
    double last = 0.0;
    while (!rtfm.done())
      last = rtfm.step(rtfm_blind_action(rtfm, weapon, monster)).reward;
    if (last > 0.0) ++blind_wins;
  }
  double blind_rate = blind_wins / 1000.0;

  // scripted KB-reading oracle
  int oracle_wins = 0;
  for (int ep = 0; ep < 500; ++ep) {
    rtfm.reset(mix_seed(92, static_cast<std::uint64_t>(ep)));
    double last = 0.0;
    while (!rtfm.done()) last = rtfm.step(rtfm_oracle_action(rtfm)).reward;
    if (last > 0.0) ++oracle_wins;
  }
  double oracle_rate = oracle_wins / 500.0;

  // Portal-LavaCrossing is unreachable without portals
  LavaCrossingEnv portal(7, 7, 1, 0, true);
  int reachable = 0;
  for (int ep = 0; ep < 200; ++ep) {
    portal.reset(mix_seed(93, static_cast<std::uint64_t>(ep)));
    if (portal.solvable_without_portals()) ++reachable;
  }

  double secs = seconds_since(t0);
  bool pass = blind_rate < 0.5 && oracle_rate >= 0.99 && reachable == 0 &&
              secs < 120.0;
  report(7, "environment statistics", pass,
         "blind win rate " + fmt(blind_rate) + " (< 0.5), oracle win rate " +
             fmt(oracle_rate) + " (>= 0.99), portal flood-fill reachable " +
             std::to_string(reachable) + "/200 (= 0), " + fmt_s(secs));
}

// Criterion 8 state shared with criterion 9.
struct TrainedArtifacts {
  RunConfig rc;
  std::unique_ptr<PolicyNet> net;
  bool trained_ok = false;
  std::string detail;
};

TrainedArtifacts criterion_8_training() {
  TrainedArtifacts art;
  auto t0 = std::chrono::steady_clock::now();

  RunConfig rc;
  rc.seed = 1;
  rc.model.seed = 1;
  rc.model.front_end = "rgcn";
  rc.rules = RuleSet{};  // full rule set
  rc.env.family = "lavacrossing";
  rc.env.width = rc.env.height = 7;
  rc.env.level = 1;
  rc.train.total_steps = 300000;
  rc.train.rollout_len = 20;
  rc.train.workers = 8;
  rc.train.eval_every_steps = 12000;
  rc.train.eval_episodes = 40;        // cheap gate at the cadence
  rc.train.stop_return = 0.80;
  rc.train.stop_confirm_episodes = 200;  // the criterion's protocol
  rc.train.checkpoint_every_updates = 500;
  art.rc = rc;

  NetConfig net_cfg = resolve_net_config(rc.model, rc.rules, rc.env);
  art.net = std::make_unique<PolicyNet>(PolicyNet::make(net_cfg));

  fs::remove_all("acceptance_run");
  TrainResult tr = train_run(rc, "acceptance_run", std::cout, art.net.get());
  double train_secs = seconds_since(t0);

  // certify with a 200-episode greedy evaluation
  EvalResult final_eval =
      evaluate(rc.env, 200, mix_seed(rc.seed, 0xf17a1ULL),
               net_policy(*art.net, rc.rules, /*greedy=*/true));

  // bandit smoke test for every front end
  std::string bandit_detail;
  bool bandit_ok = true;
  for (const std::string fe : {"rgcn", "nlm", "cnn"}) {
    auto b0 = std::chrono::steady_clock::now();
    double p = testing::bandit_final_prob(fe, 2000, 7);
    double bsecs = seconds_since(b0);
    bool ok = p > 0.95 && bsecs < 60.0;
    bandit_ok = bandit_ok && ok;
    bandit_detail += fe + " p=" + fmt(p) + " in " + fmt_s(bsecs) + "; ";
  }

  bool pass = final_eval.mean_return >= 0.80 && tr.env_steps <= 300000 &&
              train_secs < 2700.0 && bandit_ok;
  art.trained_ok = final_eval.mean_return >= 0.80;
  art.detail = "greedy return " + fmt(final_eval.mean_return) +
               " over 200 episodes after " + std::to_string(tr.env_steps) +
               " steps in " + fmt_s(train_secs) + "; bandit: " +
               bandit_detail;
  report(8, "desk-scale training", pass, art.detail);
  return art;
}

void criterion_9_portal_transfer(TrainedArtifacts& art) {
  if (!art.net) {
    report(9, "zero-shot portal transfer", false, "no trained checkpoint");
    return;
  }
  EpisodeConfig portal = art.rc.env;
  portal.family = "portal_lavacrossing";
  const std::uint64_t seed = 424242;  // same episode seeds for both policies

  EvalResult rgcn_sample;
  try {
    rgcn_sample = evaluate(portal, 200, seed,
                           net_policy(*art.net, art.rc.rules, false));
  } catch (const std::exception& e) {
    report(9, "zero-shot portal transfer", false,
           std::string("shape error: ") + e.what());
    return;
  }
  EvalResult rgcn_greedy =
      evaluate(portal, 200, seed, net_policy(*art.net, art.rc.rules, true));

  // blind baseline: a fresh CNN that cannot use the rewired relations
  NetConfig cnn_cfg;
  cnn_cfg.front_end = "cnn";
  cnn_cfg = resolve_net_config(cnn_cfg, art.rc.rules, portal);
  cnn_cfg.seed = 17;
  PolicyNet cnn = PolicyNet::make(cnn_cfg);
  EvalResult cnn_sample =
      evaluate(portal, 200, seed, net_policy(cnn, art.rc.rules, false));

  bool pass = rgcn_sample.win_rate > cnn_sample.win_rate;
  report(9, "zero-shot portal transfer", pass,
         "r-gcn success " + fmt(rgcn_sample.win_rate) + " (greedy " +
             fmt(rgcn_greedy.win_rate) + ") vs cnn blind " +
             fmt(cnn_sample.win_rate) + " over 200 episodes, same seeds");
}

void criterion_10_determinism() {
#ifdef GTG_CLI_PATH
  const std::string cli = GTG_CLI_PATH;
#else
  const std::string cli;
#endif
  if (cli.empty() || !fs::exists(cli)) {
    report(10, "train determinism", false, "cli binary not found");
    return;
  }
  const std::string cfg_path = fs::absolute("acc_det.cfg").string();
  {
    std::ofstream os(cfg_path);
    os << "seed=5\n"
          "model.front_end=rgcn\n"
          "model.rgcn_dim=8\n"
          "model.dense_dim=8\n"
          "env.family=lavacrossing\n"
          "env.width=5\n"
          "env.height=5\n"
          "env.level=1\n"
          "train.total_steps=600\n"
          "train.rollout_len=10\n"
          "train.workers=2\n"
          "train.eval_every_steps=300\n"
          "train.eval_episodes=5\n";
  }
  auto run = [&](const std::string& dir) {
    fs::remove_all(dir);
    std::string cmd = cli + " train --config " + cfg_path + " --run-dir " +
                      fs::absolute(dir).string() + " > " +
                      fs::absolute(dir + ".out").string() + " 2>&1";
    return std::system(cmd.c_str());
  };
  int ra = run("acc_det_a");
  int rb = run("acc_det_b");
  std::string ma = read_file(fs::absolute("acc_det_a").string() + "/metrics.csv");
  std::string mb = read_file(fs::absolute("acc_det_b").string() + "/metrics.csv");
  bool pass = ra == 0 && rb == 0 && !ma.empty() && ma == mb;
  report(10, "train determinism", pass,
         "two cmd_train runs, metrics byte-identical = " +
             std::string(ma == mb ? "yes" : "no") + " (" +
             std::to_string(ma.size()) + " bytes)");
  fs::remove(cfg_path);
  fs::remove_all("acc_det_a");
  fs::remove_all("acc_det_b");
  fs::remove("acc_det_a.out");
  fs::remove("acc_det_b.out");
}

}  // namespace

int main() {
  std::cout << "acceptance suite\n================\n";
  criterion_1_conv();
  criterion_2_blockmatrix();
  criterion_3_gradients();
  criterion_4_counts();
  criterion_5_permutation();
  criterion_6_kb_roundtrip();
  criterion_7_env_stats();
  TrainedArtifacts art = criterion_8_training();
  criterion_9_portal_transfer(art);
  criterion_10_determinism();

  int failures = 0;
  std::cout << "\nsummary\n-------\n";
  for (const auto& c : results) {
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.id << ". " << c.name
              << "\n";
    if (!c.pass) ++failures;
  }
  std::cout << (failures == 0 ? "all criteria passed\n"
                              : std::to_string(failures) +
                                    " criterion(s) failed\n");
  return failures == 0 ? 0 : 1;
}

#pragma once
// Synchronous n-step advantage actor-critic: rollout collection over worker
// environments, one RMSprop update per round, greedy/sampling evaluation and
// the in-/out-of-distribution experiment harness. Training is bit
// reproducible given (seed, config, worker count): all stochasticity flows
// from per-worker seed streams and updates happen between collection rounds.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gtg/config.hpp"
#include "gtg/envs.hpp"
#include "gtg/policy.hpp"

namespace gtg {

// --- observation -> model input ------------------------------------------------

// A model-ready view of one environment observation. Graph models share the
// episode's graph structure where it is static (everything except RTFM,
// whose grounding edges move with the entities).
struct ObsSnapshot {
  std::shared_ptr<const RelationalGraph> graph;
  std::shared_ptr<const GraphIndex> index;
  std::vector<double> feats;  // overrides graph features when non-empty
  std::shared_ptr<const GridObservation> grid;

  ModelInput input() const {
    ModelInput in;
    in.graph = graph.get();
    in.index = index.get();
    in.node_feats = feats.empty() ? nullptr : feats.data();
    in.grid = grid.get();
    return in;
  }
};

// Node feature dim and relation label count a model will see for an
// environment family under the given rules.
struct ModelDims {
  int channels = 0;
  int labels = 0;
};

inline int observation_channels_for(const EpisodeConfig& cfg) {
  if (cfg.family == "lavacrossing" || cfg.family == "portal_lavacrossing")
    return LavaCrossingEnv::kChannels;
  if (cfg.family == "boxworld") return BoxWorldEnv::kChannels;
  if (cfg.family == "rtfm") return RtfmEnv::kChannels;
  throw std::invalid_argument("observation_channels_for: unknown family " +
                              cfg.family);
}

// Dims seen by graph models: raw channels plus merged KB feature slots, rule
// labels plus namespaced KB relation labels.
inline ModelDims model_dims_for(const EpisodeConfig& cfg,
                                const RuleSet& rules) {
  ModelDims d;
  d.channels = observation_channels_for(cfg);
  d.labels = rules.label_count();
  if (cfg.family == "rtfm") {
    if (cfg.variant == "multihop") {
      d.channels += 2;  // target/hold KB slots
      d.labels += 3;    // kb:assign, kb:belong, kb:beat
    } else {
      d.labels += 1;  // kb:beat
    }
  }
  return d;
}

// Completes a NetConfig against an environment configuration. CNN front
// ends read the raw observation (they are blind to merged KB content);
// graph front ends see the merged graph dimensions.
inline NetConfig resolve_net_config(NetConfig model, const RuleSet& rules,
                                    const EpisodeConfig& env_cfg) {
  ModelDims dims = model_dims_for(env_cfg, rules);
  const bool cnn =
      model.front_end == "cnn" || model.front_end == "cnn_wide";
  model.input_channels =
      cnn ? observation_channels_for(env_cfg) : dims.channels;
  model.graph_labels = dims.labels;
  model.grid_width = env_cfg.width;
  model.grid_height = env_cfg.height;
  model.action_count = 4;
  return model;
}

inline KnowledgeBase kb_binary_only(const KnowledgeBase& kb) {
  KnowledgeBase out;
  for (const auto& e : kb.entities()) out.add_entity(e);
  for (const auto& p : kb.binary_preds()) out.add_binary_pred(p);
  for (const auto& a : kb.binary_atoms()) out.add_binary_atom(a[0], a[1], a[2]);
  return out;
}

// Builds the model input for the current environment state. For graph
// models, `episode_graph`/`episode_index` cache the structure across steps
// of one episode; pass null pointers to rebuild every call.
inline ObsSnapshot make_snapshot(
    const Env& env, const RuleSet& rules, bool graph_model,
    std::shared_ptr<const RelationalGraph>* episode_graph = nullptr,
    std::shared_ptr<const GraphIndex>* episode_index = nullptr) {
  ObsSnapshot snap;
  GridObservation obs = env.observe();
  if (!graph_model) {
    snap.grid = std::make_shared<GridObservation>(std::move(obs));
    return snap;
  }
  if (env.has_kb()) {
    // grounding edges move with the entities; rebuild structure every step
    RelationalGraph base = build_graph(obs, rules);
    KnowledgeBase kb = env.kb();
    const RtfmEnv* rtfm = dynamic_cast<const RtfmEnv*>(&env);
    if (rtfm && !rtfm->multihop()) kb = kb_binary_only(kb);
    RelationalGraph extra = kb_to_graph(kb);
    auto g = std::make_shared<RelationalGraph>(
        merge_graphs(base, extra, env.kb_grounding(), "kb"));
    snap.index = std::make_shared<GraphIndex>(GraphIndex::build(*g));
    snap.graph = std::move(g);
    return snap;
  }
  const bool cached = episode_graph && *episode_graph;
  if (!cached) {
    auto g = std::make_shared<RelationalGraph>(build_graph(obs, rules));
    auto pairs = env.portal_pairs();
    if (!pairs.empty())
      g = std::make_shared<RelationalGraph>(rewire_portals(*g, pairs));
    auto idx = std::make_shared<GraphIndex>(GraphIndex::build(*g));
    if (episode_graph) {
      *episode_graph = g;
      *episode_index = idx;
    }
    snap.graph = g;
    snap.index = idx;
  } else {
    snap.graph = *episode_graph;
    snap.index = *episode_index;
  }
  // grid cell features in node-major order coincide with the observation
  // layout (node id = y*W + x)
  snap.feats = obs.features;
  return snap;
}

// --- returns ----------------------------------------------------------------------

// n-step discounted returns: R_t = r_t + gamma * R_{t+1} * (1 - done_t),
// seeded by the bootstrap value.
inline std::vector<double> compute_returns(const std::vector<double>& rewards,
                                           const std::vector<char>& dones,
                                           double bootstrap, double gamma) {
  if (rewards.size() != dones.size())
    throw std::invalid_argument("compute_returns: length mismatch");
  std::vector<double> returns(rewards.size());
  double acc = bootstrap;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    const std::size_t u = static_cast<std::size_t>(t);
    acc = rewards[u] + gamma * acc * (dones[u] ? 0.0 : 1.0);
    returns[u] = acc;
  }
  return returns;
}

// --- trajectories -------------------------------------------------------------------

struct TrajStep {
  ObsSnapshot obs;
  int action = 0;
  double reward = 0.0;
  bool done = false;
  std::vector<double> logits;
  double value = 0.0;
  // Forward cache recorded while acting. Collection and update run under the
  // same parameters (synchronous A2C), so the update's backward pass can
  // consume it instead of re-running the forward pass.
  std::shared_ptr<PolicyNet::Cache> cache;
};

struct Trajectory {
  std::vector<TrajStep> steps;
  double bootstrap = 0.0;
};

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

// One synchronous A2C update over a batch of trajectories collected with the
// current parameters. loss = -A_t log pi(a_t) + c_v (R_t - v_t)^2 - c_e H.
inline LossStats a2c_update(PolicyNet& net, const std::vector<Trajectory>& batch,
                            const TrainConfig& cfg, RmspropState& opt,
                            const std::vector<ParamRef>& params,
                            const std::string& diag_dir = "") {
  zero_grads(params);
  LossStats stats;
  long long count = 0;
  for (const auto& traj : batch) count += static_cast<long long>(traj.steps.size());
  if (count == 0) return stats;
  const double inv = 1.0 / static_cast<double>(count);

  for (const auto& traj : batch) {
    std::vector<double> rewards, values;
    std::vector<char> dones;
    for (const auto& s : traj.steps) {
      rewards.push_back(s.reward);
      dones.push_back(s.done ? 1 : 0);
      values.push_back(s.value);
    }
    std::vector<double> returns =
        compute_returns(rewards, dones, traj.bootstrap, cfg.gamma);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const TrajStep& st = traj.steps[t];
      ModelInput in = st.obs.input();
      PolicyNet::Cache fresh;
      PolicyOutput recomputed;
      if (!st.cache) recomputed = net.forward(in, &fresh);
      const PolicyNet::Cache& cache = st.cache ? *st.cache : fresh;
      const std::vector<double>& logits = st.cache ? st.logits : recomputed.logits;
      const double value = st.cache ? st.value : recomputed.value;

      std::vector<double> probs = softmax(logits);
      const double h = entropy(probs);
      const double adv = returns[t] - value;
      const double logp =
          std::log(std::max(probs[static_cast<std::size_t>(st.action)], 1e-300));
      stats.policy_loss += -adv * logp;
      stats.value_loss += (returns[t] - value) * (returns[t] - value);
      stats.entropy += h;

      std::vector<double> dlogits(probs.size());
      for (std::size_t j = 0; j < probs.size(); ++j) {
        const double onehot = (static_cast<int>(j) == st.action) ? 1.0 : 0.0;
        // policy gradient term (advantage treated as a constant)
        double g = -adv * (onehot - probs[j]);
        // entropy bonus: d(-c_e H)/dlogit_j = c_e * p_j * (log p_j + H)
        g += cfg.entropy_coef * probs[j] * (std::log(std::max(probs[j], 1e-300)) + h);
        dlogits[j] = g * inv;
      }
      const double dvalue = -2.0 * cfg.value_coef * (returns[t] - value) * inv;
      net.backward(in, cache, dlogits, dvalue);
    }
  }
  stats.policy_loss *= inv;
  stats.value_loss *= inv;
  stats.entropy *= inv;
  if (std::isnan(stats.policy_loss) || std::isnan(stats.value_loss)) {
    if (!diag_dir.empty())
      save_checkpoint(diag_dir + "/diagnostic_nan.ckpt", params);
    throw std::runtime_error("a2c_update: NaN loss" +
                             (diag_dir.empty()
                                  ? std::string()
                                  : ", diagnostic checkpoint written to " +
                                        diag_dir + "/diagnostic_nan.ckpt"));
  }
  stats.grad_norm = clip_grad_norm(params, cfg.grad_clip);
  opt.step(params);
  return stats;
}

// --- policies and evaluation ------------------------------------------------------

using PolicyFn = std::function<int(Env&, Rng&)>;

inline int greedy_argmax(const std::vector<double>& logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[static_cast<std::size_t>(best)])
      best = static_cast<int>(i);
  return best;  // ties resolve to the lowest index
}

// Wraps a net as a per-step policy; greedy mode breaks ties toward the
// lowest action index, sample mode draws from the softmax distribution.
inline PolicyFn net_policy(PolicyNet& net, RuleSet rules, bool greedy) {
  return [&net, rules, greedy](Env& env, Rng& rng) {
    ObsSnapshot snap = make_snapshot(env, rules, net.is_graph_model());
    ModelInput in = snap.input();
    PolicyOutput out = net.forward(in, nullptr);
    if (greedy) return greedy_argmax(out.logits);
    return rng.categorical(softmax(out.logits));
  };
}

inline PolicyFn uniform_random_policy() {
  return [](Env& env, Rng& rng) { return rng.below(env.action_count()); };
}

struct EvalResult {
  double mean_return = 0.0;
  double win_rate = 0.0;
  double stderr_return = 0.0;
  int episodes = 0;
};

// Runs `episodes` episodes with per-episode seeds derived from `seed`;
// success means a strictly positive terminal reward.
inline EvalResult evaluate(const EpisodeConfig& cfg, int episodes,
                           std::uint64_t seed, const PolicyFn& policy,
                           std::vector<EpisodeReplay>* replays = nullptr) {
  auto env = make_env(cfg);
  double sum = 0.0, sumsq = 0.0;
  int wins = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    std::uint64_t ep_seed = mix_seed(seed, 0xe7a1ULL + static_cast<std::uint64_t>(ep));
    Rng rng(mix_seed(ep_seed, 0xac7ULL));
    env->reset(ep_seed);
    double ret = 0.0;
    double last_reward = 0.0;
    EpisodeReplay replay;
    replay.cfg = cfg;
    replay.seed = ep_seed;
    while (!env->done()) {
      int a = policy(*env, rng);
      StepOut out = env->step(a);
      ret += out.reward;
      last_reward = out.reward;
      if (replays) {
        replay.actions.push_back(a);
        replay.rewards.push_back(out.reward);
      }
    }
    if (replays) replays->push_back(std::move(replay));
    sum += ret;
    sumsq += ret * ret;
    if (last_reward > 0.0) ++wins;
  }
  EvalResult r;
  r.episodes = episodes;
  r.mean_return = sum / episodes;
  r.win_rate = static_cast<double>(wins) / episodes;
  double var = episodes > 1
                   ? (sumsq - sum * sum / episodes) / (episodes - 1)
                   : 0.0;
  r.stderr_return = std::sqrt(std::max(var, 0.0) / episodes);
  return r;
}

// "0.790(-17.5%)": value plus relative change against a baseline.
inline std::string format_with_change(double value, double baseline) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << value;
  if (baseline != 0.0) {
    double pct = (value - baseline) / baseline * 100.0;
    os << "(" << std::showpos << std::setprecision(1) << pct << "%)";
  } else {
    os << "(n/a)";
  }
  return os.str();
}

struct OodRow {
  std::string name;
  EvalResult result;
  std::string formatted;  // mean return with % change vs the training config
};

// Evaluates one checkpointed policy across the training configuration and a
// list of test configurations; the first row is the baseline.
inline std::vector<OodRow> ood_harness(
    const EpisodeConfig& train_cfg,
    const std::vector<std::pair<std::string, EpisodeConfig>>& test_cfgs,
    int episodes, std::uint64_t seed, const PolicyFn& policy) {
  std::vector<OodRow> rows;
  EvalResult base = evaluate(train_cfg, episodes, seed, policy);
  rows.push_back({"train", base, format_with_change(base.mean_return,
                                                    base.mean_return)});
  for (const auto& [name, cfg] : test_cfgs) {
    EvalResult r = evaluate(cfg, episodes, seed, policy);
    rows.push_back({name, r, format_with_change(r.mean_return,
                                                base.mean_return)});
  }
  return rows;
}

// --- the training loop --------------------------------------------------------------

struct Worker {
  std::unique_ptr<Env> env;
  Rng action_rng{0};
  std::uint64_t seed_stream = 0;
  long long episodes = 0;
  std::shared_ptr<const RelationalGraph> graph;
  std::shared_ptr<const GraphIndex> index;

  void start_episode() {
    graph.reset();
    index.reset();
    env->reset(mix_seed(seed_stream, static_cast<std::uint64_t>(episodes++)));
  }
};

struct TrainResult {
  long long env_steps = 0;
  long long updates = 0;
  double final_eval_return = 0.0;
  double final_eval_win_rate = 0.0;
  bool reached_stop_return = false;
  std::string checkpoint_path;
  std::string metrics_path;
};

// Runs the synchronous A2C loop, writing metrics, checkpoints and a config
// snapshot into run_dir. Deterministic given the run configuration.
inline TrainResult train_run(const RunConfig& rc, const std::string& run_dir,
                             std::ostream& log, PolicyNet* external_net = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir);
  {
    std::ofstream snap(run_dir + "/config.snapshot");
    snap << serialize_run_config(rc);
  }

  NetConfig net_cfg = resolve_net_config(rc.model, rc.rules, rc.env);
  PolicyNet owned_net = PolicyNet::make(net_cfg);
  PolicyNet& net = external_net ? *external_net : owned_net;
  std::vector<ParamRef> params = net.params();

  log << "model " << net_cfg.front_end << " parameters "
      << param_count(params) << "\n";
  for (const auto& [name, count] :
       count_edges(rc.env.width, rc.env.height, rc.rules))
    log << "edges " << name << " " << count << "\n";

  RmspropState opt;
  opt.lr = rc.train.lr;
  opt.init(params);

  std::vector<Worker> workers(static_cast<std::size_t>(rc.train.workers));
  for (int w = 0; w < rc.train.workers; ++w) {
    workers[static_cast<std::size_t>(w)].env = make_env(rc.env);
    workers[static_cast<std::size_t>(w)].seed_stream =
        mix_seed(rc.seed, 0x3e'd0ULL + static_cast<std::uint64_t>(w));
    workers[static_cast<std::size_t>(w)].action_rng =
        Rng(mix_seed(rc.seed, 0xac'70ULL + static_cast<std::uint64_t>(w)));
    workers[static_cast<std::size_t>(w)].start_episode();
  }

  const std::string metrics_path = run_dir + "/metrics.csv";
  std::ofstream metrics(metrics_path);
  metrics << "env_steps,updates,mean_return,win_rate,policy_loss,value_loss,"
             "entropy,wall_clock_s\n";
  const auto wall_start = std::chrono::steady_clock::now();
  auto wall_seconds = [&]() {
    if (!rc.train.wall_clock_in_metrics) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         wall_start)
        .count();
  };

  const bool graph_model = net.is_graph_model();
  TrainResult result;
  LossStats last_stats;
  long long next_eval = rc.train.eval_every_steps;
  EvalResult eval{};

  auto write_metrics_row = [&](const EvalResult& ev) {
    metrics << std::setprecision(10) << result.env_steps << ','
            << result.updates << ',' << ev.mean_return << ',' << ev.win_rate
            << ',' << last_stats.policy_loss << ',' << last_stats.value_loss
            << ',' << last_stats.entropy << ',' << std::fixed
            << std::setprecision(3) << wall_seconds() << '\n';
    metrics.unsetf(std::ios::fixed);
    metrics.flush();
  };

  while (result.env_steps < rc.train.total_steps) {
    std::vector<Trajectory> batch(workers.size());
    for (std::size_t w = 0; w < workers.size(); ++w) {
      Worker& wk = workers[w];
      Trajectory& traj = batch[w];
      for (int t = 0; t < rc.train.rollout_len; ++t) {
        TrajStep st;
        st.obs = make_snapshot(*wk.env, rc.rules, graph_model, &wk.graph,
                               &wk.index);
        ModelInput in = st.obs.input();
        st.cache = std::make_shared<PolicyNet::Cache>();
        PolicyOutput out = net.forward(in, st.cache.get());
        st.logits = out.logits;
        st.value = out.value;
        st.action = wk.action_rng.categorical(softmax(out.logits));
        StepOut so = wk.env->step(st.action);
        st.reward = so.reward;
        st.done = so.done;
        traj.steps.push_back(std::move(st));
        ++result.env_steps;
        if (so.done) wk.start_episode();
      }
      if (wk.env->done()) {
        traj.bootstrap = 0.0;
      } else {
        ObsSnapshot snap =
            make_snapshot(*wk.env, rc.rules, graph_model, &wk.graph, &wk.index);
        ModelInput in = snap.input();
        traj.bootstrap = net.forward(in, nullptr).value;
      }
    }
    last_stats = a2c_update(net, batch, rc.train, opt, params, run_dir);
    ++result.updates;

    if (result.updates % rc.train.checkpoint_every_updates == 0)
      save_checkpoint(run_dir + "/checkpoint_" + std::to_string(result.updates) +
                          ".ckpt",
                      params);

    if (result.env_steps >= next_eval ||
        result.env_steps >= rc.train.total_steps) {
      next_eval += rc.train.eval_every_steps;
      eval = evaluate(rc.env, rc.train.eval_episodes,
                      mix_seed(rc.seed, 0xe5a1ULL),
                      net_policy(net, rc.rules, /*greedy=*/true));
      write_metrics_row(eval);
      log << "steps " << result.env_steps << " updates " << result.updates
          << " eval_return " << eval.mean_return << " win_rate "
          << eval.win_rate << " policy_loss " << last_stats.policy_loss
          << " entropy " << last_stats.entropy << "\n";
      log.flush();
      if (eval.mean_return >= rc.train.stop_return) {
        if (rc.train.stop_confirm_episodes > 0) {
          EvalResult confirm =
              evaluate(rc.env, rc.train.stop_confirm_episodes,
                       mix_seed(rc.seed, 0xc0f1ULL),
                       net_policy(net, rc.rules, /*greedy=*/true));
          log << "stop confirmation over " << confirm.episodes
              << " episodes: mean_return " << confirm.mean_return
              << " win_rate " << confirm.win_rate << "\n";
          if (confirm.mean_return < rc.train.stop_return) continue;
          eval = confirm;
        }
        result.reached_stop_return = true;
        break;
      }
    }
  }

  result.final_eval_return = eval.mean_return;
  result.final_eval_win_rate = eval.win_rate;
  result.checkpoint_path = run_dir + "/checkpoint_final.ckpt";
  result.metrics_path = metrics_path;
  save_checkpoint(result.checkpoint_path, params);
  return result;
}

}  // namespace gtg

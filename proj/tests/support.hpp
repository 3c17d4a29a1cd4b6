#pragma once
// Shared test fixtures. The bandit is a one-step environment used as a
// gradient-plumbing smoke test for every policy front end: action 0 pays 1,
// action 1 pays 0, the episode ends immediately.

#include "gtg/envs.hpp"
#include "gtg/trainer.hpp"

namespace gtg::testing {

// applies a node permutation to a graph (features, names, edge endpoints):
// node i of the input becomes node perm[i] of the output
inline RelationalGraph permute_graph(const RelationalGraph& g,
                                     const std::vector<int>& perm) {
  RelationalGraph out;
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  for (int i = 0; i < g.node_count(); ++i) {
    int src = inv[static_cast<std::size_t>(i)];
    std::vector<double> f(g.features_of(src),
                          g.features_of(src) + g.feature_dim());
    out.add_node(std::move(f), g.node_names()[static_cast<std::size_t>(src)]);
  }
  for (const auto& n : g.label_names()) out.add_label(n);
  for (const Edge& e : g.edges())
    out.add_edge(perm[static_cast<std::size_t>(e.src)], e.label,
                 perm[static_cast<std::size_t>(e.dst)]);
  return out;
}

class BanditEnv : public Env {
 public:
  void reset(std::uint64_t) override { done_ = false; steps_ = 0; }
  StepOut step(int action) override {
    check_action(action);
    if (done_) throw std::logic_error("BanditEnv: episode is done");
    ++steps_;
    done_ = true;
    return {action == 0 ? 1.0 : 0.0, true};
  }
  GridObservation observe() const override {
    GridObservation o = GridObservation::zeros(2, 2, 1);
    o.at(0, 0, 0) = 1.0;
    o.at(1, 1, 0) = 1.0;
    return o;
  }
  int width() const override { return 2; }
  int height() const override { return 2; }
  int channels() const override { return 1; }
  int steps_taken() const override { return steps_; }
  int max_steps() const override { return 1; }
  bool done() const override { return done_; }
  std::vector<std::string> symbolic_grid() const override {
    return {"x.", ".x"};
  }

 private:
  bool done_ = true;
  int steps_ = 0;
};

// Minimal A2C loop on the bandit for one front end; returns the final
// probability of the rewarded action.
inline double bandit_final_prob(const std::string& front_end, int updates,
                                std::uint64_t seed) {
  NetConfig cfg;
  cfg.front_end = front_end;
  cfg.graph_labels = kRuleLabelCount;
  cfg.input_channels = 1;
  cfg.action_count = 2;
  cfg.grid_width = cfg.grid_height = 2;
  cfg.rgcn_dim = 16;
  cfg.nlm_dim = 8;
  cfg.nlm_layers = 1;
  cfg.cnn_features = 4;
  cfg.dense_dim = 16;
  cfg.dense_layers = 1;
  cfg.seed = seed;
  PolicyNet net = PolicyNet::make(cfg);
  std::vector<ParamRef> params = net.params();
  RmspropState opt;
  opt.init(params);
  TrainConfig tc;
  tc.gamma = 0.99;
  tc.entropy_coef = 0.01;
  tc.value_coef = 0.5;
  tc.grad_clip = 40.0;

  BanditEnv env;
  RuleSet rules;
  Rng rng(mix_seed(seed, 3));
  const bool graph_model = net.is_graph_model();
  for (int u = 0; u < updates; ++u) {
    std::vector<Trajectory> batch(1);
    for (int t = 0; t < 8; ++t) {
      env.reset(0);
      TrajStep st;
      st.obs = make_snapshot(env, rules, graph_model);
      PolicyOutput out = net.forward(st.obs.input(), nullptr);
      st.logits = out.logits;
      st.value = out.value;
      st.action = rng.categorical(softmax(out.logits));
      StepOut so = env.step(st.action);
      st.reward = so.reward;
      st.done = true;
      batch[0].steps.push_back(std::move(st));
    }
    a2c_update(net, batch, tc, opt, params);
  }
  env.reset(0);
  ObsSnapshot snap = make_snapshot(env, rules, graph_model);
  return softmax(net.forward(snap.input(), nullptr).logits)[0];
}

}  // namespace gtg::testing

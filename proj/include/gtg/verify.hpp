#pragma once
// Oracle suites behind `verify`: convolution equivalence, block-matrix
// equivalence, finite-difference gradient checks for every model family,
// exhaustive edge-count census, and KB round trips. All suites run on fixed
// seeds and report max error against their tolerance.

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "gtg/trainer.hpp"

namespace gtg {

struct CheckResult {
  std::string name;
  double max_err = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::string detail;
};

inline std::string format_check(const CheckResult& c) {
  std::ostringstream os;
  os << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": max error "
     << std::scientific << std::setprecision(3) << c.max_err << " vs tolerance "
     << c.tol;
  if (!c.detail.empty()) os << " (" << c.detail << ")";
  return os.str();
}

// --- random instance generators ---------------------------------------------

inline RelationalGraph random_graph(Rng& rng, int max_nodes = 8,
                                    int max_dim = 5, int max_labels = 4) {
  const int n = 1 + rng.below(max_nodes);
  const int dim = 1 + rng.below(max_dim);
  const int labels = 1 + rng.below(max_labels);
  RelationalGraph g;
  for (int i = 0; i < n; ++i) {
    std::vector<double> f(static_cast<std::size_t>(dim));
    for (double& x : f) x = rng.uniform(-1.0, 1.0);
    g.add_node(std::move(f));
  }
  for (int l = 0; l < labels; ++l) g.add_label("r" + std::to_string(l));
  const int edges = rng.below(2 * n * labels + 1);
  for (int e = 0; e < edges; ++e)
    g.add_edge(rng.below(n), rng.below(labels), rng.below(n));
  return g;
}

inline KnowledgeBase random_kb(Rng& rng, int entities = 10, int unary = 4,
                               int binary = 3, int atoms = 20) {
  KnowledgeBase kb;
  for (int e = 0; e < entities; ++e) kb.add_entity("e" + std::to_string(e));
  for (int p = 0; p < unary; ++p) kb.add_unary_pred("u" + std::to_string(p));
  for (int p = 0; p < binary; ++p) kb.add_binary_pred("b" + std::to_string(p));
  for (int a = 0; a < atoms; ++a) {
    if (rng.below(2) == 0 && unary > 0)
      kb.add_unary_atom(rng.below(unary), rng.below(entities));
    else if (binary > 0)
      kb.add_binary_atom(rng.below(binary), rng.below(entities),
                         rng.below(entities));
  }
  return kb;
}

// --- suites -------------------------------------------------------------------

// Local-only R-GCN vs zero-padded 3x3 reference convolution.
inline CheckResult verify_conv_equivalence(int trials = 100,
                                           std::uint64_t seed = 7) {
  CheckResult c{"conv_equivalence", 0.0, 1e-10, false, ""};
  Rng rng(mix_seed(seed, 0xc09fULL));
  for (int t = 0; t < trials; ++t) {
    const int w = 5, h = 5, cin = 3, cout = 4;
    GridObservation obs = GridObservation::zeros(w, h, cin);
    for (double& x : obs.features) x = rng.uniform(-1.0, 1.0);
    std::vector<double> kernel(static_cast<std::size_t>(9 * cin * cout));
    for (double& x : kernel) x = rng.uniform(-1.0, 1.0);
    auto [rgcn_out, conv_out] = rgcn_conv_equivalence(obs, kernel, cout);
    for (std::size_t k = 0; k < rgcn_out.size(); ++k)
      c.max_err = std::max(c.max_err, std::fabs(rgcn_out[k] - conv_out[k]));
  }
  c.pass = c.max_err < c.tol;
  c.detail = std::to_string(trials) + " random 5x5x3 inputs";
  return c;
}

// RgcnLayer::forward (pre-activation) vs the dense block-matrix assembly.
inline CheckResult verify_block_matrix(int trials = 100,
                                       std::uint64_t seed = 11) {
  CheckResult c{"block_matrix", 0.0, 1e-12, false, ""};
  Rng rng(mix_seed(seed, 0xb10cULL));
  for (int t = 0; t < trials; ++t) {
    RelationalGraph g = random_graph(rng, 8, 5, 4);
    const int dout = 1 + rng.below(5);
    RgcnLayer layer = RgcnLayer::make(g.label_count(), g.feature_dim(), dout, rng);
    GraphIndex idx = GraphIndex::build(g);
    std::vector<double> y(
        static_cast<std::size_t>(g.node_count()) * dout, 0.0);
    layer.forward(idx, g.feature_data().data(), y.data(), nullptr, false);
    std::vector<double> oracle =
        block_matrix_oracle(layer, g, g.feature_data());
    for (std::size_t k = 0; k < y.size(); ++k)
      c.max_err = std::max(c.max_err, std::fabs(y[k] - oracle[k]));
  }
  c.pass = c.max_err < c.tol;
  c.detail = std::to_string(trials) + " random graphs, N <= 8";
  return c;
}

// Full actor-critic loss for one small model instance; returns the finite
// difference error of its gradient.
inline double model_loss_grad_error(const std::string& front_end,
                                    std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x96adULL));
  NetConfig cfg;
  cfg.front_end = front_end;
  cfg.graph_labels = 3;
  cfg.input_channels = 3;
  cfg.action_count = 3;
  cfg.grid_width = 3;
  cfg.grid_height = 3;
  cfg.rgcn_dim = 6;
  cfg.rgcn_layers = 2;
  cfg.nlm_dim = 5;
  cfg.nlm_layers = 2;
  cfg.nlm_nullary_dim = 3;
  cfg.cnn_features = 4;
  cfg.dense_dim = 6;
  cfg.dense_layers = 2;
  cfg.seed = mix_seed(seed, 0x5eedULL);
  PolicyNet net = PolicyNet::make(cfg);
  std::vector<ParamRef> params = net.params();
  // Finite differences are only valid at differentiable points. Zero-valued
  // biases can leave whole layers exactly on the ReLU kink, so move every
  // parameter to a generic position first.
  for (auto& p : params)
    for (double& v : p.t->v) v += rng.uniform(-0.2, 0.2);

  // fixed random instance: a 3x3 grid for the CNN, a synthetic 9-node graph
  // with cfg.graph_labels labels for the relational models
  GridObservation obs = GridObservation::zeros(3, 3, 3);
  for (double& x : obs.features) x = rng.uniform(-1.0, 1.0);
  RelationalGraph g;
  for (int i = 0; i < 9; ++i) {
    std::vector<double> f(3);
    for (double& x : f) x = rng.uniform(-1.0, 1.0);
    g.add_node(std::move(f));
  }
  for (int l = 0; l < cfg.graph_labels; ++l) g.add_label("r" + std::to_string(l));
  for (int e = 0; e < 18; ++e)
    g.add_edge(rng.below(9), rng.below(cfg.graph_labels), rng.below(9));
  GraphIndex idx = GraphIndex::build(g);

  ModelInput in;
  if (front_end == "cnn" || front_end == "cnn_wide") {
    in.grid = &obs;
  } else {
    in.graph = &g;
    in.index = &idx;
  }

  const int action = rng.below(cfg.action_count);
  const double ret = rng.uniform(-1.0, 1.0);
  const double c_v = 0.5, c_e = 0.01;

  auto loss_fn = [&]() {
    PolicyOutput out = net.forward(in, nullptr);
    std::vector<double> probs = softmax(out.logits);
    double adv = ret - out.value;
    return -adv * std::log(probs[static_cast<std::size_t>(action)]) +
           c_v * (ret - out.value) * (ret - out.value) -
           c_e * entropy(probs);
  };

  zero_grads(params);
  PolicyNet::Cache cache;
  PolicyOutput out = net.forward(in, &cache);
  std::vector<double> probs = softmax(out.logits);
  const double h = entropy(probs);
  const double adv = ret - out.value;
  std::vector<double> dlogits(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const double onehot = (static_cast<int>(j) == action) ? 1.0 : 0.0;
    // advantage depends on the value; the policy-gradient term treats it as
    // a constant in A2C, so the value path receives an extra +logp term
    dlogits[j] = -adv * (onehot - probs[j]) +
                 c_e * probs[j] * (std::log(probs[j]) + h);
  }
  const double logp = std::log(probs[static_cast<std::size_t>(action)]);
  const double dvalue = logp - 2.0 * c_v * (ret - out.value);
  net.backward(in, cache, dlogits, dvalue);
  return finite_diff_check(loss_fn, params);
}

inline CheckResult verify_gradients(int instances_per_model = 20,
                                    std::uint64_t seed = 13) {
  CheckResult c{"gradients", 0.0, 1e-5, false, ""};
  std::ostringstream detail;
  for (const std::string fe : {"rgcn", "nlm", "cnn"}) {
    double worst = 0.0;
    for (int t = 0; t < instances_per_model; ++t) {
      // an instance whose forward pass grazes a ReLU kink (a preactivation
      // within ~h of zero) makes central differences meaningless there;
      // resample such instances. A genuine gradient defect is systematic
      // and fails every resample.
      double err = 1.0;
      for (int attempt = 0; attempt < 3 && err >= c.tol; ++attempt)
        err = model_loss_grad_error(
            fe, mix_seed(seed, static_cast<std::uint64_t>(t * 16 + attempt + 1)));
      worst = std::max(worst, err);
    }
    detail << fe << " " << std::scientific << std::setprecision(2) << worst
           << "; ";
    c.max_err = std::max(c.max_err, worst);
  }
  // heads in isolation: maxpool + MLP + softmax cross-entropy
  {
    double worst = 0.0;
    for (int t = 0; t < instances_per_model; ++t) {
      Rng rng(mix_seed(seed, 0x6eadULL + t));
      Mlp mlp = Mlp::make({4, 6, 3}, rng);
      std::vector<ParamRef> ps;
      mlp.collect_params("heads", ps);
      std::vector<double> rows(5 * 4);
      for (double& x : rows) x = rng.uniform(-1.0, 1.0);
      const int target = rng.below(3);
      auto loss_fn = [&]() {
        std::vector<double> pooled = maxpool_rows(rows.data(), 5, 4);
        std::vector<double> probs = softmax(mlp.forward(pooled));
        return -std::log(probs[static_cast<std::size_t>(target)]);
      };
      zero_grads(ps);
      Mlp::Cache cache;
      std::vector<double> pooled = maxpool_rows(rows.data(), 5, 4);
      std::vector<double> probs = softmax(mlp.forward(pooled, &cache));
      std::vector<double> dlogits(probs.size());
      for (std::size_t j = 0; j < probs.size(); ++j)
        dlogits[j] = probs[j] - ((static_cast<int>(j) == target) ? 1.0 : 0.0);
      mlp.backward(cache, dlogits);
      worst = std::max(worst, finite_diff_check(loss_fn, ps));
    }
    detail << "heads " << std::scientific << std::setprecision(2) << worst;
    c.max_err = std::max(c.max_err, worst);
  }
  c.pass = c.max_err < c.tol;
  c.detail = detail.str();
  return c;
}

// count_edges vs build_graph census for every grid 1 <= W,H <= 12, the
// frozen 10x10 totals, and growth-rate exponents when doubling 8 -> 16.
inline CheckResult verify_edge_counts() {
  CheckResult c{"edge_counts", 0.0, 0.5, false, ""};
  RuleSet all;
  long long worst = 0;
  for (int w = 1; w <= 12; ++w)
    for (int h = 1; h <= 12; ++h) {
      GridObservation obs = GridObservation::zeros(w, h, 1);
      RelationalGraph g = build_graph(obs, all);
      std::vector<long long> census = g.per_label_edge_counts();
      auto closed = count_edges(w, h, all);
      for (std::size_t l = 0; l < closed.size(); ++l)
        worst = std::max(worst, std::llabs(census[l] - closed[l].second));
    }
  auto totals = [&](int w, int h) {
    auto counts = count_edges(w, h, all);
    long long local = 0, remote = 0, aligned = 0, adjacent = 0;
    for (int l = 0; l < kRuleLabelCount; ++l) {
      if (l < kRight) local += counts[static_cast<std::size_t>(l)].second;
      else if (l < kAligned) remote += counts[static_cast<std::size_t>(l)].second;
      else if (l == kAligned) aligned = counts[static_cast<std::size_t>(l)].second;
      else adjacent = counts[static_cast<std::size_t>(l)].second;
    }
    return std::array<long long, 4>{local, remote, aligned, adjacent};
  };
  auto t10 = totals(10, 10);
  bool frozen_ok = t10[0] == 684 && t10[1] == 18000 && t10[2] == 1800 &&
                   t10[3] == 684;
  // doubling W=H from 8 to 16 quadruples N; exponents of N from exact counts
  auto t8 = totals(8, 8);
  auto t16 = totals(16, 16);
  const double targets[4] = {1.0, 2.0, 1.5, 1.0};
  double exp_err = 0.0;
  std::ostringstream detail;
  detail << "10x10 local " << t10[0] << " remote " << t10[1] << " aligned "
         << t10[2] << " adjacent " << t10[3] << "; exponents";
  for (int k = 0; k < 4; ++k) {
    double e = std::log(static_cast<double>(t16[static_cast<std::size_t>(k)]) /
                        t8[static_cast<std::size_t>(k)]) /
               std::log(4.0);
    detail << " " << std::fixed << std::setprecision(2) << e;
    exp_err = std::max(exp_err, std::fabs(e - targets[k]));
  }
  c.max_err = std::max(static_cast<double>(worst), exp_err);
  c.pass = worst == 0 && frozen_ok && exp_err < 0.25;
  c.detail = detail.str();
  return c;
}

// graph_to_kb . kb_to_graph must be the identity, exactly and set-wise.
inline CheckResult verify_kb_roundtrip(int trials = 100,
                                       std::uint64_t seed = 17) {
  CheckResult c{"kb_roundtrip", 0.0, 0.5, false, ""};
  Rng rng(mix_seed(seed, 0x2bULL));
  int failures = 0;
  for (int t = 0; t < trials; ++t) {
    KnowledgeBase kb = random_kb(rng, 2 + rng.below(10), 1 + rng.below(4),
                                 1 + rng.below(4), rng.below(30));
    RelationalGraph g = kb_to_graph(kb);
    KnowledgeBase back = graph_to_kb(g, kb.unary_preds(), kb.binary_preds());
    if (!(back == kb)) ++failures;
  }
  c.max_err = failures;
  c.pass = failures == 0;
  c.detail = std::to_string(trials) + " random KBs";
  return c;
}

// Named suite dispatch for the CLI. `quick` trims the gradient instance
// count to keep the command interactive.
inline std::vector<CheckResult> verify_suite(const std::string& suite,
                                             bool quick = false) {
  std::vector<CheckResult> out;
  const int grad_n = quick ? 5 : 20;
  if (suite == "conv" || suite == "all") out.push_back(verify_conv_equivalence());
  if (suite == "blockmatrix" || suite == "all") out.push_back(verify_block_matrix());
  if (suite == "grad" || suite == "all") out.push_back(verify_gradients(grad_n));
  if (suite == "counts" || suite == "all") out.push_back(verify_edge_counts());
  if (suite == "kbroundtrip" || suite == "all") out.push_back(verify_kb_roundtrip());
  if (out.empty())
    throw std::invalid_argument(
        "verify: unknown suite '" + suite +
        "' (expected conv|blockmatrix|grad|counts|kbroundtrip|all)");
  return out;
}

}  // namespace gtg

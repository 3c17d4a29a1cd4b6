#pragma once
// Policy/value network assemblies over the message-passing layers: a shared
// front end (R-GCN, NLM, or CNN), feature-wise max pooling (or flattening
// for the CNN), and separate policy and value MLP heads.

#include <memory>
#include <string>
#include <vector>

#include "gtg/models.hpp"

namespace gtg {

struct NetConfig {
  std::string front_end = "rgcn";  // rgcn | nlm | cnn | cnn_wide
  int graph_labels = kRuleLabelCount;
  int input_channels = 0;
  int action_count = 4;
  int grid_width = 0;   // cnn flatten only
  int grid_height = 0;
  int rgcn_dim = 64;
  int rgcn_layers = 2;
  int nlm_dim = 64;
  int nlm_layers = 2;
  int nlm_nullary_dim = 4;  // initial nullary vector is zeros of this size
  int cnn_features = 12;
  int cnn_wide_features = 64;
  std::string cnn_aggregate = "flatten";  // flatten | maxpool
  int dense_dim = 128;
  int dense_layers = 2;
  std::uint64_t seed = 0;
};

// Input to a policy forward pass. Graph front ends read `graph` (plus an
// optional prebuilt index and feature override); CNN front ends read `grid`.
struct ModelInput {
  const RelationalGraph* graph = nullptr;
  const GraphIndex* index = nullptr;   // must match graph when given
  const double* node_feats = nullptr;  // override, node_count x feature_dim
  const GridObservation* grid = nullptr;
};

struct PolicyOutput {
  std::vector<double> logits;
  double value = 0.0;
};

class PolicyNet {
 public:
  struct Cache {
    int n_nodes = 0;
    // rgcn
    std::vector<RgcnLayer::Cache> rgcn;
    std::vector<std::vector<double>> rgcn_out;  // post-relu per layer
    // nlm: slot 0 holds inputs, slot l the outputs of layer l
    std::vector<NlmLayer::Cache> nlm;
    std::vector<std::vector<double>> nlm_g, nlm_v, nlm_r;
    // cnn
    std::vector<double> grid_in;
    std::vector<std::vector<double>> conv_pre, conv_out;
    // pooling + heads
    std::vector<int> pool_arg;
    std::vector<double> pooled;
    Mlp::Cache policy_cache, value_cache;
    GraphIndex local_index;  // used when the caller gave no prebuilt index
  };

  static PolicyNet make(const NetConfig& cfg) {
    PolicyNet net;
    net.cfg_ = cfg;
    Rng rng(mix_seed(cfg.seed, 0x6d6f64656cULL));
    int head_in = 0;
    if (cfg.front_end == "rgcn") {
      int din = cfg.input_channels;
      for (int l = 0; l < cfg.rgcn_layers; ++l) {
        net.rgcn_.push_back(
            RgcnLayer::make(cfg.graph_labels, din, cfg.rgcn_dim, rng));
        din = cfg.rgcn_dim;
      }
      head_in = cfg.rgcn_dim;
    } else if (cfg.front_end == "nlm") {
      int g_d = cfg.nlm_nullary_dim;
      int v_d = cfg.input_channels;
      int r_d = cfg.graph_labels;
      for (int l = 0; l < cfg.nlm_layers; ++l) {
        net.nlm_.push_back(NlmLayer::make(g_d, v_d, r_d, cfg.nlm_dim,
                                          cfg.nlm_dim, cfg.nlm_dim, rng));
        g_d = v_d = r_d = cfg.nlm_dim;
      }
      head_in = 2 * cfg.nlm_dim;  // pooled unary features + nullary vector
    } else if (cfg.front_end == "cnn" || cfg.front_end == "cnn_wide") {
      const int f = net.conv_features();
      net.k1_ = Tensor::zeros({3, 3, cfg.input_channels, f});
      glorot_init(net.k1_, 9 * cfg.input_channels, f, rng);
      net.b1_ = Tensor::zeros({f});
      net.k2_ = Tensor::zeros({3, 3, f, f});
      glorot_init(net.k2_, 9 * f, f, rng);
      net.b2_ = Tensor::zeros({f});
      if (cfg.cnn_aggregate == "flatten") {
        if (cfg.grid_width < 1 || cfg.grid_height < 1)
          throw std::invalid_argument(
              "PolicyNet: cnn flatten needs grid_width/grid_height");
        head_in = cfg.grid_width * cfg.grid_height * f;
      } else if (cfg.cnn_aggregate == "maxpool") {
        head_in = f;
      } else {
        throw std::invalid_argument("PolicyNet: bad cnn_aggregate '" +
                                    cfg.cnn_aggregate + "'");
      }
    } else {
      throw std::invalid_argument("PolicyNet: unknown front_end '" +
                                  cfg.front_end + "'");
    }
    std::vector<int> pdims{head_in};
    for (int l = 0; l < cfg.dense_layers; ++l) pdims.push_back(cfg.dense_dim);
    std::vector<int> vdims = pdims;
    pdims.push_back(cfg.action_count);
    vdims.push_back(1);
    net.policy_head_ = Mlp::make(pdims, rng);
    net.value_head_ = Mlp::make(vdims, rng);
    return net;
  }

  const NetConfig& config() const { return cfg_; }
  bool is_graph_model() const {
    return cfg_.front_end == "rgcn" || cfg_.front_end == "nlm";
  }
  int conv_features() const {
    return cfg_.front_end == "cnn_wide" ? cfg_.cnn_wide_features
                                        : cfg_.cnn_features;
  }

  PolicyOutput forward(const ModelInput& in, Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    std::vector<double> pooled;
    if (cfg_.front_end == "rgcn") {
      pooled = forward_rgcn(in, c);
    } else if (cfg_.front_end == "nlm") {
      pooled = forward_nlm(in, c);
    } else {
      pooled = forward_cnn(in, c);
    }
    c.pooled = pooled;
    PolicyOutput out;
    out.logits = policy_head_.forward(pooled, cache ? &c.policy_cache : nullptr);
    out.value = value_head_.forward(pooled, cache ? &c.value_cache : nullptr)[0];
    return out;
  }

  // Accumulates parameter gradients for dL/dlogits and dL/dvalue.
  void backward(const ModelInput& in, const Cache& c,
                const std::vector<double>& dlogits, double dvalue) {
    std::vector<double> dpooled = policy_head_.backward(c.policy_cache, dlogits);
    std::vector<double> dv = value_head_.backward(c.value_cache, {dvalue});
    for (std::size_t i = 0; i < dpooled.size(); ++i) dpooled[i] += dv[i];
    if (cfg_.front_end == "rgcn") {
      backward_rgcn(in, c, dpooled);
    } else if (cfg_.front_end == "nlm") {
      backward_nlm(c, dpooled);
    } else {
      backward_cnn(in, c, dpooled);
    }
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (std::size_t l = 0; l < rgcn_.size(); ++l)
      rgcn_[l].collect_params("rgcn" + std::to_string(l), out);
    for (std::size_t l = 0; l < nlm_.size(); ++l)
      nlm_[l].collect_params("nlm" + std::to_string(l), out);
    if (!k1_.v.empty()) {
      out.push_back({"conv1.k", &k1_});
      out.push_back({"conv1.b", &b1_});
      out.push_back({"conv2.k", &k2_});
      out.push_back({"conv2.b", &b2_});
    }
    policy_head_.collect_params("policy", out);
    value_head_.collect_params("value", out);
    return out;
  }

  std::size_t parameter_count() {
    return param_count(params());
  }

 private:
  const GraphIndex& graph_index(const ModelInput& in, Cache& c) const {
    if (!in.graph)
      throw std::invalid_argument("PolicyNet: graph front end needs a graph");
    if (in.graph->label_count() != cfg_.graph_labels)
      throw std::invalid_argument(
          "PolicyNet: graph has " + std::to_string(in.graph->label_count()) +
          " labels, net expects " + std::to_string(cfg_.graph_labels));
    if (in.index) return *in.index;
    c.local_index = GraphIndex::build(*in.graph);
    return c.local_index;
  }
  const double* node_features(const ModelInput& in) const {
    if (in.node_feats) return in.node_feats;
    if (in.graph->feature_dim() != cfg_.input_channels)
      throw std::invalid_argument("PolicyNet: node feature dim mismatch");
    return in.graph->feature_data().data();
  }

  std::vector<double> forward_rgcn(const ModelInput& in, Cache& c) const {
    const GraphIndex& idx = graph_index(in, c);
    const int n = idx.nodes;
    c.n_nodes = n;
    c.rgcn.assign(rgcn_.size(), {});
    c.rgcn_out.assign(rgcn_.size(), {});
    const double* x = node_features(in);
    for (std::size_t l = 0; l < rgcn_.size(); ++l) {
      c.rgcn_out[l].assign(static_cast<std::size_t>(n) * rgcn_[l].dout, 0.0);
      rgcn_[l].forward(idx, x, c.rgcn_out[l].data(), &c.rgcn[l],
                       /*apply_relu=*/true);
      x = c.rgcn_out[l].data();
    }
    return maxpool_rows(x, n, cfg_.rgcn_dim, &c.pool_arg);
  }

  void backward_rgcn(const ModelInput& in, const Cache& c,
                     const std::vector<double>& dpooled) {
    const GraphIndex& idx = in.index ? *in.index : c.local_index;
    const int n = c.n_nodes;
    std::vector<double> dh(static_cast<std::size_t>(n) * cfg_.rgcn_dim, 0.0);
    for (int k = 0; k < cfg_.rgcn_dim; ++k)
      dh[static_cast<std::size_t>(c.pool_arg[static_cast<std::size_t>(k)]) *
             cfg_.rgcn_dim +
         k] += dpooled[static_cast<std::size_t>(k)];
    for (int l = static_cast<int>(rgcn_.size()) - 1; l >= 0; --l) {
      std::vector<double> dx(
          static_cast<std::size_t>(n) * rgcn_[static_cast<std::size_t>(l)].din,
          0.0);
      rgcn_[static_cast<std::size_t>(l)].backward(
          idx, c.rgcn[static_cast<std::size_t>(l)], dh.data(), dx.data(),
          /*apply_relu=*/true);
      dh = std::move(dx);
    }
  }

  std::vector<double> forward_nlm(const ModelInput& in, Cache& c) const {
    const GraphIndex& idx = graph_index(in, c);
    const int n = idx.nodes;
    c.n_nodes = n;
    const double* feats = node_features(in);

    c.nlm.assign(nlm_.size(), {});
    c.nlm_g.assign(nlm_.size() + 1, {});
    c.nlm_v.assign(nlm_.size() + 1, {});
    c.nlm_r.assign(nlm_.size() + 1, {});
    c.nlm_g[0].assign(static_cast<std::size_t>(cfg_.nlm_nullary_dim), 0.0);
    c.nlm_v[0].assign(feats,
                      feats + static_cast<std::size_t>(n) * cfg_.input_channels);
    // layer-0 binary features: one-hot relation labels per ordered pair
    c.nlm_r[0].assign(
        static_cast<std::size_t>(n) * n * cfg_.graph_labels, 0.0);
    for (const Edge& e : in.graph->edges())
      c.nlm_r[0][(static_cast<std::size_t>(e.src) * n + e.dst) *
                     cfg_.graph_labels +
                 e.label] = 1.0;

    for (std::size_t l = 0; l < nlm_.size(); ++l)
      nlm_[l].forward(n, c.nlm_g[l], c.nlm_v[l], c.nlm_r[l], &c.nlm_g[l + 1],
                      &c.nlm_v[l + 1], &c.nlm_r[l + 1], &c.nlm[l]);

    std::vector<double> pooled =
        maxpool_rows(c.nlm_v.back().data(), n, cfg_.nlm_dim, &c.pool_arg);
    pooled.insert(pooled.end(), c.nlm_g.back().begin(), c.nlm_g.back().end());
    return pooled;
  }

  void backward_nlm(const Cache& c, const std::vector<double>& dpooled) {
    const int n = c.n_nodes;
    std::vector<double> dg(static_cast<std::size_t>(cfg_.nlm_dim), 0.0);
    std::vector<double> dv(static_cast<std::size_t>(n) * cfg_.nlm_dim, 0.0);
    std::vector<double> dr(
        static_cast<std::size_t>(n) * n * cfg_.nlm_dim, 0.0);
    for (int k = 0; k < cfg_.nlm_dim; ++k) {
      dv[static_cast<std::size_t>(c.pool_arg[static_cast<std::size_t>(k)]) *
             cfg_.nlm_dim +
         k] += dpooled[static_cast<std::size_t>(k)];
      dg[static_cast<std::size_t>(k)] =
          dpooled[static_cast<std::size_t>(cfg_.nlm_dim + k)];
    }
    for (int l = static_cast<int>(nlm_.size()) - 1; l >= 0; --l) {
      std::vector<double> dg_in, dv_in, dr_in;
      nlm_[static_cast<std::size_t>(l)].backward(
          c.nlm[static_cast<std::size_t>(l)], dg, dv, dr, &dg_in, &dv_in,
          &dr_in);
      dg = std::move(dg_in);
      dv = std::move(dv_in);
      dr = std::move(dr_in);
    }
  }

  std::vector<double> forward_cnn(const ModelInput& in, Cache& c) const {
    if (!in.grid)
      throw std::invalid_argument("PolicyNet: cnn front end needs a grid");
    const GridObservation& g = *in.grid;
    if (g.channels != cfg_.input_channels)
      throw std::invalid_argument("PolicyNet: grid channel mismatch");
    const int f = conv_features();
    const int cells = g.width * g.height;
    c.n_nodes = cells;
    c.grid_in = g.features;
    c.conv_pre.assign(2, {});
    c.conv_out.assign(2, {});

    c.conv_pre[0].assign(static_cast<std::size_t>(cells) * f, 0.0);
    conv2d_forward(g.width, g.height, g.channels, f, g.features.data(),
                   k1_.v.data(), c.conv_pre[0].data());
    for (int p = 0; p < cells; ++p)
      for (int o = 0; o < f; ++o)
        c.conv_pre[0][static_cast<std::size_t>(p) * f + o] +=
            b1_.v[static_cast<std::size_t>(o)];
    c.conv_out[0].resize(c.conv_pre[0].size());
    for (std::size_t k = 0; k < c.conv_pre[0].size(); ++k)
      c.conv_out[0][k] = relu(c.conv_pre[0][k]);

    c.conv_pre[1].assign(static_cast<std::size_t>(cells) * f, 0.0);
    conv2d_forward(g.width, g.height, f, f, c.conv_out[0].data(), k2_.v.data(),
                   c.conv_pre[1].data());
    for (int p = 0; p < cells; ++p)
      for (int o = 0; o < f; ++o)
        c.conv_pre[1][static_cast<std::size_t>(p) * f + o] +=
            b2_.v[static_cast<std::size_t>(o)];
    c.conv_out[1].resize(c.conv_pre[1].size());
    for (std::size_t k = 0; k < c.conv_pre[1].size(); ++k)
      c.conv_out[1][k] = relu(c.conv_pre[1][k]);

    if (cfg_.cnn_aggregate == "maxpool")
      return maxpool_rows(c.conv_out[1].data(), cells, f, &c.pool_arg);
    if (g.width != cfg_.grid_width || g.height != cfg_.grid_height)
      throw std::runtime_error(
          "PolicyNet: cnn flatten trained for " +
          std::to_string(cfg_.grid_width) + "x" +
          std::to_string(cfg_.grid_height) + " grids, got " +
          std::to_string(g.width) + "x" + std::to_string(g.height) +
          "; the flatten variant does not transfer across grid sizes");
    return c.conv_out[1];
  }

  void backward_cnn(const ModelInput& in, const Cache& c,
                    const std::vector<double>& dpooled) {
    const GridObservation& g = *in.grid;
    const int f = conv_features();
    const int cells = g.width * g.height;
    std::vector<double> dh(static_cast<std::size_t>(cells) * f, 0.0);
    if (cfg_.cnn_aggregate == "maxpool") {
      for (int k = 0; k < f; ++k)
        dh[static_cast<std::size_t>(c.pool_arg[static_cast<std::size_t>(k)]) *
               f +
           k] += dpooled[static_cast<std::size_t>(k)];
    } else {
      dh = dpooled;
    }
    // conv2 backward
    for (std::size_t k = 0; k < dh.size(); ++k)
      if (c.conv_pre[1][k] <= 0.0) dh[k] = 0.0;
    for (int p = 0; p < cells; ++p)
      for (int o = 0; o < f; ++o)
        b2_.g[static_cast<std::size_t>(o)] +=
            dh[static_cast<std::size_t>(p) * f + o];
    std::vector<double> dh1(static_cast<std::size_t>(cells) * f, 0.0);
    conv2d_backward(g.width, g.height, f, f, c.conv_out[0].data(),
                    k2_.v.data(), dh.data(), dh1.data(), k2_.g.data());
    // conv1 backward
    for (std::size_t k = 0; k < dh1.size(); ++k)
      if (c.conv_pre[0][k] <= 0.0) dh1[k] = 0.0;
    for (int p = 0; p < cells; ++p)
      for (int o = 0; o < f; ++o)
        b1_.g[static_cast<std::size_t>(o)] +=
            dh1[static_cast<std::size_t>(p) * f + o];
    conv2d_backward(g.width, g.height, g.channels, f, c.grid_in.data(),
                    k1_.v.data(), dh1.data(), nullptr, k1_.g.data());
  }

  NetConfig cfg_;
  std::vector<RgcnLayer> rgcn_;
  std::vector<NlmLayer> nlm_;
  Tensor k1_, b1_, k2_, b2_;
  Mlp policy_head_, value_head_;
};

}  // namespace gtg

#include <catch2/catch_amalgamated.hpp>

#include "gtg/policy.hpp"
#include "gtg/verify.hpp"
#include "support.hpp"

using namespace gtg;
using gtg::testing::permute_graph;
using Catch::Approx;

namespace {

RelationalGraph lava_like_graph(int w, int h, int channels, Rng& rng,
                                const RuleSet& rules = RuleSet{}) {
  GridObservation obs = GridObservation::zeros(w, h, channels);
  for (double& x : obs.features) x = rng.uniform(-1.0, 1.0);
  return build_graph(obs, rules);
}

}  // namespace

TEST_CASE("rgcn: isolated node applies W0 and relu", "[models]") {
  RelationalGraph g;
  g.add_node({1.0, -2.0});
  GraphIndex idx = GraphIndex::build(g);
  RgcnLayer layer;
  layer.labels = 0;
  layer.din = layer.dout = 2;
  layer.w0 = Tensor::zeros({2, 2});
  layer.w0.v = {1.0, 0.0, 0.0, 1.0};
  std::vector<double> y(2, 0.0);
  layer.forward(idx, g.feature_data().data(), y.data(), nullptr, true);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 0.0);
}

TEST_CASE("rgcn: two-node hand example", "[models]") {
  RelationalGraph g;
  g.add_node({3.0});
  g.add_node({4.0});
  g.add_label("r");
  g.add_edge(0, 0, 1);
  GraphIndex idx = GraphIndex::build(g);
  RgcnLayer layer;
  layer.labels = 1;
  layer.din = layer.dout = 1;
  layer.w.push_back(Tensor::zeros({1, 1}));
  layer.w[0].v = {2.0};
  layer.w0 = Tensor::zeros({1, 1});
  layer.w0.v = {1.0};
  std::vector<double> y(2, 0.0);
  layer.forward(idx, g.feature_data().data(), y.data(), nullptr, false);
  CHECK(y[0] == Approx(3.0));
  CHECK(y[1] == Approx(10.0));  // 4 + (1/1) * 2 * 3

  auto oracle = block_matrix_oracle(layer, g, g.feature_data());
  CHECK(oracle[0] == Approx(3.0));
  CHECK(oracle[1] == Approx(10.0));
}

TEST_CASE("rgcn: normalization averages over in-neighbors", "[models]") {
  RelationalGraph g;
  g.add_node({1.0});
  g.add_node({5.0});
  g.add_node({0.0});
  g.add_label("r");
  g.add_edge(0, 0, 2);
  g.add_edge(1, 0, 2);
  GraphIndex idx = GraphIndex::build(g);
  RgcnLayer layer;
  layer.labels = 1;
  layer.din = layer.dout = 1;
  layer.w.push_back(Tensor::zeros({1, 1}));
  layer.w[0].v = {1.0};
  layer.w0 = Tensor::zeros({1, 1});
  std::vector<double> y(3, 0.0);
  layer.forward(idx, g.feature_data().data(), y.data(), nullptr, false);
  CHECK(y[2] == Approx(3.0));  // (1 + 5) / 2
}

TEST_CASE("rgcn forward equals the dense block-matrix oracle", "[models]") {
  CheckResult c = verify_block_matrix(100);
  INFO(c.detail);
  CHECK(c.pass);
  CHECK(c.max_err < 1e-12);
}

TEST_CASE("block oracle with empty edges is block-diagonal W0", "[models]") {
  Rng rng(3);
  RelationalGraph g;
  for (int i = 0; i < 3; ++i) g.add_node({rng.uniform(-1, 1), rng.uniform(-1, 1)});
  g.add_label("r");
  RgcnLayer layer = RgcnLayer::make(1, 2, 2, rng);
  auto y = block_matrix_oracle(layer, g, g.feature_data());
  for (int a = 0; a < 3; ++a)
    for (int o = 0; o < 2; ++o) {
      double expect = 0.0;
      for (int i = 0; i < 2; ++i)
        expect += layer.w0.v[o * 2 + i] * g.feature(a, i);
      CHECK(y[a * 2 + o] == Approx(expect));
    }
}

TEST_CASE("local-only rgcn equals the 3x3 convolution", "[models]") {
  CheckResult c = verify_conv_equivalence(100);
  INFO(c.detail);
  CHECK(c.pass);
  CHECK(c.max_err < 1e-10);
}

TEST_CASE("conv equivalence: center-only kernel is the identity", "[models]") {
  Rng rng(23);
  GridObservation obs = GridObservation::zeros(4, 4, 2);
  for (double& x : obs.features) x = rng.uniform(-1, 1);
  std::vector<double> kernel(9 * 2 * 2, 0.0);
  for (int c = 0; c < 2; ++c) kernel[((1 * 3 + 1) * 2 + c) * 2 + c] = 1.0;
  auto [rgcn_out, conv_out] = rgcn_conv_equivalence(obs, kernel, 2);
  for (std::size_t i = 0; i < rgcn_out.size(); ++i) {
    CHECK(rgcn_out[i] == Approx(obs.features[i]));
    CHECK(conv_out[i] == Approx(obs.features[i]));
  }
}

TEST_CASE("shifting the input shifts both outputs on the interior",
          "[models]") {
  Rng rng(29);
  const int w = 6, h = 6, cin = 2, cout = 3;
  GridObservation obs = GridObservation::zeros(w, h, cin);
  for (double& x : obs.features) x = rng.uniform(-1, 1);
  std::vector<double> kernel(9 * cin * cout);
  for (double& x : kernel) x = rng.uniform(-1, 1);

  GridObservation shifted = GridObservation::zeros(w, h, cin);
  for (int y = 0; y < h; ++y)
    for (int x = 1; x < w; ++x)
      for (int c = 0; c < cin; ++c)
        shifted.at(x, y, c) = obs.at(x - 1, y, c);

  auto [r0, c0] = rgcn_conv_equivalence(obs, kernel, cout);
  auto [r1, c1] = rgcn_conv_equivalence(shifted, kernel, cout);
  // interior of the shifted output equals the original shifted by one
  for (int y = 1; y < h - 1; ++y)
    for (int x = 2; x < w - 1; ++x)
      for (int c = 0; c < cout; ++c) {
        std::size_t to = (static_cast<std::size_t>(y) * w + x) * cout + c;
        std::size_t from = (static_cast<std::size_t>(y) * w + x - 1) * cout + c;
        CHECK(r1[to] == Approx(r0[from]).margin(1e-12));
        CHECK(c1[to] == Approx(c0[from]).margin(1e-12));
      }
}

TEST_CASE("nlm: single entity reduces aggregates to the self pair",
          "[models]") {
  Rng rng(31);
  NlmLayer l = NlmLayer::make(2, 3, 2, 4, 5, 6, rng);
  std::vector<double> g{0.1, -0.2}, v{1.0, 2.0, 3.0}, r{0.5, 0.7};
  std::vector<double> g2, v2, r2;
  l.forward(1, g, v, r, &g2, &v2, &r2, nullptr);
  CHECK(g2.size() == 4);
  CHECK(v2.size() == 5);
  CHECK(r2.size() == 6);
  REQUIRE_THROWS_AS(l.forward(0, g, v, r, &g2, &v2, &r2, nullptr),
                    std::invalid_argument);
}

TEST_CASE("nlm layer is permutation equivariant", "[models]") {
  Rng rng(37);
  const int n = 4, vd = 3, rd = 2;
  NlmLayer l = NlmLayer::make(2, vd, rd, 3, 3, 3, rng);
  std::vector<double> g{0.3, -0.1};
  std::vector<double> v(n * vd), r(n * n * rd);
  for (double& x : v) x = rng.uniform(-1, 1);
  for (double& x : r) x = rng.uniform(-1, 1);

  std::vector<double> g1, v1, r1;
  l.forward(n, g, v, r, &g1, &v1, &r1, nullptr);

  std::vector<int> perm{2, 0, 3, 1};
  std::vector<double> vp(n * vd), rp(n * n * rd);
  for (int a = 0; a < n; ++a)
    for (int k = 0; k < vd; ++k) vp[perm[a] * vd + k] = v[a * vd + k];
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int k = 0; k < rd; ++k)
        rp[(perm[a] * n + perm[b]) * rd + k] = r[(a * n + b) * rd + k];

  std::vector<double> g2, v2, r2;
  l.forward(n, g, vp, rp, &g2, &v2, &r2, nullptr);
  for (std::size_t k = 0; k < g1.size(); ++k)
    CHECK(g2[k] == Approx(g1[k]).margin(1e-12));
  for (int a = 0; a < n; ++a)
    for (int k = 0; k < 3; ++k)
      CHECK(v2[perm[a] * 3 + k] == Approx(v1[a * 3 + k]).margin(1e-12));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int k = 0; k < 3; ++k)
        CHECK(r2[(perm[a] * n + perm[b]) * 3 + k] ==
              Approx(r1[(a * n + b) * 3 + k]).margin(1e-12));
}

TEST_CASE("model gradients pass finite-difference checks", "[models]") {
  CheckResult c = verify_gradients(5);
  INFO(c.detail);
  CHECK(c.pass);
}

TEST_CASE("zero-weight heads give a uniform policy and zero value",
          "[models]") {
  for (const std::string fe : {"rgcn", "nlm", "cnn"}) {
    NetConfig cfg;
    cfg.front_end = fe;
    cfg.graph_labels = 14;
    cfg.input_channels = 5;
    cfg.action_count = 4;
    cfg.grid_width = cfg.grid_height = 5;
    cfg.rgcn_dim = 8;
    cfg.nlm_dim = 8;
    cfg.cnn_features = 4;
    cfg.dense_dim = 8;
    PolicyNet net = PolicyNet::make(cfg);
    for (auto& p : net.params())
      std::fill(p.t->v.begin(), p.t->v.end(), 0.0);

    Rng rng(41);
    RelationalGraph g = lava_like_graph(5, 5, 5, rng);
    GridObservation obs = GridObservation::zeros(5, 5, 5);
    for (double& x : obs.features) x = rng.uniform(0, 1);
    ModelInput in;
    GraphIndex idx = GraphIndex::build(g);
    if (fe == "cnn") {
      in.grid = &obs;
    } else {
      in.graph = &g;
      in.index = &idx;
    }
    PolicyOutput out = net.forward(in, nullptr);
    auto probs = softmax(out.logits);
    for (double p : probs) CHECK(p == Approx(0.25));
    CHECK(out.value == 0.0);
  }
}

TEST_CASE("policy logits and value are invariant under node permutation",
          "[models]") {
  Rng rng(43);
  for (const std::string fe : {"rgcn", "nlm"}) {
    NetConfig cfg;
    cfg.front_end = fe;
    cfg.graph_labels = 14;
    cfg.input_channels = 3;
    cfg.action_count = 4;
    cfg.rgcn_dim = 8;
    cfg.nlm_dim = 6;
    cfg.dense_dim = 8;
    cfg.seed = 5;
    PolicyNet net = PolicyNet::make(cfg);

    RelationalGraph g = lava_like_graph(4, 4, 3, rng);
    ModelInput in;
    in.graph = &g;
    PolicyOutput base = net.forward(in, nullptr);

    for (int t = 0; t < 10; ++t) {
      std::vector<int> perm(static_cast<std::size_t>(g.node_count()));
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
      rng.shuffle(perm);
      RelationalGraph pg = permute_graph(g, perm);
      ModelInput pin;
      pin.graph = &pg;
      PolicyOutput out = net.forward(pin, nullptr);
      for (std::size_t k = 0; k < base.logits.size(); ++k)
        REQUIRE(std::fabs(out.logits[k] - base.logits[k]) < 1e-9);
      REQUIRE(std::fabs(out.value - base.value) < 1e-9);
    }
  }
}

TEST_CASE("graph policies transfer across grid sizes", "[models]") {
  NetConfig cfg;
  cfg.front_end = "rgcn";
  cfg.graph_labels = 14;
  cfg.input_channels = 5;
  cfg.action_count = 4;
  cfg.seed = 3;
  PolicyNet net = PolicyNet::make(cfg);
  Rng rng(47);
  for (int size : {6, 10}) {
    RelationalGraph g = lava_like_graph(size, size, 5, rng);
    ModelInput in;
    in.graph = &g;
    PolicyOutput out = net.forward(in, nullptr);
    REQUIRE(out.logits.size() == 4);
    for (double l : out.logits) CHECK(std::isfinite(l));
    CHECK(std::isfinite(out.value));
  }
}

TEST_CASE("cnn flatten has more parameters than maxpool at equal widths",
          "[models]") {
  NetConfig flat;
  flat.front_end = "cnn";
  flat.input_channels = 5;
  flat.grid_width = flat.grid_height = 7;
  flat.cnn_aggregate = "flatten";
  NetConfig pool = flat;
  pool.cnn_aggregate = "maxpool";
  PolicyNet a = PolicyNet::make(flat);
  PolicyNet b = PolicyNet::make(pool);
  CHECK(a.parameter_count() > b.parameter_count());
}

TEST_CASE("default R-GCN configuration lands in the reported range",
          "[models]") {
  NetConfig cfg;  // defaults: 2x64 rgcn layers, 2x128 dense heads
  cfg.front_end = "rgcn";
  cfg.graph_labels = 14;
  cfg.input_channels = 5;  // LavaCrossing channels
  cfg.action_count = 4;
  PolicyNet net = PolicyNet::make(cfg);
  std::size_t count = net.parameter_count();
  INFO("exact parameter count: " << count);
  CHECK(count >= 100000);
  CHECK(count <= 200000);
}

TEST_CASE("locality: local-only rgcn stacks have a bounded receptive field",
          "[models]") {
  Rng rng(53);
  const int n = 7;
  NetConfig cfg;
  cfg.front_end = "rgcn";
  cfg.graph_labels = 8;  // local labels only
  cfg.input_channels = 2;
  cfg.action_count = 3;
  cfg.rgcn_dim = 6;
  cfg.rgcn_layers = 2;
  cfg.dense_dim = 6;
  cfg.seed = 7;
  PolicyNet net = PolicyNet::make(cfg);

  GridObservation obs = GridObservation::zeros(n, n, 2);
  for (double& x : obs.features) x = rng.uniform(-1, 1);
  RuleSet local_only{true, false, false};

  auto node_outputs = [&](const GridObservation& o) {
    RelationalGraph g = build_graph(o, local_only);
    GraphIndex idx = GraphIndex::build(g);
    ModelInput in;
    in.graph = &g;
    in.index = &idx;
    PolicyNet::Cache cache;
    net.forward(in, &cache);
    return cache.rgcn_out.back();  // per-node features after 2 layers
  };

  auto base = node_outputs(obs);
  GridObservation far = obs;
  far.at(6, 6, 0) += 1.0;  // Chebyshev distance 6 from cell (0,0)
  auto perturbed = node_outputs(far);
  for (int k = 0; k < cfg.rgcn_dim; ++k)
    CHECK(perturbed[k] == base[k]);  // cell (0,0) unchanged after 2 local hops

  // with remote rules one layer reaches it
  NetConfig rcfg = cfg;
  rcfg.graph_labels = 12;  // local + remote
  rcfg.rgcn_layers = 1;
  PolicyNet rnet = PolicyNet::make(rcfg);
  RuleSet local_remote{true, true, false};
  auto one_layer = [&](const GridObservation& o) {
    RelationalGraph g = build_graph(o, local_remote);
    GraphIndex idx = GraphIndex::build(g);
    ModelInput in;
    in.graph = &g;
    in.index = &idx;
    PolicyNet::Cache cache;
    rnet.forward(in, &cache);
    return cache.rgcn_out.back();
  };
  auto rb = one_layer(obs);
  auto rp = one_layer(far);
  double diff = 0.0;
  for (int k = 0; k < rcfg.rgcn_dim; ++k) diff += std::fabs(rp[k] - rb[k]);
  CHECK(diff > 0.0);
}

TEST_CASE("unknown relation labels are rejected", "[models]") {
  Rng rng(59);
  RelationalGraph g = random_graph(rng, 4, 2, 4);
  while (g.label_count() < 4) g.add_label("pad");
  GraphIndex idx = GraphIndex::build(g);
  RgcnLayer layer = RgcnLayer::make(2, g.feature_dim(), 3, rng);
  std::vector<double> y(static_cast<std::size_t>(g.node_count()) * 3);
  REQUIRE_THROWS_AS(
      layer.forward(idx, g.feature_data().data(), y.data(), nullptr, false),
      std::invalid_argument);
}

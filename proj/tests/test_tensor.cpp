#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "gtg/tensor.hpp"

using namespace gtg;
using Catch::Approx;

namespace {

// naive 6-loop convolution, the independent oracle for conv2d_forward
void conv_naive(int w, int h, int cin, int cout, const double* in,
                const double* k, double* out) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx)
            for (int ci = 0; ci < cin; ++ci) {
              int yy = y + ky - 1, xx = x + kx - 1;
              double v = (yy < 0 || yy >= h || xx < 0 || xx >= w)
                             ? 0.0
                             : in[(yy * w + xx) * cin + ci];
              acc += v * k[((ky * 3 + kx) * cin + ci) * cout + co];
            }
        out[(y * w + x) * cout + co] = acc;
      }
}

}  // namespace

TEST_CASE("mlp forward: identity weights relu hidden", "[tensor]") {
  Rng rng(1);
  Mlp m = Mlp::make({2, 2, 2}, rng);
  // layer 0 = identity, layer 1 = identity
  for (auto& w : m.w) {
    std::fill(w.v.begin(), w.v.end(), 0.0);
    w.v[0] = 1.0;
    w.v[3] = 1.0;
  }
  for (auto& b : m.b) std::fill(b.v.begin(), b.v.end(), 0.0);
  auto y = m.forward({1.0, -1.0});
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 0.0);  // relu clips the hidden unit
}

TEST_CASE("mlp forward: single linear layer", "[tensor]") {
  Rng rng(1);
  Mlp m = Mlp::make({2, 2}, rng);
  m.w[0].v = {2.0, 0.0, 0.0, 3.0};
  m.b[0].v = {0.0, 0.0};
  auto y = m.forward({1.0, 1.0});
  CHECK(y[0] == 2.0);
  CHECK(y[1] == 3.0);
  REQUIRE_THROWS_AS(m.forward({1.0}), std::invalid_argument);
}

TEST_CASE("mlp gradients match finite differences", "[tensor]") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    Mlp m = Mlp::make({3, 4, 2}, rng);
    std::vector<ParamRef> ps;
    m.collect_params("mlp", ps);
    std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1),
                          rng.uniform(-1, 1)};
    std::vector<double> target{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto loss = [&]() {
      auto y = m.forward(x);
      double l = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i)
        l += (y[i] - target[i]) * (y[i] - target[i]);
      return l;
    };
    zero_grads(ps);
    Mlp::Cache cache;
    auto y = m.forward(x, &cache);
    std::vector<double> dy(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) dy[i] = 2.0 * (y[i] - target[i]);
    m.backward(cache, dy);
    REQUIRE(finite_diff_check(loss, ps) < 1e-5);
  }
}

TEST_CASE("maxpool takes feature-wise maxima", "[tensor]") {
  std::vector<double> rows{1, 5, 3, 2};
  auto out = maxpool_rows(rows.data(), 2, 2);
  CHECK(out == std::vector<double>{3, 5});

  std::vector<double> single{4, -1};
  CHECK(maxpool_rows(single.data(), 1, 2) == single);
  REQUIRE_THROWS_AS(maxpool_rows(rows.data(), 0, 2), std::invalid_argument);
}

TEST_CASE("maxpool subgradient routes to the argmax", "[tensor]") {
  Rng rng(3);
  std::vector<double> rows(4 * 3);
  for (double& v : rows) v = rng.uniform(-1, 1);
  std::vector<int> arg;
  auto pooled = maxpool_rows(rows.data(), 4, 3, &arg);
  // finite differences on the pooled sum wrt each row entry
  auto f = [&]() {
    auto p = maxpool_rows(rows.data(), 4, 3);
    double s = 0.0;
    for (double v : p) s += v;
    return s;
  };
  const double h = 1e-6;
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 3; ++c) {
      double analytic = (arg[c] == i) ? 1.0 : 0.0;
      double& cell = rows[i * 3 + c];
      double orig = cell;
      cell = orig + h;
      double fp = f();
      cell = orig - h;
      double fm = f();
      cell = orig;
      double numeric = (fp - fm) / (2 * h);
      CHECK(std::fabs(analytic - numeric) < 1e-6);
    }
}

TEST_CASE("maxpool ties follow the lowest-index convention", "[tensor]") {
  std::vector<double> rows{5.0, 5.0};  // two nodes, one feature, tied
  std::vector<int> arg;
  maxpool_rows(rows.data(), 2, 1, &arg);
  CHECK(arg[0] == 0);
}

TEST_CASE("softmax is stable and normalized", "[tensor]") {
  auto p = softmax({0.0, 0.0});
  CHECK(p[0] == Approx(0.5));
  CHECK(p[1] == Approx(0.5));

  auto q = softmax({1000.0, 0.0});
  CHECK(q[0] == Approx(1.0));
  CHECK(q[1] >= 0.0);
  CHECK(std::isfinite(q[1]));

  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> logits(1 + rng.below(6));
    for (double& x : logits) x = rng.uniform(-30, 30);
    auto probs = softmax(logits);
    double sum = 0.0;
    for (double v : probs) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
  REQUIRE_THROWS_AS(softmax({std::nan(""), 0.0}), std::invalid_argument);
}

TEST_CASE("log-softmax cross-entropy gradient is probs minus onehot",
          "[tensor]") {
  Rng rng(13);
  std::vector<double> logits{0.3, -1.2, 2.0};
  const int target = 1;
  auto loss = [&]() {
    return -std::log(softmax(logits)[target]);
  };
  auto probs = softmax(logits);
  const double h = 1e-6;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    double analytic = probs[j] - (static_cast<int>(j) == target ? 1.0 : 0.0);
    double orig = logits[j];
    logits[j] = orig + h;
    double fp = loss();
    logits[j] = orig - h;
    double fm = loss();
    logits[j] = orig;
    CHECK(std::fabs(analytic - (fp - fm) / (2 * h)) < 1e-6);
  }
}

TEST_CASE("conv2d: center-only kernel is the identity", "[tensor]") {
  const int w = 4, h = 3, c = 2;
  Rng rng(5);
  std::vector<double> in(w * h * c);
  for (double& v : in) v = rng.uniform(-1, 1);
  std::vector<double> kernel(9 * c * c, 0.0);
  for (int ci = 0; ci < c; ++ci)
    kernel[((1 * 3 + 1) * c + ci) * c + ci] = 1.0;  // center tap, identity map
  std::vector<double> out(w * h * c, 0.0);
  conv2d_forward(w, h, c, c, in.data(), kernel.data(), out.data());
  for (std::size_t k = 0; k < in.size(); ++k) CHECK(out[k] == Approx(in[k]));
}

TEST_CASE("conv2d: all-ones kernel counts covered cells", "[tensor]") {
  const int n = 5;
  std::vector<double> in(n * n, 1.0);
  std::vector<double> kernel(9, 1.0);
  std::vector<double> out(n * n, 0.0);
  conv2d_forward(n, n, 1, 1, in.data(), kernel.data(), out.data());
  CHECK(out[2 * n + 2] == 9.0);  // interior
  CHECK(out[0 * n + 2] == 6.0);  // edge
  CHECK(out[0] == 4.0);          // corner
}

TEST_CASE("conv2d matches the naive 6-loop oracle", "[tensor]") {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    int w = 1 + rng.below(6), h = 1 + rng.below(6);
    int cin = 1 + rng.below(3), cout = 1 + rng.below(3);
    std::vector<double> in(w * h * cin), k(9 * cin * cout);
    for (double& v : in) v = rng.uniform(-1, 1);
    for (double& v : k) v = rng.uniform(-1, 1);
    std::vector<double> a(w * h * cout, 0.0), b(w * h * cout, 0.0);
    conv2d_forward(w, h, cin, cout, in.data(), k.data(), a.data());
    conv_naive(w, h, cin, cout, in.data(), k.data(), b.data());
    for (std::size_t i = 0; i < a.size(); ++i)
      REQUIRE(std::fabs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("conv2d backward matches finite differences", "[tensor]") {
  Rng rng(19);
  const int w = 3, h = 3, cin = 2, cout = 2;
  Tensor kt = Tensor::zeros({3, 3, cin, cout});
  for (double& v : kt.v) v = rng.uniform(-1, 1);
  std::vector<double> in(w * h * cin);
  for (double& v : in) v = rng.uniform(-1, 1);
  std::vector<double> target(w * h * cout);
  for (double& v : target) v = rng.uniform(-1, 1);
  auto loss = [&]() {
    std::vector<double> out(w * h * cout, 0.0);
    conv2d_forward(w, h, cin, cout, in.data(), kt.v.data(), out.data());
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      l += (out[i] - target[i]) * (out[i] - target[i]);
    return l;
  };
  std::vector<double> out(w * h * cout, 0.0);
  conv2d_forward(w, h, cin, cout, in.data(), kt.v.data(), out.data());
  std::vector<double> dout(out.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    dout[i] = 2.0 * (out[i] - target[i]);
  kt.zero_grad();
  conv2d_backward(w, h, cin, cout, in.data(), kt.v.data(), dout.data(),
                  nullptr, kt.g.data());
  std::vector<ParamRef> ps{{"k", &kt}};
  REQUIRE(finite_diff_check(loss, ps) < 1e-6);
}

TEST_CASE("rmsprop: zero gradient leaves parameters, decays accumulator",
          "[tensor]") {
  Tensor p = Tensor::zeros({2});
  p.v = {1.0, -2.0};
  std::vector<ParamRef> ps{{"p", &p}};
  RmspropState opt;
  opt.init(ps);
  opt.acc[0] = {4.0, 4.0};
  opt.step(ps);  // g = 0
  CHECK(p.v[0] == 1.0);
  CHECK(p.v[1] == -2.0);
  CHECK(opt.acc[0][0] == Approx(0.99 * 4.0));
}

TEST_CASE("rmsprop: first step from a unit gradient", "[tensor]") {
  Tensor p = Tensor::zeros({1});
  p.g = {1.0};
  std::vector<ParamRef> ps{{"p", &p}};
  RmspropState opt;  // lr 0.001, rho 0.99, eps 1e-5
  opt.init(ps);
  opt.step(ps);
  // acc = 0.01, delta = -0.001 / (0.1 + 1e-5)
  CHECK(p.v[0] == Approx(-0.001 / (0.1 + 1e-5)).epsilon(1e-12));
  CHECK(p.v[0] == Approx(-0.00999).margin(2e-5));
}

TEST_CASE("rmsprop: repeated identical gradients approach lr-sized steps",
          "[tensor]") {
  Tensor p = Tensor::zeros({1});
  std::vector<ParamRef> ps{{"p", &p}};
  RmspropState opt;
  opt.init(ps);
  double prev = 0.0;
  double delta = 0.0;
  for (int t = 0; t < 2000; ++t) {
    p.g = {1.0};
    prev = p.v[0];
    opt.step(ps);
    delta = prev - p.v[0];
  }
  CHECK(delta == Approx(opt.lr).epsilon(1e-3));  // acc -> g^2 = 1
}

TEST_CASE("finite_diff_check on a quadratic", "[tensor]") {
  Tensor p = Tensor::zeros({1});
  p.v = {3.0};
  p.g = {6.0};  // analytic gradient of p^2 at 3
  std::vector<ParamRef> ps{{"p", &p}};
  auto f = [&]() { return p.v[0] * p.v[0]; };
  CHECK(finite_diff_check(f, ps) < 1e-8);
}

TEST_CASE("gradient norm clipping rescales to the bound", "[tensor]") {
  Tensor p = Tensor::zeros({2});
  p.g = {3.0, 4.0};
  std::vector<ParamRef> ps{{"p", &p}};
  double norm = clip_grad_norm(ps, 1.0);
  CHECK(norm == Approx(5.0));
  CHECK(p.g[0] == Approx(0.6));
  CHECK(p.g[1] == Approx(0.8));
}

TEST_CASE("checkpoints round trip bit-exactly", "[tensor]") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4});
  a.v = {1.0, -0.0, 1e-308, 3.14159265358979, -2.5e17, 0.1};
  b.v = {-1.0, 2.0, 0.5, 1.0 / 3.0};
  std::vector<ParamRef> ps{{"layer.w", &a}, {"layer.b", &b}};
  const std::string path = "test_ckpt.bin";
  save_checkpoint(path, ps);

  Tensor a2 = Tensor::zeros({2, 3});
  Tensor b2 = Tensor::zeros({4});
  std::vector<ParamRef> ps2{{"layer.w", &a2}, {"layer.b", &b2}};
  load_checkpoint(path, ps2);
  CHECK(std::memcmp(a.v.data(), a2.v.data(), a.v.size() * 8) == 0);
  CHECK(std::memcmp(b.v.data(), b2.v.data(), b.v.size() * 8) == 0);

  // name and shape mismatches are rejected
  std::vector<ParamRef> wrong_name{{"layer.x", &a2}, {"layer.b", &b2}};
  REQUIRE_THROWS_WITH(load_checkpoint(path, wrong_name),
                      Catch::Matchers::ContainsSubstring("name mismatch"));
  Tensor c = Tensor::zeros({3, 2});
  std::vector<ParamRef> wrong_shape{{"layer.w", &c}, {"layer.b", &b2}};
  REQUIRE_THROWS_WITH(load_checkpoint(path, wrong_shape),
                      Catch::Matchers::ContainsSubstring("shape mismatch"));
  std::remove(path.c_str());
}

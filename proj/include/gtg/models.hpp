#pragma once
// Message-passing models: R-GCN layers with per-relation weights, the dense
// block-matrix oracle for the same computation, NLM layers over
// nullary/unary/binary feature tensors, CNN baselines, and the policy/value
// network assemblies that sit on top of them.

#include <memory>
#include <string>
#include <vector>

#include "gtg/grid2graph.hpp"
#include "gtg/relgraph.hpp"
#include "gtg/tensor.hpp"

namespace gtg {

// Per-label CSR over in-edges: for label r and node a, srcs[r] holds the
// sources of all edges (b, r, a), grouped by target a.
struct GraphIndex {
  int nodes = 0;
  int labels = 0;
  std::vector<std::vector<int>> offsets;  // [labels][nodes+1]
  std::vector<std::vector<int>> srcs;     // [labels][edge count of label]

  static GraphIndex build(const RelationalGraph& g) {
    GraphIndex idx;
    idx.nodes = g.node_count();
    idx.labels = g.label_count();
    std::vector<std::vector<int>> counts(
        static_cast<std::size_t>(idx.labels),
        std::vector<int>(static_cast<std::size_t>(idx.nodes), 0));
    for (const Edge& e : g.edges())
      ++counts[static_cast<std::size_t>(e.label)]
              [static_cast<std::size_t>(e.dst)];
    idx.offsets.assign(static_cast<std::size_t>(idx.labels), {});
    idx.srcs.assign(static_cast<std::size_t>(idx.labels), {});
    for (int l = 0; l < idx.labels; ++l) {
      auto& off = idx.offsets[static_cast<std::size_t>(l)];
      off.assign(static_cast<std::size_t>(idx.nodes) + 1, 0);
      for (int a = 0; a < idx.nodes; ++a)
        off[static_cast<std::size_t>(a) + 1] =
            off[static_cast<std::size_t>(a)] +
            counts[static_cast<std::size_t>(l)][static_cast<std::size_t>(a)];
      idx.srcs[static_cast<std::size_t>(l)].resize(
          static_cast<std::size_t>(off.back()));
    }
    std::vector<std::vector<int>> cursor = idx.offsets;
    for (const Edge& e : g.edges()) {
      auto& cur = cursor[static_cast<std::size_t>(e.label)]
                        [static_cast<std::size_t>(e.dst)];
      idx.srcs[static_cast<std::size_t>(e.label)]
              [static_cast<std::size_t>(cur++)] = e.src;
    }
    return idx;
  }

  int in_degree(int label, int node) const {
    const auto& off = offsets[static_cast<std::size_t>(label)];
    return off[static_cast<std::size_t>(node) + 1] -
           off[static_cast<std::size_t>(node)];
  }
};

// --- R-GCN ------------------------------------------------------------------

// x'_a = sigma( sum_r sum_{b in N_a^r} (1/c_{a,r}) W_r x_b + W_0 x_a ) with
// c_{a,r} = |N_a^r| (in-neighbors of a under r); empty neighborhoods
// contribute nothing. No bias terms.
struct RgcnLayer {
  int labels = 0;
  int din = 0;
  int dout = 0;
  std::vector<Tensor> w;  // per label, dout x din
  Tensor w0;              // dout x din

  static RgcnLayer make(int labels, int din, int dout, Rng& rng) {
    RgcnLayer l;
    l.labels = labels;
    l.din = din;
    l.dout = dout;
    for (int r = 0; r < labels; ++r) {
      Tensor t = Tensor::zeros({dout, din});
      glorot_init(t, din, dout, rng);
      l.w.push_back(std::move(t));
    }
    l.w0 = Tensor::zeros({dout, din});
    glorot_init(l.w0, din, dout, rng);
    return l;
  }

  struct Cache {
    std::vector<double> x;  // input copy, n x din
    std::vector<double> z;  // pre-activation, n x dout
  };

  void forward(const GraphIndex& idx, const double* x, double* y,
               Cache* cache, bool apply_relu) const {
    if (idx.labels > labels)
      throw std::invalid_argument("RgcnLayer: unknown relation label");
    const int n = idx.nodes;
    // self-loop term
    for (int a = 0; a < n; ++a) {
      const double* xa = x + static_cast<std::size_t>(a) * din;
      double* ya = y + static_cast<std::size_t>(a) * dout;
      for (int o = 0; o < dout; ++o) {
        const double* row = w0.v.data() + static_cast<std::size_t>(o) * din;
        double acc = 0.0;
        for (int i = 0; i < din; ++i) acc += row[i] * xa[i];
        ya[o] = acc;
      }
    }
    std::vector<double> s(static_cast<std::size_t>(din));
    for (int r = 0; r < idx.labels; ++r) {
      const auto& off = idx.offsets[static_cast<std::size_t>(r)];
      const auto& src = idx.srcs[static_cast<std::size_t>(r)];
      const double* wr = w[static_cast<std::size_t>(r)].v.data();
      for (int a = 0; a < n; ++a) {
        const int lo = off[static_cast<std::size_t>(a)];
        const int hi = off[static_cast<std::size_t>(a) + 1];
        if (lo == hi) continue;
        const double inv = 1.0 / static_cast<double>(hi - lo);
        std::fill(s.begin(), s.end(), 0.0);
        for (int e = lo; e < hi; ++e) {
          const double* xb =
              x + static_cast<std::size_t>(src[static_cast<std::size_t>(e)]) *
                      din;
          for (int i = 0; i < din; ++i) s[static_cast<std::size_t>(i)] += xb[i];
        }
        for (int i = 0; i < din; ++i) s[static_cast<std::size_t>(i)] *= inv;
        double* ya = y + static_cast<std::size_t>(a) * dout;
        for (int o = 0; o < dout; ++o) {
          const double* row = wr + static_cast<std::size_t>(o) * din;
          double acc = 0.0;
          for (int i = 0; i < din; ++i)
            acc += row[i] * s[static_cast<std::size_t>(i)];
          ya[o] += acc;
        }
      }
    }
    if (cache) {
      cache->x.assign(x, x + static_cast<std::size_t>(n) * din);
      cache->z.assign(y, y + static_cast<std::size_t>(n) * dout);
    }
    if (apply_relu)
      for (std::size_t k = 0; k < static_cast<std::size_t>(n) * dout; ++k)
        y[k] = relu(y[k]);
  }

  // Accumulates parameter gradients; writes dL/dx into dx (n x din).
  void backward(const GraphIndex& idx, const Cache& cache, const double* dy,
                double* dx, bool apply_relu) {
    const int n = idx.nodes;
    std::vector<double> dz(dy, dy + static_cast<std::size_t>(n) * dout);
    if (apply_relu)
      for (std::size_t k = 0; k < dz.size(); ++k)
        if (cache.z[k] <= 0.0) dz[k] = 0.0;
    std::fill(dx, dx + static_cast<std::size_t>(n) * din, 0.0);

    const double* x = cache.x.data();
    for (int a = 0; a < n; ++a) {
      const double* xa = x + static_cast<std::size_t>(a) * din;
      const double* dza = dz.data() + static_cast<std::size_t>(a) * dout;
      double* dxa = dx + static_cast<std::size_t>(a) * din;
      for (int o = 0; o < dout; ++o) {
        const double go = dza[o];
        if (go == 0.0) continue;
        double* wg = w0.g.data() + static_cast<std::size_t>(o) * din;
        const double* row = w0.v.data() + static_cast<std::size_t>(o) * din;
        for (int i = 0; i < din; ++i) {
          wg[i] += go * xa[i];
          dxa[i] += go * row[i];
        }
      }
    }
    std::vector<double> s(static_cast<std::size_t>(din));
    std::vector<double> t(static_cast<std::size_t>(din));
    for (int r = 0; r < idx.labels; ++r) {
      const auto& off = idx.offsets[static_cast<std::size_t>(r)];
      const auto& src = idx.srcs[static_cast<std::size_t>(r)];
      const double* wr = w[static_cast<std::size_t>(r)].v.data();
      double* wrg = w[static_cast<std::size_t>(r)].g.data();
      for (int a = 0; a < n; ++a) {
        const int lo = off[static_cast<std::size_t>(a)];
        const int hi = off[static_cast<std::size_t>(a) + 1];
        if (lo == hi) continue;
        const double inv = 1.0 / static_cast<double>(hi - lo);
        std::fill(s.begin(), s.end(), 0.0);
        for (int e = lo; e < hi; ++e) {
          const double* xb =
              x + static_cast<std::size_t>(src[static_cast<std::size_t>(e)]) *
                      din;
          for (int i = 0; i < din; ++i) s[static_cast<std::size_t>(i)] += xb[i];
        }
        for (int i = 0; i < din; ++i) s[static_cast<std::size_t>(i)] *= inv;
        const double* dza = dz.data() + static_cast<std::size_t>(a) * dout;
        std::fill(t.begin(), t.end(), 0.0);
        for (int o = 0; o < dout; ++o) {
          const double go = dza[o];
          if (go == 0.0) continue;
          double* wg = wrg + static_cast<std::size_t>(o) * din;
          const double* row = wr + static_cast<std::size_t>(o) * din;
          for (int i = 0; i < din; ++i) {
            wg[i] += go * s[static_cast<std::size_t>(i)];
            t[static_cast<std::size_t>(i)] += go * row[i];
          }
        }
        for (int e = lo; e < hi; ++e) {
          double* dxb =
              dx + static_cast<std::size_t>(src[static_cast<std::size_t>(e)]) *
                       din;
          for (int i = 0; i < din; ++i)
            dxb[i] += inv * t[static_cast<std::size_t>(i)];
        }
      }
    }
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    for (std::size_t r = 0; r < w.size(); ++r)
      out.push_back({prefix + ".rel" + std::to_string(r), &w[r]});
    out.push_back({prefix + ".self", &w0});
  }
};

// Dense assembly of the message passing matrix: block A_ab sums W_r/c_{a,r}
// over all labels of edges from b to a, with W_0 added on the diagonal.
// Returns the pre-activation outputs y = A x; must match RgcnLayer::forward
// without the nonlinearity.
inline std::vector<double> block_matrix_oracle(const RgcnLayer& layer,
                                               const RelationalGraph& g,
                                               const std::vector<double>& x) {
  const int n = g.node_count();
  const int din = layer.din, dout = layer.dout;
  // in-degree per (node, label)
  std::vector<std::vector<int>> indeg(
      static_cast<std::size_t>(g.label_count()),
      std::vector<int>(static_cast<std::size_t>(n), 0));
  for (const Edge& e : g.edges())
    ++indeg[static_cast<std::size_t>(e.label)][static_cast<std::size_t>(e.dst)];

  // A is (n*dout) x (n*din), assembled block by block.
  std::vector<double> A(static_cast<std::size_t>(n) * dout * n * din, 0.0);
  auto block_add = [&](int a, int b, const Tensor& m, double scale) {
    for (int o = 0; o < dout; ++o)
      for (int i = 0; i < din; ++i)
        A[(static_cast<std::size_t>(a) * dout + o) * (static_cast<std::size_t>(n) * din) +
          static_cast<std::size_t>(b) * din + i] +=
            scale * m.v[static_cast<std::size_t>(o) * din + i];
  };
  for (int a = 0; a < n; ++a) block_add(a, a, layer.w0, 1.0);
  for (const Edge& e : g.edges()) {
    const double c =
        indeg[static_cast<std::size_t>(e.label)][static_cast<std::size_t>(e.dst)];
    block_add(e.dst, e.src, layer.w[static_cast<std::size_t>(e.label)],
              1.0 / c);
  }

  std::vector<double> y(static_cast<std::size_t>(n) * dout, 0.0);
  for (std::size_t row = 0; row < static_cast<std::size_t>(n) * dout; ++row) {
    double acc = 0.0;
    const double* arow = A.data() + row * static_cast<std::size_t>(n) * din;
    for (std::size_t col = 0; col < static_cast<std::size_t>(n) * din; ++col)
      acc += arow[col] * x[col];
    y[row] = acc;
  }
  return y;
}

// R-GCN layer whose linear computation equals a zero-padded 3x3 convolution:
// each local directional weight is the kernel tap at the source's offset
// from the target, and W_0 is the center tap. Requires a local-rules-only
// graph, where every c_{a,r} is 0 or 1.
inline RgcnLayer rgcn_from_kernel(const std::vector<double>& kernel, int cin,
                                  int cout) {
  if (kernel.size() != static_cast<std::size_t>(9 * cin * cout))
    throw std::invalid_argument("rgcn_from_kernel: kernel must be 3x3xCinxCout");
  RgcnLayer layer;
  layer.labels = 8;
  layer.din = cin;
  layer.dout = cout;
  auto tap = [&](int ky, int kx) {
    Tensor t = Tensor::zeros({cout, cin});
    for (int o = 0; o < cout; ++o)
      for (int i = 0; i < cin; ++i)
        t.v[static_cast<std::size_t>(o) * cin + i] =
            kernel[(static_cast<std::size_t>(ky * 3 + kx) * cin + i) * cout + o];
    return t;
  };
  // label order: rightAdj..bottomLeftAdj; source offset (dx,dy) maps to the
  // kernel tap (ky=dy+1, kx=dx+1).
  layer.w.push_back(tap(1, 2));  // rightAdj: source at (+1, 0)
  layer.w.push_back(tap(1, 0));  // leftAdj: (-1, 0)
  layer.w.push_back(tap(2, 1));  // topAdj: (0, +1)
  layer.w.push_back(tap(0, 1));  // bottomAdj: (0, -1)
  layer.w.push_back(tap(2, 2));  // topRightAdj: (+1, +1)
  layer.w.push_back(tap(2, 0));  // topLeftAdj: (-1, +1)
  layer.w.push_back(tap(0, 2));  // bottomRightAdj: (+1, -1)
  layer.w.push_back(tap(0, 0));  // bottomLeftAdj: (-1, -1)
  layer.w0 = tap(1, 1);
  return layer;
}

// Runs the local-only R-GCN and the reference convolution on the same
// observation; the two outputs must agree exactly up to rounding.
inline std::pair<std::vector<double>, std::vector<double>>
rgcn_conv_equivalence(const GridObservation& obs,
                      const std::vector<double>& kernel, int cout) {
  RuleSet local_only{true, false, false};
  RelationalGraph g = build_graph(obs, local_only);
  GraphIndex idx = GraphIndex::build(g);
  RgcnLayer layer = rgcn_from_kernel(kernel, obs.channels, cout);
  // the index carries 8 local labels in rule order; layer matches
  std::vector<double> rgcn_out(
      static_cast<std::size_t>(g.node_count()) * cout, 0.0);
  layer.forward(idx, g.feature_data().data(), rgcn_out.data(), nullptr,
                /*apply_relu=*/false);
  std::vector<double> conv_out(
      static_cast<std::size_t>(obs.width) * obs.height * cout, 0.0);
  conv2d_forward(obs.width, obs.height, obs.channels, cout,
                 obs.features.data(), kernel.data(), conv_out.data());
  return {rgcn_out, conv_out};
}

// --- NLM ----------------------------------------------------------------------

// One Neural Logic Machine layer over nullary/unary/binary feature tensors.
// Aggregates are elementwise maxima: v_dot over all entities, r_row[a] over
// r[a][*], r_col[a] over r[*][a]; maxima include the self pair.
struct NlmLayer {
  int g_in = 0, v_in = 0, r_in = 0;
  int g_out = 0, v_out = 0, r_out = 0;
  Mlp m0, m1, m2;

  static NlmLayer make(int g_in, int v_in, int r_in, int g_out, int v_out,
                       int r_out, Rng& rng) {
    NlmLayer l;
    l.g_in = g_in;
    l.v_in = v_in;
    l.r_in = r_in;
    l.g_out = g_out;
    l.v_out = v_out;
    l.r_out = r_out;
    l.m0 = Mlp::make({g_in + v_in, g_out}, rng);
    l.m1 = Mlp::make({g_in + v_in + 2 * r_in, v_out}, rng);
    l.m2 = Mlp::make({2 * v_in + 2 * r_in, r_out}, rng);
    return l;
  }

  struct Cache {
    int n = 0;
    std::vector<int> vdot_arg;              // v_in
    std::vector<int> rrow_arg, rcol_arg;    // n * r_in
    Mlp::Cache c0;
    std::vector<Mlp::Cache> c1;             // per node
    std::vector<Mlp::Cache> c2;             // per ordered pair
    std::vector<double> g_pre, v_pre, r_pre;
  };

  // g: g_in; v: n x v_in; r: n x n x r_in. Outputs sized g_out, n x v_out,
  // n x n x r_out; ReLU applied to all three.
  void forward(int n, const std::vector<double>& g,
               const std::vector<double>& v, const std::vector<double>& r,
               std::vector<double>* g_next, std::vector<double>* v_next,
               std::vector<double>* r_next, Cache* cache) const {
    if (n < 1) throw std::invalid_argument("NlmLayer: need >= 1 entity");
    if (static_cast<int>(g.size()) != g_in ||
        static_cast<int>(v.size()) != n * v_in ||
        static_cast<int>(r.size()) != n * n * r_in)
      throw std::invalid_argument("NlmLayer: input shape mismatch");

    std::vector<int> vdot_arg;
    std::vector<double> v_dot = maxpool_rows(v.data(), n, v_in, &vdot_arg);

    std::vector<double> r_row(static_cast<std::size_t>(n) * r_in);
    std::vector<double> r_col(static_cast<std::size_t>(n) * r_in);
    std::vector<int> rrow_arg(static_cast<std::size_t>(n) * r_in, 0);
    std::vector<int> rcol_arg(static_cast<std::size_t>(n) * r_in, 0);
    for (int a = 0; a < n; ++a)
      for (int k = 0; k < r_in; ++k) {
        double best_row = r[(static_cast<std::size_t>(a) * n + 0) * r_in + k];
        double best_col = r[(static_cast<std::size_t>(0) * n + a) * r_in + k];
        int arg_row = 0, arg_col = 0;
        for (int b = 1; b < n; ++b) {
          double xr = r[(static_cast<std::size_t>(a) * n + b) * r_in + k];
          if (xr > best_row) {
            best_row = xr;
            arg_row = b;
          }
          double xc = r[(static_cast<std::size_t>(b) * n + a) * r_in + k];
          if (xc > best_col) {
            best_col = xc;
            arg_col = b;
          }
        }
        r_row[static_cast<std::size_t>(a) * r_in + k] = best_row;
        r_col[static_cast<std::size_t>(a) * r_in + k] = best_col;
        rrow_arg[static_cast<std::size_t>(a) * r_in + k] = arg_row;
        rcol_arg[static_cast<std::size_t>(a) * r_in + k] = arg_col;
      }

    if (cache) {
      cache->n = n;
      cache->vdot_arg = vdot_arg;
      cache->rrow_arg = rrow_arg;
      cache->rcol_arg = rcol_arg;
      cache->c1.assign(static_cast<std::size_t>(n), {});
      cache->c2.assign(static_cast<std::size_t>(n) * n, {});
    }

    // nullary path
    std::vector<double> in0;
    in0.reserve(static_cast<std::size_t>(g_in + v_in));
    in0.insert(in0.end(), g.begin(), g.end());
    in0.insert(in0.end(), v_dot.begin(), v_dot.end());
    std::vector<double> g_z = m0.forward(in0, cache ? &cache->c0 : nullptr);
    if (cache) cache->g_pre = g_z;
    g_next->resize(static_cast<std::size_t>(g_out));
    for (int k = 0; k < g_out; ++k)
      (*g_next)[static_cast<std::size_t>(k)] =
          relu(g_z[static_cast<std::size_t>(k)]);

    // unary path
    v_next->assign(static_cast<std::size_t>(n) * v_out, 0.0);
    if (cache) cache->v_pre.assign(static_cast<std::size_t>(n) * v_out, 0.0);
    for (int a = 0; a < n; ++a) {
      std::vector<double> in1;
      in1.reserve(static_cast<std::size_t>(g_in + v_in + 2 * r_in));
      in1.insert(in1.end(), g.begin(), g.end());
      in1.insert(in1.end(), v.begin() + static_cast<std::size_t>(a) * v_in,
                 v.begin() + static_cast<std::size_t>(a + 1) * v_in);
      in1.insert(in1.end(), r_row.begin() + static_cast<std::size_t>(a) * r_in,
                 r_row.begin() + static_cast<std::size_t>(a + 1) * r_in);
      in1.insert(in1.end(), r_col.begin() + static_cast<std::size_t>(a) * r_in,
                 r_col.begin() + static_cast<std::size_t>(a + 1) * r_in);
      std::vector<double> z =
          m1.forward(in1, cache ? &cache->c1[static_cast<std::size_t>(a)]
                                : nullptr);
      for (int k = 0; k < v_out; ++k) {
        if (cache)
          cache->v_pre[static_cast<std::size_t>(a) * v_out + k] =
              z[static_cast<std::size_t>(k)];
        (*v_next)[static_cast<std::size_t>(a) * v_out + k] =
            relu(z[static_cast<std::size_t>(k)]);
      }
    }

    // binary path
    r_next->assign(static_cast<std::size_t>(n) * n * r_out, 0.0);
    if (cache)
      cache->r_pre.assign(static_cast<std::size_t>(n) * n * r_out, 0.0);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        std::vector<double> in2;
        in2.reserve(static_cast<std::size_t>(2 * v_in + 2 * r_in));
        in2.insert(in2.end(), v.begin() + static_cast<std::size_t>(a) * v_in,
                   v.begin() + static_cast<std::size_t>(a + 1) * v_in);
        in2.insert(in2.end(), v.begin() + static_cast<std::size_t>(b) * v_in,
                   v.begin() + static_cast<std::size_t>(b + 1) * v_in);
        const std::size_t ab = (static_cast<std::size_t>(a) * n + b) * r_in;
        const std::size_t ba = (static_cast<std::size_t>(b) * n + a) * r_in;
        in2.insert(in2.end(), r.begin() + ab, r.begin() + ab + r_in);
        in2.insert(in2.end(), r.begin() + ba, r.begin() + ba + r_in);
        std::vector<double> z = m2.forward(
            in2,
            cache ? &cache->c2[static_cast<std::size_t>(a) * n + b] : nullptr);
        const std::size_t out_off = (static_cast<std::size_t>(a) * n + b) * r_out;
        for (int k = 0; k < r_out; ++k) {
          if (cache) cache->r_pre[out_off + k] = z[static_cast<std::size_t>(k)];
          (*r_next)[out_off + k] = relu(z[static_cast<std::size_t>(k)]);
        }
      }
  }

  // Backward for the layer; accumulates MLP parameter grads and writes input
  // gradients (sized like the inputs).
  void backward(const Cache& cache, const std::vector<double>& dg_next,
                const std::vector<double>& dv_next,
                const std::vector<double>& dr_next, std::vector<double>* dg,
                std::vector<double>* dv, std::vector<double>* dr) {
    const int n = cache.n;
    dg->assign(static_cast<std::size_t>(g_in), 0.0);
    dv->assign(static_cast<std::size_t>(n) * v_in, 0.0);
    dr->assign(static_cast<std::size_t>(n) * n * r_in, 0.0);
    std::vector<double> dv_dot(static_cast<std::size_t>(v_in), 0.0);
    std::vector<double> dr_row(static_cast<std::size_t>(n) * r_in, 0.0);
    std::vector<double> dr_col(static_cast<std::size_t>(n) * r_in, 0.0);

    // binary path
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const std::size_t pair = static_cast<std::size_t>(a) * n + b;
        std::vector<double> dz(static_cast<std::size_t>(r_out));
        bool any = false;
        for (int k = 0; k < r_out; ++k) {
          double gk = dr_next[pair * r_out + k];
          if (cache.r_pre[pair * r_out + k] <= 0.0) gk = 0.0;
          dz[static_cast<std::size_t>(k)] = gk;
          any = any || gk != 0.0;
        }
        if (!any) continue;
        std::vector<double> din = m2.backward(cache.c2[pair], dz);
        for (int k = 0; k < v_in; ++k) {
          (*dv)[static_cast<std::size_t>(a) * v_in + k] +=
              din[static_cast<std::size_t>(k)];
          (*dv)[static_cast<std::size_t>(b) * v_in + k] +=
              din[static_cast<std::size_t>(v_in + k)];
        }
        const std::size_t ab = (static_cast<std::size_t>(a) * n + b) * r_in;
        const std::size_t ba = (static_cast<std::size_t>(b) * n + a) * r_in;
        for (int k = 0; k < r_in; ++k) {
          (*dr)[ab + k] += din[static_cast<std::size_t>(2 * v_in + k)];
          (*dr)[ba + k] += din[static_cast<std::size_t>(2 * v_in + r_in + k)];
        }
      }

    // unary path
    for (int a = 0; a < n; ++a) {
      std::vector<double> dz(static_cast<std::size_t>(v_out));
      bool any = false;
      for (int k = 0; k < v_out; ++k) {
        double gk = dv_next[static_cast<std::size_t>(a) * v_out + k];
        if (cache.v_pre[static_cast<std::size_t>(a) * v_out + k] <= 0.0)
          gk = 0.0;
        dz[static_cast<std::size_t>(k)] = gk;
        any = any || gk != 0.0;
      }
      if (!any) continue;
      std::vector<double> din =
          m1.backward(cache.c1[static_cast<std::size_t>(a)], dz);
      for (int k = 0; k < g_in; ++k)
        (*dg)[static_cast<std::size_t>(k)] += din[static_cast<std::size_t>(k)];
      for (int k = 0; k < v_in; ++k)
        (*dv)[static_cast<std::size_t>(a) * v_in + k] +=
            din[static_cast<std::size_t>(g_in + k)];
      for (int k = 0; k < r_in; ++k) {
        dr_row[static_cast<std::size_t>(a) * r_in + k] +=
            din[static_cast<std::size_t>(g_in + v_in + k)];
        dr_col[static_cast<std::size_t>(a) * r_in + k] +=
            din[static_cast<std::size_t>(g_in + v_in + r_in + k)];
      }
    }

    // nullary path
    {
      std::vector<double> dz(static_cast<std::size_t>(g_out));
      for (int k = 0; k < g_out; ++k) {
        double gk = dg_next[static_cast<std::size_t>(k)];
        if (cache.g_pre[static_cast<std::size_t>(k)] <= 0.0) gk = 0.0;
        dz[static_cast<std::size_t>(k)] = gk;
      }
      std::vector<double> din = m0.backward(cache.c0, dz);
      for (int k = 0; k < g_in; ++k)
        (*dg)[static_cast<std::size_t>(k)] += din[static_cast<std::size_t>(k)];
      for (int k = 0; k < v_in; ++k)
        dv_dot[static_cast<std::size_t>(k)] +=
            din[static_cast<std::size_t>(g_in + k)];
    }

    // route aggregate gradients through the argmaxes
    for (int k = 0; k < v_in; ++k)
      (*dv)[static_cast<std::size_t>(cache.vdot_arg[static_cast<std::size_t>(k)]) *
                v_in +
            k] += dv_dot[static_cast<std::size_t>(k)];
    for (int a = 0; a < n; ++a)
      for (int k = 0; k < r_in; ++k) {
        int brow = cache.rrow_arg[static_cast<std::size_t>(a) * r_in + k];
        (*dr)[(static_cast<std::size_t>(a) * n + brow) * r_in + k] +=
            dr_row[static_cast<std::size_t>(a) * r_in + k];
        int bcol = cache.rcol_arg[static_cast<std::size_t>(a) * r_in + k];
        (*dr)[(static_cast<std::size_t>(bcol) * n + a) * r_in + k] +=
            dr_col[static_cast<std::size_t>(a) * r_in + k];
      }
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    m0.collect_params(prefix + ".nullary", out);
    m1.collect_params(prefix + ".unary", out);
    m2.collect_params(prefix + ".binary", out);
  }
};

}  // namespace gtg

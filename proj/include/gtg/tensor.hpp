#pragma once
// Dense-tensor numerical core in 64-bit floats: MLP with explicit backward,
// softmax, feature-wise max pooling, a reference 3x3 convolution, RMSprop,
// finite-difference gradient checking, and bit-exact checkpoint I/O.
//
// Gradients are hand-written per layer (no tape); every backward path is
// verified against central finite differences in the test suites.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gtg/common.hpp"

namespace gtg {

struct Tensor {
  std::vector<int> shape;   // up to 4 dims
  std::vector<double> v;    // values, row-major contiguous
  std::vector<double> g;    // gradient buffer, same length as v

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.v.assign(t.count(), 0.0);
    t.g.assign(t.count(), 0.0);
    return t;
  }
  std::size_t count() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

// Named parameter handle; models expose their tensors through these for
// optimizer steps, checkpointing and gradient checks.
struct ParamRef {
  std::string name;
  Tensor* t = nullptr;
};

inline std::size_t param_count(const std::vector<ParamRef>& ps) {
  std::size_t n = 0;
  for (const auto& p : ps) n += p.t->count();
  return n;
}

inline void zero_grads(const std::vector<ParamRef>& ps) {
  for (const auto& p : ps) p.t->zero_grad();
}

// Glorot-uniform init in +-sqrt(6/(fan_in+fan_out)).
inline void glorot_init(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : t.v) x = rng.uniform(-limit, limit);
}

// --- elementwise -----------------------------------------------------------

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double m = logits[0];
  for (double x : logits) {
    if (std::isnan(x)) throw std::invalid_argument("softmax: NaN input");
    m = std::max(m, x);
  }
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

inline double entropy(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

// Feature-wise max over N rows of width D. Ties route the subgradient to the
// lowest row index.
inline std::vector<double> maxpool_rows(const double* rows, int n, int d,
                                        std::vector<int>* argmax = nullptr) {
  if (n < 1) throw std::invalid_argument("maxpool_rows: empty node set");
  std::vector<double> out(rows, rows + d);
  if (argmax) argmax->assign(static_cast<std::size_t>(d), 0);
  for (int i = 1; i < n; ++i)
    for (int c = 0; c < d; ++c) {
      double x = rows[static_cast<std::size_t>(i) * d + c];
      if (x > out[static_cast<std::size_t>(c)]) {
        out[static_cast<std::size_t>(c)] = x;
        if (argmax) (*argmax)[static_cast<std::size_t>(c)] = i;
      }
    }
  return out;
}

// --- MLP --------------------------------------------------------------------

// Affine chains with ReLU on hidden layers and identity output.
struct Mlp {
  std::vector<Tensor> w;  // [out x in]
  std::vector<Tensor> b;  // [out]
  std::vector<int> dims;  // in, hidden..., out

  static Mlp make(std::vector<int> dims, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp: need >= 2 dims");
    Mlp m;
    m.dims = std::move(dims);
    for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
      Tensor wt = Tensor::zeros({m.dims[l + 1], m.dims[l]});
      glorot_init(wt, m.dims[l], m.dims[l + 1], rng);
      m.w.push_back(std::move(wt));
      m.b.push_back(Tensor::zeros({m.dims[l + 1]}));
    }
    return m;
  }

  int in_dim() const { return dims.front(); }
  int out_dim() const { return dims.back(); }

  struct Cache {
    // layer inputs (post-activation of the previous layer) per affine layer,
    // plus each layer's pre-activation output.
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> preacts;
  };

  std::vector<double> forward(const std::vector<double>& x,
                              Cache* cache = nullptr) const {
    if (static_cast<int>(x.size()) != in_dim())
      throw std::invalid_argument("Mlp::forward: input dim mismatch");
    std::vector<double> cur = x;
    if (cache) {
      cache->inputs.clear();
      cache->preacts.clear();
    }
    for (std::size_t l = 0; l < w.size(); ++l) {
      const int din = dims[l], dout = dims[l + 1];
      std::vector<double> z(static_cast<std::size_t>(dout));
      const double* wm = w[l].v.data();
      for (int o = 0; o < dout; ++o) {
        double acc = b[l].v[static_cast<std::size_t>(o)];
        const double* row = wm + static_cast<std::size_t>(o) * din;
        for (int i = 0; i < din; ++i) acc += row[i] * cur[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(o)] = acc;
      }
      if (cache) {
        cache->inputs.push_back(cur);
        cache->preacts.push_back(z);
      }
      if (l + 1 < w.size())
        for (double& t : z) t = relu(t);
      cur = std::move(z);
    }
    return cur;
  }

  // Accumulates parameter gradients into w/b grad buffers, returns dL/dx.
  std::vector<double> backward(const Cache& cache,
                               const std::vector<double>& dout) {
    std::vector<double> dy = dout;
    for (int l = static_cast<int>(w.size()) - 1; l >= 0; --l) {
      const int din = dims[static_cast<std::size_t>(l)];
      const int dnext = dims[static_cast<std::size_t>(l) + 1];
      const auto& z = cache.preacts[static_cast<std::size_t>(l)];
      if (static_cast<std::size_t>(l) + 1 < w.size())
        for (int o = 0; o < dnext; ++o)
          if (z[static_cast<std::size_t>(o)] <= 0.0)
            dy[static_cast<std::size_t>(o)] = 0.0;
      const auto& xin = cache.inputs[static_cast<std::size_t>(l)];
      std::vector<double> dx(static_cast<std::size_t>(din), 0.0);
      double* wg = w[static_cast<std::size_t>(l)].g.data();
      const double* wm = w[static_cast<std::size_t>(l)].v.data();
      for (int o = 0; o < dnext; ++o) {
        const double go = dy[static_cast<std::size_t>(o)];
        b[static_cast<std::size_t>(l)].g[static_cast<std::size_t>(o)] += go;
        double* wr = wg + static_cast<std::size_t>(o) * din;
        const double* row = wm + static_cast<std::size_t>(o) * din;
        for (int i = 0; i < din; ++i) {
          wr[i] += go * xin[static_cast<std::size_t>(i)];
          dx[static_cast<std::size_t>(i)] += go * row[i];
        }
      }
      dy = std::move(dx);
    }
    return dy;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    for (std::size_t l = 0; l < w.size(); ++l) {
      out.push_back({prefix + ".w" + std::to_string(l), &w[l]});
      out.push_back({prefix + ".b" + std::to_string(l), &b[l]});
    }
  }
};

// --- reference 2D convolution ------------------------------------------------

// Cross-correlation with a 3x3 kernel, zero padding 1, stride 1.
// input: (y*W+x)*Cin+ci, kernel: ((ky*3+kx)*Cin+ci)*Cout+co,
// output: (y*W+x)*Cout+co.
inline void conv2d_forward(int w, int h, int cin, int cout, const double* in,
                           const double* kernel, double* out) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (int ky = 0; ky < 3; ++ky) {
          int yy = y + ky - 1;
          if (yy < 0 || yy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            int xx = x + kx - 1;
            if (xx < 0 || xx >= w) continue;
            const double* ip =
                in + (static_cast<std::size_t>(yy) * w + xx) * cin;
            const double* kp =
                kernel +
                (static_cast<std::size_t>(ky * 3 + kx) * cin) * cout;
            for (int ci = 0; ci < cin; ++ci)
              acc += ip[ci] * kp[static_cast<std::size_t>(ci) * cout + co];
          }
        }
        out[(static_cast<std::size_t>(y) * w + x) * cout + co] = acc;
      }
}

inline void conv2d_backward(int w, int h, int cin, int cout, const double* in,
                            const double* kernel, const double* dout,
                            double* din, double* dkernel) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < cout; ++co) {
        const double go =
            dout[(static_cast<std::size_t>(y) * w + x) * cout + co];
        if (go == 0.0) continue;
        for (int ky = 0; ky < 3; ++ky) {
          int yy = y + ky - 1;
          if (yy < 0 || yy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            int xx = x + kx - 1;
            if (xx < 0 || xx >= w) continue;
            const std::size_t ioff =
                (static_cast<std::size_t>(yy) * w + xx) * cin;
            const std::size_t koff =
                (static_cast<std::size_t>(ky * 3 + kx) * cin) * cout;
            for (int ci = 0; ci < cin; ++ci) {
              if (din)
                din[ioff + ci] +=
                    go * kernel[koff + static_cast<std::size_t>(ci) * cout + co];
              if (dkernel)
                dkernel[koff + static_cast<std::size_t>(ci) * cout + co] +=
                    go * in[ioff + ci];
            }
          }
        }
      }
}

// --- RMSprop ------------------------------------------------------------------

// acc <- rho*acc + (1-rho)*g^2 ; p <- p - lr*g/(sqrt(acc)+eps)
struct RmspropState {
  double lr = 0.001;
  double rho = 0.99;
  double eps = 1e-5;
  std::vector<std::vector<double>> acc;  // mirrors parameter shapes

  void init(const std::vector<ParamRef>& params) {
    acc.clear();
    for (const auto& p : params)
      acc.emplace_back(p.t->count(), 0.0);
  }

  void step(const std::vector<ParamRef>& params) {
    if (acc.size() != params.size())
      throw std::invalid_argument("RmspropState: call init() first");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& t = *params[i].t;
      auto& a = acc[i];
      if (a.size() != t.count())
        throw std::invalid_argument("RmspropState: accumulator shape mismatch");
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double g = t.g[k];
        a[k] = rho * a[k] + (1.0 - rho) * g * g;
        t.v[k] -= lr * g / (std::sqrt(a[k]) + eps);
      }
    }
  }
};

// Global-norm gradient clipping; returns the pre-clip norm.
inline double clip_grad_norm(const std::vector<ParamRef>& params,
                             double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.t->g) sq += g * g;
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double scale = max_norm / norm;
    for (const auto& p : params)
      for (double& g : p.t->g) g *= scale;
  }
  return norm;
}

// --- finite differences --------------------------------------------------------

// Central finite differences with h = 1e-5 against the analytic gradients
// currently stored in the parameters' grad buffers. Relative error per
// coordinate is |a - n| / max(1, |a|, |n|); returns the maximum.
inline double finite_diff_check(const std::function<double()>& f,
                                const std::vector<ParamRef>& params,
                                double h = 1e-5) {
  double max_rel = 0.0;
  for (const auto& p : params) {
    Tensor& t = *p.t;
    for (std::size_t k = 0; k < t.count(); ++k) {
      const double orig = t.v[k];
      t.v[k] = orig + h;
      const double fp = f();
      t.v[k] = orig - h;
      const double fm = f();
      t.v[k] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = t.g[k];
      const double denom =
          std::max(1.0, std::max(std::fabs(analytic), std::fabs(numeric)));
      max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
    }
  }
  return max_rel;
}

// --- checkpoints ------------------------------------------------------------------

// Versioned binary blob: magic, version, tensor count, then per tensor
// (name length, name, rank, dims, little-endian f64 data). Bit-exact.
namespace ckpt {
constexpr char kMagic[8] = {'G', 'T', 'G', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}
inline void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}
}  // namespace ckpt

inline void save_checkpoint(const std::string& path,
                            const std::vector<ParamRef>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(ckpt::kMagic, 8);
  ckpt::write_u32(os, ckpt::kVersion);
  ckpt::write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    ckpt::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    ckpt::write_u32(os, static_cast<std::uint32_t>(p.t->shape.size()));
    for (int d : p.t->shape)
      ckpt::write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : p.t->v) ckpt::write_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline void load_checkpoint(const std::string& path,
                            const std::vector<ParamRef>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, ckpt::kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = ckpt::read_u32(is);
  if (version != ckpt::kVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  std::uint32_t count = ckpt::read_u32(is);
  if (count != params.size())
    throw std::runtime_error("checkpoint: tensor count mismatch (" +
                             std::to_string(count) + " stored, " +
                             std::to_string(params.size()) + " expected)");
  for (const auto& p : params) {
    std::uint32_t name_len = ckpt::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is || name != p.name)
      throw std::runtime_error("checkpoint: tensor name mismatch, expected '" +
                               p.name + "' got '" + name + "'");
    std::uint32_t rank = ckpt::read_u32(is);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(ckpt::read_u32(is));
    if (shape != p.t->shape)
      throw std::runtime_error("checkpoint: shape mismatch for tensor '" +
                               p.name + "'");
    for (double& v : p.t->v) v = ckpt::read_f64(is);
  }
}

}  // namespace gtg

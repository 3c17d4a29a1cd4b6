#pragma once
// Labeled directed multigraphs with per-node feature vectors, knowledge
// bases over unary/binary predicates, and the conversions between the two.
// Graphs are immutable once built; construction is single-threaded.

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gtg/common.hpp"

namespace gtg {

struct Edge {
  int src = 0;
  int label = 0;
  int dst = 0;
  friend bool operator==(const Edge& a, const Edge& b) {
    return a.src == b.src && a.label == b.label && a.dst == b.dst;
  }
  friend bool operator<(const Edge& a, const Edge& b) {
    if (a.src != b.src) return a.src < b.src;
    if (a.label != b.label) return a.label < b.label;
    return a.dst < b.dst;
  }
};

// Directed multigraph (V, E, R) with node feature vectors of one shared
// dimension. Node ids are dense integers in insertion order; entity names
// live in a side table. Edge triples have set semantics: inserting a
// duplicate is a silent no-op.
class RelationalGraph {
 public:
  int add_node(std::vector<double> features, std::string name = "") {
    if (dim_ < 0) {
      dim_ = static_cast<int>(features.size());
    } else if (static_cast<int>(features.size()) != dim_) {
      throw std::invalid_argument("RelationalGraph: feature dim mismatch");
    }
    feats_.insert(feats_.end(), features.begin(), features.end());
    node_names_.push_back(std::move(name));
    return static_cast<int>(node_names_.size()) - 1;
  }

  int add_label(std::string name) {
    label_names_.push_back(std::move(name));
    return static_cast<int>(label_names_.size()) - 1;
  }

  // Returns false (and does nothing) when the triple already exists.
  bool add_edge(int src, int label, int dst) {
    check_node(src);
    check_node(dst);
    if (label < 0 || label >= label_count())
      throw std::out_of_range("RelationalGraph: bad label id");
    std::uint64_t key = edge_key(src, label, dst);
    if (!edge_keys_.insert(key).second) return false;
    edges_.push_back(Edge{src, label, dst});
    return true;
  }

  bool has_edge(int src, int label, int dst) const {
    return edge_keys_.count(edge_key(src, label, dst)) > 0;
  }

  int node_count() const { return static_cast<int>(node_names_.size()); }
  int label_count() const { return static_cast<int>(label_names_.size()); }
  int feature_dim() const { return dim_ < 0 ? 0 : dim_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::string>& label_names() const { return label_names_; }
  const std::vector<std::string>& node_names() const { return node_names_; }

  const double* features_of(int node) const {
    check_node(node);
    return feats_.data() + static_cast<std::size_t>(node) * feature_dim();
  }
  const std::vector<double>& feature_data() const { return feats_; }

  double feature(int node, int c) const { return features_of(node)[c]; }

  std::vector<long long> per_label_edge_counts() const {
    std::vector<long long> counts(static_cast<std::size_t>(label_count()), 0);
    for (const Edge& e : edges_) ++counts[static_cast<std::size_t>(e.label)];
    return counts;
  }

  friend bool operator==(const RelationalGraph& a, const RelationalGraph& b) {
    return a.dim_ == b.dim_ && a.feats_ == b.feats_ &&
           a.label_names_ == b.label_names_ && a.edges_ == b.edges_;
  }

 private:
  void check_node(int n) const {
    if (n < 0 || n >= node_count())
      throw std::out_of_range("RelationalGraph: bad node id");
  }
  static std::uint64_t edge_key(int src, int label, int dst) {
    // nodes < 2^24, labels < 2^16 -- ample for grids plus concept nodes.
    return (static_cast<std::uint64_t>(src) << 40) |
           (static_cast<std::uint64_t>(label) << 24) |
           static_cast<std::uint64_t>(dst);
  }

  int dim_ = -1;
  std::vector<double> feats_;
  std::vector<std::string> node_names_;
  std::vector<std::string> label_names_;
  std::vector<Edge> edges_;
  std::unordered_set<std::uint64_t> edge_keys_;
};

// Knowledge base K = (E, P, R, A1, A2): entities, unary predicates, binary
// predicates and the duplicate-free atom sets over them.
class KnowledgeBase {
 public:
  int add_entity(const std::string& name) {
    return add_name(name, entities_, entity_idx_, "entity");
  }
  int add_unary_pred(const std::string& name) {
    return add_name(name, unary_preds_, unary_idx_, "unary predicate");
  }
  int add_binary_pred(const std::string& name) {
    return add_name(name, binary_preds_, binary_idx_, "binary predicate");
  }

  bool add_unary_atom(int pred, int entity) {
    check(pred, unary_preds_.size(), "unary predicate");
    check(entity, entities_.size(), "entity");
    std::uint64_t key = (static_cast<std::uint64_t>(pred) << 32) |
                        static_cast<std::uint64_t>(entity);
    if (!unary_keys_.insert(key).second) return false;
    unary_atoms_.push_back({pred, entity});
    return true;
  }
  bool add_unary_atom(const std::string& pred, const std::string& entity) {
    return add_unary_atom(lookup(pred, unary_idx_, "unary predicate"),
                          lookup(entity, entity_idx_, "entity"));
  }

  bool add_binary_atom(int pred, int e1, int e2) {
    check(pred, binary_preds_.size(), "binary predicate");
    check(e1, entities_.size(), "entity");
    check(e2, entities_.size(), "entity");
    std::uint64_t key = (static_cast<std::uint64_t>(pred) << 48) |
                        (static_cast<std::uint64_t>(e1) << 24) |
                        static_cast<std::uint64_t>(e2);
    if (!binary_keys_.insert(key).second) return false;
    binary_atoms_.push_back({pred, e1, e2});
    return true;
  }
  bool add_binary_atom(const std::string& pred, const std::string& e1,
                       const std::string& e2) {
    return add_binary_atom(lookup(pred, binary_idx_, "binary predicate"),
                           lookup(e1, entity_idx_, "entity"),
                           lookup(e2, entity_idx_, "entity"));
  }

  bool has_unary_atom(int pred, int entity) const {
    std::uint64_t key = (static_cast<std::uint64_t>(pred) << 32) |
                        static_cast<std::uint64_t>(entity);
    return unary_keys_.count(key) > 0;
  }

  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& unary_preds() const { return unary_preds_; }
  const std::vector<std::string>& binary_preds() const {
    return binary_preds_;
  }
  const std::vector<std::array<int, 2>>& unary_atoms() const {
    return unary_atoms_;
  }
  const std::vector<std::array<int, 3>>& binary_atoms() const {
    return binary_atoms_;
  }
  int entity_index(const std::string& name) const {
    return lookup(name, entity_idx_, "entity");
  }

  // Set-wise equality: declaration lists must match exactly, atom sets are
  // compared order-insensitively.
  friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b) {
    auto sorted = [](auto v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    return a.entities_ == b.entities_ && a.unary_preds_ == b.unary_preds_ &&
           a.binary_preds_ == b.binary_preds_ &&
           sorted(a.unary_atoms_) == sorted(b.unary_atoms_) &&
           sorted(a.binary_atoms_) == sorted(b.binary_atoms_);
  }

 private:
  static int add_name(const std::string& name, std::vector<std::string>& list,
                      std::unordered_map<std::string, int>& idx,
                      const char* what) {
    if (name.empty() || name.find_first_of(" \t(),") != std::string::npos)
      throw std::invalid_argument(std::string("KnowledgeBase: bad ") + what +
                                  " name '" + name + "'");
    auto it = idx.find(name);
    if (it != idx.end()) return it->second;
    list.push_back(name);
    idx.emplace(name, static_cast<int>(list.size()) - 1);
    return static_cast<int>(list.size()) - 1;
  }
  static int lookup(const std::string& name,
                    const std::unordered_map<std::string, int>& idx,
                    const char* what) {
    auto it = idx.find(name);
    if (it == idx.end())
      throw std::invalid_argument(std::string("KnowledgeBase: unknown ") +
                                  what + " '" + name + "'");
    return it->second;
  }
  static void check(int i, std::size_t n, const char* what) {
    if (i < 0 || static_cast<std::size_t>(i) >= n)
      throw std::out_of_range(std::string("KnowledgeBase: bad ") + what +
                              " id");
  }

  std::vector<std::string> entities_, unary_preds_, binary_preds_;
  std::unordered_map<std::string, int> entity_idx_, unary_idx_, binary_idx_;
  std::vector<std::array<int, 2>> unary_atoms_;
  std::vector<std::array<int, 3>> binary_atoms_;
  std::unordered_set<std::uint64_t> unary_keys_, binary_keys_;
};

// One node per entity in declaration order, one relation label per binary
// predicate, one edge per binary atom (first argument is the edge source).
// Feature dimension is |P| with feature[n] = 1 iff the atom p_n(e) exists.
inline RelationalGraph kb_to_graph(const KnowledgeBase& kb) {
  RelationalGraph g;
  const int p = static_cast<int>(kb.unary_preds().size());
  for (std::size_t e = 0; e < kb.entities().size(); ++e) {
    std::vector<double> f(static_cast<std::size_t>(p), 0.0);
    for (int n = 0; n < p; ++n)
      if (kb.has_unary_atom(n, static_cast<int>(e))) f[n] = 1.0;
    g.add_node(std::move(f), kb.entities()[e]);
  }
  for (const std::string& r : kb.binary_preds()) g.add_label(r);
  for (const auto& a : kb.binary_atoms()) g.add_edge(a[1], a[0], a[2]);
  return g;
}

// Inverse of kb_to_graph on its image. Features must be exactly 0/1 valued.
inline KnowledgeBase graph_to_kb(const RelationalGraph& g,
                                 const std::vector<std::string>& unary_names,
                                 const std::vector<std::string>& binary_names) {
  if (static_cast<int>(unary_names.size()) != g.feature_dim())
    throw std::invalid_argument(
        "graph_to_kb: |unary_names| != feature dimension");
  if (static_cast<int>(binary_names.size()) != g.label_count())
    throw std::invalid_argument("graph_to_kb: |binary_names| != label count");
  KnowledgeBase kb;
  for (int i = 0; i < g.node_count(); ++i) {
    std::string name = g.node_names()[static_cast<std::size_t>(i)];
    if (name.empty()) name = "e" + std::to_string(i);
    kb.add_entity(name);
  }
  for (const auto& n : unary_names) kb.add_unary_pred(n);
  for (const auto& n : binary_names) kb.add_binary_pred(n);
  for (int i = 0; i < g.node_count(); ++i) {
    for (int c = 0; c < g.feature_dim(); ++c) {
      double v = g.feature(i, c);
      if (v != 0.0 && v != 1.0) {
        std::ostringstream os;
        os << "graph_to_kb: non-binary feature value " << v << " at node " << i
           << " position " << c;
        throw std::invalid_argument(os.str());
      }
      if (v == 1.0) kb.add_unary_atom(c, i);
    }
  }
  for (const Edge& e : g.edges()) kb.add_binary_atom(e.label, e.src, e.dst);
  return kb;
}

// Merges `extra` into `base`. Mapped extra nodes collapse onto existing base
// nodes; unmapped extra nodes are appended in extra order. Labels from extra
// are namespaced ("<ns>:<name>") and never share parameters with base labels.
// Feature dimensions concatenate: base nodes keep extra's slots zero unless
// mapped, appended nodes keep base's slots zero.
inline RelationalGraph merge_graphs(const RelationalGraph& base,
                                    const RelationalGraph& extra,
                                    const std::map<int, int>& node_mapping,
                                    const std::string& ns = "x") {
  const int bd = base.feature_dim();
  const int xd = extra.feature_dim();
  for (const auto& [xn, bn] : node_mapping) {
    if (xn < 0 || xn >= extra.node_count())
      throw std::out_of_range("merge_graphs: mapping from nonexistent node");
    if (bn < 0 || bn >= base.node_count())
      throw std::out_of_range("merge_graphs: mapping to nonexistent node");
  }

  RelationalGraph out;
  std::vector<int> extra_to_out(static_cast<std::size_t>(extra.node_count()),
                                -1);
  std::vector<int> base_to_extra(static_cast<std::size_t>(base.node_count()),
                                 -1);
  for (const auto& [xn, bn] : node_mapping) {
    extra_to_out[static_cast<std::size_t>(xn)] = bn;
    base_to_extra[static_cast<std::size_t>(bn)] = xn;
  }

  // Mapped nodes carry their extra-namespace features into the base node.
  for (int i = 0; i < base.node_count(); ++i) {
    std::vector<double> f(static_cast<std::size_t>(bd + xd), 0.0);
    for (int c = 0; c < bd; ++c) f[static_cast<std::size_t>(c)] =
        base.feature(i, c);
    int xn = base_to_extra[static_cast<std::size_t>(i)];
    if (xn >= 0)
      for (int c = 0; c < xd; ++c)
        f[static_cast<std::size_t>(bd + c)] = extra.feature(xn, c);
    out.add_node(std::move(f), base.node_names()[static_cast<std::size_t>(i)]);
  }

  for (int i = 0; i < extra.node_count(); ++i) {
    if (extra_to_out[static_cast<std::size_t>(i)] >= 0) continue;
    std::vector<double> f(static_cast<std::size_t>(bd + xd), 0.0);
    for (int c = 0; c < xd; ++c) f[bd + c] = extra.feature(i, c);
    extra_to_out[static_cast<std::size_t>(i)] = out.add_node(
        std::move(f), extra.node_names()[static_cast<std::size_t>(i)]);
  }

  for (const std::string& l : base.label_names()) out.add_label(l);
  std::vector<int> label_map(static_cast<std::size_t>(extra.label_count()));
  for (int l = 0; l < extra.label_count(); ++l)
    label_map[static_cast<std::size_t>(l)] = out.add_label(
        ns + ":" + extra.label_names()[static_cast<std::size_t>(l)]);

  for (const Edge& e : base.edges()) out.add_edge(e.src, e.label, e.dst);
  for (const Edge& e : extra.edges())
    out.add_edge(extra_to_out[static_cast<std::size_t>(e.src)],
                 label_map[static_cast<std::size_t>(e.label)],
                 extra_to_out[static_cast<std::size_t>(e.dst)]);
  return out;
}

// --- Text formats ---------------------------------------------------------
//
// Graph: line 1 "nodes N labels L dim C"; N feature lines of C values; one
// line per edge "src label dst"; trailing "#label i name" comments.
// KB: declaration headers then one atom per line, "pred(e)" or "pred(e1,e2)".

inline std::string serialize_graph(const RelationalGraph& g) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "nodes " << g.node_count() << " labels " << g.label_count() << " dim "
     << g.feature_dim() << "\n";
  for (int i = 0; i < g.node_count(); ++i) {
    for (int c = 0; c < g.feature_dim(); ++c) {
      if (c) os << ' ';
      os << g.feature(i, c);
    }
    os << "\n";
  }
  for (const Edge& e : g.edges())
    os << e.src << ' ' << e.label << ' ' << e.dst << "\n";
  for (int l = 0; l < g.label_count(); ++l)
    os << "#label " << l << ' ' << g.label_names()[static_cast<std::size_t>(l)]
       << "\n";
  return os.str();
}

inline RelationalGraph deserialize_graph(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw std::runtime_error("graph parse error at line " +
                             std::to_string(lineno) + ": " + msg);
  };
  auto next_line = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    ++lineno;
    return true;
  };

  if (!next_line()) {
    lineno = 1;
    fail("missing header");
  }
  auto head = split_ws(line);
  long long n = 0, l = 0, c = 0;
  if (head.size() != 6 || head[0] != "nodes" || head[2] != "labels" ||
      head[4] != "dim")
    fail("expected 'nodes N labels L dim C'");
  try {
    n = std::stoll(head[1]);
    l = std::stoll(head[3]);
    c = std::stoll(head[5]);
  } catch (const std::exception&) {
    fail("non-numeric header field");
  }
  if (n < 0 || l < 0 || c < 0) fail("negative header field");

  RelationalGraph g;
  std::vector<std::string> label_names(static_cast<std::size_t>(l));
  for (long long i = 0; i < l; ++i)
    label_names[static_cast<std::size_t>(i)] = "label" + std::to_string(i);

  for (long long i = 0; i < n; ++i) {
    if (!next_line()) {
      ++lineno;
      fail("missing feature line");
    }
    auto toks = split_ws(line);
    if (static_cast<long long>(toks.size()) != c)
      fail("expected " + std::to_string(c) + " feature values");
    std::vector<double> f(static_cast<std::size_t>(c));
    for (std::size_t k = 0; k < toks.size(); ++k) {
      try {
        f[k] = std::stod(toks[k]);
      } catch (const std::exception&) {
        fail("bad feature value '" + toks[k] + "'");
      }
    }
    g.add_node(std::move(f));
  }
  for (long long i = 0; i < l; ++i) g.add_label("");

  while (next_line()) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto toks = split_ws(line);
      if (toks.size() == 3 && toks[0] == "#label") {
        long long idx = -1;
        try {
          idx = std::stoll(toks[1]);
        } catch (const std::exception&) {
          fail("bad label index");
        }
        if (idx < 0 || idx >= l) fail("label index out of range");
        label_names[static_cast<std::size_t>(idx)] = toks[2];
      }
      continue;
    }
    auto toks = split_ws(line);
    if (toks.size() != 3) fail("expected 'src label dst'");
    long long s = 0, lb = 0, d = 0;
    try {
      s = std::stoll(toks[0]);
      lb = std::stoll(toks[1]);
      d = std::stoll(toks[2]);
    } catch (const std::exception&) {
      fail("non-numeric edge field");
    }
    if (s < 0 || s >= n || d < 0 || d >= n) fail("edge node out of range");
    if (lb < 0 || lb >= l) fail("edge label out of range");
    g.add_edge(static_cast<int>(s), static_cast<int>(lb), static_cast<int>(d));
  }

  RelationalGraph named;
  for (int i = 0; i < g.node_count(); ++i) {
    std::vector<double> f(g.features_of(i), g.features_of(i) + g.feature_dim());
    named.add_node(std::move(f));
  }
  for (auto& nm : label_names) named.add_label(std::move(nm));
  for (const Edge& e : g.edges()) named.add_edge(e.src, e.label, e.dst);
  return named;
}

inline std::string serialize_kb(const KnowledgeBase& kb) {
  std::ostringstream os;
  auto emit_list = [&](const char* tag, const std::vector<std::string>& xs) {
    os << tag;
    for (const auto& x : xs) os << ' ' << x;
    os << "\n";
  };
  emit_list("entities", kb.entities());
  emit_list("unary", kb.unary_preds());
  emit_list("binary", kb.binary_preds());
  for (const auto& a : kb.unary_atoms())
    os << kb.unary_preds()[static_cast<std::size_t>(a[0])] << '('
       << kb.entities()[static_cast<std::size_t>(a[1])] << ")\n";
  for (const auto& a : kb.binary_atoms())
    os << kb.binary_preds()[static_cast<std::size_t>(a[0])] << '('
       << kb.entities()[static_cast<std::size_t>(a[1])] << ','
       << kb.entities()[static_cast<std::size_t>(a[2])] << ")\n";
  return os.str();
}

inline KnowledgeBase deserialize_kb(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  KnowledgeBase kb;
  auto fail = [&](const std::string& msg) -> void {
    throw std::runtime_error("kb parse error at line " +
                             std::to_string(lineno) + ": " + msg);
  };
  bool have_entities = false, have_unary = false, have_binary = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto toks = split_ws(line);
    if (toks[0] == "entities") {
      for (std::size_t i = 1; i < toks.size(); ++i) kb.add_entity(toks[i]);
      have_entities = true;
      continue;
    }
    if (toks[0] == "unary") {
      for (std::size_t i = 1; i < toks.size(); ++i) kb.add_unary_pred(toks[i]);
      have_unary = true;
      continue;
    }
    if (toks[0] == "binary") {
      for (std::size_t i = 1; i < toks.size(); ++i)
        kb.add_binary_pred(toks[i]);
      have_binary = true;
      continue;
    }
    if (!have_entities || !have_unary || !have_binary)
      fail("atom before declaration headers");
    // pred(e) or pred(e1,e2)
    std::size_t open = line.find('(');
    std::size_t close = line.rfind(')');
    if (open == std::string::npos || close == std::string::npos ||
        close < open)
      fail("expected 'pred(e)' or 'pred(e1,e2)'");
    std::string pred = line.substr(0, open);
    std::string args = line.substr(open + 1, close - open - 1);
    std::size_t comma = args.find(',');
    try {
      if (comma == std::string::npos) {
        kb.add_unary_atom(pred, args);
      } else {
        kb.add_binary_atom(pred, args.substr(0, comma),
                           args.substr(comma + 1));
      }
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
  return kb;
}

}  // namespace gtg

#pragma once
// Grid-to-Graph: relation determination rules that turn a W x H feature map
// into a relational graph, closed-form edge counting, and portal rewiring.
//
// Coordinates: x in [0,W), y in [0,H), origin top-left, y grows downward.
// Rule names follow the coordinate algebra, not visual intuition: topAdj(a,b)
// holds when y_a = y_b + 1. Node id of cell (x,y) is y*W + x.
//
// In a relation r(a,b), a is the edge source and b the target; a node's
// update aggregates over edges pointing at it.

#include <array>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gtg/relgraph.hpp"

namespace gtg {

struct GridObservation {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> features;  // indexed (y*width + x)*channels + c

  static GridObservation zeros(int w, int h, int c) {
    GridObservation o;
    o.width = w;
    o.height = h;
    o.channels = c;
    o.features.assign(static_cast<std::size_t>(w) * h * c, 0.0);
    return o;
  }
  double at(int x, int y, int c) const {
    return features[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  double& at(int x, int y, int c) {
    return features[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  int node_of(int x, int y) const { return y * width + x; }
};

// The 14 relation labels in their fixed parameter order. The self-loop is
// not listed: it is the reserved label carried by every model's W_0 term.
enum RuleLabel : int {
  kRightAdj = 0,
  kLeftAdj,
  kTopAdj,
  kBottomAdj,
  kTopRightAdj,
  kTopLeftAdj,
  kBottomRightAdj,
  kBottomLeftAdj,
  kRight,
  kLeft,
  kTop,
  kBottom,
  kAligned,
  kAdjacent,
  kRuleLabelCount
};

inline const std::array<const char*, kRuleLabelCount>& rule_label_names() {
  static const std::array<const char*, kRuleLabelCount> names = {
      "rightAdj", "leftAdj",        "topAdj",        "bottomAdj",
      "topRightAdj", "topLeftAdj",  "bottomRightAdj", "bottomLeftAdj",
      "right",    "left",           "top",           "bottom",
      "aligned",  "adjacent"};
  return names;
}

// Literal rule conditions. Self-pairs are excluded for every rule: the
// self-loop is modeled by the shared W_0 label instead.
inline bool rule_holds(int label, int xa, int ya, int xb, int yb) {
  if (xa == xb && ya == yb) return false;
  switch (label) {
    case kRightAdj: return xa == xb + 1 && ya == yb;
    case kLeftAdj: return xa == xb - 1 && ya == yb;
    case kTopAdj: return ya == yb + 1 && xa == xb;
    case kBottomAdj: return ya == yb - 1 && xa == xb;
    case kTopRightAdj: return xa == xb + 1 && ya == yb + 1;
    case kTopLeftAdj: return xa == xb - 1 && ya == yb + 1;
    case kBottomRightAdj: return xa == xb + 1 && ya == yb - 1;
    case kBottomLeftAdj: return xa == xb - 1 && ya == yb - 1;
    case kRight: return xa > xb;
    case kLeft: return xa < xb;
    case kTop: return ya > yb;
    case kBottom: return ya < yb;
    case kAligned: return xa == xb || ya == yb;
    case kAdjacent:
      return std::abs(xa - xb) <= 1 && std::abs(ya - yb) <= 1;
    default: return false;
  }
}

// Which rule families are enabled. The derived label list keeps the fixed
// global order so parameter indices stay stable across runs.
struct RuleSet {
  bool local = true;
  bool remote = true;
  bool aux = true;

  bool enabled(int label) const {
    if (label < kRight) return local;
    if (label < kAligned) return remote;
    return aux;
  }
  std::vector<int> enabled_labels() const {
    std::vector<int> out;
    for (int l = 0; l < kRuleLabelCount; ++l)
      if (enabled(l)) out.push_back(l);
    return out;
  }
  std::vector<std::string> label_names() const {
    std::vector<std::string> out;
    for (int l : enabled_labels()) out.emplace_back(rule_label_names()[l]);
    return out;
  }
  int label_count() const {
    return static_cast<int>(enabled_labels().size());
  }

  static RuleSet parse(const std::string& families) {
    RuleSet rs{false, false, false};
    for (const auto& tok : split_ws([&] {
           std::string s = families;
           for (char& ch : s)
             if (ch == ',') ch = ' ';
           return s;
         }())) {
      if (tok == "local") rs.local = true;
      else if (tok == "remote") rs.remote = true;
      else if (tok == "aux") rs.aux = true;
      else if (tok == "all") rs.local = rs.remote = rs.aux = true;
      else
        throw std::invalid_argument("RuleSet: unknown rule family '" + tok +
                                    "'");
    }
    return rs;
  }
  std::string to_string() const {
    std::string s;
    auto app = [&](const char* t) {
      if (!s.empty()) s += ',';
      s += t;
    };
    if (local) app("local");
    if (remote) app("remote");
    if (aux) app("aux");
    return s;
  }
};

// One node per cell in row-major order, features copied from the
// observation; an edge (a, r, b) for every enabled rule whose condition
// holds on the ordered pair.
inline RelationalGraph build_graph(const GridObservation& obs,
                                   const RuleSet& rules) {
  if (obs.width < 1 || obs.height < 1)
    throw std::invalid_argument("build_graph: W,H must be >= 1");
  RelationalGraph g;
  for (int y = 0; y < obs.height; ++y)
    for (int x = 0; x < obs.width; ++x) {
      std::vector<double> f(static_cast<std::size_t>(obs.channels));
      for (int c = 0; c < obs.channels; ++c)
        f[static_cast<std::size_t>(c)] = obs.at(x, y, c);
      g.add_node(std::move(f),
                 "cell_" + std::to_string(x) + "_" + std::to_string(y));
    }
  const std::vector<int> labels = rules.enabled_labels();
  std::vector<int> label_id(kRuleLabelCount, -1);
  for (int l : labels) label_id[static_cast<std::size_t>(l)] =
      g.add_label(rule_label_names()[l]);

  for (int ya = 0; ya < obs.height; ++ya)
    for (int xa = 0; xa < obs.width; ++xa)
      for (int yb = 0; yb < obs.height; ++yb)
        for (int xb = 0; xb < obs.width; ++xb)
          for (int l : labels)
            if (rule_holds(l, xa, ya, xb, yb))
              g.add_edge(obs.node_of(xa, ya),
                         label_id[static_cast<std::size_t>(l)],
                         obs.node_of(xb, yb));
  return g;
}

// Closed-form per-label edge counts for a W x H grid; must equal the census
// of build_graph exactly.
inline std::vector<std::pair<std::string, long long>> count_edges(
    int w, int h, const RuleSet& rules) {
  if (w < 1 || h < 1)
    throw std::invalid_argument("count_edges: W,H must be >= 1");
  const long long W = w, H = h;
  auto horizontal = (W - 1) * H;        // one coordinate step along x
  auto vertical = W * (H - 1);          // one step along y
  auto diagonal = (W - 1) * (H - 1);
  std::array<long long, kRuleLabelCount> counts{};
  counts[kRightAdj] = counts[kLeftAdj] = horizontal;
  counts[kTopAdj] = counts[kBottomAdj] = vertical;
  counts[kTopRightAdj] = counts[kTopLeftAdj] = diagonal;
  counts[kBottomRightAdj] = counts[kBottomLeftAdj] = diagonal;
  counts[kRight] = counts[kLeft] = W * (W - 1) / 2 * H * H;
  counts[kTop] = counts[kBottom] = H * (H - 1) / 2 * W * W;
  counts[kAligned] = W * H * (H - 1) + H * W * (W - 1);
  counts[kAdjacent] = 2 * horizontal + 2 * vertical + 4 * diagonal;

  std::vector<std::pair<std::string, long long>> out;
  for (int l : rules.enabled_labels())
    out.emplace_back(rule_label_names()[l],
                     counts[static_cast<std::size_t>(l)]);
  return out;
}

// Portal rewiring: every edge whose target is a portal is replaced by the
// same edge targeting the paired portal; edges out of a portal are kept.
// Duplicates created by the rewrite collapse.
inline RelationalGraph rewire_portals(
    const RelationalGraph& g,
    const std::vector<std::pair<int, int>>& portal_pairs) {
  std::map<int, int> partner;
  for (const auto& [p, q] : portal_pairs) {
    if (p < 0 || p >= g.node_count() || q < 0 || q >= g.node_count())
      throw std::out_of_range("rewire_portals: portal node does not exist");
    if (partner.count(p) || partner.count(q) || p == q)
      throw std::invalid_argument(
          "rewire_portals: node appears in more than one pair");
    partner[p] = q;
    partner[q] = p;
  }
  RelationalGraph out;
  for (int i = 0; i < g.node_count(); ++i) {
    std::vector<double> f(g.features_of(i), g.features_of(i) + g.feature_dim());
    out.add_node(std::move(f), g.node_names()[static_cast<std::size_t>(i)]);
  }
  for (const auto& name : g.label_names()) out.add_label(name);
  for (const Edge& e : g.edges()) {
    auto it = partner.find(e.dst);
    out.add_edge(e.src, e.label, it == partner.end() ? e.dst : it->second);
  }
  return out;
}

}  // namespace gtg

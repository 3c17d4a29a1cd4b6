#pragma once
// Procedurally generated grid environments with a common episodic interface:
// LavaCrossing (levels 1-3), Portal-LavaCrossing, a reduced Box-World, and
// symbolic RTFM with per-episode knowledge bases. Movement actions are
// 0=up (y-1), 1=down (y+1), 2=left, 3=right everywhere; pickups and attacks
// are bump side effects. Every generated instance is checked solvable by its
// oracle at generation time; generation retries with fresh sub-seeds.

#include <algorithm>
#include <array>
#include <deque>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gtg/grid2graph.hpp"
#include "gtg/relgraph.hpp"

namespace gtg {

struct EpisodeConfig {
  std::string family = "lavacrossing";
  int width = 7;
  int height = 7;
  int level = 1;                  // lavacrossing: number of rivers
  std::string variant = "onehop";  // rtfm: onehop | multihop
  int max_steps = 0;              // 0 = family default
};

struct StepOut {
  double reward = 0.0;
  bool done = false;
};

inline const int kDx[4] = {0, 0, -1, 1};
inline const int kDy[4] = {-1, 1, 0, 0};

class Env {
 public:
  virtual ~Env() = default;
  virtual void reset(std::uint64_t seed) = 0;
  virtual StepOut step(int action) = 0;
  virtual GridObservation observe() const = 0;
  virtual int action_count() const { return 4; }
  virtual int width() const = 0;
  virtual int height() const = 0;
  virtual int channels() const = 0;
  virtual int steps_taken() const = 0;
  virtual int max_steps() const = 0;
  virtual bool done() const = 0;
  virtual std::vector<std::string> symbolic_grid() const = 0;
  // Capability hooks for graph assembly.
  virtual std::vector<std::pair<int, int>> portal_pairs() const { return {}; }
  virtual bool has_kb() const { return false; }
  virtual KnowledgeBase kb() const { return {}; }
  // kb entity index -> grid cell node id, for physical entities only.
  virtual std::map<int, int> kb_grounding() const { return {}; }

 protected:
  static void check_action(int a) {
    if (a < 0 || a >= 4)
      throw std::out_of_range("Env::step: invalid action index " +
                              std::to_string(a));
  }
};

// BFS reachability over cells accepted by `passable`; start and goal are
// always visited/accepted as endpoints.
inline bool path_exists(int w, int h, std::pair<int, int> from,
                        std::pair<int, int> to,
                        const std::function<bool(int, int)>& passable) {
  if (from == to) return true;
  std::vector<char> seen(static_cast<std::size_t>(w) * h, 0);
  std::deque<std::pair<int, int>> q{from};
  seen[static_cast<std::size_t>(from.second) * w + from.first] = 1;
  while (!q.empty()) {
    auto [x, y] = q.front();
    q.pop_front();
    for (int d = 0; d < 4; ++d) {
      int nx = x + kDx[d], ny = y + kDy[d];
      if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
      if (seen[static_cast<std::size_t>(ny) * w + nx]) continue;
      if (std::make_pair(nx, ny) == to) return true;
      if (!passable(nx, ny)) continue;
      seen[static_cast<std::size_t>(ny) * w + nx] = 1;
      q.emplace_back(nx, ny);
    }
  }
  return false;
}

// --- LavaCrossing -----------------------------------------------------------

// Bordered grid; `level` full-span lava rivers across the interior, each
// with one random gap. Agent starts top-left, goal is bottom-right. Stepping
// into lava ends the episode with reward 0; reaching the goal pays
// 1 - 0.9*t/T_max. Fully observable; channels [agent, wall, lava, goal,
// portal].
class LavaCrossingEnv : public Env {
 public:
  static constexpr int kChannels = 5;  // agent, wall, lava, goal, portal

  LavaCrossingEnv(int w, int h, int level, int max_steps, bool portal_variant)
      : w_(w), h_(h), level_(level), portal_variant_(portal_variant) {
    if (w < 5 || h < 5)
      throw std::invalid_argument("LavaCrossing: grid must be at least 5x5");
    if (!portal_variant && (level < 1 || level > 3))
      throw std::invalid_argument("LavaCrossing: level must be in {1,2,3}");
    // each river occupies a distinct full-span line strictly inside the walls
    if (!portal_variant && (w - 4) + (h - 4) < level)
      throw std::invalid_argument(
          "LavaCrossing: a " + std::to_string(w) + "x" + std::to_string(h) +
          " grid cannot hold " + std::to_string(level) + " rivers");
    max_steps_ = max_steps > 0 ? max_steps : 4 * w * h;
  }

  void reset(std::uint64_t seed) override {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
      if (try_generate(rng)) {
        agent_ = {1, 1};
        steps_ = 0;
        done_ = false;
        return;
      }
    }
    throw std::runtime_error("LavaCrossing: could not generate a solvable map");
  }

  StepOut step(int action) override {
    check_action(action);
    if (done_) throw std::logic_error("LavaCrossing: episode is done");
    ++steps_;
    int nx = agent_.first + kDx[action];
    int ny = agent_.second + kDy[action];
    StepOut out;
    if (!wall(nx, ny)) {
      if (portal_a_ == std::make_pair(nx, ny)) {
        agent_ = portal_b_;
      } else if (portal_b_ == std::make_pair(nx, ny)) {
        agent_ = portal_a_;
      } else {
        agent_ = {nx, ny};
      }
      if (lava_[cell(agent_.first, agent_.second)]) {
        done_ = true;
        out.done = true;
        return out;  // reward 0
      }
      if (agent_ == goal()) {
        done_ = true;
        out.done = true;
        out.reward = 1.0 - 0.9 * static_cast<double>(steps_) / max_steps_;
        return out;
      }
    }
    if (steps_ >= max_steps_) {
      done_ = true;
      out.done = true;
    }
    return out;
  }

  GridObservation observe() const override {
    GridObservation o = GridObservation::zeros(w_, h_, kChannels);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        if (wall(x, y)) o.at(x, y, 1) = 1.0;
        if (lava_[cell(x, y)]) o.at(x, y, 2) = 1.0;
      }
    o.at(goal().first, goal().second, 3) = 1.0;
    if (portal_variant_) {
      o.at(portal_a_.first, portal_a_.second, 4) = 1.0;
      o.at(portal_b_.first, portal_b_.second, 4) = 1.0;
    }
    o.at(agent_.first, agent_.second, 0) = 1.0;
    return o;
  }

  int width() const override { return w_; }
  int height() const override { return h_; }
  int channels() const override { return kChannels; }
  int steps_taken() const override { return steps_; }
  int max_steps() const override { return max_steps_; }
  bool done() const override { return done_; }

  std::vector<std::pair<int, int>> portal_pairs() const override {
    if (!portal_variant_) return {};
    return {{portal_a_.second * w_ + portal_a_.first,
             portal_b_.second * w_ + portal_b_.first}};
  }

  std::vector<std::string> symbolic_grid() const override {
    std::vector<std::string> rows(static_cast<std::size_t>(h_),
                                  std::string(static_cast<std::size_t>(w_),
                                              '.'));
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        if (wall(x, y)) rows[y][x] = '#';
        else if (lava_[cell(x, y)]) rows[y][x] = 'L';
      }
    rows[goal().second][goal().first] = 'G';
    if (portal_variant_) {
      rows[portal_a_.second][portal_a_.first] = 'P';
      rows[portal_b_.second][portal_b_.first] = 'P';
    }
    rows[agent_.second][agent_.first] = 'A';
    return rows;
  }

  std::pair<int, int> goal() const { return {w_ - 2, h_ - 2}; }
  std::pair<int, int> agent_pos() const { return agent_; }
  bool is_lava(int x, int y) const { return lava_[cell(x, y)]; }

  // Reachability ignoring portals; used by the generator and the
  // Portal-LavaCrossing impossibility check.
  bool solvable_without_portals() const {
    return path_exists(w_, h_, {1, 1}, goal(), [&](int x, int y) {
      return !wall(x, y) && !lava_[cell(x, y)];
    });
  }

 private:
  std::size_t cell(int x, int y) const {
    return static_cast<std::size_t>(y) * w_ + x;
  }
  bool wall(int x, int y) const {
    return x <= 0 || y <= 0 || x >= w_ - 1 || y >= h_ - 1;
  }

  bool try_generate(Rng& rng) {
    lava_.assign(static_cast<std::size_t>(w_) * h_, 0);
    const int rivers = portal_variant_ ? 1 : level_;
    std::vector<int> used_cols, used_rows;
    for (int r = 0; r < rivers; ++r) {
      bool vertical = rng.below(2) == 0;
      if (vertical) {
        if (w_ - 3 < 2) return false;
        int col = 2 + rng.below(w_ - 4);  // in [2, w-3]
        if (std::count(used_cols.begin(), used_cols.end(), col)) return false;
        used_cols.push_back(col);
        int gap = portal_variant_ ? -1 : 1 + rng.below(h_ - 2);
        for (int y = 1; y <= h_ - 2; ++y)
          if (y != gap) lava_[cell(col, y)] = 1;
      } else {
        if (h_ - 3 < 2) return false;
        int row = 2 + rng.below(h_ - 4);
        if (std::count(used_rows.begin(), used_rows.end(), row)) return false;
        used_rows.push_back(row);
        int gap = portal_variant_ ? -1 : 1 + rng.below(w_ - 2);
        for (int x = 1; x <= w_ - 2; ++x)
          if (x != gap) lava_[cell(x, row)] = 1;
      }
    }
    if (lava_[cell(1, 1)] || lava_[cell(goal().first, goal().second)])
      return false;

    if (portal_variant_) {
      // one portal on each side of the (gapless) river
      std::vector<std::pair<int, int>> side_a, side_b;
      bool vertical = !used_cols.empty();
      int line = vertical ? used_cols[0] : used_rows[0];
      for (int y = 1; y <= h_ - 2; ++y)
        for (int x = 1; x <= w_ - 2; ++x) {
          if (lava_[cell(x, y)]) continue;
          if (std::make_pair(x, y) == std::make_pair(1, 1)) continue;
          if (std::make_pair(x, y) == goal()) continue;
          int coord = vertical ? x : y;
          if (coord < line) side_a.emplace_back(x, y);
          else if (coord > line) side_b.emplace_back(x, y);
        }
      if (side_a.empty() || side_b.empty()) return false;
      portal_a_ = side_a[static_cast<std::size_t>(
          rng.below(static_cast<int>(side_a.size())))];
      portal_b_ = side_b[static_cast<std::size_t>(
          rng.below(static_cast<int>(side_b.size())))];
      // crossing must be impossible without the portals
      return !solvable_without_portals();
    }
    return solvable_without_portals();
  }

  int w_, h_, level_, max_steps_ = 0;
  bool portal_variant_ = false;
  std::vector<char> lava_;
  std::pair<int, int> agent_{1, 1};
  std::pair<int, int> portal_a_{-1, -1}, portal_b_{-1, -1};
  int steps_ = 0;
  bool done_ = true;
};

// --- Box-World ---------------------------------------------------------------

// Reduced Box-World: goal length 2, one distractor branch of length 1. A box
// is a horizontally adjacent (key cell, lock cell) pair; the gem sits in the
// final box. Opening a lock requires carrying the matching key colour and
// consumes it, yielding the boxed key (or the gem: reward +1, done).
class BoxWorldEnv : public Env {
 public:
  static constexpr int kColors = 6;
  static constexpr int kGem = -2;  // box content sentinel
  // channels: agent, gem, key colour x6, lock colour x6, held colour x6
  static constexpr int kChannels = 2 + 3 * kColors;

  struct Box {
    int key_x, key_y;   // content cell
    int lock_x, lock_y;
    int lock_color;
    int content;  // colour id or kGem
    bool opened = false;
  };

  BoxWorldEnv(int w, int h, int max_steps) : w_(w), h_(h) {
    if (w < 6 || h < 6)
      throw std::invalid_argument("BoxWorld: grid must be at least 6x6");
    max_steps_ = max_steps > 0 ? max_steps : 120;
  }

  void reset(std::uint64_t seed) override {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Rng rng(mix_seed(seed, 0xb0cull + static_cast<std::uint64_t>(attempt)));
      if (try_generate(rng)) {
        steps_ = 0;
        done_ = false;
        held_ = -1;
        if (solve().has_value()) return;
      }
    }
    throw std::runtime_error("BoxWorld: could not generate a solvable map");
  }

  StepOut step(int action) override {
    check_action(action);
    if (done_) throw std::logic_error("BoxWorld: episode is done");
    ++steps_;
    StepOut out;
    apply_move(action, agent_, held_, boxes_, loose_taken_, &out);
    if (out.done) {
      done_ = true;
      return out;
    }
    if (steps_ >= max_steps_) {
      done_ = true;
      out.done = true;
    }
    return out;
  }

  GridObservation observe() const override {
    GridObservation o = GridObservation::zeros(w_, h_, kChannels);
    if (!loose_taken_)
      o.at(loose_x_, loose_y_, 2 + loose_color_) = 1.0;
    for (const Box& b : boxes_) {
      if (b.opened) continue;
      if (b.content == kGem) o.at(b.key_x, b.key_y, 1) = 1.0;
      else o.at(b.key_x, b.key_y, 2 + b.content) = 1.0;
      o.at(b.lock_x, b.lock_y, 2 + kColors + b.lock_color) = 1.0;
    }
    o.at(agent_.first, agent_.second, 0) = 1.0;
    if (held_ >= 0) o.at(agent_.first, agent_.second, 2 + 2 * kColors + held_) = 1.0;
    return o;
  }

  int width() const override { return w_; }
  int height() const override { return h_; }
  int channels() const override { return kChannels; }
  int steps_taken() const override { return steps_; }
  int max_steps() const override { return max_steps_; }
  bool done() const override { return done_; }

  std::vector<std::string> symbolic_grid() const override {
    std::vector<std::string> rows(static_cast<std::size_t>(h_),
                                  std::string(static_cast<std::size_t>(w_),
                                              '.'));
    if (!loose_taken_) rows[loose_y_][loose_x_] = static_cast<char>('a' + loose_color_);
    for (const Box& b : boxes_) {
      if (b.opened) continue;
      rows[b.key_y][b.key_x] =
          b.content == kGem ? '*' : static_cast<char>('a' + b.content);
      rows[b.lock_y][b.lock_x] = static_cast<char>('A' + b.lock_color);
    }
    rows[agent_.second][agent_.first] = '@';
    return rows;
  }

  const std::vector<Box>& boxes() const { return boxes_; }
  std::pair<int, int> agent_pos() const { return agent_; }
  int held() const { return held_; }
  bool loose_taken() const { return loose_taken_; }
  std::pair<int, int> loose_key_pos() const { return {loose_x_, loose_y_}; }
  int distractor_index() const { return 2; }

  // BFS over full environment state; returns an optimal action sequence to
  // the gem, or nullopt when the gem is unreachable.
  std::optional<std::vector<int>> solve() const {
    return solve_from(agent_, held_, boxes_, loose_taken_);
  }
  std::optional<std::vector<int>> solve_from(std::pair<int, int> agent,
                                             int held,
                                             const std::vector<Box>& boxes,
                                             bool loose_taken) const {
    struct Node {
      std::pair<int, int> agent;
      int held;
      unsigned mask;  // opened boxes
      bool loose;
    };
    auto encode = [&](const Node& s) {
      return (((static_cast<std::uint64_t>(s.agent.second) * w_ +
                s.agent.first) *
                   (kColors + 2) +
               (s.held + 1)) *
                  8 +
              s.mask) *
                 2 +
             (s.loose ? 1 : 0);
    };
    std::map<std::uint64_t, std::pair<std::uint64_t, int>> parent;
    unsigned mask0 = 0;
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (boxes[i].opened) mask0 |= 1u << i;
    Node start{agent, held, mask0, loose_taken};
    std::deque<Node> q{start};
    parent[encode(start)] = {encode(start), -1};
    while (!q.empty()) {
      Node s = q.front();
      q.pop_front();
      for (int a = 0; a < 4; ++a) {
        std::vector<Box> bs = boxes;
        for (std::size_t i = 0; i < bs.size(); ++i)
          bs[i].opened = (s.mask >> i) & 1u;
        auto pos = s.agent;
        int h = s.held;
        bool lt = s.loose;
        StepOut out;
        apply_move(a, pos, h, bs, lt, &out);
        Node nx{pos, h, 0, lt};
        for (std::size_t i = 0; i < bs.size(); ++i)
          if (bs[i].opened) nx.mask |= 1u << i;
        std::uint64_t key = encode(nx);
        if (parent.count(key)) continue;
        parent[key] = {encode(s), a};
        if (out.reward > 0.0) {
          std::vector<int> actions;
          std::uint64_t cur = key;
          while (parent[cur].second >= 0) {
            actions.push_back(parent[cur].second);
            cur = parent[cur].first;
          }
          std::reverse(actions.begin(), actions.end());
          return actions;
        }
        q.push_back(nx);
      }
    }
    return std::nullopt;
  }

 private:
  // Shared transition logic used by both step() and the solver.
  void apply_move(int action, std::pair<int, int>& agent, int& held,
                  std::vector<Box>& boxes, bool& loose_taken,
                  StepOut* out) const {
    int nx = agent.first + kDx[action];
    int ny = agent.second + kDy[action];
    if (nx < 0 || nx >= w_ || ny < 0 || ny >= h_) return;
    if (!loose_taken && nx == loose_x_ && ny == loose_y_) {
      loose_taken = true;
      held = loose_color_;
      agent = {nx, ny};
      return;
    }
    for (Box& b : boxes) {
      if (b.opened) continue;
      if (nx == b.key_x && ny == b.key_y) return;  // boxed key: blocked
      if (nx == b.lock_x && ny == b.lock_y) {
        if (held != b.lock_color) return;  // wrong or no key: blocked
        b.opened = true;
        if (b.content == kGem) {
          held = -1;
          agent = {nx, ny};
          out->reward = 1.0;
          out->done = true;
          return;
        }
        held = b.content;
        agent = {nx, ny};
        return;
      }
    }
    agent = {nx, ny};
  }

  bool try_generate(Rng& rng) {
    std::vector<int> palette(kColors);
    for (int i = 0; i < kColors; ++i) palette[static_cast<std::size_t>(i)] = i;
    rng.shuffle(palette);
    const int c1 = palette[0], c2 = palette[1], cd = palette[2];
    const int distractor_lock = rng.below(2) == 0 ? c1 : c2;

    std::vector<std::pair<int, int>> taken;
    auto far_from_taken = [&](int x, int y) {
      for (auto [tx, ty] : taken)
        if (std::abs(tx - x) <= 1 && std::abs(ty - y) <= 1) return false;
      return true;
    };
    auto place_box = [&](int lock_color, int content) -> std::optional<Box> {
      for (int tries = 0; tries < 50; ++tries) {
        int x = rng.below(w_ - 1);
        int y = rng.below(h_);
        if (far_from_taken(x, y) && far_from_taken(x + 1, y)) {
          taken.emplace_back(x, y);
          taken.emplace_back(x + 1, y);
          return Box{x, y, x + 1, y, lock_color, content, false};
        }
      }
      return std::nullopt;
    };

    boxes_.clear();
    auto box_a = place_box(c1, c2);
    auto box_gem = place_box(c2, kGem);
    auto box_d = place_box(distractor_lock, cd);
    if (!box_a || !box_gem || !box_d) return false;
    boxes_ = {*box_a, *box_gem, *box_d};

    for (int tries = 0; tries < 50; ++tries) {
      int x = rng.below(w_);
      int y = rng.below(h_);
      if (far_from_taken(x, y)) {
        loose_x_ = x;
        loose_y_ = y;
        loose_color_ = c1;
        loose_taken_ = false;
        taken.emplace_back(x, y);
        break;
      }
      if (tries == 49) return false;
    }
    // the agent only needs an unoccupied cell, adjacency is fine
    for (int tries = 0; tries < 50; ++tries) {
      int x = rng.below(w_);
      int y = rng.below(h_);
      bool occupied = false;
      for (auto [tx, ty] : taken)
        if (tx == x && ty == y) occupied = true;
      if (!occupied) {
        agent_ = {x, y};
        return true;
      }
    }
    return false;
  }

  int w_, h_, max_steps_ = 0;
  std::vector<Box> boxes_;
  int loose_x_ = 0, loose_y_ = 0, loose_color_ = 0;
  bool loose_taken_ = false;
  std::pair<int, int> agent_{0, 0};
  int held_ = -1;
  int steps_ = 0;
  bool done_ = true;
};

// --- RTFM ---------------------------------------------------------------------

// Symbolic Read-to-Fight-Monsters: two monsters and two weapons on the grid,
// per-episode modifier/element/team assignments and a beat relation emitted
// as a knowledge base. Walking onto a weapon picks it up (replacing any held
// one); walking onto a monster resolves combat: +1 and done iff the held
// weapon's modifier beats the monster's element and the monster is in the
// target team, otherwise -1 and done. A monster moving onto the agent is a
// loss. Monsters take uniform random 4-neighbour steps, one per turn,
// alternating.
class RtfmEnv : public Env {
 public:
  // channels: agent, monster, weapon, target flag (onehop only)
  static constexpr int kChannels = 4;

  RtfmEnv(int size, bool multihop, int max_steps)
      : size_(size), multihop_(multihop) {
    if (size != 6 && size != 10)
      throw std::invalid_argument("Rtfm: grid size must be 6x6 or 10x10");
    max_steps_ = max_steps > 0 ? max_steps : 100;
  }

  void reset(std::uint64_t seed) override {
    rng_ = Rng(mix_seed(seed, 0x47f11));
    auto pick2 = [&](std::vector<std::string> pool) {
      rng_.shuffle(pool);
      pool.resize(2);
      return pool;
    };
    teams_ = pick2({"alliance", "horde"});
    modifiers_ = pick2({"master", "arcane", "blessed", "shimmering"});
    elements_ = pick2({"fire", "ice", "poison", "lightning"});
    monsters_ = pick2({"goblin", "imp", "wolf", "zombie"});
    weapons_ = pick2({"sword", "axe", "bow", "staff"});

    // distinct cells for agent, two monsters, two weapons
    std::set<std::pair<int, int>> used;
    auto place = [&]() {
      while (true) {
        std::pair<int, int> p{rng_.below(size_), rng_.below(size_)};
        if (used.insert(p).second) return p;
      }
    };
    agent_ = place();
    monster_pos_[0] = place();
    monster_pos_[1] = place();
    weapon_pos_[0] = place();
    weapon_pos_[1] = place();

    // monster i belongs to team i (teams were shuffled); one target team
    target_team_ = rng_.below(2);
    // exactly one weapon beats the target monster
    winning_weapon_ = rng_.below(2);
    for (auto& row : beat_) row = {false, false};
    beat_[winning_weapon_][target_team_] = true;  // modifier x element grid
    // the non-target element may be beaten by anything
    int other_elem = 1 - target_team_;
    for (int m = 0; m < 2; ++m)
      if (rng_.below(2) == 0) beat_[m][other_elem] = true;
    // keep the invariant: exactly one weapon modifier beats the target element
    beat_[1 - winning_weapon_][target_team_] = false;

    held_ = -1;
    steps_ = 0;
    done_ = false;
  }

  StepOut step(int action) override {
    check_action(action);
    if (done_) throw std::logic_error("Rtfm: episode is done");
    ++steps_;
    StepOut out;
    int nx = agent_.first + kDx[action];
    int ny = agent_.second + kDy[action];
    if (nx >= 0 && nx < size_ && ny >= 0 && ny < size_) {
      int m = monster_at(nx, ny);
      if (m >= 0) {
        // combat
        bool win = held_ >= 0 && beat_[held_][element_of(m)] &&
                   team_of(m) == target_team_;
        done_ = true;
        out.done = true;
        out.reward = win ? 1.0 : -1.0;
        agent_ = {nx, ny};
        return out;
      }
      int w = weapon_at(nx, ny);
      if (w >= 0) {
        held_ = w;
        weapon_pos_[w] = {-1, -1};  // picked up, replacing any held weapon
      }
      agent_ = {nx, ny};
    }
    // one monster moves per turn, alternating
    int mover = (steps_ - 1) % 2;
    int dir = rng_.below(4);
    int mx = monster_pos_[mover].first + kDx[dir];
    int my = monster_pos_[mover].second + kDy[dir];
    if (mx >= 0 && mx < size_ && my >= 0 && my < size_ &&
        monster_at(mx, my) < 0 && weapon_at(mx, my) < 0) {
      monster_pos_[mover] = {mx, my};
      if (monster_pos_[mover] == agent_) {
        done_ = true;
        out.done = true;
        out.reward = -1.0;  // caught
        return out;
      }
    }
    if (steps_ >= max_steps_) {
      done_ = true;
      out.done = true;
    }
    return out;
  }

  GridObservation observe() const override {
    GridObservation o = GridObservation::zeros(size_, size_, kChannels);
    for (int m = 0; m < 2; ++m)
      o.at(monster_pos_[m].first, monster_pos_[m].second, 1) = 1.0;
    for (int w = 0; w < 2; ++w)
      if (weapon_pos_[w].first >= 0)
        o.at(weapon_pos_[w].first, weapon_pos_[w].second, 2) = 1.0;
    if (!multihop_) {
      auto t = monster_pos_[target_monster()];
      o.at(t.first, t.second, 3) = 1.0;
    }
    o.at(agent_.first, agent_.second, 0) = 1.0;
    return o;
  }

  int width() const override { return size_; }
  int height() const override { return size_; }
  int channels() const override { return kChannels; }
  int steps_taken() const override { return steps_; }
  int max_steps() const override { return max_steps_; }
  bool done() const override { return done_; }

  std::vector<std::string> symbolic_grid() const override {
    std::vector<std::string> rows(static_cast<std::size_t>(size_),
                                  std::string(static_cast<std::size_t>(size_),
                                              '.'));
    for (int m = 0; m < 2; ++m)
      rows[monster_pos_[m].second][monster_pos_[m].first] =
          m == target_monster() && !multihop_ ? 'T' : 'M';
    for (int w = 0; w < 2; ++w)
      if (weapon_pos_[w].first >= 0)
        rows[weapon_pos_[w].second][weapon_pos_[w].first] = 'W';
    rows[agent_.second][agent_.first] = 'A';
    return rows;
  }

  bool has_kb() const override { return true; }

  KnowledgeBase kb() const override {
    KnowledgeBase kb;
    if (multihop_) {
      for (const auto& w : weapons_) kb.add_entity(w);
      for (const auto& m : monsters_) kb.add_entity(m);
      for (const auto& t : teams_) kb.add_entity(t);
      for (const auto& mod : modifiers_) kb.add_entity(mod);
      for (const auto& e : elements_) kb.add_entity(e);
      kb.add_unary_pred("target");
      kb.add_unary_pred("hold");
      kb.add_binary_pred("assign");
      kb.add_binary_pred("belong");
      kb.add_binary_pred("beat");
      for (int i = 0; i < 2; ++i) {
        kb.add_binary_atom("assign", modifiers_[i], weapons_[i]);
        kb.add_binary_atom("assign", elements_[i], monsters_[i]);
        kb.add_binary_atom("belong", monsters_[i], teams_[i]);
      }
      for (int m = 0; m < 2; ++m)
        for (int e = 0; e < 2; ++e)
          if (beat_[m][e]) kb.add_binary_atom("beat", modifiers_[m], elements_[e]);
      kb.add_unary_atom("target", teams_[target_team_]);
      if (held_ >= 0) kb.add_unary_atom("hold", modifiers_[held_]);
    } else {
      for (const auto& w : weapons_) kb.add_entity(w);
      for (const auto& m : monsters_) kb.add_entity(m);
      kb.add_unary_pred("target");
      kb.add_binary_pred("beat");
      for (int w = 0; w < 2; ++w)
        for (int m = 0; m < 2; ++m)
          if (beat_[w][element_of(m)])
            kb.add_binary_atom("beat", weapons_[w], monsters_[m]);
      kb.add_unary_atom("target", monsters_[target_monster()]);
    }
    return kb;
  }

  std::map<int, int> kb_grounding() const override {
    // entity order: weapons 0..1, monsters 2..3 (concepts stay unmapped)
    std::map<int, int> m;
    for (int w = 0; w < 2; ++w) {
      auto p = weapon_pos_[w].first >= 0 ? weapon_pos_[w] : agent_;
      m[w] = p.second * size_ + p.first;
    }
    for (int i = 0; i < 2; ++i)
      m[2 + i] = monster_pos_[i].second * size_ + monster_pos_[i].first;
    return m;
  }

  // introspection for the scripted policies and tests
  bool multihop() const { return multihop_; }
  int target_monster() const { return target_team_; }  // monster i in team i
  int element_of(int monster) const { return monster; }  // element i on monster i
  int team_of(int monster) const { return monster; }
  bool beats(int modifier, int element) const { return beat_[modifier][element]; }
  int winning_weapon() const { return winning_weapon_; }
  int held() const { return held_; }
  std::pair<int, int> agent_pos() const { return agent_; }
  std::pair<int, int> monster_pos(int i) const { return monster_pos_[i]; }
  std::pair<int, int> weapon_pos(int i) const { return weapon_pos_[i]; }
  int next_mover() const { return steps_ % 2; }

 private:
  int monster_at(int x, int y) const {
    for (int m = 0; m < 2; ++m)
      if (monster_pos_[m] == std::make_pair(x, y)) return m;
    return -1;
  }
  int weapon_at(int x, int y) const {
    for (int w = 0; w < 2; ++w)
      if (weapon_pos_[w] == std::make_pair(x, y)) return w;
    return -1;
  }

  int size_, max_steps_ = 0;
  bool multihop_;
  Rng rng_{0};
  std::vector<std::string> teams_, modifiers_, elements_, monsters_, weapons_;
  std::pair<int, int> agent_{0, 0};
  std::array<std::pair<int, int>, 2> monster_pos_{};
  std::array<std::pair<int, int>, 2> weapon_pos_{};
  std::array<std::array<bool, 2>, 2> beat_{};  // modifier x element
  int target_team_ = 0;
  int winning_weapon_ = 0;
  int held_ = -1;
  int steps_ = 0;
  bool done_ = true;
};

// Navigation helper shared by the scripted RTFM policies: best action toward
// `goal` avoiding monster cells, the other weapon, and (for the first step)
// every cell the next-moving monster could reach. Stepping onto the target
// monster to attack is exempt from the reach check because combat resolves
// before monsters move.
inline int rtfm_navigate(const RtfmEnv& env, std::pair<int, int> goal,
                         bool goal_is_attack, int avoid_weapon) {
  const int n = env.width();
  const int mover = env.next_mover();
  auto blocked = [&](int x, int y) {
    for (int m = 0; m < 2; ++m)
      if (env.monster_pos(m) == std::make_pair(x, y)) return true;
    if (avoid_weapon >= 0 && env.weapon_pos(avoid_weapon).first >= 0 &&
        env.weapon_pos(avoid_weapon) == std::make_pair(x, y))
      return true;
    return false;
  };
  auto in_reach = [&](int x, int y) {
    auto mp = env.monster_pos(mover);
    if (mp == std::make_pair(x, y)) return true;
    return std::abs(mp.first - x) + std::abs(mp.second - y) == 1;
  };

  // BFS distances from the goal over unblocked cells.
  std::vector<int> dist(static_cast<std::size_t>(n) * n, -1);
  std::deque<std::pair<int, int>> q;
  dist[static_cast<std::size_t>(goal.second) * n + goal.first] = 0;
  q.push_back(goal);
  while (!q.empty()) {
    auto [x, y] = q.front();
    q.pop_front();
    for (int d = 0; d < 4; ++d) {
      int nx2 = x + kDx[d], ny2 = y + kDy[d];
      if (nx2 < 0 || nx2 >= n || ny2 < 0 || ny2 >= n) continue;
      if (dist[static_cast<std::size_t>(ny2) * n + nx2] >= 0) continue;
      if (blocked(nx2, ny2)) continue;
      dist[static_cast<std::size_t>(ny2) * n + nx2] =
          dist[static_cast<std::size_t>(y) * n + x] + 1;
      q.emplace_back(nx2, ny2);
    }
  }

  auto ap = env.agent_pos();
  int best = -1, best_dist = -1;
  for (int a = 0; a < 4; ++a) {
    int nx2 = ap.first + kDx[a], ny2 = ap.second + kDy[a];
    if (nx2 < 0 || nx2 >= n || ny2 < 0 || ny2 >= n) continue;
    if (std::make_pair(nx2, ny2) == goal) {
      if (goal_is_attack) return a;  // combat resolves before monsters move
      if (!in_reach(nx2, ny2)) return a;
      continue;
    }
    if (blocked(nx2, ny2) || in_reach(nx2, ny2)) continue;
    int d = dist[static_cast<std::size_t>(ny2) * n + nx2];
    if (d < 0) continue;
    if (best_dist < 0 || d < best_dist) {
      best_dist = d;
      best = a;
    }
  }
  if (best >= 0) return best;
  // no progress possible: take any move that is safe from the mover,
  // preferring to keep still via a boundary bump
  for (int a = 0; a < 4; ++a) {
    int nx2 = ap.first + kDx[a], ny2 = ap.second + kDy[a];
    bool bump = nx2 < 0 || nx2 >= n || ny2 < 0 || ny2 >= n;
    int cx = bump ? ap.first : nx2, cy = bump ? ap.second : ny2;
    if (!bump && blocked(cx, cy)) continue;
    if (!in_reach(cx, cy)) return a;
  }
  return 0;
}

// Scripted oracle: reads the KB, fetches the beating weapon, attacks the
// target monster, evades otherwise.
inline int rtfm_oracle_action(const RtfmEnv& env) {
  const int wstar = env.winning_weapon();
  if (env.held() == wstar) {
    return rtfm_navigate(env, env.monster_pos(env.target_monster()),
                         /*goal_is_attack=*/true, /*avoid_weapon=*/1 - wstar);
  }
  return rtfm_navigate(env, env.weapon_pos(wstar), /*goal_is_attack=*/false,
                       /*avoid_weapon=*/1 - wstar);
}

// KB-blind strategy: fetches a randomly chosen weapon and attacks a randomly
// chosen monster with the same navigation machinery.
inline int rtfm_blind_action(const RtfmEnv& env, int chosen_weapon,
                             int chosen_monster) {
  if (env.held() == chosen_weapon) {
    return rtfm_navigate(env, env.monster_pos(chosen_monster),
                         /*goal_is_attack=*/true,
                         /*avoid_weapon=*/1 - chosen_weapon);
  }
  return rtfm_navigate(env, env.weapon_pos(chosen_weapon),
                       /*goal_is_attack=*/false,
                       /*avoid_weapon=*/1 - chosen_weapon);
}

// --- factory and replay ---------------------------------------------------------

inline std::unique_ptr<Env> make_env(const EpisodeConfig& cfg) {
  if (cfg.family == "lavacrossing")
    return std::make_unique<LavaCrossingEnv>(cfg.width, cfg.height, cfg.level,
                                             cfg.max_steps, false);
  if (cfg.family == "portal_lavacrossing")
    return std::make_unique<LavaCrossingEnv>(cfg.width, cfg.height, 1,
                                             cfg.max_steps, true);
  if (cfg.family == "boxworld")
    return std::make_unique<BoxWorldEnv>(cfg.width, cfg.height, cfg.max_steps);
  if (cfg.family == "rtfm")
    return std::make_unique<RtfmEnv>(cfg.width, cfg.variant == "multihop",
                                     cfg.max_steps);
  throw std::invalid_argument("make_env: unknown family '" + cfg.family + "'");
}

// Episode replay dump: env config, seed, and the action/reward log, one step
// per line. Re-running the actions under the same seed must reproduce the
// recorded rewards exactly.
struct EpisodeReplay {
  EpisodeConfig cfg;
  std::uint64_t seed = 0;
  std::vector<int> actions;
  std::vector<double> rewards;
};

inline std::string serialize_replay(const EpisodeReplay& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "family " << r.cfg.family << "\n";
  os << "width " << r.cfg.width << "\n";
  os << "height " << r.cfg.height << "\n";
  os << "level " << r.cfg.level << "\n";
  os << "variant " << r.cfg.variant << "\n";
  os << "max_steps " << r.cfg.max_steps << "\n";
  os << "seed " << r.seed << "\n";
  for (std::size_t i = 0; i < r.actions.size(); ++i)
    os << "step " << r.actions[i] << ' ' << r.rewards[i] << "\n";
  return os.str();
}

inline EpisodeReplay parse_replay(const std::string& text) {
  EpisodeReplay r;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto toks = split_ws(line);
    auto fail = [&](const std::string& m) -> void {
      throw std::runtime_error("replay parse error at line " +
                               std::to_string(lineno) + ": " + m);
    };
    try {
      if (toks[0] == "family" && toks.size() == 2) r.cfg.family = toks[1];
      else if (toks[0] == "width" && toks.size() == 2) r.cfg.width = std::stoi(toks[1]);
      else if (toks[0] == "height" && toks.size() == 2) r.cfg.height = std::stoi(toks[1]);
      else if (toks[0] == "level" && toks.size() == 2) r.cfg.level = std::stoi(toks[1]);
      else if (toks[0] == "variant" && toks.size() == 2) r.cfg.variant = toks[1];
      else if (toks[0] == "max_steps" && toks.size() == 2) r.cfg.max_steps = std::stoi(toks[1]);
      else if (toks[0] == "seed" && toks.size() == 2) r.seed = std::stoull(toks[1]);
      else if (toks[0] == "step" && toks.size() == 3) {
        r.actions.push_back(std::stoi(toks[1]));
        r.rewards.push_back(std::stod(toks[2]));
      } else {
        fail("unrecognized line '" + line + "'");
      }
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception&) {
      fail("bad value in '" + line + "'");
    }
  }
  return r;
}

// Re-executes a replay; throws when a recorded reward diverges.
inline double replay_verify(const EpisodeReplay& r) {
  auto env = make_env(r.cfg);
  env->reset(r.seed);
  double total = 0.0;
  for (std::size_t i = 0; i < r.actions.size(); ++i) {
    StepOut out = env->step(r.actions[i]);
    if (out.reward != r.rewards[i])
      throw std::runtime_error("replay mismatch at step " + std::to_string(i) +
                               ": recorded " + std::to_string(r.rewards[i]) +
                               ", replayed " + std::to_string(out.reward));
    total += out.reward;
  }
  return total;
}

}  // namespace gtg

#pragma once
// Run configuration: flat key=value text with section prefixes (model.,
// env., train.). Every key is validated against the schema before any work
// starts; unknown keys, bad types and out-of-range values are reported
// together.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtg/envs.hpp"
#include "gtg/policy.hpp"

namespace gtg {

struct TrainConfig {
  long long total_steps = 300000;
  int rollout_len = 20;  // n
  int workers = 8;
  double gamma = 0.99;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double lr = 0.001;
  double grad_clip = 40.0;
  long long eval_every_steps = 16000;
  int eval_episodes = 200;
  double stop_return = 1e18;  // early stop once greedy eval reaches this
  int stop_confirm_episodes = 0;  // confirm the stop with a larger eval
  int checkpoint_every_updates = 1000;
  bool wall_clock_in_metrics = false;  // keeps metrics byte-reproducible
};

struct RunConfig {
  NetConfig model;
  RuleSet rules;  // rule families fed to GTG
  EpisodeConfig env;
  TrainConfig train;
  std::uint64_t seed = 0;
};

namespace detail {

inline bool parse_bool(const std::string& v, bool* out) {
  if (v == "true" || v == "1") { *out = true; return true; }
  if (v == "false" || v == "0") { *out = false; return true; }
  return false;
}

}  // namespace detail

// Parses and validates a config document. Throws std::runtime_error listing
// every schema violation.
inline RunConfig parse_run_config(const std::string& text) {
  RunConfig rc;
  std::vector<std::string> errors;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;

  auto as_int = [&](const std::string& v, long long lo, long long hi,
                    long long* out) {
    try {
      std::size_t pos = 0;
      long long x = std::stoll(v, &pos);
      if (pos != v.size()) return false;
      if (x < lo || x > hi) return false;
      *out = x;
      return true;
    } catch (const std::exception&) {
      return false;
    }
  };
  auto as_double = [&](const std::string& v, double* out) {
    try {
      std::size_t pos = 0;
      double x = std::stod(v, &pos);
      if (pos != v.size()) return false;
      *out = x;
      return true;
    } catch (const std::exception&) {
      return false;
    }
  };

  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string trimmed;
    for (char c : line)
      if (c != ' ' && c != '\t') trimmed += c;
    if (trimmed.empty()) continue;
    std::size_t eq = trimmed.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key=value");
      continue;
    }
    std::string key = trimmed.substr(0, eq);
    std::string val = trimmed.substr(eq + 1);
    auto bad = [&](const std::string& why) {
      errors.push_back("line " + std::to_string(lineno) + ": " + key + ": " + why);
    };
    long long i = 0;
    double d = 0.0;
    bool b = false;

    if (key == "seed") {
      try { rc.seed = std::stoull(val); } catch (...) { bad("expected unsigned integer"); }
    } else if (key == "model.front_end") {
      if (val == "rgcn" || val == "nlm" || val == "cnn" || val == "cnn_wide")
        rc.model.front_end = val;
      else bad("expected one of rgcn|nlm|cnn|cnn_wide");
    } else if (key == "model.rules") {
      try { rc.rules = RuleSet::parse(val); } catch (const std::exception& e) { bad(e.what()); }
    } else if (key == "model.rgcn_dim") {
      if (as_int(val, 1, 4096, &i)) rc.model.rgcn_dim = static_cast<int>(i); else bad("expected int in [1,4096]");
    } else if (key == "model.rgcn_layers") {
      if (as_int(val, 1, 16, &i)) rc.model.rgcn_layers = static_cast<int>(i); else bad("expected int in [1,16]");
    } else if (key == "model.nlm_dim") {
      if (as_int(val, 1, 4096, &i)) rc.model.nlm_dim = static_cast<int>(i); else bad("expected int in [1,4096]");
    } else if (key == "model.nlm_layers") {
      if (as_int(val, 1, 16, &i)) rc.model.nlm_layers = static_cast<int>(i); else bad("expected int in [1,16]");
    } else if (key == "model.nlm_nullary_dim") {
      if (as_int(val, 1, 4096, &i)) rc.model.nlm_nullary_dim = static_cast<int>(i); else bad("expected int in [1,4096]");
    } else if (key == "model.cnn_features") {
      if (as_int(val, 1, 4096, &i)) rc.model.cnn_features = static_cast<int>(i); else bad("expected int in [1,4096]");
    } else if (key == "model.cnn_wide_features") {
      if (as_int(val, 1, 4096, &i)) rc.model.cnn_wide_features = static_cast<int>(i); else bad("expected int in [1,4096]");
    } else if (key == "model.cnn_aggregate") {
      if (val == "flatten" || val == "maxpool") rc.model.cnn_aggregate = val;
      else bad("expected flatten|maxpool");
    } else if (key == "model.dense_dim") {
      if (as_int(val, 1, 8192, &i)) rc.model.dense_dim = static_cast<int>(i); else bad("expected int in [1,8192]");
    } else if (key == "model.dense_layers") {
      if (as_int(val, 0, 16, &i)) rc.model.dense_layers = static_cast<int>(i); else bad("expected int in [0,16]");
    } else if (key == "env.family") {
      if (val == "lavacrossing" || val == "portal_lavacrossing" ||
          val == "boxworld" || val == "rtfm")
        rc.env.family = val;
      else bad("expected lavacrossing|portal_lavacrossing|boxworld|rtfm");
    } else if (key == "env.width") {
      if (as_int(val, 1, 64, &i)) rc.env.width = static_cast<int>(i); else bad("expected int in [1,64]");
    } else if (key == "env.height") {
      if (as_int(val, 1, 64, &i)) rc.env.height = static_cast<int>(i); else bad("expected int in [1,64]");
    } else if (key == "env.level") {
      if (as_int(val, 1, 3, &i)) rc.env.level = static_cast<int>(i); else bad("expected int in [1,3]");
    } else if (key == "env.variant") {
      if (val == "onehop" || val == "multihop") rc.env.variant = val;
      else bad("expected onehop|multihop");
    } else if (key == "env.max_steps") {
      if (as_int(val, 0, 1000000, &i)) rc.env.max_steps = static_cast<int>(i); else bad("expected int >= 0");
    } else if (key == "train.total_steps") {
      if (as_int(val, 1, 1000000000LL, &i)) rc.train.total_steps = i; else bad("expected positive int");
    } else if (key == "train.rollout_len") {
      if (as_int(val, 1, 10000, &i)) rc.train.rollout_len = static_cast<int>(i); else bad("expected positive int");
    } else if (key == "train.workers") {
      if (as_int(val, 1, 1024, &i)) rc.train.workers = static_cast<int>(i); else bad("expected positive int");
    } else if (key == "train.gamma") {
      if (as_double(val, &d) && d > 0.0 && d <= 1.0) rc.train.gamma = d;
      else bad("expected double in (0,1]");
    } else if (key == "train.value_coef") {
      if (as_double(val, &d) && d >= 0.0) rc.train.value_coef = d; else bad("expected double >= 0");
    } else if (key == "train.entropy_coef") {
      if (as_double(val, &d) && d >= 0.0) rc.train.entropy_coef = d; else bad("expected double >= 0");
    } else if (key == "train.lr") {
      if (as_double(val, &d) && d > 0.0) rc.train.lr = d; else bad("expected double > 0");
    } else if (key == "train.grad_clip") {
      if (as_double(val, &d) && d >= 0.0) rc.train.grad_clip = d; else bad("expected double >= 0");
    } else if (key == "train.eval_every_steps") {
      if (as_int(val, 1, 1000000000LL, &i)) rc.train.eval_every_steps = i; else bad("expected positive int");
    } else if (key == "train.eval_episodes") {
      if (as_int(val, 1, 100000, &i)) rc.train.eval_episodes = static_cast<int>(i); else bad("expected positive int");
    } else if (key == "train.stop_return") {
      if (as_double(val, &d)) rc.train.stop_return = d; else bad("expected double");
    } else if (key == "train.stop_confirm_episodes") {
      if (as_int(val, 0, 100000, &i)) rc.train.stop_confirm_episodes = static_cast<int>(i); else bad("expected int >= 0");
    } else if (key == "train.checkpoint_every_updates") {
      if (as_int(val, 1, 1000000000LL, &i)) rc.train.checkpoint_every_updates = static_cast<int>(i); else bad("expected positive int");
    } else if (key == "train.wall_clock_in_metrics") {
      if (detail::parse_bool(val, &b)) rc.train.wall_clock_in_metrics = b; else bad("expected true|false");
    } else {
      errors.push_back("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (!errors.empty()) {
    std::string msg = "config schema errors:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }
  rc.model.seed = rc.seed;
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return parse_run_config(os.str());
}

// Deterministic snapshot of a run configuration; re-parsing it reproduces
// the same configuration.
inline std::string serialize_run_config(const RunConfig& rc) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "seed=" << rc.seed << "\n";
  os << "model.front_end=" << rc.model.front_end << "\n";
  os << "model.rules=" << rc.rules.to_string() << "\n";
  os << "model.rgcn_dim=" << rc.model.rgcn_dim << "\n";
  os << "model.rgcn_layers=" << rc.model.rgcn_layers << "\n";
  os << "model.nlm_dim=" << rc.model.nlm_dim << "\n";
  os << "model.nlm_layers=" << rc.model.nlm_layers << "\n";
  os << "model.nlm_nullary_dim=" << rc.model.nlm_nullary_dim << "\n";
  os << "model.cnn_features=" << rc.model.cnn_features << "\n";
  os << "model.cnn_wide_features=" << rc.model.cnn_wide_features << "\n";
  os << "model.cnn_aggregate=" << rc.model.cnn_aggregate << "\n";
  os << "model.dense_dim=" << rc.model.dense_dim << "\n";
  os << "model.dense_layers=" << rc.model.dense_layers << "\n";
  os << "env.family=" << rc.env.family << "\n";
  os << "env.width=" << rc.env.width << "\n";
  os << "env.height=" << rc.env.height << "\n";
  os << "env.level=" << rc.env.level << "\n";
  os << "env.variant=" << rc.env.variant << "\n";
  os << "env.max_steps=" << rc.env.max_steps << "\n";
  os << "train.total_steps=" << rc.train.total_steps << "\n";
  os << "train.rollout_len=" << rc.train.rollout_len << "\n";
  os << "train.workers=" << rc.train.workers << "\n";
  os << "train.gamma=" << rc.train.gamma << "\n";
  os << "train.value_coef=" << rc.train.value_coef << "\n";
  os << "train.entropy_coef=" << rc.train.entropy_coef << "\n";
  os << "train.lr=" << rc.train.lr << "\n";
  os << "train.grad_clip=" << rc.train.grad_clip << "\n";
  os << "train.eval_every_steps=" << rc.train.eval_every_steps << "\n";
  os << "train.eval_episodes=" << rc.train.eval_episodes << "\n";
  os << "train.stop_return=" << rc.train.stop_return << "\n";
  os << "train.stop_confirm_episodes=" << rc.train.stop_confirm_episodes << "\n";
  os << "train.checkpoint_every_updates=" << rc.train.checkpoint_every_updates << "\n";
  os << "train.wall_clock_in_metrics="
     << (rc.train.wall_clock_in_metrics ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace gtg

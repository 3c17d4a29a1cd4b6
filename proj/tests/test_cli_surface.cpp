#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "gtg/config.hpp"
#include "gtg/plot.hpp"

using namespace gtg;
using Catch::Approx;

TEST_CASE("config parse applies defaults and overrides", "[cli]") {
  RunConfig rc = parse_run_config(
      "seed=42\n"
      "model.front_end=nlm\n"
      "model.rules=local,aux\n"
      "env.family=rtfm\n"
      "env.width=6\n"
      "env.height=6\n"
      "env.variant=multihop\n"
      "train.total_steps=5000\n"
      "train.gamma=0.95\n"
      "# a comment\n"
      "\n");
  CHECK(rc.seed == 42);
  CHECK(rc.model.front_end == "nlm");
  CHECK(rc.model.seed == 42);
  CHECK(rc.rules.label_count() == 10);
  CHECK(rc.env.family == "rtfm");
  CHECK(rc.train.total_steps == 5000);
  CHECK(rc.train.gamma == Approx(0.95));
  CHECK(rc.train.lr == Approx(0.001));  // default from the optimizer setup
}

TEST_CASE("config schema errors are aggregated with line numbers", "[cli]") {
  try {
    parse_run_config(
        "model.front_end=transformer\n"
        "bogus.key=1\n"
        "train.gamma=1.5\n");
    FAIL("expected schema errors");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("unknown key 'bogus.key'") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("(0,1]") != std::string::npos);
  }
}

TEST_CASE("config snapshots round trip", "[cli]") {
  RunConfig rc;
  rc.seed = 7;
  rc.model.front_end = "cnn_wide";
  rc.model.cnn_aggregate = "maxpool";
  rc.rules = RuleSet{true, false, true};
  rc.env.family = "boxworld";
  rc.env.width = rc.env.height = 10;
  rc.train.entropy_coef = 0.02;
  rc.train.wall_clock_in_metrics = false;

  RunConfig back = parse_run_config(serialize_run_config(rc));
  CHECK(serialize_run_config(back) == serialize_run_config(rc));
  CHECK(back.rules.to_string() == "local,aux");
}

TEST_CASE("metrics csv reader extracts steps and returns", "[cli]") {
  const std::string path = "test_metrics.csv";
  {
    std::ofstream os(path);
    os << "env_steps,updates,mean_return,win_rate,policy_loss,value_loss,"
          "entropy,wall_clock_s\n";
    os << "100,1,0.5,0.4,0.1,0.2,1.3,0\n";
    os << "200,2,0.7,0.6,0.1,0.2,1.2,0\n";
  }
  Series s = read_metrics_csv(path);
  REQUIRE(s.x.size() == 2);
  CHECK(s.x[1] == 200);
  CHECK(s.y[1] == Approx(0.7));
  std::filesystem::remove(path);
}

TEST_CASE("plotting refuses empty or malformed csv and writes nothing",
          "[cli]") {
  const std::string empty_csv = "test_empty.csv";
  {
    std::ofstream os(empty_csv);
    os << "env_steps,updates,mean_return,win_rate,policy_loss,value_loss,"
          "entropy,wall_clock_s\n";
  }
  const std::string out = "test_plot_should_not_exist.svg";
  REQUIRE_THROWS_WITH(write_plot(out, {empty_csv}),
                      Catch::Matchers::ContainsSubstring("no data rows"));
  CHECK_FALSE(std::filesystem::exists(out));
  std::filesystem::remove(empty_csv);

  const std::string bad_csv = "test_bad.csv";
  {
    std::ofstream os(bad_csv);
    os << "nope\n1,2\n";
  }
  REQUIRE_THROWS_WITH(write_plot(out, {bad_csv}),
                      Catch::Matchers::ContainsSubstring("env_steps"));
  CHECK_FALSE(std::filesystem::exists(out));
  std::filesystem::remove(bad_csv);
}

TEST_CASE("plot renders one translucent line per run plus a bold mean",
          "[cli]") {
  std::vector<std::string> paths;
  for (int run = 0; run < 5; ++run) {
    std::string p = "test_run" + std::to_string(run) + ".csv";
    std::ofstream os(p);
    os << "env_steps,mean_return\n";
    for (int i = 1; i <= 4; ++i)
      os << i * 100 << ',' << 0.1 * run + 0.05 * i << '\n';
    paths.push_back(p);
  }
  std::vector<Series> runs;
  for (const auto& p : paths) runs.push_back(read_metrics_csv(p));
  std::string svg = render_training_curves_svg(runs);

  std::size_t translucent = 0, bold = 0, pos = 0;
  while ((pos = svg.find("stroke-opacity='0.35'", pos)) != std::string::npos) {
    ++translucent;
    pos += 10;
  }
  pos = 0;
  while ((pos = svg.find("stroke-width='3'", pos)) != std::string::npos) {
    ++bold;
    pos += 10;
  }
  CHECK(translucent == 5);
  CHECK(bold == 1);

  // the mean is the arithmetic mean at each sampled x
  auto xs = mean_sample_points(runs);
  for (double x : xs) {
    double acc = 0.0;
    for (const auto& s : runs) acc += interp_series(s, x);
    double mean = acc / runs.size();
    double direct = 0.0;
    for (int run = 0; run < 5; ++run)
      direct += 0.1 * run + 0.05 * (x / 100.0);
    CHECK(mean == Approx(direct / 5));
  }
  for (const auto& p : paths) std::filesystem::remove(p);
}

TEST_CASE("single csv plots a single bold line", "[cli]") {
  const std::string p = "test_single.csv";
  {
    std::ofstream os(p);
    os << "env_steps,mean_return\n10,0.1\n20,0.3\n";
  }
  Series s = read_metrics_csv(p);
  std::string svg = render_training_curves_svg({s});
  CHECK(svg.find("stroke-width='3'") != std::string::npos);
  CHECK(svg.find("<svg") == 0);
  std::filesystem::remove(p);
}

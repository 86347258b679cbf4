#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "pm/bench.hpp"
#include "pm/pose_net.hpp"

using namespace pm;
using nlohmann::json;

namespace {

PoseModel tiny_model(int stages = 1) {
  ModelSpec spec = default_spec(Family::MPM, stages);
  spec.input_w = 64;
  spec.input_h = 64;
  return PoseModel(spec, 7);
}

BenchConfig tiny_cfg() {
  BenchConfig c;
  c.warmup = 1;
  c.n_images = 3;
  c.input_w = 64;
  c.input_h = 64;
  return c;
}

}  // namespace

TEST_CASE("report carries the run shape and the exact parameter count") {
  PoseModel m = tiny_model();
  BenchConfig c = tiny_cfg();
  BenchReport r = run_bench(m, c);
  CHECK(r.param_count == m.count_params());
  CHECK(r.input_w == 64);
  CHECK(r.input_h == 64);
  CHECK(r.run_w == 64);
  CHECK(r.run_h == 64);
  CHECK(r.warmup == 1);
  CHECK(r.n_images == 3);
  CHECK(r.spec.family == Family::MPM);
  CHECK(r.spec.num_stages == 1);
}

TEST_CASE("only timed repetitions are recorded and summarized") {
  PoseModel m = tiny_model();
  BenchConfig c = tiny_cfg();
  c.warmup = 4;
  c.n_images = 5;
  BenchReport r = run_bench(m, c);
  CHECK(r.latencies_s.size() == 5);  // warmup repetitions never appear
  for (double t : r.latencies_s) CHECK(t > 0.0);
}

TEST_CASE("a single repetition is its own median") {
  PoseModel m = tiny_model();
  BenchConfig c = tiny_cfg();
  c.n_images = 1;
  BenchReport r = run_bench(m, c);
  REQUIRE(r.latencies_s.size() == 1);
  CHECK(r.median_latency_s == r.latencies_s[0]);
  CHECK(r.fps == doctest::Approx(1.0 / r.median_latency_s).epsilon(1e-12));
}

TEST_CASE("median and fps are consistent with the recorded latencies") {
  PoseModel m = tiny_model();
  BenchConfig c = tiny_cfg();
  c.n_images = 4;  // even count: median is the mean of the middle pair
  BenchReport r = run_bench(m, c);
  std::vector<double> s = r.latencies_s;
  std::sort(s.begin(), s.end());
  CHECK(r.median_latency_s == doctest::Approx(0.5 * (s[1] + s[2])).epsilon(1e-12));
  CHECK(r.fps == doctest::Approx(1.0 / r.median_latency_s).epsilon(1e-12));
}

TEST_CASE("odd repetition counts take the middle latency exactly") {
  PoseModel m = tiny_model();
  BenchConfig c = tiny_cfg();
  c.n_images = 3;
  BenchReport r = run_bench(m, c);
  std::vector<double> s = r.latencies_s;
  std::sort(s.begin(), s.end());
  CHECK(r.median_latency_s == s[1]);
}

TEST_CASE("requested sizes are padded up to the next multiple of eight") {
  PoseModel m = tiny_model();
  BenchConfig c = tiny_cfg();
  c.n_images = 1;
  c.warmup = 0;
  c.input_w = 60;
  c.input_h = 41;
  BenchReport r = run_bench(m, c);
  CHECK(r.input_w == 60);
  CHECK(r.input_h == 41);
  CHECK(r.run_w == 64);
  CHECK(r.run_h == 48);
}

TEST_CASE("invalid configurations are rejected") {
  PoseModel m = tiny_model();
  BenchConfig c = tiny_cfg();
  c.warmup = -1;
  CHECK_THROWS_AS(run_bench(m, c), config_error);
  c = tiny_cfg();
  c.n_images = 0;
  CHECK_THROWS_AS(run_bench(m, c), config_error);
  c = tiny_cfg();
  c.input_w = 0;
  CHECK_THROWS_AS(run_bench(m, c), config_error);
  c = tiny_cfg();
  c.input_h = -8;
  CHECK_THROWS_AS(run_bench(m, c), config_error);
}

TEST_CASE("the json report round-trips with the expected fields") {
  PoseModel m = tiny_model();
  BenchConfig c = tiny_cfg();
  c.n_images = 2;
  BenchReport r = run_bench(m, c);
  json j = json::parse(bench_report_json(r));
  CHECK(j.at("param_count").get<int64_t>() == m.count_params());
  CHECK(j.at("median_latency_s").get<double>() == r.median_latency_s);
  CHECK(j.at("fps").get<double>() == r.fps);
  CHECK(j.at("warmup").get<int>() == 1);
  CHECK(j.at("n_images").get<int>() == 2);
  CHECK(j.at("latencies_s").size() == 2);
  CHECK(j.at("input").at("requested_w").get<int>() == 64);
  CHECK(j.at("input").at("run_w").get<int>() == 64);
  CHECK(j.at("spec").at("family").get<std::string>() == "MPM");
  CHECK(j.at("spec").at("num_stages").get<int>() == 1);
}

#include "pm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include <json.hpp>

#include "pm/graph.hpp"

namespace pm {

namespace {

int round_up8(int v) { return (v + 7) / 8 * 8; }

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

BenchReport run_bench(PoseModel& model, const BenchConfig& cfg) {
  if (cfg.warmup < 0) throw config_error("warmup must be >= 0");
  if (cfg.n_images < 1) throw config_error("n_images must be >= 1");
  if (cfg.input_w < 1 || cfg.input_h < 1)
    throw config_error("bench input size must be positive");

  BenchReport r;
  r.spec = model.spec();
  r.param_count = model.count_params();
  r.input_w = cfg.input_w;
  r.input_h = cfg.input_h;
  r.run_w = round_up8(cfg.input_w);
  r.run_h = round_up8(cfg.input_h);
  r.warmup = cfg.warmup;
  r.n_images = cfg.n_images;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<float> dist(-0.5f, 0.5f);
  auto fresh_input = [&]() {
    auto x = Tensor::create({1, 1, r.run_h, r.run_w});
    for (auto& v : x->data) v = dist(rng);
    return x;
  };
  auto one_forward = [&](const TensorPtr& x) {
    Graph g;
    model.run_cascade(g, x, false);
  };

  for (int i = 0; i < cfg.warmup; ++i) one_forward(fresh_input());
  for (int i = 0; i < cfg.n_images; ++i) {
    auto x = fresh_input();  // input generation stays outside the clock
    auto t0 = std::chrono::steady_clock::now();
    one_forward(x);
    auto t1 = std::chrono::steady_clock::now();
    r.latencies_s.push_back(
        std::chrono::duration<double>(t1 - t0).count());
  }
  r.median_latency_s = median_of(r.latencies_s);
  r.fps = r.median_latency_s > 0.0 ? 1.0 / r.median_latency_s : 0.0;
  return r;
}

std::string bench_report_json(const BenchReport& r) {
  nlohmann::json j;
  j["spec"] = nlohmann::json::parse(spec_to_json(r.spec));
  j["param_count"] = r.param_count;
  j["median_latency_s"] = r.median_latency_s;
  j["fps"] = r.fps;
  j["input"] = {{"requested_w", r.input_w},
                {"requested_h", r.input_h},
                {"run_w", r.run_w},
                {"run_h", r.run_h}};
  j["warmup"] = r.warmup;
  j["n_images"] = r.n_images;
  j["latencies_s"] = r.latencies_s;
  return j.dump(2);
}

}  // namespace pm

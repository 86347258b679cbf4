#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pm/pose_net.hpp"

namespace pm {

// Single-image forward-pass timing. Measures only the network forward in
// evaluation mode, one image per run, after discarding warmup runs.

struct BenchConfig {
  int warmup = 5;
  int n_images = 20;
  int input_w = 444;
  int input_h = 368;
  uint64_t seed = 0;
};

struct BenchReport {
  ModelSpec spec;
  int64_t param_count = 0;
  double median_latency_s = 0.0;
  double fps = 0.0;  // 1 / median_latency_s
  int input_w = 0, input_h = 0;      // as requested
  int run_w = 0, run_h = 0;          // rounded up to multiples of 8
  int warmup = 0, n_images = 0;
  std::vector<double> latencies_s;   // the timed runs only
};

/// Times batch-1 evaluation forwards on fresh random inputs. Sizes that are
/// not multiples of 8 run padded up to the next multiple, reported as run_w
/// and run_h alongside the requested size.
BenchReport run_bench(PoseModel& model, const BenchConfig& cfg);

std::string bench_report_json(const BenchReport& r);

}  // namespace pm

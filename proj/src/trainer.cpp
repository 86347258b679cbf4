#include "pm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "pm/gt.hpp"
#include "pm/metrics.hpp"
#include "pm/ops.hpp"

namespace pm {

namespace {

uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Seed tags so every random stream in a run is independent yet reproducible.
constexpr uint64_t kDrawTag = 0x747261696e647277ull;    // training batch draws
constexpr uint64_t kTargetTag = 0x7461726765746472ull;  // target-side draws
constexpr uint64_t kHeadTag = 0x646f6d61696e6864ull;    // domain head init
constexpr uint64_t kSplitTag = 0x73706c6974ull;         // dataset splitting
constexpr uint64_t kAugTag = 0x617567ull;               // augmentation
constexpr uint64_t kAugTargetTag = 0x61756774ull;

/// Endless shuffled index stream; reshuffles whenever a pass completes.
struct IndexStream {
  std::vector<int> order;
  std::size_t pos = 0;
  std::mt19937_64 rng;

  IndexStream(std::size_t n, uint64_t seed) : rng(seed) {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<int> take(int k) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      if (pos == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
      }
      out.push_back(order[pos++]);
    }
    return out;
  }
};

/// Learning-rate plateau detector over successive validation losses.
struct Plateau {
  double best = std::numeric_limits<double>::infinity();
  int since = 0;
  int drops = 0;

  /// Returns true when the rate should drop now.
  bool observe(double val, double rel, int window) {
    bool improved =
        !std::isfinite(best) || (best - val) > rel * std::fabs(best);
    if (val < best) best = val;
    if (improved) {
      since = 0;
      return false;
    }
    if (++since >= window) {
      since = 0;
      ++drops;
      return true;
    }
    return false;
  }
};

Batch stack_samples(const std::vector<const Sample*>& items, float sigma,
                    float limb_width) {
  if (items.empty()) throw config_error("batch needs at least one sample");
  const int h = items[0]->img.height, w = items[0]->img.width;
  if (h <= 0 || w <= 0 || h % 8 != 0 || w % 8 != 0)
    throw config_error("batch images must have positive dimensions divisible "
                       "by 8, got " +
                       std::to_string(w) + "x" + std::to_string(h));
  const int n = static_cast<int>(items.size());
  const int mh = h / 8, mw = w / 8;
  Batch b;
  b.x = Tensor::create({n, 1, h, w});
  b.heat = Tensor::create({n, kNumLandmarks, mh, mw});
  b.paf = Tensor::create({n, 2 * kNumLimbs, mh, mw});
  const std::size_t npx = static_cast<std::size_t>(h) * w;
  const std::size_t nheat = static_cast<std::size_t>(kNumLandmarks) * mh * mw;
  const std::size_t npaf = static_cast<std::size_t>(2 * kNumLimbs) * mh * mw;
  for (int i = 0; i < n; ++i) {
    const Sample& s = *items[i];
    if (s.img.height != h || s.img.width != w)
      throw config_error("mixed image sizes in one batch");
    auto xi = normalize(s.img);
    std::copy(xi->data.begin(), xi->data.end(),
              b.x->data.begin() + static_cast<std::ptrdiff_t>(i * npx));
    auto t = render_target(s.ann, mh, mw, sigma, limb_width);
    std::copy(t.heatmaps->data.begin(), t.heatmaps->data.end(),
              b.heat->data.begin() + static_cast<std::ptrdiff_t>(i * nheat));
    std::copy(t.pafs->data.begin(), t.pafs->data.end(),
              b.paf->data.begin() + static_cast<std::ptrdiff_t>(i * npaf));
  }
  return b;
}

/// Draws (and optionally augments) one batch. The augmentation stream is
/// indexed by (seed, tag, running draw counter) so that runs replay exactly.
Batch draw_batch(const Dataset& d, const std::vector<int>& idx,
                 const TrainConfig& cfg, uint64_t aug_tag, uint64_t& counter) {
  if (!cfg.augment) {
    return make_batch(d, idx, cfg.sigma, cfg.limb_width);
  }
  std::vector<Sample> owned;
  owned.reserve(idx.size());
  for (int i : idx) {
    std::mt19937_64 rng(mix64(mix64(cfg.seed ^ kAugTag ^ aug_tag) + counter++));
    owned.push_back(augment(d.samples[static_cast<std::size_t>(i)],
                            cfg.augment_cfg, rng));
  }
  std::vector<const Sample*> refs;
  for (const auto& s : owned) refs.push_back(&s);
  return stack_samples(refs, cfg.sigma, cfg.limb_width);
}

void check_common(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw config_error("batch_size must be >= 1");
  if (cfg.epochs < 1) throw config_error("epochs must be >= 1");
  if (!(cfg.learning_rate >= 0.f) || !std::isfinite(cfg.learning_rate))
    throw config_error("learning_rate must be finite and >= 0");
  if (cfg.lr_drop <= 1.f) throw config_error("lr_drop must exceed 1");
  if (cfg.plateau_window < 1) throw config_error("plateau_window must be >= 1");
}

int iters_per_epoch(const TrainConfig& cfg, std::size_t n, int draw) {
  if (cfg.iters_per_epoch > 0) return cfg.iters_per_epoch;
  return static_cast<int>((n + static_cast<std::size_t>(draw) - 1) /
                          static_cast<std::size_t>(draw));
}

float domain_label(const Dataset& d, int i) {
  return d.domains.empty() ? 0.f
                           : static_cast<float>(d.domains[static_cast<std::size_t>(i)]);
}

void require_parallel_domains(const Dataset& d, const char* which) {
  if (!d.domains.empty() && d.domains.size() != d.samples.size())
    throw config_error(std::string(which) +
                       ": domain tags do not match the sample count");
}

[[noreturn]] void diverged(int64_t it, int epoch, int batch) {
  throw numeric_error("training diverged at iteration " + std::to_string(it) +
                      " (epoch " + std::to_string(epoch) + ", batch " +
                      std::to_string(batch) + ")");
}

/// Runs one optimization step; a non-finite value anywhere inside is
/// reported as divergence at this iteration.
template <typename F>
double guarded_step(F&& f, int64_t it, int epoch, int batch) {
  double total = 0.0;
  try {
    total = f();
  } catch (const numeric_error& err) {
    throw numeric_error("training diverged at iteration " +
                        std::to_string(it) + " (epoch " +
                        std::to_string(epoch) + ", batch " +
                        std::to_string(batch) + "): " + err.what());
  }
  if (!std::isfinite(total)) diverged(it, epoch, batch);
  return total;
}

}  // namespace

Dataset Dataset::load(const std::string& manifest_path) {
  Dataset d;
  for (const auto& e : load_manifest(manifest_path)) {
    Sample s;
    s.img = load_depth(manifest_relative(manifest_path, e.image));
    s.ann = load_annotation(manifest_relative(manifest_path, e.annotation));
    if (!e.mask.empty())
      s.mask = load_mask(manifest_relative(manifest_path, e.mask));
    d.samples.push_back(std::move(s));
    d.domains.push_back(e.domain);
  }
  return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d,
                                          double val_fraction, uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction <= 1.0))
    throw config_error("val_fraction must lie in [0, 1]");
  require_parallel_domains(d, "split_dataset");
  std::vector<int> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix64(seed ^ kSplitTag));
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::lround(
      val_fraction * static_cast<double>(d.size())));
  n_val = std::min(n_val, d.size());
  Dataset train, val;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto i = static_cast<std::size_t>(order[k]);
    Dataset& out = k < n_val ? val : train;
    out.samples.push_back(d.samples[i]);
    if (!d.domains.empty()) out.domains.push_back(d.domains[i]);
  }
  return {std::move(train), std::move(val)};
}

Batch make_batch(const Dataset& d, const std::vector<int>& idx, float sigma,
                 float limb_width) {
  std::vector<const Sample*> refs;
  refs.reserve(idx.size());
  for (int i : idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= d.size())
      throw config_error("batch index " + std::to_string(i) + " out of range");
    refs.push_back(&d.samples[static_cast<std::size_t>(i)]);
  }
  return stack_samples(refs, sigma, limb_width);
}

TrainConfig train_preset(const std::string& name) {
  TrainConfig c;
  if (name == "toy-plain") {
    c.mode = "plain";
    c.epochs = 2;
    c.learning_rate = 1e-3f;
  } else if (name == "toy-distill") {
    c.mode = "distill";
    c.epochs = 2;
    c.learning_rate = 1e-3f;
    c.distill.tau = 1;
  } else if (name == "toy-ada") {
    c.mode = "ada";
    c.epochs = 2;
    c.learning_rate = 1e-3f;
  } else if (name == "full-synth") {
    c.mode = "plain";
    c.epochs = 13;
    c.learning_rate = 1e-4f;
  } else if (name == "full-finetune") {
    c.mode = "finetune";
    c.epochs = 100;
    c.learning_rate = 1e-5f;
  } else if (name == "full-distill") {
    c.mode = "distill";
    c.epochs = 10;
    c.learning_rate = 1e-4f;
    c.distill.tau = 1;
  } else if (name == "full-ada") {
    c.mode = "ada";
    c.epochs = 1;
    c.iters_per_epoch = 200000;
    c.lambda_horizon = 200000;
    c.learning_rate = 1e-4f;
  } else {
    throw config_error(
        "unknown preset '" + name +
        "' (toy-plain, toy-distill, toy-ada, full-synth, full-finetune, "
        "full-distill, full-ada)");
  }
  return c;
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "iter,split,pose,domain,teacher,hints,total,lambda,lr\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line),
                  "%lld,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  static_cast<long long>(r.iter), r.split.c_str(), r.pose,
                  r.domain, r.teacher, r.hints, r.total, r.lambda, r.lr);
    out += line;
  }
  return out;
}

void save_history_csv(const std::string& path,
                      const std::vector<HistoryRow>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot write history to " + path);
  f << history_csv(rows);
  if (!f) throw io_error("short write to " + path);
}

double eval_pose_loss(PoseModel& model, const Dataset& data,
                      const TrainConfig& cfg) {
  if (data.size() == 0) throw config_error("evaluation set is empty");
  const int bs = std::max(1, cfg.batch_size);
  double sum = 0.0;
  for (std::size_t at = 0; at < data.size(); at += static_cast<std::size_t>(bs)) {
    std::vector<int> idx;
    for (std::size_t i = at; i < std::min(data.size(), at + bs); ++i)
      idx.push_back(static_cast<int>(i));
    Batch b = make_batch(data, idx, cfg.sigma, cfg.limb_width);
    Graph g;
    auto stages = model.run_cascade(g, b.x, false);
    sum += pose_loss(g, stages, b.heat, b.paf)->item64();
  }
  if (!std::isfinite(sum)) throw numeric_error("validation loss is non-finite");
  return sum / static_cast<double>(data.size());
}

TrainResult train(PoseModel& model, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg) {
  check_common(cfg);
  if (cfg.mode != "plain" && cfg.mode != "finetune")
    throw config_error("train() handles modes plain/finetune; use "
                       "train_distill or train_ada for mode '" +
                       cfg.mode + "'");
  if (train_set.size() == 0) throw config_error("training set is empty");

  const int ipe = iters_per_epoch(cfg, train_set.size(), cfg.batch_size);
  SgdOptimizer opt(model.params().entries(),
                   {cfg.learning_rate, cfg.momentum, cfg.weight_decay});
  IndexStream stream(train_set.size(), mix64(cfg.seed ^ kDrawTag));
  Plateau plateau;
  TrainResult res;
  uint64_t aug_counter = 0;
  int64_t it = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    for (int bi = 0; bi < ipe; ++bi, ++it) {
      Batch b = draw_batch(train_set, stream.take(cfg.batch_size), cfg, 0,
                           aug_counter);
      LossBreakdown bd;
      double total = guarded_step(
          [&]() {
            Graph g;
            auto stages = model.run_cascade(g, b.x, true);
            auto loss = pose_loss(g, stages, b.heat, b.paf, &bd);
            double v = loss->item64();
            g.backward(loss);
            opt.step();
            return v;
          },
          it, e, bi);
      res.history.push_back(
          {it, "train", bd.pose, 0.0, 0.0, 0.0, total, 0.0, opt.lr()});

      bool due = val_set.size() > 0 &&
                 (cfg.eval_every > 0 ? (it + 1) % cfg.eval_every == 0
                                     : bi == ipe - 1);
      if (due) {
        double v = eval_pose_loss(model, val_set, cfg);
        res.history.push_back({it, "val", v, 0.0, 0.0, 0.0, v, 0.0, opt.lr()});
        if (plateau.observe(v, cfg.plateau_rel, cfg.plateau_window))
          opt.set_lr(opt.lr() / cfg.lr_drop);
      }
    }
  }
  res.iterations = it;
  res.best_val = plateau.best;
  res.lr_drops = plateau.drops;
  res.final_lr = opt.lr();
  return res;
}

std::unique_ptr<PoseModel> grow_stage(const PoseModel& trained, int num_stages,
                                      uint64_t seed) {
  if (num_stages <= trained.spec().num_stages)
    throw config_error("grow_stage needs more stages than the trained model (" +
                       std::to_string(trained.spec().num_stages) + ")");
  ModelSpec spec = trained.spec();
  spec.num_stages = num_stages;
  auto grown = std::make_unique<PoseModel>(spec, seed);
  copy_matching_params(trained.params(), grown->params());
  return grown;
}

TrainResult train_distill(PoseModel& student, PoseModel& teacher,
                          const Dataset& train_set, const Dataset& val_set,
                          const TrainConfig& cfg) {
  check_common(cfg);
  if (cfg.mode != "distill")
    throw config_error("train_distill requires mode 'distill'");
  if (train_set.size() == 0) throw config_error("training set is empty");
  if (cfg.distill.tau < 1 || cfg.distill.tau > student.spec().num_stages ||
      cfg.distill.tau > teacher.spec().num_stages)
    throw config_error("tau must lie within both cascade depths");

  const int ipe = iters_per_epoch(cfg, train_set.size(), cfg.batch_size);
  SgdOptimizer opt(student.params().entries(),
                   {cfg.learning_rate, cfg.momentum, cfg.weight_decay});
  IndexStream stream(train_set.size(), mix64(cfg.seed ^ kDrawTag));
  Plateau plateau;
  TrainResult res;
  uint64_t aug_counter = 0;
  int64_t it = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    for (int bi = 0; bi < ipe; ++bi, ++it) {
      Batch b = draw_batch(train_set, stream.take(cfg.batch_size), cfg, 0,
                           aug_counter);
      LossBreakdown bd;
      double total = guarded_step(
          [&]() {
            // The teacher sees the same batch: evaluation mode, constants.
            Graph tg;
            auto tr = teacher.forward_with_features(tg, b.x, false);
            Graph g;
            auto sr = student.forward_with_features(g, b.x, true);
            auto loss =
                distill_loss(g, sr.stages, tr.stages, b.heat, b.paf,
                             cfg.distill, sr.features, tr.features, &bd);
            double v = loss->item64();
            g.backward(loss);
            opt.step();
            return v;
          },
          it, e, bi);
      res.history.push_back({it, "train", bd.pose, 0.0, bd.teacher, bd.hints,
                             total, 0.0, opt.lr()});

      bool due = val_set.size() > 0 &&
                 (cfg.eval_every > 0 ? (it + 1) % cfg.eval_every == 0
                                     : bi == ipe - 1);
      if (due) {
        double v = eval_pose_loss(student, val_set, cfg);
        res.history.push_back({it, "val", v, 0.0, 0.0, 0.0, v, 0.0, opt.lr()});
        if (plateau.observe(v, cfg.plateau_rel, cfg.plateau_window))
          opt.set_lr(opt.lr() / cfg.lr_drop);
      }
    }
  }
  res.iterations = it;
  res.best_val = plateau.best;
  res.lr_drops = plateau.drops;
  res.final_lr = opt.lr();
  return res;
}

namespace {

/// Head probabilities over a dataset in evaluation mode, appended in order.
void collect_domain_probs(PoseModel& model, DomainHead& head, const Dataset& d,
                          const TrainConfig& cfg, std::vector<float>* probs,
                          std::vector<float>* labels) {
  const int bs = std::max(1, cfg.batch_size);
  for (std::size_t at = 0; at < d.size(); at += static_cast<std::size_t>(bs)) {
    std::vector<int> idx;
    for (std::size_t i = at; i < std::min(d.size(), at + bs); ++i)
      idx.push_back(static_cast<int>(i));
    Batch b = make_batch(d, idx, cfg.sigma, cfg.limb_width);
    Graph g;
    auto feat = model.features(g, b.x, false);
    auto p = head.forward(g, feat, false);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      probs->push_back(p->data[k]);
      labels->push_back(domain_label(d, idx[k]));
    }
  }
}

double eval_confusion(PoseModel& model, DomainHead& head, const Dataset& a,
                      const Dataset& b, const TrainConfig& cfg) {
  std::vector<float> probs, labels;
  collect_domain_probs(model, head, a, cfg, &probs, &labels);
  collect_domain_probs(model, head, b, cfg, &probs, &labels);
  return confusion_rate(probs, labels);
}

}  // namespace

AdaResult train_ada(PoseModel& model, const Dataset& source,
                    const Dataset& target, const Dataset& source_val,
                    const Dataset& target_val, const TrainConfig& cfg,
                    const std::string& out_dir) {
  check_common(cfg);
  if (cfg.mode != "ada") throw config_error("train_ada requires mode 'ada'");
  if (cfg.batch_size < 2)
    throw config_error("ada batches hold both domains; batch_size must be >= 2");
  if (source.size() == 0 || target.size() == 0)
    throw config_error("ada needs non-empty source and target sets");
  require_parallel_domains(source, "source");
  require_parallel_domains(target, "target");
  if (!(cfg.lambda_cap >= 0.0))
    throw config_error("lambda_cap must be >= 0");

  const int ns = cfg.batch_size / 2;
  const int nt = cfg.batch_size - ns;
  const int ipe = iters_per_epoch(cfg, source.size(), ns);
  const int64_t total_iters = static_cast<int64_t>(cfg.epochs) * ipe;
  const int64_t horizon =
      cfg.lambda_horizon > 0 ? cfg.lambda_horizon : total_iters;

  const Sample& probe = source.samples[0];
  if (probe.img.height % 8 != 0 || probe.img.width % 8 != 0)
    throw config_error("image dimensions must be divisible by 8");
  ParamStore head_ps;
  std::mt19937_64 head_rng(mix64(cfg.seed ^ kHeadTag));
  DomainHead head(head_ps, "domain", model.spec().feature_width,
                  probe.img.height / 8, probe.img.width / 8, head_rng);

  SgdOptimizer opt_model(model.params().entries(),
                         {cfg.learning_rate, cfg.momentum, cfg.weight_decay});
  SgdOptimizer opt_head(head_ps.entries(),
                        {cfg.learning_rate, cfg.momentum, cfg.weight_decay});
  IndexStream s_stream(source.size(), mix64(cfg.seed ^ kDrawTag));
  IndexStream t_stream(target.size(), mix64(cfg.seed ^ kTargetTag));
  Plateau plateau;
  AdaResult out;
  TrainResult& res = out.train;
  out.best_pose_val = std::numeric_limits<double>::infinity();
  const Dataset& conf_target = target_val.size() > 0 ? target_val : target;

  std::string pose_path, conf_path;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    pose_path = out_dir + "/best_pose.ckpt";
    conf_path = out_dir + "/max_confusion.ckpt";
  }

  uint64_t aug_s = 0, aug_t = 0;
  int64_t it = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    for (int bi = 0; bi < ipe; ++bi, ++it) {
      auto sidx = s_stream.take(ns);
      Batch sb = draw_batch(source, sidx, cfg, 0, aug_s);
      double p = horizon > 0 ? static_cast<double>(it) /
                                   static_cast<double>(horizon)
                             : 0.0;
      auto lam = static_cast<float>(lambda_schedule(p, cfg.lambda_cap));

      LossBreakdown bd;
      double dval = 0.0;
      double total = guarded_step(
          [&]() {
            Graph g;
            auto sr = model.forward_with_features(g, sb.x, true);
            auto pl = pose_loss(g, sr.stages, sb.heat, sb.paf, &bd);
            TensorPtr loss = pl;
            if (lam != 0.f) {
              auto tidx = t_stream.take(nt);
              Batch tb = draw_batch(target, tidx, cfg, kAugTargetTag, aug_t);
              if (tb.x->shape[2] != sb.x->shape[2] ||
                  tb.x->shape[3] != sb.x->shape[3])
                throw config_error("source and target image sizes differ");
              auto mixed =
                  Tensor::create({ns + nt, 1, sb.x->shape[2], sb.x->shape[3]});
              std::copy(sb.x->data.begin(), sb.x->data.end(),
                        mixed->data.begin());
              std::copy(tb.x->data.begin(), tb.x->data.end(),
                        mixed->data.begin() +
                            static_cast<std::ptrdiff_t>(sb.x->data.size()));
              std::vector<float> labels;
              for (int i : sidx) labels.push_back(domain_label(source, i));
              for (int i : tidx) labels.push_back(domain_label(target, i));
              auto feat = model.features(g, mixed, true);
              auto dprobs =
                  head.forward(g, grad_reverse(g, feat, 1.f, "grl"), true);
              auto dl = domain_loss(g, dprobs, labels);
              dval = dl->item64();
              loss = ada_objective(g, pl, dl, lam);
            }
            double v = loss->item64();
            g.backward(loss);
            opt_model.step();
            if (lam != 0.f) opt_head.step();
            return v;
          },
          it, e, bi);
      res.history.push_back({it, "train", bd.pose, dval, 0.0, 0.0, total,
                             static_cast<double>(lam), opt_model.lr()});

      bool due = source_val.size() > 0 &&
                 (cfg.eval_every > 0 ? (it + 1) % cfg.eval_every == 0
                                     : bi == ipe - 1);
      if (due) {
        double v = eval_pose_loss(model, source_val, cfg);
        double conf = eval_confusion(model, head, source_val, conf_target, cfg);
        res.history.push_back({it, "val", v, conf, 0.0, 0.0, v,
                               static_cast<double>(lam), opt_model.lr()});
        if (v < out.best_pose_val) {
          out.best_pose_val = v;
          if (!pose_path.empty()) {
            save_checkpoint(pose_path, model);
            out.best_pose_checkpoint = pose_path;
          }
        }
        if (conf > out.best_confusion) {
          out.best_confusion = conf;
          if (!conf_path.empty()) {
            save_checkpoint(conf_path, model);
            out.best_confusion_checkpoint = conf_path;
          }
        }
        if (plateau.observe(v, cfg.plateau_rel, cfg.plateau_window)) {
          opt_model.set_lr(opt_model.lr() / cfg.lr_drop);
          opt_head.set_lr(opt_head.lr() / cfg.lr_drop);
        }
      }
    }
  }
  Dataset empty;
  out.final_confusion = eval_confusion(
      model, head, source_val.size() > 0 ? source_val : empty, conf_target,
      cfg);
  res.iterations = it;
  res.best_val = out.best_pose_val;
  res.lr_drops = plateau.drops;
  res.final_lr = opt_model.lr();
  return out;
}

}  // namespace pm

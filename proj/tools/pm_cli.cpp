// Command-line surface: dataset synthesis, training loops, decoding,
// evaluation, PR curves, and forward-pass benchmarking. Every subcommand is
// driven by one JSON config document (--config) refined by --set overrides;
// the effective config is echoed into each output artifact.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pm/bench.hpp"
#include "pm/data.hpp"
#include "pm/decoder.hpp"
#include "pm/graph.hpp"
#include "pm/losses.hpp"
#include "pm/metrics.hpp"
#include "pm/pose_net.hpp"
#include "pm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pm;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  uint64_t seed = 0;
  bool seed_given = false;
};

json load_config(const CommonArgs& a) {
  json doc = json::object();
  if (!a.config_path.empty()) {
    std::ifstream f(a.config_path);
    if (!f) throw io_error("cannot open config " + a.config_path);
    f >> doc;
    if (!doc.is_object()) throw config_error("config root must be an object");
  }
  for (const auto& kv : a.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw config_error("--set expects key.path=value, got '" + kv + "'");
    std::string path = kv.substr(0, eq), value = kv.substr(eq + 1);
    json* node = &doc;
    std::size_t at = 0;
    while (true) {
      auto dot = path.find('.', at);
      std::string key = path.substr(at, dot - at);
      if (key.empty()) throw config_error("empty key in --set path '" + path + "'");
      if (dot == std::string::npos) {
        json parsed;
        try {
          parsed = json::parse(value);
        } catch (const json::exception&) {
          parsed = value;  // plain string
        }
        (*node)[key] = parsed;
        break;
      }
      node = &(*node)[key];
      if (!node->is_object()) *node = json::object();
      at = dot + 1;
    }
  }
  return doc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot write " + path.string());
  f << text;
  if (!f) throw io_error("short write to " + path.string());
}

fs::path ensure_out(const std::string& out) {
  if (out.empty()) throw config_error("this subcommand needs --out <dir>");
  fs::create_directories(out);
  return fs::path(out);
}

void echo_config(const fs::path& dir, const json& cfg) {
  write_text(dir / "config.json", cfg.dump(2) + "\n");
}

/// Emits the result on stdout and, when --out was given, into <out>/<name>
/// with the effective config attached.
void emit(const json& result, const json& cfg, const CommonArgs& a,
          const std::string& name) {
  json with = result;
  with["config"] = cfg;
  std::cout << with.dump(2) << "\n";
  if (!a.out.empty()) {
    fs::path dir = ensure_out(a.out);
    write_text(dir / name, with.dump(2) + "\n");
  }
}

ModelSpec spec_from_cli(const json& m) {
  Family fam = family_from_name(m.value("family", std::string("MPM")));
  ModelSpec spec = default_spec(fam, m.value("stages", 2));
  spec.feature_width = m.value("feature_width", spec.feature_width);
  spec.input_w = m.value("input_w", spec.input_w);
  spec.input_h = m.value("input_h", spec.input_h);
  return spec;
}

std::unique_ptr<PoseModel> model_from(const json& cfg, uint64_t seed) {
  const bool has_ckpt = cfg.contains("checkpoint");
  const bool has_model = cfg.contains("model");
  if (has_ckpt && has_model)
    throw config_error("give either 'checkpoint' or 'model', not both");
  if (has_ckpt) return load_checkpoint(cfg["checkpoint"].get<std::string>());
  if (has_model)
    return std::make_unique<PoseModel>(spec_from_cli(cfg["model"]), seed);
  throw config_error("config needs a 'checkpoint' path or a 'model' section");
}

TrainConfig train_config_from(const json& root, const CommonArgs& a) {
  json t = root.value("train", json::object());
  TrainConfig c;
  if (t.contains("preset")) c = train_preset(t["preset"].get<std::string>());
  c.batch_size = t.value("batch_size", c.batch_size);
  c.epochs = t.value("epochs", c.epochs);
  c.iters_per_epoch = t.value("iters_per_epoch", c.iters_per_epoch);
  c.learning_rate = t.value("learning_rate", c.learning_rate);
  c.momentum = t.value("momentum", c.momentum);
  c.weight_decay = t.value("weight_decay", c.weight_decay);
  c.lr_drop = t.value("lr_drop", c.lr_drop);
  c.plateau_window = t.value("plateau_window", c.plateau_window);
  c.plateau_rel = t.value("plateau_rel", c.plateau_rel);
  c.eval_every = t.value("eval_every", c.eval_every);
  c.sigma = t.value("sigma", c.sigma);
  c.limb_width = t.value("limb_width", c.limb_width);
  c.seed = t.value("seed", c.seed);
  c.mode = t.value("mode", c.mode);
  c.augment = t.value("augment", c.augment);
  if (t.contains("augment_cfg")) {
    const json& g = t["augment_cfg"];
    c.augment_cfg.rotate_prob = g.value("rotate_prob", c.augment_cfg.rotate_prob);
    c.augment_cfg.max_angle_deg =
        g.value("max_angle_deg", c.augment_cfg.max_angle_deg);
    c.augment_cfg.crop_prob = g.value("crop_prob", c.augment_cfg.crop_prob);
    c.augment_cfg.crop_w = g.value("crop_w", c.augment_cfg.crop_w);
    c.augment_cfg.crop_h = g.value("crop_h", c.augment_cfg.crop_h);
    c.augment_cfg.dropout_frac =
        g.value("dropout_frac", c.augment_cfg.dropout_frac);
  }
  if (t.contains("distill")) {
    const json& d = t["distill"];
    c.distill.tau = d.value("tau", c.distill.tau);
    c.distill.alpha = d.value("alpha", c.distill.alpha);
    c.distill.gamma = d.value("gamma", c.distill.gamma);
    c.distill.use_hints = d.value("use_hints", c.distill.use_hints);
  }
  c.lambda_cap = t.value("lambda_cap", c.lambda_cap);
  c.lambda_horizon = t.value("lambda_horizon", c.lambda_horizon);
  if (a.seed_given) c.seed = a.seed;
  return c;
}

/// Loads train/val sets: an explicit val manifest wins, otherwise
/// val_fraction splits the training manifest.
std::pair<Dataset, Dataset> data_from(const json& root, uint64_t seed) {
  json d = root.value("data", json::object());
  if (!d.contains("train_manifest"))
    throw config_error("config needs data.train_manifest");
  Dataset train = Dataset::load(d["train_manifest"].get<std::string>());
  Dataset val;
  if (d.contains("val_manifest")) {
    val = Dataset::load(d["val_manifest"].get<std::string>());
  } else if (d.contains("val_fraction")) {
    auto parts = split_dataset(train, d["val_fraction"].get<double>(), seed);
    train = std::move(parts.first);
    val = std::move(parts.second);
  }
  return {std::move(train), std::move(val)};
}

DecoderConfig decoder_from(const json& root) {
  json d = root.value("decoder", json::object());
  DecoderConfig c;
  c.peak_threshold = d.value("peak_threshold", c.peak_threshold);
  c.duplicate_radius = d.value("duplicate_radius", c.duplicate_radius);
  c.n_samples = d.value("n_samples", c.n_samples);
  c.paf_threshold = d.value("paf_threshold", c.paf_threshold);
  c.sample_fraction = d.value("sample_fraction", c.sample_fraction);
  c.min_parts = d.value("min_parts", c.min_parts);
  return c;
}

json result_json(const TrainResult& r) {
  return {{"iterations", r.iterations},
          {"best_val", r.best_val},
          {"lr_drops", r.lr_drops},
          {"final_lr", r.final_lr}};
}

// ---- per-image decoding ----

TensorPtr image_input(const DepthImage& img) {
  auto flat = normalize(img);  // [1, H, W]
  auto x = Tensor::create({1, 1, img.height, img.width});
  x->data = flat->data;
  return x;
}

/// Last-stage maps of a batch-1 forward, reshaped to [C, h, w].
ImageMaps infer_maps(PoseModel& model, const DepthImage& img) {
  Graph g;
  auto stages = model.run_cascade(g, image_input(img), false);
  const StageOutput& last = stages.back();
  ImageMaps m;
  m.heatmaps = Tensor::create({last.heatmaps->shape[1], last.heatmaps->shape[2],
                               last.heatmaps->shape[3]});
  m.heatmaps->data = last.heatmaps->data;
  m.pafs = Tensor::create(
      {last.pafs->shape[1], last.pafs->shape[2], last.pafs->shape[3]});
  m.pafs->data = last.pafs->data;
  return m;
}

json pose_to_json(const PoseEstimate& p) {
  json lms = json::array();
  for (int j = 0; j < kNumLandmarks; ++j) {
    lms.push_back({{"x", p.landmarks[static_cast<std::size_t>(j)].x},
                   {"y", p.landmarks[static_cast<std::size_t>(j)].y},
                   {"visible", p.landmarks[static_cast<std::size_t>(j)].visible},
                   {"confidence", p.confidences[static_cast<std::size_t>(j)]}});
  }
  return {{"landmarks", lms}, {"score", p.score}, {"parts", p.parts}};
}

PoseEstimate pose_from_json(const json& j) {
  PoseEstimate p;
  const json& lms = j.at("landmarks");
  if (!lms.is_array() || lms.size() != static_cast<std::size_t>(kNumLandmarks))
    throw config_error("a pose needs exactly " +
                       std::to_string(kNumLandmarks) + " landmarks");
  for (std::size_t k = 0; k < lms.size(); ++k) {
    p.landmarks[k].x = lms[k].at("x").get<float>();
    p.landmarks[k].y = lms[k].at("y").get<float>();
    p.landmarks[k].visible = lms[k].at("visible").get<bool>();
    p.confidences[k] = lms[k].value("confidence", 0.f);
  }
  p.score = j.value("score", 0.f);
  p.parts = j.value("parts", 0);
  return p;
}

// ---- subcommands ----

int cmd_synth(const CommonArgs& a) {
  json cfg = load_config(a);
  fs::path dir = ensure_out(a.out);
  DatasetConfig dc;
  dc.scene.width = cfg.value("width", dc.scene.width);
  dc.scene.height = cfg.value("height", dc.scene.height);
  dc.scene.min_persons = cfg.value("min_persons", dc.scene.min_persons);
  dc.scene.max_persons = cfg.value("max_persons", dc.scene.max_persons);
  dc.scene.min_distance_m = cfg.value("min_distance_m", dc.scene.min_distance_m);
  dc.scene.max_distance_m = cfg.value("max_distance_m", dc.scene.max_distance_m);
  dc.scene.edge_shadows = cfg.value("edge_shadows", dc.scene.edge_shadows);
  dc.scene.salt_dropout = cfg.value("salt_dropout", dc.scene.salt_dropout);
  dc.fuse_bg = cfg.value("fuse_background", dc.fuse_bg);
  dc.sensor_noise = cfg.value("sensor_noise", dc.sensor_noise);
  dc.margin = cfg.value("margin", dc.margin);
  dc.count = cfg.value("count", dc.count);
  dc.domain = cfg.value("domain", dc.domain);
  dc.seed = cfg.value("seed", dc.seed);
  if (a.seed_given) dc.seed = a.seed;
  std::string prefix = cfg.value("prefix", std::string("scene"));
  auto entries = generate_dataset(dir.string(), prefix, dc);
  echo_config(dir, cfg);
  std::cout << "wrote " << entries.size() << " samples; manifest "
            << (dir / (prefix + "_manifest.json")).string() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& a) {
  json cfg = load_config(a);
  fs::path dir = ensure_out(a.out);
  TrainConfig tc = train_config_from(cfg, a);
  auto model = model_from(cfg, tc.seed);
  auto [train_set, val_set] = data_from(cfg, tc.seed);
  TrainResult r = train(*model, train_set, val_set, tc);
  save_checkpoint((dir / "model.ckpt").string(), *model);
  save_history_csv((dir / "history.csv").string(), r.history);
  echo_config(dir, cfg);
  json out = result_json(r);
  out["checkpoint"] = (dir / "model.ckpt").string();
  emit(out, cfg, a, "result.json");
  return 0;
}

int cmd_grow(const CommonArgs& a) {
  json cfg = load_config(a);
  fs::path dir = ensure_out(a.out);
  if (!cfg.contains("checkpoint"))
    throw config_error("grow needs a 'checkpoint' path");
  auto trained = load_checkpoint(cfg["checkpoint"].get<std::string>());
  int stages = cfg.value("stages", trained->spec().num_stages + 1);
  uint64_t seed = cfg.value("seed", 0);
  if (a.seed_given) seed = a.seed;
  auto grown = grow_stage(*trained, stages, seed);
  save_checkpoint((dir / "model.ckpt").string(), *grown);
  echo_config(dir, cfg);
  json out{{"stages", grown->spec().num_stages},
           {"param_count", grown->count_params()},
           {"checkpoint", (dir / "model.ckpt").string()}};
  emit(out, cfg, a, "result.json");
  return 0;
}

int cmd_distill(const CommonArgs& a) {
  json cfg = load_config(a);
  fs::path dir = ensure_out(a.out);
  TrainConfig tc = train_config_from(cfg, a);
  if (tc.mode != "distill") tc.mode = "distill";
  if (!cfg.contains("teacher_checkpoint"))
    throw config_error("distill needs a 'teacher_checkpoint' path");
  auto teacher = load_checkpoint(cfg["teacher_checkpoint"].get<std::string>());
  json student_cfg = cfg.value("student", json::object());
  auto student = model_from(student_cfg, tc.seed);
  auto [train_set, val_set] = data_from(cfg, tc.seed);
  TrainResult r = train_distill(*student, *teacher, train_set, val_set, tc);
  save_checkpoint((dir / "student.ckpt").string(), *student);
  save_history_csv((dir / "history.csv").string(), r.history);
  echo_config(dir, cfg);
  json out = result_json(r);
  out["checkpoint"] = (dir / "student.ckpt").string();
  emit(out, cfg, a, "result.json");
  return 0;
}

int cmd_adapt(const CommonArgs& a) {
  json cfg = load_config(a);
  fs::path dir = ensure_out(a.out);
  TrainConfig tc = train_config_from(cfg, a);
  if (tc.mode != "ada") tc.mode = "ada";
  json d = cfg.value("data", json::object());
  if (!d.contains("source_manifest") || !d.contains("target_manifest"))
    throw config_error("adapt needs data.source_manifest and data.target_manifest");
  Dataset source = Dataset::load(d["source_manifest"].get<std::string>());
  Dataset target = Dataset::load(d["target_manifest"].get<std::string>());
  Dataset source_val, target_val;
  if (d.contains("source_val_manifest")) {
    source_val = Dataset::load(d["source_val_manifest"].get<std::string>());
  } else if (d.contains("val_fraction")) {
    auto parts = split_dataset(source, d["val_fraction"].get<double>(), tc.seed);
    source = std::move(parts.first);
    source_val = std::move(parts.second);
  }
  if (d.contains("target_val_manifest"))
    target_val = Dataset::load(d["target_val_manifest"].get<std::string>());
  auto model = model_from(cfg, tc.seed);
  AdaResult r = train_ada(*model, source, target, source_val, target_val, tc,
                          dir.string());
  save_checkpoint((dir / "final.ckpt").string(), *model);
  save_history_csv((dir / "history.csv").string(), r.train.history);
  echo_config(dir, cfg);
  json out = result_json(r.train);
  out["final_confusion"] = r.final_confusion;
  out["best_confusion"] = r.best_confusion;
  out["best_pose_val"] = r.best_pose_val;
  out["best_pose_checkpoint"] = r.best_pose_checkpoint;
  out["best_confusion_checkpoint"] = r.best_confusion_checkpoint;
  out["final_checkpoint"] = (dir / "final.ckpt").string();
  emit(out, cfg, a, "report.json");
  return 0;
}

int cmd_decode(const CommonArgs& a) {
  json cfg = load_config(a);
  if (!cfg.contains("checkpoint"))
    throw config_error("decode needs a 'checkpoint' path");
  auto model = load_checkpoint(cfg["checkpoint"].get<std::string>());
  DecoderConfig dc = decoder_from(cfg);
  json items = json::array();
  auto decode_one = [&](const std::string& name, const DepthImage& img) {
    ImageMaps m = infer_maps(*model, img);
    auto poses = decode(*m.heatmaps, *m.pafs, dc);
    json jp = json::array();
    for (const auto& p : poses) jp.push_back(pose_to_json(p));
    items.push_back({{"image", name}, {"poses", jp}});
  };
  if (cfg.contains("image")) {
    std::string path = cfg["image"].get<std::string>();
    decode_one(path, load_depth(path));
  } else if (cfg.contains("manifest")) {
    std::string mpath = cfg["manifest"].get<std::string>();
    for (const auto& e : load_manifest(mpath)) {
      auto ipath = manifest_relative(mpath, e.image);
      decode_one(ipath, load_depth(ipath));
    }
  } else {
    throw config_error("decode needs an 'image' or 'manifest' path");
  }
  emit(json{{"items", items}}, cfg, a, "predictions.json");
  return 0;
}

int cmd_eval(const CommonArgs& a) {
  json cfg = load_config(a);
  if (!cfg.contains("predictions") || !cfg.contains("manifest"))
    throw config_error("eval needs 'predictions' and 'manifest' paths");
  std::ifstream pf(cfg["predictions"].get<std::string>());
  if (!pf) throw io_error("cannot open predictions file");
  json pdoc;
  pf >> pdoc;
  std::vector<std::vector<PoseEstimate>> preds;
  for (const auto& item : pdoc.at("items")) {
    std::vector<PoseEstimate> per;
    for (const auto& jp : item.at("poses")) per.push_back(pose_from_json(jp));
    preds.push_back(std::move(per));
  }
  std::string mpath = cfg["manifest"].get<std::string>();
  std::vector<SkeletonAnnotation> gts;
  for (const auto& e : load_manifest(mpath))
    gts.push_back(load_annotation(manifest_relative(mpath, e.annotation)));
  if (preds.size() != gts.size())
    throw config_error("prediction count " + std::to_string(preds.size()) +
                       " does not match annotation count " +
                       std::to_string(gts.size()));
  MatchConfig mc;
  if (cfg.contains("thresholds"))
    mc.thresholds = cfg["thresholds"].get<std::vector<float>>();
  EvalReport rep = evaluate(preds, gts, mc);
  emit(json::parse(eval_report_json(rep)), cfg, a, "eval.json");
  return 0;
}

int cmd_curve(const CommonArgs& a) {
  json cfg = load_config(a);
  if (!cfg.contains("checkpoint") || !cfg.contains("manifest"))
    throw config_error("curve needs 'checkpoint' and 'manifest' paths");
  auto model = load_checkpoint(cfg["checkpoint"].get<std::string>());
  DecoderConfig dc = decoder_from(cfg);
  std::vector<float> grid =
      cfg.value("grid", std::vector<float>{0.02f, 0.05f, 0.1f, 0.15f, 0.2f,
                                           0.3f, 0.4f, 0.5f});
  std::string mpath = cfg["manifest"].get<std::string>();
  std::vector<ImageMaps> maps;
  std::vector<SkeletonAnnotation> gts;
  for (const auto& e : load_manifest(mpath)) {
    maps.push_back(
        infer_maps(*model, load_depth(manifest_relative(mpath, e.image))));
    gts.push_back(load_annotation(manifest_relative(mpath, e.annotation)));
  }
  MatchConfig mc;
  if (cfg.contains("thresholds"))
    mc.thresholds = cfg["thresholds"].get<std::vector<float>>();
  Curve c = pr_curve(maps, gts, dc, grid, mc);
  json pts = json::array();
  for (const auto& p : c.points)
    pts.push_back({{"peak_threshold", p.peak_threshold},
                   {"ap", p.ap},
                   {"ar", p.ar},
                   {"f", p.f}});
  emit(json{{"points", pts}, {"best", c.best}}, cfg, a, "curve.json");
  return 0;
}

int cmd_bench(const CommonArgs& a) {
  json cfg = load_config(a);
  BenchConfig bc;
  bc.warmup = cfg.value("warmup", bc.warmup);
  bc.n_images = cfg.value("n_images", bc.n_images);
  bc.input_w = cfg.value("width", bc.input_w);
  bc.input_h = cfg.value("height", bc.input_h);
  bc.seed = cfg.value("seed", bc.seed);
  if (a.seed_given) bc.seed = a.seed;
  auto model = model_from(cfg, bc.seed);
  BenchReport r = run_bench(*model, bc);
  emit(json::parse(bench_report_json(r)), cfg, a, "bench.json");
  return 0;
}

void add_common(CLI::App* sub, CommonArgs* a) {
  sub->add_option("--config", a->config_path, "JSON config document");
  sub->add_option("--set", a->sets,
                  "Override a config key, e.g. --set train.epochs=5 "
                  "(repeatable; value parsed as JSON, else as a string)");
  sub->add_option("--out", a->out, "Output directory");
  sub->add_option("--seed", a->seed, "Seed override")
      ->each([a](const std::string&) { a->seed_given = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Depth-image pose toolkit: synthesize data, train pose machines, "
      "decode, evaluate, and benchmark"};
  app.require_subcommand(1);

  struct Cmd {
    const char* name;
    const char* help;
    std::function<int(const CommonArgs&)> fn;
  };
  const std::vector<Cmd> cmds{
      {"synth",
       "Generate a synthetic depth dataset (keys: count, width, height, "
       "min_persons, max_persons, min_distance_m, max_distance_m, "
       "edge_shadows, salt_dropout, fuse_background, sensor_noise, margin, "
       "domain, prefix, seed)",
       cmd_synth},
      {"train",
       "Train with multi-stage supervision (sections: model|checkpoint, "
       "data.train_manifest, data.val_manifest|data.val_fraction, train.*)",
       cmd_train},
      {"grow",
       "Add cascade stages to a trained checkpoint (keys: checkpoint, "
       "stages, seed)",
       cmd_grow},
      {"distill",
       "Train a student against a teacher checkpoint (sections: student, "
       "teacher_checkpoint, data.*, train.* with train.distill.*)",
       cmd_distill},
      {"adapt",
       "Adversarial domain adaptation (sections: model|checkpoint, "
       "data.source_manifest, data.target_manifest, data.val_fraction, "
       "train.* with train.lambda_cap/lambda_horizon)",
       cmd_adapt},
      {"decode",
       "Decode poses from a depth image or a manifest (keys: checkpoint, "
       "image|manifest, decoder.*)",
       cmd_decode},
      {"eval",
       "Score decoded predictions against annotations (keys: predictions, "
       "manifest, thresholds)",
       cmd_eval},
      {"curve",
       "Sweep the peak threshold and dump the PR curve (keys: checkpoint, "
       "manifest, grid, decoder.*)",
       cmd_curve},
      {"bench",
       "Median single-image forward latency and FPS (keys: model|checkpoint, "
       "n_images, warmup, width, height, seed)",
       cmd_bench},
  };

  std::vector<std::unique_ptr<CommonArgs>> args;
  std::function<int()> run;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    args.push_back(std::make_unique<CommonArgs>());
    CommonArgs* a = args.back().get();
    add_common(sub, a);
    auto fn = c.fn;
    sub->callback([fn, a, &run]() { run = [fn, a]() { return fn(*a); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 1;
  }

  try {
    return run ? run() : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

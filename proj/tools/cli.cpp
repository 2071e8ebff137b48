// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <signal.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "rahf/annotation_service.hpp"
#include "rahf/dataset_io.hpp"
#include "rahf/evaluation.hpp"
#include "rahf/feedback.hpp"
#include "rahf/image.hpp"
#include "rahf/metrics.hpp"
#include "rahf/model.hpp"
#include "rahf/pipelines.hpp"
#include "rahf/training.hpp"
#include "rahf/vocabulary.hpp"

namespace rahf::cli {

namespace fs = std::filesystem;

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("RAHF_SEED"); env && *env) {
    std::size_t used = 0;
    const std::string s(env);
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument("RAHF_SEED is not an integer: " + s);
    return v;
  }
  return 0;
}

namespace {

fs::path image_path(const fs::path& dir, const std::string& image_id) {
  return dir / (safe_file_stem(image_id) + ".png");
}

Image load_model_input(const fs::path& path) { return read_png_rgb(path); }

void put(std::ostream& out, const std::string& key, double v) {
  out << key << '=' << std::setprecision(9) << v << '\n';
}

void dump_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

double default_radius(int height, const std::optional<double>& flag) {
  return flag ? *flag : height * kDefaultDilationFraction;
}

// ---- subcommands ----------------------------------------------------------

struct ConsolidateArgs {
  fs::path in, out;
  std::optional<fs::path> images;
  double radius_frac = kDefaultRadiusFraction;
};

int cmd_consolidate(const ConsolidateArgs& a, std::ostream& out) {
  const auto records = read_annotations(a.in);
  const auto samples = consolidate_records(records, a.radius_frac);
  std::vector<IndexedSample> split;
  for (const auto& s : samples) split.push_back({s, std::nullopt});
  write_split(a.out, split);
  std::size_t copied = 0;
  if (a.images) {
    fs::create_directories(a.out / kImageDir);
    for (const auto& s : samples) {
      const fs::path src = image_path(*a.images, s.image_id);
      if (!fs::exists(src)) throw std::runtime_error("missing image for " + s.image_id + ": " + src.string());
      fs::copy_file(src, image_path(a.out / kImageDir, s.image_id), fs::copy_options::overwrite_existing);
      ++copied;
    }
  }
  std::size_t skipped = 0;
  for (const auto& r : records) skipped += r.skipped ? 1 : 0;
  out << "records=" << records.size() << '\n'
      << "skipped_records=" << skipped << '\n'
      << "samples=" << samples.size() << '\n'
      << "images_copied=" << copied << '\n';
  return 0;
}

struct EvalArgs {
  fs::path pred, gt, report;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<ConsolidatedSample> pred, gt;
  for (auto& s : read_split(a.pred)) pred.push_back(std::move(s.sample));
  for (auto& s : read_split(a.gt)) gt.push_back(std::move(s.sample));
  const std::string text = metrics::to_text(evaluate_predictions(pred, gt));
  dump_text(a.report, text);
  out << text;
  return 0;
}

struct TrainArgs {
  fs::path data, model_config, train_config, out;
  std::optional<fs::path> history;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ModelConfig mc = ModelConfig::from_kv(KvConfig::load(a.model_config));
  TrainConfig tc = TrainConfig::from_kv(KvConfig::load(a.train_config));
  tc.seed = resolve_seed(a.seed);

  std::vector<TrainingSample> data;
  std::vector<std::string> prompts;
  for (const auto& s : read_split(a.data)) {
    const Image img = read_png_rgb(image_path(a.data / kImageDir, s.sample.image_id));
    data.push_back(make_training_sample(s.sample, img, mc.image_size));
    prompts.push_back(s.sample.prompt);
  }
  if (data.empty()) throw std::runtime_error("no training samples in " + a.data.string());
  RahfModel model(mc, Vocabulary::build(prompts), tc.seed);
  const int every = std::max(1, tc.total_steps / 10);
  const TrainResult result = train(model, data, tc, [&](const LossRecord& r) {
    if (r.step % every == 0 || r.step == tc.total_steps) err << loss_record_json(r) << '\n';
  });
  save_checkpoint(a.out, model);
  if (a.history) write_loss_history(*a.history, result.history);
  out << "samples=" << data.size() << '\n' << "parameters=" << model.parameter_count() << '\n'
      << "steps=" << result.history.size() << '\n';
  put(out, "final_loss", result.history.empty() ? 0.0 : result.history.back().total);
  out << "checkpoint=" << a.out.string() << '\n';
  return 0;
}

struct PredictArgs {
  fs::path ckpt, image, out;
  std::string prompt;
  std::optional<std::string> task, image_id;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const RahfModel model = load_checkpoint(a.ckpt);
  const Image img = load_model_input(a.image);
  const std::string id = a.image_id.value_or(a.image.stem().string());
  std::optional<Task> task;
  if (a.task) task = parse_task(*a.task);
  std::vector<std::string> words;
  const ConsolidatedSample s = predict_sample(model, id, img, a.prompt, task, &words);

  std::vector<IndexedSample> split;
  if (fs::exists(a.out / kIndexFile)) split = read_split(a.out);
  std::erase_if(split, [&](const IndexedSample& e) { return e.sample.image_id == id; });
  split.push_back({s, join_words(words)});
  write_split(a.out, split);

  out << "image_id=" << id << '\n';
  for (ScoreType t : kScoreTypes) put(out, "score." + std::string(score_name(t)), s.scores[static_cast<int>(t)]);
  for (HeatmapType t : kHeatmapTypes) {
    const Heatmap& h = s.heatmap(t);
    float mx = 0.0f;
    for (float v : h.values()) mx = std::max(mx, v);
    put(out, "heatmap." + std::string(heatmap_name(t)) + ".max", mx);
  }
  out << "decoded=" << join_words(words) << '\n';
  return 0;
}

struct FilterArgs {
  fs::path candidates, out;
  double threshold = 0.8;
  std::optional<fs::path> ckpt;
  std::string score_type = "plausibility";
};

// <dir>/candidates.ndjson: {"prompt", "image", optional "score"} per line.
int cmd_filter(const FilterArgs& a, std::ostream& out) {
  const fs::path manifest = a.candidates / "candidates.ndjson";
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open " + manifest.string());
  std::optional<RahfModel> model;
  const ScoreType type = parse_score_type(a.score_type);
  std::map<std::string, std::vector<Candidate>> groups;
  std::map<std::string, std::vector<std::string>> files;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line);
    const std::string prompt = j.at("prompt").get<std::string>();
    const std::string file = j.at("image").get<std::string>();
    Candidate c;
    if (j.contains("score")) {
      c.score = j.at("score").get<float>();
    } else {
      if (!a.ckpt) throw std::runtime_error(manifest.string() + ":" + std::to_string(lineno) + ": no score and no --ckpt");
      if (!model) model.emplace(load_checkpoint(*a.ckpt));
      Image img = read_png_rgb(a.candidates / file);
      const int size = model->config().image_size;
      if (img.width() != size || img.height() != size) img = resize_bilinear(img, size, size);
      c.score = model->predict_score(img, prompt, type);
    }
    groups[prompt].push_back(std::move(c));
    files[prompt].push_back(file);
  }
  const auto selected = filter_finetune_set(groups, a.threshold);
  std::ofstream f(a.out);
  if (!f) throw std::runtime_error("cannot write " + a.out.string());
  for (const auto& s : selected) {
    f << json{{"prompt", s.prompt}, {"image", files[s.prompt][s.index]}, {"score", s.score}}.dump() << '\n';
  }
  out << "prompts=" << groups.size() << '\n' << "selected=" << selected.size() << '\n';
  return 0;
}

struct MaskArgs {
  fs::path heatmap, out;
  double threshold = kDefaultMaskThreshold;
  std::optional<double> dilate;
};

int cmd_mask(const MaskArgs& a, std::ostream& out) {
  const Heatmap h = read_heatmap_png(a.heatmap);
  const double r = default_radius(h.height(), a.dilate);
  const BinaryMask m = heatmap_to_mask(h, a.threshold, r);
  write_mask_png(a.out, m);
  put(out, "threshold", a.threshold);
  put(out, "radius", r);
  out << "mask_pixels=" << m.count() << '\n';
  return 0;
}

struct RepairArgs {
  fs::path image, ckpt, out;
  std::string prompt, generator = "stub";
  int n = 4;
  double threshold = kDefaultMaskThreshold;
  std::optional<double> dilate;
  std::optional<fs::path> audit;
  std::optional<std::uint64_t> seed;
};

int cmd_repair(const RepairArgs& a, std::ostream& out) {
  if (a.generator != "stub") throw std::invalid_argument("unknown generator '" + a.generator + "' (available: stub)");
  const RahfModel model = load_checkpoint(a.ckpt);
  const RahfFeedbackModel fm(model);
  const int size = model.config().image_size;
  Image img = load_model_input(a.image);
  if (img.width() != size || img.height() != size) img = resize_bilinear(img, size, size);
  StubGenerator gen(size, size);
  RepairOptions opts;
  opts.threshold = a.threshold;
  opts.radius_px = default_radius(size, a.dilate);
  opts.candidates = a.n;
  opts.seed = resolve_seed(a.seed);
  auto write_audit = [&](const RepairAudit& audit) {
    if (a.audit) dump_text(*a.audit, audit.to_json().dump() + "\n");
  };
  try {
    const RepairResult r = inpaint_repair(img, a.prompt, fm, gen, opts);
    write_audit(r.audit);
    write_png_rgb(a.out, r.image);
    out << "mask_pixels=" << r.audit.mask_pixels << '\n' << "generator_calls=" << gen.inpaint_calls() << '\n';
    put(out, "original_score", r.audit.original_score);
    if (r.audit.chosen) {
      out << "chosen=" << *r.audit.chosen << '\n';
      put(out, "chosen_score", r.audit.candidate_scores[*r.audit.chosen]);
    } else {
      out << "chosen=none\n";
    }
  } catch (const RepairError& e) {
    write_audit(e.audit());
    throw;
  }
  return 0;
}

struct GuideArgs {
  fs::path image, ckpt, out;
  std::string prompt, score_type = "aesthetics";
  int steps = 10;
  double step_size = 1e-3;
};

int cmd_guide(const GuideArgs& a, std::ostream& out) {
  const RahfModel model = load_checkpoint(a.ckpt);
  const RahfFeedbackModel fm(model);
  const ScoreType type = parse_score_type(a.score_type);
  const int size = model.config().image_size;
  Image img = load_model_input(a.image);
  if (img.width() != size || img.height() != size) img = resize_bilinear(img, size, size);
  put(out, "score.0", fm.predict_score(img, a.prompt, type));
  for (int k = 1; k <= a.steps; ++k) {
    img = guidance_step(img, a.prompt, type, a.step_size, fm);
    put(out, "score." + std::to_string(k), fm.predict_score(img, a.prompt, type));
  }
  write_png_rgb(a.out, img);
  return 0;
}

struct ServeArgs {
  fs::path store, images;
  std::optional<fs::path> ui;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  AnnotationStore store(a.store, read_task_manifest(a.images / kTaskManifest));
  AnnotationServer server(store, ServiceOptions{a.images, a.ui});
  const int port = server.bind(a.host, a.port);
  if (port < 0) throw std::runtime_error("cannot bind " + a.host + ":" + std::to_string(a.port));

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::atomic<bool> done{false};
  std::thread watcher([&] {
    const timespec tick{0, 200'000'000};
    while (!done) {
      if (sigtimedwait(&set, nullptr, &tick) > 0) {
        server.stop();
        return;
      }
    }
  });
  out << "host=" << a.host << '\n' << "port=" << port << '\n'
      << "tasks=" << store.tasks().size() << '\n' << "records=" << store.record_count() << '\n';
  out.flush();
  if (store.skipped_lines() > 0) err << "warning: skipped " << store.skipped_lines() << " unreadable store lines\n";
  const bool ok = server.serve();
  done = true;
  watcher.join();
  out << "records=" << store.record_count() << '\n';
  return ok ? 0 : 1;
}

int cmd_selfcheck(std::ostream& out) {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    out << name << '=' << (ok ? "ok" : "fail") << '\n';
    failures += ok ? 0 : 1;
  };
  AnnotationRecord r;
  r.image_id = "probe";
  r.prompt = "a cat";
  r.width = 40;
  r.height = 40;
  r.artifact_points = {{20.0f, 20.0f}};
  r.scores = {5, 4, 3, 1};
  std::vector<AnnotationRecord> rs(3, r);
  for (int i = 0; i < 3; ++i) rs[i].annotator_id = "a" + std::to_string(i);
  rs[2].artifact_points.clear();
  const ConsolidatedSample s = consolidate_group(rs);
  check("consolidate", std::abs(s.artifact_heatmap.at(20, 20) - 2.0f / 3.0f) < 1e-6f);
  check("lr_schedule", lr_schedule(2000, 0.015, 2000) == 0.015 && lr_schedule(1000, 0.015, 2000) == 0.0075);

  const Vocabulary vocab = Vocabulary::build(std::vector<std::string>{"a cat"});
  const RahfModel model(ModelConfig::toy(), vocab, 0);
  Image img(64, 64, 3, 0.5f);
  const RichPrediction p = model.forward(img, "a cat");
  check("forward", p.output_count() == 7 && p.encoder_passes == 1);
  const RahfModel back = checkpoint_from_bytes(checkpoint_bytes(model));
  check("checkpoint", back.parameters() == model.parameters());
  out << "failures=" << failures << '\n';
  return failures == 0 ? 0 : 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rich feedback toolkit for generated images", "rahf"};
  app.require_subcommand(1);

  ConsolidateArgs ca;
  auto* consolidate = app.add_subcommand("consolidate", "Merge raw annotations into per-image targets");
  consolidate->add_option("--in", ca.in, "annotations NDJSON")->required();
  consolidate->add_option("--out", ca.out, "output split directory")->required();
  consolidate->add_option("--images", ca.images, "directory of <image_id>.png to copy into the split");
  consolidate->add_option("--radius-frac", ca.radius_frac, "point disk radius as a fraction of image height");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score predictions against a consolidated split");
  eval->add_option("--pred", ea.pred)->required();
  eval->add_option("--gt", ea.gt)->required();
  eval->add_option("--report", ea.report)->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model on a consolidated split with images");
  trn->add_option("--data", ta.data)->required();
  trn->add_option("--model-config", ta.model_config)->required();
  trn->add_option("--train-config", ta.train_config)->required();
  trn->add_option("--out", ta.out, "checkpoint path")->required();
  trn->add_option("--history", ta.history, "loss history NDJSON");
  trn->add_option("--seed", ta.seed);

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Predict feedback for one image into a prediction split");
  predict->add_option("--ckpt", pa.ckpt)->required();
  predict->add_option("--image", pa.image)->required();
  predict->add_option("--prompt", pa.prompt)->required();
  predict->add_option("--task", pa.task, "single task (augmented-prompt models)");
  predict->add_option("--image-id", pa.image_id, "defaults to the image file stem");
  predict->add_option("--out", pa.out)->required();

  FilterArgs fa;
  auto* filter = app.add_subcommand("filter", "Select one high-scoring candidate per prompt");
  filter->add_option("--candidates", fa.candidates, "directory with candidates.ndjson")->required();
  filter->add_option("--threshold", fa.threshold);
  filter->add_option("--out", fa.out)->required();
  filter->add_option("--ckpt", fa.ckpt, "scores candidates without a precomputed score");
  filter->add_option("--score-type", fa.score_type);

  MaskArgs ma;
  auto* mask = app.add_subcommand("mask", "Threshold and dilate a heatmap into a binary mask");
  mask->add_option("--heatmap", ma.heatmap)->required();
  mask->add_option("--threshold", ma.threshold);
  mask->add_option("--dilate", ma.dilate, "radius in pixels, default height/40");
  mask->add_option("--out", ma.out)->required();

  RepairArgs ra;
  auto* repair = app.add_subcommand("repair", "Inpaint implausible regions and keep the best candidate");
  repair->add_option("--image", ra.image)->required();
  repair->add_option("--prompt", ra.prompt)->required();
  repair->add_option("--ckpt", ra.ckpt)->required();
  repair->add_option("--generator", ra.generator);
  repair->add_option("--n", ra.n);
  repair->add_option("--threshold", ra.threshold);
  repair->add_option("--dilate", ra.dilate);
  repair->add_option("--out", ra.out)->required();
  repair->add_option("--audit", ra.audit);
  repair->add_option("--seed", ra.seed);

  GuideArgs ga;
  auto* guide = app.add_subcommand("guide", "Gradient ascent on a predicted score");
  guide->add_option("--image", ga.image)->required();
  guide->add_option("--prompt", ga.prompt)->required();
  guide->add_option("--ckpt", ga.ckpt)->required();
  guide->add_option("--score-type", ga.score_type);
  guide->add_option("--steps", ga.steps);
  guide->add_option("--step-size", ga.step_size);
  guide->add_option("--out", ga.out)->required();

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  serve->add_option("--store", sa.store, "append-only record log")->required();
  serve->add_option("--images", sa.images, "directory with tasks.ndjson and image files")->required();
  serve->add_option("--port", sa.port, "0 picks a free port");
  serve->add_option("--host", sa.host);
  serve->add_option("--ui", sa.ui, "directory with index.html");

  auto* selfcheck = app.add_subcommand("selfcheck", "Quick end-to-end health check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*consolidate) return cmd_consolidate(ca, out);
    if (*eval) return cmd_eval(ea, out);
    if (*trn) return cmd_train(ta, out, err);
    if (*predict) return cmd_predict(pa, out);
    if (*filter) return cmd_filter(fa, out);
    if (*mask) return cmd_mask(ma, out);
    if (*repair) return cmd_repair(ra, out);
    if (*guide) return cmd_guide(ga, out);
    if (*serve) return cmd_serve(sa, out, err);
    if (*selfcheck) return cmd_selfcheck(out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace rahf::cli

// Command-line front end: scene generation, training, evaluation and checks.

#include "uniseg/checkpoint.hpp"
#include "uniseg/corpus.hpp"
#include "uniseg/errors.hpp"
#include "uniseg/evaluation.hpp"
#include "uniseg/selftest.hpp"
#include "uniseg/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace uniseg;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string scenes;
  std::string checkpoint;
  std::string quantiles = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
};

TrainConfig resolve_config(const Options& o, const TrainConfig& fallback = {}) {
  TrainConfig c = o.config.empty() ? fallback : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  validate(c);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

// Scenes for training live in <dir>/train and <dir>/val.
int gen_scenes(const Options& o) {
  const TrainConfig c = resolve_config(o);
  const fs::path out(o.out);
  save_scene_dir(generate_corpus(c, c.seed, Split::kTrain, c.train_scenes), (out / "train").string());
  save_scene_dir(generate_corpus(c, c.seed, Split::kVal, c.val_scenes), (out / "val").string());
  write_text(out / "config.txt", serialize_config(c));
  std::cout << "wrote " << c.train_scenes << " train and " << c.val_scenes << " val scenes to "
            << out.string() << "\n";
  return 0;
}

TrainOptions progress(const fs::path& out, std::ofstream& log) {
  TrainOptions t;
  t.dump_dir = out.string();
  log << "epoch,step,loss,base,inter,lr\n";
  t.on_step = [&log](const StepRecord& r) {
    log << r.epoch << ',' << r.step << ',' << r.loss << ',' << r.base << ',' << r.inter << ','
        << r.lr << '\n';
  };
  t.on_eval = [](int epoch, const MetricsReport& r) {
    std::cout << "epoch " << epoch << " overall " << r.overall << "\n";
  };
  return t;
}

int train_cmd(const Options& o) {
  require(o.scenes, "--scenes");
  const TrainConfig c = resolve_config(o);
  const std::vector<Scene> train_scenes = load_scene_dir((fs::path(o.scenes) / "train").string());
  const fs::path val_dir = fs::path(o.scenes) / "val";
  const std::vector<Scene> val_scenes = fs::is_directory(val_dir) ? load_scene_dir(val_dir.string())
                                                                  : std::vector<Scene>{};
  const fs::path out(o.out);
  fs::create_directories(out);
  std::ofstream log(out / "train_log.csv");
  const TrainOptions opts = progress(out, log);

  TrainResult result = train(c, train_scenes, val_scenes, opts);
  save_checkpoint(result.best, (out / "best.ckpt").string());
  save_checkpoint(result.last, (out / "last.ckpt").string());
  Checkpoint final_ck = result.best;
  if (c.finetune_trick && c.finetune_epochs > 0) {
    final_ck = finetune_trick(result.best, train_scenes, c.finetune_epochs, c.finetune_factor, opts);
    save_checkpoint(final_ck, (out / "finetuned.ckpt").string());
  }
  if (!val_scenes.empty()) {
    write_text(out / "val_metrics.txt", serialize_report(evaluate(final_ck.model, val_scenes).report));
  }
  std::cout << "trained " << result.steps.size() << " steps; checkpoints in " << out.string() << "\n";
  return 0;
}

int finetune_cmd(const Options& o) {
  require(o.scenes, "--scenes");
  require(o.checkpoint, "--checkpoint");
  const Checkpoint start = load_checkpoint(o.checkpoint);
  const TrainConfig c = resolve_config(o, start.model.config);
  const std::vector<Scene> scenes = load_scene_dir((fs::path(o.scenes) / "train").string());
  const fs::path out(o.out);
  fs::create_directories(out);
  std::ofstream log(out / "finetune_log.csv");
  const Checkpoint done = finetune_trick(start, scenes, c.finetune_epochs, c.finetune_factor, progress(out, log));
  save_checkpoint(done, (out / "finetuned.ckpt").string());
  std::cout << "fine-tuned " << c.finetune_epochs << " epochs at lr "
            << finetune_options(c, c.finetune_factor).schedule.lr0 << "\n";
  return 0;
}

int eval_cmd(const Options& o) {
  require(o.scenes, "--scenes");
  require(o.checkpoint, "--checkpoint");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const std::vector<Scene> scenes = load_scene_dir(o.scenes);
  const EvaluationResult result = evaluate(ck.model, scenes);
  const fs::path out(o.out);
  write_text(out / "metrics.txt", serialize_report(result.report));
  std::vector<std::string> open_names = scenes.empty() ? std::vector<std::string>{} : scenes.front().class_names;
  for (std::size_t i = 0; i < result.outputs.size(); ++i) {
    char name[40];
    std::snprintf(name, sizeof name, "scene_%04zu.json", i);
    write_text(out / "outputs" / name,
               export_task_outputs(result.outputs[i], ck.model.vocabulary, open_names));
  }
  std::cout << serialize_report(result.report);
  std::cout << "instance_mask_miou = " << result.instance_mask_miou << "\n";
  return 0;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw CLI::ValidationError("--rd", "bad number '" + item + "'");
    values.push_back(v);
  }
  return values;
}

int ablate_cmd(const Options& o) {
  require(o.scenes, "--scenes");
  require(o.checkpoint, "--checkpoint");
  const std::vector<double> quantiles = parse_list(o.quantiles);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const std::vector<Scene> scenes = load_scene_dir(o.scenes);
  const std::string csv = ablation_csv(ablate_prompts(ck.model, scenes, quantiles, o.seed.value_or(0)));
  write_text(fs::path(o.out) / "ablate_prompts.csv", csv);
  std::cout << csv;
  return 0;
}

int grad_check_cmd(const Options& o) {
  const auto results = run_gradient_suite(o.seed.value_or(0));
  std::string report;
  bool ok = true;
  for (const GradCheckResult& r : results) {
    char line[200];
    std::snprintf(line, sizeof line, "%-48s rel_error = %.3e entries = %zu kinked = %zu\n",
                  r.name.c_str(), r.rel_error, r.entries, r.kinked);
    report += line;
    ok = ok && r.rel_error <= 1e-4;
  }
  write_text(fs::path(o.out) / "grad_check.txt", report);
  std::cout << report << (ok ? "all gradients within 1e-4\n" : "gradient mismatch\n");
  return ok ? 0 : 1;
}

int selftest_cmd() {
  bool ok = true;
  for (const SelfTestResult& r : run_selftest()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
    std::cout << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified 3D segmentation at desk scale"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--scenes", o.scenes, "scene directory");
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  };
  CLI::App* gen = app.add_subcommand("gen-scenes", "generate train/val scene files");
  CLI::App* tr = app.add_subcommand("train", "train from <scenes>/train, select on <scenes>/val");
  CLI::App* ft = app.add_subcommand("finetune", "low-lr continuation of a checkpoint");
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a scene directory");
  CLI::App* ab = app.add_subcommand("ablate-prompts", "interactive metrics per click placement");
  CLI::App* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
  CLI::App* st = app.add_subcommand("selftest", "quick invariant suite");
  for (CLI::App* sub : {gen, tr, ft, ev, ab, gc, st}) add_common(sub);
  ab->add_option("--rd", o.quantiles, "comma-separated r_d values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*gen) return gen_scenes(o);
    if (*tr) return train_cmd(o);
    if (*ft) return finetune_cmd(o);
    if (*ev) return eval_cmd(o);
    if (*ab) return ablate_cmd(o);
    if (*gc) return grad_check_cmd(o);
    if (*st) return selftest_cmd();
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

// Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when any
// criterion fails.

#include "oracles.hpp"

#include "uniseg/checkpoint.hpp"
#include "uniseg/config.hpp"
#include "uniseg/corpus.hpp"
#include "uniseg/evaluation.hpp"
#include "uniseg/losses.hpp"
#include "uniseg/matching.hpp"
#include "uniseg/metrics.hpp"
#include "uniseg/model.hpp"
#include "uniseg/ops.hpp"
#include "uniseg/selftest.hpp"
#include "uniseg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

using namespace uniseg;
using namespace uniseg::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Verdict()>& body) {
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::printf("criterion %2d  %-4s  %s: %s\n", id, v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
  std::fflush(stdout);
}

Matrix random_matrix(Rng& rng, Index rows, Index cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(lo, hi);
  return m;
}

PointMask span(int lo, int hi) {
  PointMask m;
  for (int i = lo; i < hi; ++i) m.push_back(i);
  return m;
}

PointMask random_mask(Rng& rng, int n) {
  PointMask m;
  for (int i = 0; i < n; ++i) {
    if (rng.uniform() < 0.5) m.push_back(i);
  }
  if (m.empty()) m.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(n))));
  return m;
}

// ---- 1 ----------------------------------------------------------------------

Verdict gradient_suite() {
  const auto start = Clock::now();
  const auto results = run_gradient_suite(0);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  std::string worst_name;
  std::map<std::string, int> groups;
  for (const auto& r : results) {
    groups[r.name.substr(0, r.name.find(':'))] += 1;
    if (r.rel_error > worst) {
      worst = r.rel_error;
      worst_name = r.name;
    }
  }
  bool covered = true;
  for (const char* g : {"base", "contrastive", "ranking", "v_to_g", "v_to_r", "total", "decoder"}) {
    covered = covered && groups.count(g) != 0;
  }
  Verdict v;
  v.pass = covered && worst <= 1e-4 && elapsed < 120.0;
  v.detail = std::to_string(results.size()) + " tensors, worst rel error " + fmt("%.2e", worst) +
             (worst_name.empty() ? "" : " (" + worst_name + ")") + fmt(", %.1f s", elapsed) +
             (covered ? "" : ", missing loss groups");
  return v;
}

// ---- 2 ----------------------------------------------------------------------

Verdict hungarian_oracle() {
  Rng rng(2024);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index rows = 1 + static_cast<Index>(rng.index(7));
    const Index cols = trial % 2 == 0 ? rows : 1 + static_cast<Index>(rng.index(7));
    const Matrix cost = random_matrix(rng, rows, cols, 0.0, 10.0);
    const Assignment a = hungarian(cost);
    if (static_cast<Index>(a.size()) != std::min(rows, cols) ||
        std::abs(assignment_cost_total(cost, a) - brute_force_assignment(cost)) > 1e-9) {
      ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches in 1000 matrices, n <= 7"};
}

// ---- 3 ----------------------------------------------------------------------

Verdict leakage() {
  TrainConfig c;
  c.d_in = 8;
  c.d_out = 32;
  c.layers = 2;
  c.heads = 2;
  c.point_budget = 600;
  c.superpoint_target = 24;
  const auto scenes = generate_corpus(c, 31, Split::kVal, 1);
  const Scene& scene = scenes.front();
  const Model model = init_model(c, scene.class_names, scene.stuff_flags);
  const SceneContext ctx = make_context(model, scene);
  const std::vector<int> sampled = all_superpoints(ctx);

  EvalPrompts real = evaluation_prompts(model, scene, {});
  Tape tape;
  ParamBinder p(tape, model.params, false);
  const ForwardPass base = forward(p, model, ctx, sampled, real.prompts);
  const int m = base.preds.m;

  Rng rng(5);
  int differing = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index kv = static_cast<Index>(rng.index(5)), kt = static_cast<Index>(rng.index(5));
    const Var vision = kv ? tape.constant(random_matrix(rng, kv, c.d_in, -5.0, 5.0)) : Var();
    const Var text = kt ? tape.constant(random_matrix(rng, kt, c.d_in, -5.0, 5.0)) : Var();
    const QueryBundle q = assemble_queries(p, base.superpoint_features, sampled, vision, text);
    const PredictionSet other = predict(p, decode(p, q, base.superpoint_features, c.decoder()), q,
                                        base.superpoint_features, model.class_embeddings);
    const bool same = other.f_out.value().topRows(m) == base.preds.f_out.value().topRows(m) &&
                      other.mask_logits.value().topRows(m) == base.preds.mask_logits.value().topRows(m) &&
                      other.cls_logits.value().topRows(m) == base.preds.cls_logits.value().topRows(m) &&
                      other.cls_prob.value().topRows(m) == base.preds.cls_prob.value().topRows(m);
    if (!same) ++differing;
  }
  return {differing == 0, std::to_string(differing) + " of 20 random prompt sets changed unified outputs (m = " +
                              std::to_string(m) + ")"};
}

// ---- 4 ----------------------------------------------------------------------

Verdict closed_forms() {
  Tape tape;
  auto c = [&](const Matrix& m) { return tape.constant(m); };
  auto scalar = [&](double v) { return tape.constant(Matrix::Constant(1, 1, v)); };
  std::vector<std::string> bad;
  auto expect = [&](const std::string& name, double got, double want) {
    if (!(std::abs(got - want) <= 1e-9)) bad.push_back(name + fmt(" = %.12g", got));
  };

  const ContrastiveTerms one = contrastive_terms(scalar(0.4), scalar(std::log(0.07)));
  expect("L_con(B=1)", one.vision_to_text.scalar() + one.text_to_vision.scalar(), 0.0);
  expect("L_con(I2, tau=1)", contrastive_loss(c(Matrix::Identity(2, 2)), scalar(0.0)).scalar(),
         -2.0 * std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)));

  Matrix dominant(3, 3);
  dominant << 0.9, 0.1, -0.2, 0.3, 0.5, 0.5, -1.0, 0.0, 0.2;
  expect("L_rank(dominant)", ranking_loss(c(dominant)).scalar(), 0.0);
  Matrix counter(2, 2);
  counter << 0.2, 0.7, 0.1, 0.9;
  expect("L_rank(counterexample)", ranking_loss(c(counter)).scalar(), 0.25);

  Matrix binary(2, 6);
  binary << 40, -40, 40, -40, 40, 40, -40, -40, 40, 40, -40, 40;
  expect("L_v->g(matched binary)", distill_v_to_g(c(binary), c(binary), 50).scalar(), 0.0);
  expect("L_v->g(student 0)", distill_v_to_g(c(Matrix::Zero(2, 6)), c(binary), 50).scalar(), std::log(2.0));
  expect("L_v->r(zeros)", distill_v_to_r(c(Matrix::Zero(2, 3)), c(Matrix::Zero(2, 3))).scalar(), std::log(2.0));

  LossParts parts{scalar(1.75), scalar(0.3), scalar(0.2), scalar(0.4), scalar(0.1)};
  expect("total(lambda=0)", total_loss(parts, 0.0).scalar(), 1.75);
  LossParts zero{scalar(1.75), scalar(0.0), scalar(0.0), scalar(0.0), scalar(0.0)};
  expect("total(L_inter=0)", total_loss(zero, 0.1).scalar(), 1.75);
  LossParts arithmetic{scalar(2.0), scalar(1.0), {}, {}, {}};
  expect("total(2 + 0.1 * 1)", total_loss(arithmetic, 0.1).scalar(), 2.1);

  std::string detail = bad.empty() ? "10 closed forms exact to 1e-9" : "off:";
  for (const auto& b : bad) detail += " " + b;
  return {bad.empty(), detail};
}

// ---- 5 ----------------------------------------------------------------------

Verdict metric_oracles() {
  std::vector<std::string> bad;
  int minis = 0;
  auto expect = [&](const std::string& name, double got, double want) {
    ++minis;
    if (!(std::abs(got - want) <= 1e-6)) bad.push_back(name + fmt(" = %.9g", got));
  };
  const std::vector<Segment> gt{{span(0, 10), 0}};
  expect("PQ(identical)", panoptic_quality(gt, gt), 100.0);
  expect("PQ(IoU 0.8 + FP)", panoptic_quality({{span(0, 8), 0}, {span(20, 25), 0}}, gt), 100.0 * 0.8 / 1.5);
  expect("PQ(empty)", panoptic_quality({}, gt), 0.0);

  expect("mIoU(perfect)", semantic_miou({0, 0, 1, 1}, {0, 0, 1, 1}), 100.0);
  expect("mIoU(all wrong)", semantic_miou({1, 1, 0, 0}, {0, 0, 1, 1}), 0.0);
  expect("mIoU(half)", semantic_miou({3, 3, 5, 5}, {3, 3, 3, 3}), 50.0);

  ApAccumulator perfect;
  perfect.add({{span(0, 10), 0, 0.9}}, gt);
  expect("mAP(perfect)", perfect.summary().map, 100.0);
  ApAccumulator straddle;
  straddle.add({{span(0, 4), 0, 0.9}}, gt);
  expect("AP25(IoU 0.4)", straddle.ap(0.25), 100.0);
  expect("AP50(IoU 0.4)", straddle.ap(0.5), 0.0);

  const ReferringSummary r = referring_metrics(std::vector<double>{0.2, 0.6});
  expect("ref mIoU", r.miou, 40.0);
  expect("ref acc25", r.acc25, 50.0);
  expect("ref acc50", r.acc50, 50.0);
  const ReferringSummary r3 = referring_metrics(std::vector<double>{0.3});
  expect("acc25(0.3)", r3.acc25, 100.0);
  expect("acc50(0.3)", r3.acc50, 0.0);

  Rng rng(77);
  const double levels[] = {0.2, 0.5, 0.9};
  int pr_mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Segment> g{{random_mask(rng, 8), 0}, {random_mask(rng, 8), 0}};
    std::vector<ScoredMask> pred;
    for (int k = 0; k < 3; ++k) pred.push_back({random_mask(rng, 8), 0, levels[rng.index(3)]});
    ApAccumulator acc;
    acc.add(pred, g);
    for (double t : map_thresholds()) {
      if (std::abs(acc.ap(t) - brute_force_ap(pred, g, t)) > 1e-6) ++pr_mismatches;
    }
    if (std::abs(acc.ap(0.25) - brute_force_ap(pred, g, 0.25)) > 1e-6) ++pr_mismatches;
  }
  std::string detail = std::to_string(minis - static_cast<int>(bad.size())) + "/" + std::to_string(minis) + " minis, " + std::to_string(pr_mismatches) +
                       " brute-force PR mismatches in 1000 cases";
  for (const auto& b : bad) detail += "; " + b;
  return {bad.empty() && pr_mismatches == 0, detail};
}

// ---- 6, 7, 8 ------------------------------------------------------------------

struct OverfitRun {
  TrainConfig config;
  std::vector<Scene> scenes;
  Checkpoint model;
  std::size_t steps = 0;
  double seconds = 0.0;
};

std::optional<OverfitRun> overfit;

OverfitRun& overfit_run() {
  if (!overfit) {
    OverfitRun run;
    run.config.train_scenes = 4;
    run.config.val_scenes = 0;
    run.config.epochs = 1000;
    run.config.eval_period = 1000;
    run.config.finetune_trick = false;
    run.scenes = generate_corpus(run.config, 3, Split::kTrain, run.config.train_scenes);
    const auto start = Clock::now();
    TrainResult result = train(run.config, run.scenes, {});
    run.seconds = seconds_since(start);
    run.steps = result.steps.size();
    run.model = std::move(result.last);
    overfit = std::move(run);
  }
  return *overfit;
}

Verdict overfit_criterion() {
  OverfitRun& run = overfit_run();
  const MetricsReport r = evaluate(run.model.model, run.scenes).report;
  const bool pass = run.steps <= 2000 && run.seconds <= 1800.0 && r.inst_ap25 >= 90.0 && r.inter_miou >= 80.0 &&
                    r.ref_miou >= 70.0;
  return {pass, std::to_string(run.steps) + " steps in " + fmt("%.0f s", run.seconds) +
                    fmt("; inst_ap25 %.2f, inter_miou %.2f, ref_miou %.2f", r.inst_ap25, r.inter_miou, r.ref_miou)};
}

Verdict heldout_direction() {
  OverfitRun& run = overfit_run();
  const auto held_out = generate_corpus(run.config, 3, Split::kVal, 6);
  const EvaluationResult e = evaluate(run.model.model, held_out);
  return {e.report.inter_miou >= e.instance_mask_miou,
          fmt("6 held-out scenes: interactive mIoU %.2f, instance mask mIoU %.2f, gap %+.2f", e.report.inter_miou,
              e.instance_mask_miou, e.report.inter_miou - e.instance_mask_miou)};
}

Verdict ablation_direction() {
  OverfitRun& run = overfit_run();
  const auto rows = ablate_prompts(run.model.model, run.scenes, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
  std::map<std::string, double> miou;
  for (const auto& r : rows) miou[r.name] = r.miou;
  const double center = miou.at("center"), random = miou.at("random"), edge = miou.at("r_d=1");
  return {center >= random && center >= edge,
          fmt("mIoU center %.3f, random %.3f, r_d=1.0 %.3f", center, random, edge)};
}

// ---- 9 ----------------------------------------------------------------------

Verdict toggles() {
  TrainConfig c;
  c.point_budget = 1024;
  c.superpoint_target = 32;
  const auto scenes = generate_corpus(c, 9, Split::kTrain, 2);
  const Model model = init_model(c, scenes.front().class_names, scenes.front().stuff_flags);
  std::vector<SceneContext> contexts;
  for (const Scene& s : scenes) contexts.push_back(make_context(model, s));
  const std::vector<const SceneContext*> ptrs{&contexts[0], &contexts[1]};
  Rng rng(12);
  const BatchPlan plan = plan_batch(model, ptrs, rng);

  struct Values {
    double total, distill, contrastive, rank;
  };
  auto run = [&](const TrainConfig& cfg) {
    Tape tape;
    ParamBinder p(tape, model.params, true);
    const BatchLoss l = batch_loss(p, model, ptrs, plan, cfg);
    auto v = [](const Var& x) { return x.valid() ? x.scalar() : 0.0; };
    return Values{l.total.scalar(), v(l.parts.v_to_g) + v(l.parts.v_to_r), v(l.parts.contrastive), v(l.parts.ranking)};
  };
  const Values full = run(c);
  double worst = 0.0;
  for (int mask = 1; mask < 8; ++mask) {
    TrainConfig off = c;
    off.distill = !(mask & 1);
    off.contrastive = !(mask & 2);
    off.rank = !(mask & 4);
    const double removed = ((mask & 1) ? full.distill : 0.0) + ((mask & 2) ? full.contrastive : 0.0) +
                           ((mask & 4) ? full.rank : 0.0);
    worst = std::max(worst, std::abs(full.total - run(off).total - c.lambda * removed));
  }
  const bool nonzero = full.distill > 0.0 && full.contrastive > 0.0;
  return {worst <= 1e-9 && nonzero, std::to_string(plan.pairs()) + " prompt pairs, 7 toggle subsets, worst |error| " +
                                        fmt("%.2e", worst)};
}

// ---- 10 ---------------------------------------------------------------------

Verdict determinism() {
  TrainConfig c;
  c.d_in = 8;
  c.d_out = 16;
  c.layers = 2;
  c.heads = 2;
  c.point_budget = 400;
  c.superpoint_target = 16;
  c.epochs = 3;
  c.train_scenes = 2;
  c.val_scenes = 1;
  c.eval_period = 2;
  c.finetune_trick = false;
  const auto train_scenes = generate_corpus(c, 17, Split::kTrain, c.train_scenes);
  const auto val_scenes = generate_corpus(c, 17, Split::kVal, c.val_scenes);
  const std::string a = serialize_checkpoint(train(c, train_scenes, val_scenes).last);
  const std::string b = serialize_checkpoint(train(c, train_scenes, val_scenes).last);
  const bool retrain = a == b;

  const fs::path dir = fs::temp_directory_path() / "uniseg_acceptance";
  fs::create_directories(dir);
  bool scenes_ok = true;
  for (const Scene& s : train_scenes) {
    const fs::path path = dir / "scene.json";
    save_scene(s, path.string());
    const Scene back = load_scene(path.string());
    scenes_ok = scenes_ok && back.points == s.points && back.colors == s.colors && back.instance_id == s.instance_id &&
                back.semantic_id == s.semantic_id && back.superpoint_id == s.superpoint_id &&
                back.class_names == s.class_names && back.stuff_flags == s.stuff_flags &&
                serialize_scene(back) == serialize_scene(s);
  }
  const Checkpoint ck = parse_checkpoint(a);
  save_checkpoint(ck, (dir / "model.ckpt").string());
  const Checkpoint loaded = load_checkpoint((dir / "model.ckpt").string());
  const bool ckpt_ok = serialize_checkpoint(loaded) == a && same_parameters(loaded.model.params, ck.model.params) &&
                       loaded.optimizer == ck.optimizer;
  fs::remove_all(dir);
  return {retrain && scenes_ok && ckpt_ok, std::string("retrain ") + (retrain ? "bit-identical" : "DIFFERS") +
                                               ", scene files " + (scenes_ok ? "lossless" : "LOSSY") +
                                               ", checkpoints " + (ckpt_ok ? "lossless" : "LOSSY")};
}

}  // namespace

int main() {
  report(1, "gradient suite", gradient_suite);
  report(2, "assignment oracle", hungarian_oracle);
  report(3, "prompt leakage", leakage);
  report(4, "closed-form losses", closed_forms);
  report(5, "metric oracles", metric_oracles);
  report(6, "overfit four scenes", overfit_criterion);
  report(7, "held-out interactive vs instance mIoU", heldout_direction);
  report(8, "click placement ablation", ablation_direction);
  report(9, "toggle arithmetic", toggles);
  report(10, "determinism and round trips", determinism);
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}

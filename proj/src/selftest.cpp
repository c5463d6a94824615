#include "uniseg/selftest.hpp"

#include "uniseg/checkpoint.hpp"
#include "uniseg/gradcheck.hpp"
#include "uniseg/losses.hpp"
#include "uniseg/matching.hpp"
#include "uniseg/metrics.hpp"
#include "uniseg/ops.hpp"
#include "uniseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace uniseg {
namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.d_in = 8;
  c.d_out = 16;
  c.layers = 2;
  c.heads = 2;
  c.k_v = c.k_t = 2;
  c.max_pairs = 4;
  return c;
}

Scene tiny_scene(std::uint64_t seed) {
  SceneRecipe recipe = default_recipe();
  recipe.instances = {{"chair", 2}, {"table", 1}, {"lamp", 1}};
  recipe.point_budget = 400;
  recipe.points_per_instance = 50;
  recipe.superpoint_target = 16;
  return generate_scene(seed, recipe);
}

SelfTestResult check(const std::string& name, const std::function<std::string()>& body) {
  try {
    const std::string failure = body();
    return {name, failure.empty(), failure};
  } catch (const std::exception& e) {
    return {name, false, std::string("exception: ") + e.what()};
  }
}

std::string config_defaults() {
  const TrainConfig c;
  std::ostringstream bad;
  if (c.lr0 != 1e-4) bad << "lr0 ";
  if (c.weight_decay != 0.05) bad << "weight_decay ";
  if (c.lambda != 0.1) bad << "lambda ";
  if (c.top_k != 10) bad << "top_k ";
  if (c.layers != 6) bad << "layers ";
  if (c.d_in != 32) bad << "d_in ";
  if (c.d_out != 256) bad << "d_out ";
  if (c.eval_period != 16) bad << "eval_period ";
  if (c.finetune_epochs != 40 || c.finetune_factor != 1e-3) bad << "finetune ";
  return bad.str();
}

std::string hungarian_brute_force() {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 1 + static_cast<int>(rng.index(5));
    const int cols = 1 + static_cast<int>(rng.index(5));
    Matrix cost(rows, cols);
    for (Index i = 0; i < cost.size(); ++i) cost(i) = rng.uniform(0.0, 10.0);
    const Assignment a = hungarian(cost);
    const double got = assignment_cost_total(cost, a);
    // Exhaustive: every injective map of the smaller side into the larger.
    const int n = std::max(rows, cols);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double total = 0.0;
      for (int r = 0; r < rows; ++r) {
        const int c = perm[static_cast<std::size_t>(r)];
        if (c < cols) total += cost(r, c);
      }
      best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (static_cast<int>(a.size()) != std::min(rows, cols) || std::abs(got - best) > 1e-9) {
      return "trial " + std::to_string(trial) + ": " + std::to_string(got) + " vs " + std::to_string(best);
    }
  }
  return {};
}

std::string closed_form_losses() {
  Tape tape;
  std::ostringstream bad;
  const Var one = tape.constant(Matrix::Constant(1, 1, 0.3));
  const Var log_tau = tape.constant(Matrix::Zero(1, 1));
  if (contrastive_loss(one, log_tau).scalar() != 0.0) bad << "contrastive(B=1) ";
  const double expected = -2.0 * std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  if (std::abs(contrastive_loss(tape.constant(Matrix::Identity(2, 2)), log_tau).scalar() - expected) > 1e-12) {
    bad << "contrastive(2x2) ";
  }
  Matrix s(2, 2);
  s << 0.2, 0.7, 0.1, 0.9;
  if (std::abs(ranking_loss(tape.constant(s)).scalar() - 0.25) > 1e-12) bad << "ranking ";
  if (ranking_loss(tape.constant(Matrix::Identity(3, 3))).scalar() != 0.0) bad << "ranking(I) ";
  return bad.str();
}

std::string metric_minis() {
  std::ostringstream bad;
  PointMask gt(10), pred(8), spurious{20, 21};
  std::iota(gt.begin(), gt.end(), 0);
  std::iota(pred.begin(), pred.end(), 0);
  const double pq = panoptic_quality({{pred, 1}, {spurious, 1}}, {{gt, 1}});
  if (std::abs(pq - 100.0 * 0.8 / 1.5) > 1e-9) bad << "pq ";
  const ReferringSummary ref = referring_metrics(std::vector<double>{0.2, 0.6});
  if (std::abs(ref.miou - 40.0) > 1e-9 || ref.acc25 != 50.0 || ref.acc50 != 50.0) bad << "referring ";
  ApAccumulator ap;
  ap.add({{gt, 1, 0.9}}, {{gt, 1}});
  if (ap.summary().map != 100.0) bad << "ap ";
  return bad.str();
}

std::string prompt_isolation() {
  const Scene scene = tiny_scene(3);
  const Model model = init_model(tiny_config(), scene.class_names, scene.stuff_flags);
  const SceneContext ctx = make_context(model, scene);
  PromptSet prompts;
  prompts.clicks.push_back(locate_click(scene, scene.instance_points(0).front()));
  prompts.expressions.push_back({"the", "table"});

  Tape a;
  ParamBinder pa(a, model.params, false);
  const ForwardPass with = forward(pa, model, ctx, all_superpoints(ctx), prompts);

  Tape b;
  ParamBinder pb(b, model.params, false);
  const Var f_s = with.superpoint_features;
  Rng rng(11);
  Matrix noise(3, model.config.d_in);
  for (Index i = 0; i < noise.size(); ++i) noise(i) = rng.normal();
  const Var fs_b = b.constant(f_s.value());
  const QueryBundle q = assemble_queries(pb, fs_b, all_superpoints(ctx), b.constant(noise.topRows(2)),
                                         b.constant(noise.bottomRows(1)));
  const Var f_out = decode(pb, q, fs_b, model.config.decoder());
  const PredictionSet other = predict(pb, f_out, q, fs_b, model.class_embeddings);
  const int m = with.preds.m;
  if (with.preds.f_out.value().topRows(m) != other.f_out.value().topRows(m)) return "f_out differs";
  if (with.preds.mask_logits.value().topRows(m) != other.mask_logits.value().topRows(m)) return "masks differ";
  if (with.preds.cls_prob.value().topRows(m) != other.cls_prob.value().topRows(m)) return "classes differ";
  return {};
}

std::string loss_gradients() {
  const Scene scene = tiny_scene(5);
  TrainConfig cfg = tiny_config();
  cfg.layers = 1;
  const Model model = init_model(cfg, scene.class_names, scene.stuff_flags);
  const SceneContext ctx = make_context(model, scene);
  const std::vector<const SceneContext*> batch{&ctx};
  Rng rng(2);
  const BatchPlan plan = plan_batch(model, batch, rng);
  GradCheckOptions opts;
  opts.max_entries = 3;
  const auto results = check_parameter_gradients(
      [&](ParamBinder& p) { return batch_loss(p, model, batch, plan, cfg).total; }, model.params, opts);
  const double err = max_rel_error(results);
  return err <= 1e-4 ? std::string() : "relative error " + std::to_string(err);
}

std::string round_trips() {
  const Scene scene = tiny_scene(9);
  if (!(parse_scene(serialize_scene(scene)) == scene)) return "scene";
  Checkpoint ck;
  ck.model = init_model(tiny_config(), scene.class_names, scene.stuff_flags);
  ck.epoch = 3;
  ck.best_overall = 12.5;
  const Checkpoint back = parse_checkpoint(serialize_checkpoint(ck));
  if (!same_parameters(back.model.params, ck.model.params) || back.epoch != 3 ||
      back.best_overall != 12.5 || !(back.model.config == ck.model.config)) {
    return "checkpoint";
  }
  return {};
}

Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = scale * rng.normal();
  return m;
}

void tag(std::vector<GradCheckResult>& all, const std::string& item,
         std::vector<GradCheckResult> results) {
  for (auto& r : results) {
    r.name = item + ":" + r.name;
    all.push_back(std::move(r));
  }
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, std::size_t max_entries) {
  constexpr int m = 6, k = 2, classes = 4, d = 8;
  Rng rng(seed);
  GradCheckOptions opts;
  opts.max_entries = max_entries;
  opts.seed = seed;
  std::vector<GradCheckResult> all;

  // Base loss over unified, vision and text rows.
  {
    const Matrix masks = random_matrix(rng, m + 2 * k, m);
    const Matrix cls = random_matrix(rng, m + 2 * k, classes);
    std::vector<RowSupervision> rows;
    for (int r = 0; r < m + 2 * k; ++r) {
      Vector t(m);
      for (int c = 0; c < m; ++c) t(c) = rng.uniform() < 0.5 ? 1.0 : 0.0;
      if (r % 3 == 2) {
        rows.push_back({r, std::nullopt, classes - 1, 0.1});
      } else if (r % 3 == 1) {
        rows.push_back({r, t, -1, 1.0});
      } else {
        rows.push_back({r, t, static_cast<int>(rng.index(classes - 1)), 1.0});
      }
    }
    tag(all, "base", check_input_gradients(
                         [&](Tape&, const std::vector<Var>& in) {
                           PredictionSet preds;
                           preds.mask_logits = in[0];
                           preds.cls_logits = in[1];
                           preds.cls_prob = row_softmax(in[1]);
                           preds.m = m;
                           preds.k_v = preds.k_t = k;
                           return base_loss(preds, rows);
                         },
                         {{"mask_logits", masks}, {"cls_logits", cls}}, opts));
  }

  const Matrix vision = random_matrix(rng, k, d), text = random_matrix(rng, k, d);
  const Matrix log_tau = Matrix::Constant(1, 1, std::log(0.07));
  tag(all, "contrastive",
      check_input_gradients(
          [](Tape&, const std::vector<Var>& in) {
            return contrastive_loss(similarity_matrix(in[0], in[1]), in[2]);
          },
          {{"vision", vision}, {"text", text}, {"log_tau", log_tau}}, opts));
  tag(all, "ranking",
      check_input_gradients(
          [](Tape&, const std::vector<Var>& in) { return ranking_loss(similarity_matrix(in[0], in[1])); },
          {{"vision", vision}, {"text", text}}, opts));
  tag(all, "v_to_g",
      check_input_gradients(
          [](Tape&, const std::vector<Var>& in) { return distill_v_to_g(in[0], in[1], 30); },
          {{"student", random_matrix(rng, k, m)}, {"teacher", random_matrix(rng, k, m)}}, opts));
  tag(all, "v_to_r",
      check_input_gradients(
          [](Tape&, const std::vector<Var>& in) { return distill_v_to_r(in[0], in[1]); },
          {{"student", random_matrix(rng, k, classes)}, {"teacher", random_matrix(rng, k, classes)}},
          opts));

  // Whole-model checks on a small scene.
  const Scene scene = tiny_scene(seed + 5);
  TrainConfig cfg = tiny_config();
  cfg.m_cap = 8;
  cfg.seed = seed;
  const Model model = init_model(cfg, scene.class_names, scene.stuff_flags);
  const SceneContext ctx = make_context(model, scene);
  const std::vector<const SceneContext*> batch{&ctx};
  Rng plan_rng = rng.split(1);
  const BatchPlan plan = plan_batch(model, batch, plan_rng);
  tag(all, "total", check_parameter_gradients(
                        [&](ParamBinder& p) { return batch_loss(p, model, batch, plan, cfg).total; },
                        model.params, opts));

  const ScenePlan& sp = plan.scenes.front();
  const int rows = static_cast<int>(sp.sampled.size() + 2 * sp.prompted.size());
  const Matrix w_mask = random_matrix(rng, rows, static_cast<Index>(sp.sampled.size()));
  const Matrix w_cls = random_matrix(rng, rows, model.no_object_column() + 1);
  tag(all, "decoder", check_parameter_gradients(
                          [&](ParamBinder& p) {
                            const ForwardPass f = forward(p, model, ctx, sp.sampled, sp.prompts);
                            Tape& tape = p.tape();
                            return add(sum(mul(f.preds.mask_logits, tape.constant(w_mask))),
                                       sum(mul(f.preds.cls_prob, tape.constant(w_cls))));
                          },
                          model.params, opts));
  return all;
}

std::vector<SelfTestResult> run_selftest() {
  return {
      check("config defaults", config_defaults),
      check("assignment optimality", hungarian_brute_force),
      check("closed-form losses", closed_form_losses),
      check("metric minis", metric_minis),
      check("prompt isolation", prompt_isolation),
      check("loss gradients", loss_gradients),
      check("file round trips", round_trips),
  };
}

}  // namespace uniseg

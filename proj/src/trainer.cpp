#include "uniseg/trainer.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/evaluation.hpp"
#include "uniseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace uniseg {

int BatchPlan::pairs() const {
  int total = 0;
  for (const ScenePlan& s : scenes) total += static_cast<int>(s.prompted.size());
  return total;
}

BatchPlan plan_batch(const Model& model, const std::vector<const SceneContext*>& contexts, Rng& rng) {
  const TrainConfig& cfg = model.config;
  BatchPlan plan;
  int pairs = 0;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const SceneContext& ctx = *contexts[i];
    const Scene& scene = *ctx.scene;
    Rng srng = rng.split(i);
    ScenePlan sp;
    sp.context = i;
    const int m = choose_query_count(ctx.layout.superpoints, QueryMode::kTrain, cfg.query_sampling(), srng);
    sp.sampled = sample_query_indices(ctx.layout.superpoints, m, srng);

    for (int c = 0; c < scene.num_classes(); ++c) {
      const int col = ctx.column[static_cast<std::size_t>(c)];
      if (col < 0 || !scene.stuff_flags[static_cast<std::size_t>(c)]) continue;
      Vector t = stuff_target(ctx, c, sp.sampled);
      if (t.sum() <= 0.0) continue;
      sp.targets.push_back({std::move(t), col});
      sp.target_instance.push_back(-1);
    }
    std::vector<int> candidates;
    for (int inst : scene.instances()) {
      const int col = ctx.column[static_cast<std::size_t>(scene.instance_class(inst))];
      if (col < 0) continue;
      Vector t = instance_target(ctx, inst, sp.sampled);
      if (t.sum() <= 0.0) continue;
      sp.targets.push_back({std::move(t), col});
      sp.target_instance.push_back(inst);
      candidates.push_back(inst);
    }

    srng.shuffle(candidates);
    for (int inst : candidates) {
      if (static_cast<int>(sp.prompted.size()) >= cfg.k_v || pairs >= cfg.max_pairs) break;
      Tokens expression;
      try {
        expression = make_text_expression(scene, inst, srng.next_u64());
      } catch (const AmbiguityError&) {
        continue;
      }
      const int click = sample_vision_prompt(scene, inst, ClickStrategy::kRandom, 0.0, srng.next_u64());
      sp.prompts.clicks.push_back(locate_click(scene, click));
      sp.prompts.expressions.push_back(std::move(expression));
      sp.prompted.push_back(inst);
      ++pairs;
    }
    plan.scenes.push_back(std::move(sp));
  }
  return plan;
}

namespace {

Var mean_of(const std::vector<Var>& terms) {
  Var total = terms.front();
  for (std::size_t k = 1; k < terms.size(); ++k) total = add(total, terms[k]);
  return scale(total, 1.0 / static_cast<double>(terms.size()));
}

int target_of(const ScenePlan& sp, int instance) {
  const auto it = std::find(sp.target_instance.begin(), sp.target_instance.end(), instance);
  if (it == sp.target_instance.end()) {
    throw ContractError("batch_loss: prompt targets instance " + std::to_string(instance) +
                        " which has no ground truth target");
  }
  return static_cast<int>(it - sp.target_instance.begin());
}

}  // namespace

BatchLoss batch_loss(ParamBinder& p, const Model& model,
                     const std::vector<const SceneContext*>& contexts, const BatchPlan& plan,
                     const TrainConfig& config) {
  std::vector<Var> bases, v_to_g;
  std::vector<Var> vision_cls, text_cls, vision_feat, text_feat;
  for (const ScenePlan& sp : plan.scenes) {
    const SceneContext& ctx = *contexts[sp.context];
    const ForwardPass fwd = forward(p, model, ctx, sp.sampled, sp.prompts);
    const PredictionSet& preds = fwd.preds;
    const int m = preds.m;
    const Matrix unified_masks = preds.mask_logits.value().topRows(m);

    std::vector<Vector> pseudo;
    for (const auto& indicator : ctx.pseudo_superpoints) {
      Vector v(m);
      for (int k = 0; k < m; ++k) v(k) = indicator[static_cast<std::size_t>(sp.sampled[static_cast<std::size_t>(k)])];
      pseudo.push_back(std::move(v));
    }
    Assignment assignment;
    if (!sp.targets.empty()) {
      assignment = hungarian(assignment_cost(unified_masks, preds.cls_prob.value().topRows(m), sp.targets));
    }
    const MatchResult match = split_and_rematch(assignment, unified_masks, sp.targets, pseudo);
    std::vector<RowSupervision> rows = unified_supervision(match, sp.targets, pseudo,
                                                           model.no_object_column(),
                                                           config.no_object_weight);

    std::vector<int> vision_rows, text_rows, student_rows;
    for (std::size_t i = 0; i < sp.prompted.size(); ++i) {
      const int t = target_of(sp, sp.prompted[i]);
      const MaskTarget& target = sp.targets[static_cast<std::size_t>(t)];
      vision_rows.push_back(preds.vision_row(static_cast<int>(i)));
      text_rows.push_back(preds.text_row(static_cast<int>(i)));
      rows.push_back({vision_rows.back(), target.mask, target.cls, 1.0});
      rows.push_back({text_rows.back(), target.mask, target.cls, 1.0});
      const auto pos = std::find_if(match.positives.begin(), match.positives.end(),
                                    [&](const auto& pair) { return pair.second == t; });
      if (pos == match.positives.end()) {
        throw ContractError("batch_loss: prompted instance has no matched unified query");
      }
      student_rows.push_back(pos->first);
    }
    bases.push_back(base_loss(preds, rows));

    if (vision_rows.empty()) continue;
    if (config.distill) {
      v_to_g.push_back(distill_v_to_g(gather_rows(preds.mask_logits, student_rows),
                                      gather_rows(preds.mask_logits, vision_rows), config.top_k));
    }
    vision_cls.push_back(gather_rows(preds.cls_logits, vision_rows));
    text_cls.push_back(gather_rows(preds.cls_logits, text_rows));
    vision_feat.push_back(gather_rows(preds.f_out, vision_rows));
    text_feat.push_back(gather_rows(preds.f_out, text_rows));
  }
  if (bases.empty()) throw ContractError("batch_loss: empty batch");

  BatchLoss out;
  out.parts.base = mean_of(bases);
  if (!vision_cls.empty()) {
    if (config.distill) {
      out.parts.v_to_g = mean_of(v_to_g);
      out.parts.v_to_r = distill_v_to_r(concat_rows(text_cls), concat_rows(vision_cls));
    }
    if (config.contrastive || config.rank) {
      const Var sim = similarity_matrix(concat_rows(vision_feat), concat_rows(text_feat));
      if (config.contrastive) out.parts.contrastive = contrastive_loss(sim, p(kLogTauName));
      if (config.rank) out.parts.ranking = ranking_loss(sim);
    }
  }
  out.total = total_loss(out.parts, config.lambda);
  return out;
}

namespace {

Checkpoint snapshot(const Model& model, const AdamW& opt, int epoch, double best) {
  Checkpoint ck;
  ck.model = model;
  ck.optimizer = {opt.step_count(), opt.first_moments(), opt.second_moments()};
  ck.epoch = epoch;
  ck.best_overall = best;
  return ck;
}

void clamp_temperature(Model& model) {
  if (!model.params.contains(kLogTauName)) return;
  Matrix& log_tau = model.params.value(kLogTauName);
  log_tau(0, 0) = std::clamp(log_tau(0, 0), std::log(model.config.tau_min), std::log(model.config.tau_max));
}

void write_dump(const std::string& dir, const StepRecord& rec, const BatchPlan& plan,
                const std::vector<const SceneContext*>& batch, const std::string& error) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / "step_dump.txt");
  out << "epoch = " << rec.epoch << "\nstep = " << rec.step << "\nlr = " << rec.lr
      << "\nerror = " << error << "\n";
  for (const ScenePlan& sp : plan.scenes) {
    out << "scene_seed = " << batch[sp.context]->scene->seed << " m = " << sp.sampled.size()
        << " targets = " << sp.targets.size() << " prompts =";
    for (int inst : sp.prompted) out << ' ' << inst;
    out << "\n";
  }
}

struct Loop {
  Model& model;
  AdamW& opt;
  const std::vector<SceneContext>& contexts;
  const std::vector<Scene>* val;
  const TrainOptions& options;
  TrainResult& result;

  void run(int first_epoch, int epochs) {
    const TrainConfig& cfg = model.config;
    const Rng order_root = Rng(cfg.seed).split(0x0DE7);
    const Rng step_root = Rng(cfg.seed).split(0x57E9);
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    for (int e = 0; e < epochs; ++e) {
      const int epoch = first_epoch + e;
      std::vector<std::size_t> order(contexts.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng order_rng = order_root.split(static_cast<std::uint64_t>(epoch));
      order_rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += batch) {
        std::vector<const SceneContext*> scenes;
        for (std::size_t k = start; k < std::min(order.size(), start + batch); ++k) {
          scenes.push_back(&contexts[order[k]]);
        }
        step(epoch, scenes, step_root);
      }
      const bool eval_now = (e + 1) % cfg.eval_period == 0 || e + 1 == epochs;
      if (val && !val->empty() && eval_now) {
        const MetricsReport report = evaluate(model, *val).report;
        if (options.on_eval) options.on_eval(epoch + 1, report);
        if (report.overall > result.best.best_overall) {
          result.best = snapshot(model, opt, epoch + 1, report.overall);
        }
      }
    }
    const double best = result.best.best_overall;
    result.last = snapshot(model, opt, first_epoch + epochs, best);
    if (!val || val->empty()) result.best = result.last;
  }

  void step(int epoch, const std::vector<const SceneContext*>& scenes, const Rng& step_root) {
    StepRecord rec;
    rec.epoch = epoch;
    rec.step = opt.step_count();
    rec.lr = opt.current_lr();
    Rng rng = step_root.split(static_cast<std::uint64_t>(rec.step));
    const BatchPlan plan = plan_batch(model, scenes, rng);
    try {
      Tape tape;
      ParamBinder binder(tape, model.params, true);
      const BatchLoss loss = batch_loss(binder, model, scenes, plan, model.config);
      rec.loss = loss.total.scalar();
      rec.base = loss.parts.base.scalar();
      rec.inter = inter_task_value(loss.parts);
      tape.backward(loss.total);
      opt.step(model.params, binder.gradients());
    } catch (const NumericError& err) {
      write_dump(options.dump_dir, rec, plan, scenes, err.what());
      throw NumericError("training step " + std::to_string(rec.step) + " (epoch " +
                         std::to_string(epoch) + "): " + err.what());
    }
    clamp_temperature(model);
    result.steps.push_back(rec);
    if (options.on_step) options.on_step(rec);
  }
};

std::vector<SceneContext> build_contexts(const Model& model, const std::vector<Scene>& scenes) {
  std::vector<SceneContext> contexts;
  for (const Scene& s : scenes) {
    if (s.class_names != scenes.front().class_names || s.stuff_flags != scenes.front().stuff_flags) {
      throw ContractError("train: scenes use different class tables");
    }
    contexts.push_back(make_context(model, s));
  }
  return contexts;
}

}  // namespace

AdamWOptions finetune_options(const TrainConfig& config, double factor) {
  AdamWOptions o;
  o.schedule.lr0 = config.lr0 * factor;
  o.schedule.constant = true;
  o.schedule.total_steps = 1;
  o.schedule.power = config.lr_power;
  o.weight_decay = config.weight_decay * factor;
  return o;
}

TrainResult train(const TrainConfig& config, const std::vector<Scene>& train_scenes,
                  const std::vector<Scene>& val_scenes, const TrainOptions& options) {
  validate(config);
  if (train_scenes.empty()) throw ContractError("train: no training scenes");
  Model model = init_model(config, train_scenes.front().class_names, train_scenes.front().stuff_flags);
  const std::vector<SceneContext> contexts = build_contexts(model, train_scenes);

  const auto batches = static_cast<std::int64_t>(
      (train_scenes.size() + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size));
  AdamWOptions opts;
  opts.schedule.lr0 = config.lr0;
  opts.schedule.power = config.lr_power;
  opts.schedule.total_steps = std::max<std::int64_t>(1, batches * config.epochs);
  opts.weight_decay = config.weight_decay;
  AdamW opt(model.params, opts);

  TrainResult result;
  result.best.best_overall = -1.0;
  Loop loop{model, opt, contexts, &val_scenes, options, result};
  if (config.epochs == 0) {
    result.last = snapshot(model, opt, 0, -1.0);
    result.best = result.last;
    return result;
  }
  loop.run(0, config.epochs);
  return result;
}

Checkpoint finetune_trick(const Checkpoint& start, const std::vector<Scene>& train_scenes,
                          int epochs, double factor, const TrainOptions& options) {
  if (epochs < 0) throw ContractError("finetune_trick: negative epochs");
  if (epochs == 0) return start;
  if (train_scenes.empty()) throw ContractError("finetune_trick: no training scenes");
  Model model = start.model;
  const std::vector<SceneContext> contexts = build_contexts(model, train_scenes);
  AdamW opt(model.params, finetune_options(model.config, factor));
  if (!start.optimizer.m.empty()) {
    opt.restore(model.params, start.optimizer.step, start.optimizer.m, start.optimizer.v);
  }
  TrainResult result;
  result.best = start;
  Loop loop{model, opt, contexts, nullptr, options, result};
  loop.run(start.epoch, epochs);
  result.last.best_overall = start.best_overall;
  return result.last;
}

}  // namespace uniseg

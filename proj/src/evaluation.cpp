#include "uniseg/evaluation.hpp"

#include "uniseg/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace uniseg {

EvalPrompts evaluation_prompts(const Model& model, const Scene& scene, const PromptProtocol& protocol) {
  EvalPrompts out;
  for (int inst : scene.instances()) {
    const int cls = scene.instance_class(inst);
    if (model.column_of(scene.class_names[static_cast<std::size_t>(cls)]) < 0) continue;
    const int point =
        sample_vision_prompt(scene, inst, protocol.strategy, protocol.quantile, protocol.seed);
    out.prompts.clicks.push_back(locate_click(scene, point));
    out.click_instance.push_back(inst);
    try {
      out.prompts.expressions.push_back(make_text_expression(scene, inst, protocol.seed));
      out.expression_instance.push_back(inst);
    } catch (const AmbiguityError&) {
    }
  }
  return out;
}

namespace {

struct SceneTruth {
  std::vector<Segment> panoptic;   // base things and base stuff
  std::vector<Segment> instances;  // base things
  std::vector<Segment> novel;      // novel things
  std::vector<int> semantic;       // -1 on novel points
  std::vector<char> void_points;
};

SceneTruth ground_truth(const Model& model, const Scene& scene) {
  SceneTruth t;
  const auto n = static_cast<std::size_t>(scene.num_points());
  t.semantic.assign(n, -1);
  t.void_points.assign(n, 0);
  std::map<int, PointMask> stuff;
  for (std::size_t p = 0; p < n; ++p) {
    const int cls = scene.semantic_id[p];
    if (model.column_of(scene.class_names[static_cast<std::size_t>(cls)]) < 0) {
      t.void_points[p] = 1;
      continue;
    }
    t.semantic[p] = cls;
    if (scene.instance_id[p] < 0) stuff[cls].push_back(static_cast<int>(p));
  }
  for (auto& [cls, points] : stuff) t.panoptic.push_back({std::move(points), cls});
  for (int inst : scene.instances()) {
    const int cls = scene.instance_class(inst);
    Segment seg{scene.instance_points(inst), cls};
    if (model.column_of(scene.class_names[static_cast<std::size_t>(cls)]) < 0) {
      t.novel.push_back(std::move(seg));
    } else {
      t.panoptic.push_back(seg);
      t.instances.push_back(std::move(seg));
    }
  }
  return t;
}

}  // namespace

EvaluationResult evaluate(const Model& model, const std::vector<Scene>& scenes,
                          const PromptProtocol& protocol) {
  PanopticAccumulator pq;
  SemanticAccumulator sem;
  ApAccumulator inst_ap, open_ap;
  InteractiveAccumulator inter;
  std::vector<double> ref_ious;
  double inst_iou_sum = 0.0;
  int inst_count = 0;
  EvaluationResult result;
  const InferenceThresholds thresholds = model.config.thresholds();

  for (const Scene& scene : scenes) {
    const SceneContext ctx = make_context(model, scene);
    const EvalPrompts ep = evaluation_prompts(model, scene, protocol);
    Tape tape;
    ParamBinder binder(tape, model.params, false);
    const ForwardPass fwd = forward(binder, model, ctx, all_superpoints(ctx), ep.prompts);
    const Matrix open_embeddings = class_embeddings_with_no_object(scene.class_names, model.config.d_out);
    TaskOutputs out = run_all_tasks(fwd.preds, ctx.layout, model.stuff_flags, open_embeddings, thresholds);

    std::vector<int> to_scene;
    for (const auto& name : model.vocabulary) to_scene.push_back(scene.class_index(name));
    auto scene_class = [&](int col) { return col < 0 ? -1 : to_scene[static_cast<std::size_t>(col)]; };
    const SceneTruth truth = ground_truth(model, scene);

    std::map<int, Segment> segments;
    for (std::size_t p = 0; p < out.panoptic.segment.size(); ++p) {
      const int id = out.panoptic.segment[p];
      if (id < 0) continue;
      Segment& seg = segments[id];
      seg.cls = scene_class(out.panoptic.cls[p]);
      seg.points.push_back(static_cast<int>(p));
    }
    std::vector<Segment> pred_segments;
    for (auto& [id, seg] : segments) pred_segments.push_back(std::move(seg));
    pq.add(pred_segments, truth.panoptic, truth.void_points);

    std::vector<int> semantic;
    for (int col : out.semantic) semantic.push_back(scene_class(col));
    sem.add(semantic, truth.semantic);

    std::vector<ScoredMask> instances;
    for (const InstancePrediction& ip : out.instances) {
      instances.push_back({ip.points, scene_class(ip.cls), ip.score});
    }
    inst_ap.add(instances, truth.instances);
    for (const Segment& g : truth.instances) {
      double best = 0.0;
      for (const InstancePrediction& ip : out.instances) best = std::max(best, mask_iou(ip.points, g.points));
      inst_iou_sum += best;
      ++inst_count;
    }

    for (std::size_t i = 0; i < out.interactive.size(); ++i) {
      inter.add(out.interactive[i], out.interactive_scores[i],
                scene.instance_points(ep.click_instance[i]));
    }
    for (std::size_t i = 0; i < out.referring.size(); ++i) {
      ref_ious.push_back(mask_iou(out.referring[i], scene.instance_points(ep.expression_instance[i])));
    }

    std::vector<ScoredMask> open;
    for (const InstancePrediction& ip : out.openvocab) open.push_back({ip.points, ip.cls, ip.score});
    open_ap.add(open, truth.novel);

    result.outputs.push_back(std::move(out));
  }

  MetricsReport& r = result.report;
  r.pq = pq.value();
  r.sem_miou = sem.value();
  const ApSummary inst = inst_ap.summary();
  r.inst_map = inst.map;
  r.inst_ap50 = inst.ap50;
  r.inst_ap25 = inst.ap25;
  const InteractiveSummary is = inter.summary();
  r.inter_ap = is.ap.map;
  r.inter_ap50 = is.ap.ap50;
  r.inter_ap25 = is.ap.ap25;
  r.inter_miou = is.miou;
  const ReferringSummary ref = referring_metrics(ref_ious);
  r.ref_miou = ref.miou;
  r.ref_acc25 = ref.acc25;
  r.ref_acc50 = ref.acc50;
  r.ov_ap = open_ap.empty() ? 0.0 : open_ap.summary().map;
  r.overall = r.headline_mean();
  result.instance_mask_miou = inst_count == 0 ? 0.0 : 100.0 * inst_iou_sum / inst_count;
  return result;
}

std::vector<AblationRow> ablate_prompts(const Model& model, const std::vector<Scene>& scenes,
                                        const std::vector<double>& quantiles, std::uint64_t seed) {
  std::vector<std::pair<std::string, PromptProtocol>> protocols;
  protocols.push_back({"center", {ClickStrategy::kCenter, 0.0, seed}});
  for (double q : quantiles) {
    if (!(q >= 0.0 && q <= 1.0)) throw ContractError("ablate_prompts: r_d must lie in [0, 1]");
    char name[32];
    std::snprintf(name, sizeof name, "r_d=%g", q);
    protocols.push_back({name, {ClickStrategy::kQuantile, q, seed}});
  }
  protocols.push_back({"random", {ClickStrategy::kRandom, 0.0, seed}});

  std::vector<AblationRow> rows;
  for (const auto& [name, protocol] : protocols) {
    const MetricsReport r = evaluate(model, scenes, protocol).report;
    rows.push_back({name, r.inter_miou, r.inter_ap, r.inter_ap50, r.inter_ap25});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "prompt,miou,ap,ap50,ap25\n";
  char line[160];
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%.6f\n", r.name.c_str(), r.miou, r.ap,
                  r.ap50, r.ap25);
    out += line;
  }
  return out;
}

}  // namespace uniseg

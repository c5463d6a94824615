#include "uniseg/model.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uniseg {

int Model::column_of(const std::string& name) const {
  const auto it = std::find(vocabulary.begin(), vocabulary.end(), name);
  return it == vocabulary.end() ? -1 : static_cast<int>(it - vocabulary.begin());
}

Model assemble_model(const TrainConfig& config, const std::vector<std::string>& vocabulary,
                     const std::vector<bool>& stuff_flags, ParameterSet params) {
  if (vocabulary.size() != stuff_flags.size()) {
    throw DimensionError("model: one stuff flag per vocabulary entry required");
  }
  Model model;
  model.config = config;
  model.vocabulary = vocabulary;
  model.stuff_flags = stuff_flags;
  model.params = std::move(params);
  model.class_embeddings = class_embeddings_with_no_object(vocabulary, config.d_out);
  return model;
}

Model init_model(const TrainConfig& config, const std::vector<std::string>& class_names,
                 const std::vector<bool>& stuff_flags) {
  validate(config);
  if (class_names.size() != stuff_flags.size()) {
    throw DimensionError("model: one stuff flag per class required");
  }
  std::vector<std::string> vocabulary;
  std::vector<bool> vocab_stuff;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    if (std::find(config.novel_classes.begin(), config.novel_classes.end(), class_names[c]) !=
        config.novel_classes.end()) {
      continue;
    }
    vocabulary.push_back(class_names[c]);
    vocab_stuff.push_back(stuff_flags[c]);
  }
  for (const auto& novel : config.novel_classes) {
    if (std::find(class_names.begin(), class_names.end(), novel) == class_names.end()) {
      throw LookupError("model: novel class '" + novel + "' not in the class table");
    }
  }

  const Rng root(config.seed);
  ParameterSet params;
  Rng backbone_rng = root.split(1);
  init_backbone(params, config.backbone(), backbone_rng);
  Rng text_rng = root.split(2);
  init_text_projection(params, kTextFeatureDim, config.d_in, text_rng);
  Rng decoder_rng = root.split(3);
  init_decoder(params, config.decoder(), decoder_rng);
  params.add(kLogTauName, Matrix::Constant(1, 1, std::log(config.tau_init)));
  return assemble_model(config, vocabulary, vocab_stuff, std::move(params));
}

SceneContext make_context(const Model& model, const Scene& scene) {
  SceneContext ctx;
  ctx.scene = &scene;
  ctx.graph = build_point_graph(scene, model.config.backbone());
  ctx.layout.partition = scene.superpoint_id;
  ctx.layout.superpoints = scene.num_superpoints();
  for (const auto& name : scene.class_names) ctx.column.push_back(model.column_of(name));

  const int m = ctx.layout.superpoints;
  ctx.superpoint_instance.assign(static_cast<std::size_t>(m), -1);
  ctx.superpoint_class.assign(static_cast<std::size_t>(m), -1);
  ctx.superpoint_points.assign(static_cast<std::size_t>(m), {});
  for (int p = 0; p < scene.num_points(); ++p) {
    const auto s = static_cast<std::size_t>(scene.superpoint_id[static_cast<std::size_t>(p)]);
    ctx.superpoint_instance[s] = scene.instance_id[static_cast<std::size_t>(p)];
    ctx.superpoint_class[s] = scene.semantic_id[static_cast<std::size_t>(p)];
    ctx.superpoint_points[s].push_back(p);
  }

  const PseudoMaskSet pseudo = generate_pseudo_masks(scene, scene.seed);
  std::vector<int> hits(static_cast<std::size_t>(m));
  for (const auto& mask : pseudo.masks) {
    std::fill(hits.begin(), hits.end(), 0);
    for (int p : mask) ++hits[static_cast<std::size_t>(scene.superpoint_id[static_cast<std::size_t>(p)])];
    std::vector<char> indicator(static_cast<std::size_t>(m), 0);
    bool any = false;
    for (std::size_t s = 0; s < indicator.size(); ++s) {
      if (2 * hits[s] >= static_cast<int>(ctx.superpoint_points[s].size())) {
        indicator[s] = 1;
        any = true;
      }
    }
    if (any) ctx.pseudo_superpoints.push_back(std::move(indicator));
  }
  return ctx;
}

ForwardPass forward(ParamBinder& p, const Model& model, const SceneContext& context,
                    std::vector<int> sampled, const PromptSet& prompts) {
  Tape& tape = p.tape();
  const TrainConfig& cfg = model.config;
  const Var points = extract_point_features(p, context.graph, cfg.backbone());
  const Var f_s = pool_superpoints(points, context.layout.partition, context.layout.superpoints);

  Var vision;
  if (!prompts.clicks.empty()) vision = encode_vision_prompts(f_s, prompts.clicks);
  Var text;
  if (!prompts.expressions.empty()) {
    Matrix raw(static_cast<Index>(prompts.expressions.size()), kTextFeatureDim);
    for (std::size_t i = 0; i < prompts.expressions.size(); ++i) {
      raw.row(static_cast<Index>(i)) = embed_text(prompts.expressions[i]).transpose();
    }
    text = project_text(p, tape.constant(raw));
  }

  ForwardPass out;
  out.superpoint_features = f_s;
  out.queries = assemble_queries(p, f_s, std::move(sampled), vision, text);
  const Var f_out = decode(p, out.queries, f_s, cfg.decoder());
  out.preds = predict(p, f_out, out.queries, f_s, model.class_embeddings);
  return out;
}

Vector instance_target(const SceneContext& context, int instance, const std::vector<int>& sampled) {
  Vector t(static_cast<Index>(sampled.size()));
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    t(static_cast<Index>(k)) =
        context.superpoint_instance[static_cast<std::size_t>(sampled[k])] == instance ? 1.0 : 0.0;
  }
  return t;
}

Vector stuff_target(const SceneContext& context, int cls, const std::vector<int>& sampled) {
  Vector t(static_cast<Index>(sampled.size()));
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    const auto s = static_cast<std::size_t>(sampled[k]);
    t(static_cast<Index>(k)) =
        context.superpoint_instance[s] < 0 && context.superpoint_class[s] == cls ? 1.0 : 0.0;
  }
  return t;
}

std::vector<int> all_superpoints(const SceneContext& context) {
  std::vector<int> all(static_cast<std::size_t>(context.layout.superpoints));
  std::iota(all.begin(), all.end(), 0);
  return all;
}

}  // namespace uniseg

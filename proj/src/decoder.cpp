#include "uniseg/decoder.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/layers.hpp"
#include "uniseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uniseg {
namespace {

std::string layer_prefix(int l) { return "decoder.layer" + std::to_string(l); }

// A key bias adds the same logit to every key of a query row, which the
// softmax cancels, so keys are projected without one.
void init_attention(ParameterSet& params, const std::string& prefix, int d, Rng& rng) {
  init_linear(params, prefix + ".q", d, d, rng);
  init_projection(params, prefix + ".k", d, d, rng);
  init_linear(params, prefix + ".v", d, d, rng);
  init_linear(params, prefix + ".out", d, d, rng);
}

// Multi-head scaled dot-product attention of `queries` over rows of
// (keys, values), both already projected.
Var attend(ParamBinder& p, Var queries, Var keys, Var values, const std::string& prefix, int heads) {
  const Var q = linear(p, queries, prefix + ".q");
  const Index d = q.cols();
  const Index dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = slice_cols(q, h * dh, dh);
    const Var kh = slice_cols(keys, h * dh, dh);
    const Var vh = slice_cols(values, h * dh, dh);
    const Var weights = row_softmax(scale(matmul_nt(qh, kh), scale_factor));
    outs.push_back(matmul(weights, vh));
  }
  return linear(p, concat_cols(outs), prefix + ".out");
}

}  // namespace

void init_decoder(ParameterSet& params, const DecoderConfig& config, Rng& rng) {
  if (config.heads < 1 || config.d_in % config.heads != 0) {
    throw ContractError("decoder: d_in " + std::to_string(config.d_in) +
                        " not divisible by heads " + std::to_string(config.heads));
  }
  const int d = config.d_in;
  for (const char* name : {"decoder.e_u", "decoder.e_v", "decoder.e_t"}) {
    Matrix e(1, d);
    for (int k = 0; k < d; ++k) e(0, k) = rng.uniform(-0.1, 0.1);
    params.add(name, e);
  }
  for (int l = 0; l < config.layers; ++l) {
    const std::string prefix = layer_prefix(l);
    init_layer_norm(params, prefix + ".ca_norm", d);
    init_attention(params, prefix + ".ca", d, rng);
    init_layer_norm(params, prefix + ".sa_norm", d);
    init_attention(params, prefix + ".sa", d, rng);
    init_layer_norm(params, prefix + ".ff_norm", d);
    init_mlp(params, prefix + ".ff", d, config.ffn_multiplier * d, d, rng);
  }
  init_layer_norm(params, "decoder.out_norm", d);
  init_mlp(params, "decoder.head", d, d, config.d_out, rng);
  init_mlp(params, "decoder.mask_key", d, d, config.d_out, rng);
}

int choose_query_count(int superpoints, QueryMode mode, const QuerySampling& sampling, Rng& rng) {
  if (superpoints < 1) throw ContractError("choose_query_count: no superpoints");
  int count = superpoints;
  if (mode == QueryMode::kTrain) {
    const int lo = std::clamp(static_cast<int>(std::ceil(sampling.min_fraction * superpoints)), 1,
                              superpoints);
    const int hi = std::clamp(static_cast<int>(std::ceil(sampling.max_fraction * superpoints)), lo,
                              superpoints);
    count = lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
  }
  return std::min(count, sampling.cap);
}

std::vector<int> sample_query_indices(int superpoints, int count, Rng& rng) {
  if (count > superpoints || count < 0) {
    throw ContractError("sample_query_indices: m = " + std::to_string(count) + " but M = " +
                        std::to_string(superpoints));
  }
  if (count == superpoints) {
    std::vector<int> all(static_cast<std::size_t>(superpoints));
    for (int i = 0; i < superpoints; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  return sample_without_replacement(superpoints, count, rng);
}

QueryBundle assemble_queries(ParamBinder& p, Var superpoint_features, std::vector<int> sampled,
                             Var vision, Var text) {
  Tape& tape = p.tape();
  const Index d = superpoint_features.cols();
  if (sampled.size() > static_cast<std::size_t>(superpoint_features.rows())) {
    throw ContractError("assemble_queries: m exceeds M");
  }
  auto group = [&](Var raw, const char* embedding) {
    if (!raw.valid() || raw.rows() == 0) return tape.constant(Matrix(0, d));
    if (raw.cols() != d) throw DimensionError("assemble_queries: prompt width differs from d_in");
    return add(raw, p(embedding));
  };
  QueryBundle q;
  q.unified = add(gather_rows(superpoint_features, sampled), p("decoder.e_u"));
  q.vision = group(vision, "decoder.e_v");
  q.text = group(text, "decoder.e_t");
  q.sampled = std::move(sampled);
  return q;
}

Var decode(ParamBinder& p, const QueryBundle& queries, Var superpoint_features,
           const DecoderConfig& config) {
  const int layers = config.layers;
  Var unified = queries.unified;
  const bool has_prompts = queries.k_v() + queries.k_t() > 0;
  Var prompts;
  if (has_prompts) {
    std::vector<Var> parts;
    if (queries.k_v() > 0) parts.push_back(queries.vision);
    if (queries.k_t() > 0) parts.push_back(queries.text);
    prompts = parts.size() == 1 ? parts.front() : concat_rows(parts);
  }

  for (int l = 0; l < layers; ++l) {
    const std::string prefix = layer_prefix(l);
    const Var keys = projection(p, superpoint_features, prefix + ".ca.k");
    const Var values = linear(p, superpoint_features, prefix + ".ca.v");
    auto cross = [&](Var x) {
      return add(x, attend(p, layer_norm(p, x, prefix + ".ca_norm"), keys, values, prefix + ".ca",
                           config.heads));
    };
    auto feed_forward = [&](Var x) {
      return add(x, mlp(p, layer_norm(p, x, prefix + ".ff_norm"), prefix + ".ff"));
    };

    unified = cross(unified);
    const Var normed = layer_norm(p, unified, prefix + ".sa_norm");
    unified = add(unified, attend(p, normed, projection(p, normed, prefix + ".sa.k"),
                                  linear(p, normed, prefix + ".sa.v"), prefix + ".sa",
                                  config.heads));
    unified = feed_forward(unified);

    if (has_prompts) prompts = feed_forward(cross(prompts));
  }

  auto head = [&](Var x) { return mlp(p, layer_norm(p, x, "decoder.out_norm"), "decoder.head"); };
  const Var out_u = head(unified);
  if (!has_prompts) return out_u;
  return concat_rows({out_u, head(prompts)});
}

PredictionSet predict(ParamBinder& p, Var f_out, const QueryBundle& queries,
                      Var superpoint_features, const Matrix& class_embeddings) {
  if (class_embeddings.cols() != f_out.cols()) {
    throw DimensionError("predict: class embeddings have " +
                         std::to_string(class_embeddings.cols()) + " columns, F_out has " +
                         std::to_string(f_out.cols()));
  }
  Tape& tape = p.tape();
  PredictionSet out;
  out.m = queries.m();
  out.k_v = queries.k_v();
  out.k_t = queries.k_t();
  out.sampled = queries.sampled;
  if (f_out.rows() != out.rows()) throw DimensionError("predict: F_out rows do not match queries");

  const Var keys =
      mlp(p, gather_rows(superpoint_features, queries.sampled), "decoder.mask_key");
  const Var classes = tape.constant(class_embeddings);

  // Unified and prompt rows are multiplied separately so that unified
  // results are independent of the prompt count.
  auto heads = [&](Var rows) {
    const Var logits = matmul_nt(rows, classes);
    return std::make_tuple(matmul_nt(rows, keys), logits, row_softmax(logits));
  };
  if (out.k_v + out.k_t == 0) {
    std::tie(out.mask_logits, out.cls_logits, out.cls_prob) = heads(f_out);
    out.f_out = f_out;
    return out;
  }
  const Var fu = slice_rows(f_out, 0, out.m);
  const Var fp = slice_rows(f_out, out.m, out.k_v + out.k_t);
  const auto [mu, cu, pu] = heads(fu);
  const auto [mp, cp, pp] = heads(fp);
  out.f_out = f_out;
  out.mask_logits = concat_rows({mu, mp});
  out.cls_logits = concat_rows({cu, cp});
  out.cls_prob = concat_rows({pu, pp});
  return out;
}

Vector superpoint_to_point(const Vector& values, const std::vector<int>& partition,
                           const std::vector<int>& sampled, int superpoints) {
  if (values.size() != static_cast<Index>(sampled.size())) {
    throw DimensionError("superpoint_to_point: one value per sampled superpoint required");
  }
  Vector per_superpoint =
      Vector::Constant(superpoints, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    per_superpoint(sampled[k]) = values(static_cast<Index>(k));
  }
  Vector out(static_cast<Index>(partition.size()));
  for (std::size_t i = 0; i < partition.size(); ++i) {
    const int s = partition[i];
    if (s < 0 || s >= superpoints) throw ContractError("superpoint_to_point: partition mismatch");
    out(static_cast<Index>(i)) = per_superpoint(s);
  }
  return out;
}

}  // namespace uniseg

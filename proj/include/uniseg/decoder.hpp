#pragma once

#include "uniseg/autodiff.hpp"
#include "uniseg/rng.hpp"

#include <vector>

namespace uniseg {

struct DecoderConfig {
  int d_in = 32;
  int d_out = 256;
  int layers = 6;
  int heads = 4;
  int ffn_multiplier = 4;
};

// Task embeddings e_u / e_v / e_t, `layers` decoder blocks, the output head
// MLP(d_in -> d_out) and the mask-key MLP(d_in -> d_out).
void init_decoder(ParameterSet& params, const DecoderConfig& config, Rng& rng);

enum class QueryMode { kTrain, kInference };

struct QuerySampling {
  double min_fraction = 0.5;
  double max_fraction = 1.0;
  int cap = 3500;
};

// Number of unified queries: uniform in [ceil(min_fraction*M),
// ceil(max_fraction*M)] for training, M for inference; capped either way.
int choose_query_count(int superpoints, QueryMode mode, const QuerySampling& sampling, Rng& rng);

// `count` superpoint indices without replacement, ascending. All of them
// when count == M. Throws ContractError when count > M.
std::vector<int> sample_query_indices(int superpoints, int count, Rng& rng);

// q_u = F_s[sampled] + e_u, q_v = f_v + e_v, q_t = f_t + e_t. Empty prompt
// groups are 0 x d_in.
struct QueryBundle {
  Var unified;
  Var vision;
  Var text;
  std::vector<int> sampled;

  int m() const { return static_cast<int>(sampled.size()); }
  int k_v() const { return static_cast<int>(vision.rows()); }
  int k_t() const { return static_cast<int>(text.rows()); }
};

// `vision` and `text` may be invalid Vars for "no prompts of this kind".
QueryBundle assemble_queries(ParamBinder& p, Var superpoint_features, std::vector<int> sampled,
                             Var vision, Var text);

// F_out = MLP(MaskDecoder(concat(q_u, q_v, q_t); F_s)). Unified queries run
// cross-attention, self-attention among themselves, and feed-forward;
// prompt queries run cross-attention and feed-forward only. The two groups
// never share a matrix, so unified rows do not depend on prompts at all.
Var decode(ParamBinder& p, const QueryBundle& queries, Var superpoint_features,
           const DecoderConfig& config);

struct PredictionSet {
  Var f_out;        // (m + K_v + K_t) x d_out
  Var mask_logits;  // (m + K_v + K_t) x m
  Var cls_logits;   // (m + K_v + K_t) x K_c
  Var cls_prob;     // row softmax of cls_logits
  int m = 0;
  int k_v = 0;
  int k_t = 0;
  std::vector<int> sampled;

  int rows() const { return m + k_v + k_t; }
  int vision_row(int i) const { return m + i; }
  int text_row(int i) const { return m + k_v + i; }
};

// mask = F_out * MLP(F_s[sampled])^T, cls = softmax(F_out * e_cls^T).
PredictionSet predict(ParamBinder& p, Var f_out, const QueryBundle& queries,
                      Var superpoint_features, const Matrix& class_embeddings);

// Each point takes its superpoint's value; points of superpoints outside
// `sampled` get -infinity. `values` has one entry per sampled superpoint.
Vector superpoint_to_point(const Vector& values, const std::vector<int>& partition,
                           const std::vector<int>& sampled, int superpoints);

}  // namespace uniseg

#pragma once

#include "uniseg/backbone.hpp"
#include "uniseg/decoder.hpp"
#include "uniseg/tasks.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace uniseg {

struct TrainConfig {
  // schedule
  int epochs = 128;
  int batch_size = 2;
  int eval_period = 16;
  double lr0 = 1e-4;
  double weight_decay = 0.05;
  double lr_power = 0.9;
  std::uint64_t seed = 0;

  // queries and prompts
  double m_min_fraction = 0.5;
  double m_max_fraction = 1.0;
  int m_cap = 3500;
  int k_v = 4;
  int k_t = 4;
  int max_pairs = 8;

  // losses
  double lambda = 0.1;
  int top_k = 10;
  double no_object_weight = 0.1;
  double tau_init = 0.07;
  double tau_min = 0.01;
  double tau_max = 1.0;
  bool distill = true;
  bool contrastive = true;
  bool rank = true;

  // fine-tuning trick
  bool finetune_trick = true;
  int finetune_epochs = 40;
  double finetune_factor = 1e-3;

  // architecture
  int layers = 6;
  int d_in = 32;
  int d_out = 256;
  int heads = 4;
  int backbone_rounds = 2;
  int neighbors = 8;

  // data
  int train_scenes = 32;
  int val_scenes = 8;
  int point_budget = 2048;
  int superpoint_target = 64;
  std::vector<std::string> novel_classes = {"lamp"};

  // inference
  double binarize = 0.5;
  double score_floor = 0.1;
  int min_segment_points = 25;

  BackboneConfig backbone() const;
  DecoderConfig decoder() const;
  QuerySampling query_sampling() const;
  InferenceThresholds thresholds() const;

  bool operator==(const TrainConfig&) const = default;
};

// Field names in serialization order.
const std::vector<std::string>& config_keys();

// "key = value" lines; '#' starts a comment. Keys missing from the text keep
// their defaults. Throws ParseError on unknown keys or malformed values and
// ContractError on out-of-range values.
TrainConfig parse_config(const std::string& text);
std::string serialize_config(const TrainConfig& config);
TrainConfig load_config(const std::string& path);

// Throws ContractError naming the first invalid field.
void validate(const TrainConfig& config);

}  // namespace uniseg

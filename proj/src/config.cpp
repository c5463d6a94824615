#include "uniseg/config.hpp"

#include "uniseg/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>

namespace uniseg {

BackboneConfig TrainConfig::backbone() const { return {d_in, neighbors, backbone_rounds}; }

DecoderConfig TrainConfig::decoder() const { return {d_in, d_out, layers, heads, 4}; }

QuerySampling TrainConfig::query_sampling() const {
  return {m_min_fraction, m_max_fraction, m_cap};
}

InferenceThresholds TrainConfig::thresholds() const {
  return {binarize, score_floor, min_segment_points};
}

namespace {

using Field = std::variant<int TrainConfig::*, double TrainConfig::*, bool TrainConfig::*,
                           std::uint64_t TrainConfig::*, std::vector<std::string> TrainConfig::*>;

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"epochs", &TrainConfig::epochs},
      {"batch_size", &TrainConfig::batch_size},
      {"eval_period", &TrainConfig::eval_period},
      {"lr0", &TrainConfig::lr0},
      {"weight_decay", &TrainConfig::weight_decay},
      {"lr_power", &TrainConfig::lr_power},
      {"seed", &TrainConfig::seed},
      {"m_min_fraction", &TrainConfig::m_min_fraction},
      {"m_max_fraction", &TrainConfig::m_max_fraction},
      {"m_cap", &TrainConfig::m_cap},
      {"k_v", &TrainConfig::k_v},
      {"k_t", &TrainConfig::k_t},
      {"max_pairs", &TrainConfig::max_pairs},
      {"lambda", &TrainConfig::lambda},
      {"top_k", &TrainConfig::top_k},
      {"no_object_weight", &TrainConfig::no_object_weight},
      {"tau_init", &TrainConfig::tau_init},
      {"tau_min", &TrainConfig::tau_min},
      {"tau_max", &TrainConfig::tau_max},
      {"distill", &TrainConfig::distill},
      {"contrastive", &TrainConfig::contrastive},
      {"rank", &TrainConfig::rank},
      {"finetune_trick", &TrainConfig::finetune_trick},
      {"finetune_epochs", &TrainConfig::finetune_epochs},
      {"finetune_factor", &TrainConfig::finetune_factor},
      {"layers", &TrainConfig::layers},
      {"d_in", &TrainConfig::d_in},
      {"d_out", &TrainConfig::d_out},
      {"heads", &TrainConfig::heads},
      {"backbone_rounds", &TrainConfig::backbone_rounds},
      {"neighbors", &TrainConfig::neighbors},
      {"train_scenes", &TrainConfig::train_scenes},
      {"val_scenes", &TrainConfig::val_scenes},
      {"point_budget", &TrainConfig::point_budget},
      {"superpoint_target", &TrainConfig::superpoint_target},
      {"novel_classes", &TrainConfig::novel_classes},
      {"binarize", &TrainConfig::binarize},
      {"score_floor", &TrainConfig::score_floor},
      {"min_segment_points", &TrainConfig::min_segment_points},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& text, const std::string& key, std::size_t offset) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !in.eof()) throw ParseError("config: bad value for '" + key + "'", offset);
  return value;
}

struct Assign {
  TrainConfig& config;
  const std::string& key;
  const std::string& text;
  std::size_t offset;

  void operator()(int TrainConfig::*f) const { config.*f = parse_number<int>(text, key, offset); }
  void operator()(double TrainConfig::*f) const {
    config.*f = parse_number<double>(text, key, offset);
  }
  void operator()(std::uint64_t TrainConfig::*f) const {
    if (!text.empty() && text[0] == '-') throw ParseError("config: negative '" + key + "'", offset);
    config.*f = parse_number<std::uint64_t>(text, key, offset);
  }
  void operator()(bool TrainConfig::*f) const {
    if (text == "true" || text == "1") {
      config.*f = true;
    } else if (text == "false" || text == "0") {
      config.*f = false;
    } else {
      throw ParseError("config: '" + key + "' expects true or false", offset);
    }
  }
  void operator()(std::vector<std::string> TrainConfig::*f) const {
    std::vector<std::string> names;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) names.push_back(item);
    }
    config.*f = names;
  }
};

struct Render {
  const TrainConfig& config;
  std::string operator()(int TrainConfig::*f) const { return std::to_string(config.*f); }
  std::string operator()(double TrainConfig::*f) const { return format_double(config.*f); }
  std::string operator()(std::uint64_t TrainConfig::*f) const { return std::to_string(config.*f); }
  std::string operator()(bool TrainConfig::*f) const { return config.*f ? "true" : "false"; }
  std::string operator()(std::vector<std::string> TrainConfig::*f) const {
    std::string out;
    for (const auto& s : config.*f) out += (out.empty() ? "" : ",") + s;
    return out;
  }
};

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ContractError(std::string("config: invalid ") + what);
  };
  require(c.epochs >= 0, "epochs");
  require(c.batch_size >= 1, "batch_size");
  require(c.eval_period >= 1, "eval_period");
  require(c.lr0 >= 0.0, "lr0");
  require(c.weight_decay >= 0.0, "weight_decay");
  require(c.m_min_fraction > 0.0 && c.m_min_fraction <= c.m_max_fraction && c.m_max_fraction <= 1.0,
          "m_min_fraction/m_max_fraction");
  require(c.m_cap >= 1, "m_cap");
  require(c.k_v >= 0 && c.k_t >= 0 && c.k_v == c.k_t, "k_v/k_t (must be equal)");
  require(c.max_pairs >= 1, "max_pairs");
  require(c.lambda >= 0.0, "lambda");
  require(c.top_k >= 1 && c.top_k <= 100, "top_k");
  require(c.no_object_weight > 0.0, "no_object_weight");
  require(c.tau_min > 0.0 && c.tau_min <= c.tau_init && c.tau_init <= c.tau_max, "tau_init");
  require(c.finetune_epochs >= 0, "finetune_epochs");
  require(c.finetune_factor > 0.0, "finetune_factor");
  require(c.layers >= 1, "layers");
  require(c.heads >= 1 && c.d_in % c.heads == 0, "d_in/heads");
  require(c.d_out >= 1, "d_out");
  require(c.backbone_rounds >= 0, "backbone_rounds");
  require(c.neighbors >= 1, "neighbors");
  require(c.train_scenes >= 1, "train_scenes");
  require(c.val_scenes >= 0, "val_scenes");
  require(c.point_budget >= 64, "point_budget");
  require(c.superpoint_target >= 1, "superpoint_target");
  require(c.binarize > 0.0 && c.binarize < 1.0, "binarize");
  require(c.min_segment_points >= 0, "min_segment_points");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string raw;
  std::size_t offset = 0;
  while (std::getline(in, raw)) {
    const std::size_t line_start = offset;
    offset += raw.size() + 1;
    std::string line = raw.substr(0, raw.find('#'));
    if (trim(line).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected 'key = value'", line_start);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& [name, field] : fields()) {
      if (name != key) continue;
      std::visit(Assign{config, key, value, line_start + eq + 1}, field);
      known = true;
      break;
    }
    if (!known) throw ParseError("config: unknown key '" + key + "'", line_start);
  }
  validate(config);
  return config;
}

std::string serialize_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) {
    out += name + " = " + std::visit(Render{config}, field) + "\n";
  }
  return out;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace uniseg

#include "uniseg/checkpoint.hpp"

#include "uniseg/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace uniseg {

using nlohmann::json;

namespace {

json encode(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix decode(const json& j, const std::string& what) {
  try {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
      throw ParseError("checkpoint: '" + what + "' has inconsistent shape", 0);
    }
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint: bad matrix '" + what + "': " + e.what(), 0);
  }
}

std::vector<Matrix> decode_list(const json& j, const std::string& what) {
  std::vector<Matrix> out;
  if (!j.is_array()) throw ParseError("checkpoint: '" + what + "' is not a list", 0);
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(decode(j[k], what));
  return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  json doc;
  doc["format"] = "uniseg-checkpoint";
  doc["version"] = kCheckpointFormatVersion;
  doc["config"] = serialize_config(ck.model.config);
  doc["vocabulary"] = ck.model.vocabulary;
  doc["stuff_flags"] = ck.model.stuff_flags;
  json params = json::array();
  for (const Parameter& p : ck.model.params) params.push_back({{"name", p.name}, {"value", encode(p.value)}});
  doc["params"] = params;
  json m = json::array(), v = json::array();
  for (const Matrix& x : ck.optimizer.m) m.push_back(encode(x));
  for (const Matrix& x : ck.optimizer.v) v.push_back(encode(x));
  doc["optimizer"] = {{"step", ck.optimizer.step}, {"m", m}, {"v", v}};
  doc["epoch"] = ck.epoch;
  doc["best_overall"] = ck.best_overall;
  return doc.dump() + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: malformed document: ") + e.what(), e.byte);
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != "uniseg-checkpoint") {
      throw ParseError("checkpoint: unexpected format tag", 0);
    }
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw UnsupportedVersionError("checkpoint: unsupported version " + std::to_string(version), 0);
    }
    const TrainConfig config = parse_config(doc.at("config").get<std::string>());
    ParameterSet params;
    for (const json& p : doc.at("params")) {
      const auto name = p.at("name").get<std::string>();
      params.add(name, decode(p.at("value"), name));
    }
    Checkpoint ck;
    ck.model = assemble_model(config, doc.at("vocabulary").get<std::vector<std::string>>(),
                              doc.at("stuff_flags").get<std::vector<bool>>(), std::move(params));
    const json& opt = doc.at("optimizer");
    ck.optimizer.step = opt.at("step").get<std::int64_t>();
    ck.optimizer.m = decode_list(opt.at("m"), "optimizer.m");
    ck.optimizer.v = decode_list(opt.at("v"), "optimizer.v");
    if (ck.optimizer.m.size() != ck.optimizer.v.size() ||
        (!ck.optimizer.m.empty() && ck.optimizer.m.size() != ck.model.params.size())) {
      throw ParseError("checkpoint: optimizer state does not match the parameters", 0);
    }
    ck.epoch = doc.at("epoch").get<int>();
    ck.best_overall = doc.at("best_overall").get<double>();
    return ck;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: bad field: ") + e.what(), 0);
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize_checkpoint(checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

bool same_parameters(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].value.rows() != b[i].value.rows() ||
        a[i].value.cols() != b[i].value.cols() || a[i].value != b[i].value) {
      return false;
    }
  }
  return true;
}

}  // namespace uniseg

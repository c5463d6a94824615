#include "uniseg/prompts.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/layers.hpp"
#include "uniseg/ops.hpp"

#include <algorithm>
#include <set>

namespace uniseg {
namespace {

constexpr std::uint64_t kLiftSeed = 0x6c1f7a3e5d2b9c01ULL;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Vector embed_text(const Tokens& tokens, int dim) {
  if (tokens.empty()) throw ContractError("embed_text: empty token sequence");
  Vector acc = Vector::Zero(dim);
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    Rng rng(mix64(fnv1a(tokens[pos])) ^ mix64(pos + 1));
    Vector g(dim);
    for (int k = 0; k < dim; ++k) g(k) = rng.normal();
    acc += g.normalized();
  }
  return acc.normalized();
}

void init_text_projection(ParameterSet& params, int text_dim, int d_in, Rng& rng) {
  init_mlp(params, "text_proj", text_dim, d_in, d_in, rng);
}

Var project_text(ParamBinder& p, Var text) { return mlp(p, text, "text_proj"); }

VisionPrompt locate_click(const Scene& scene, const Eigen::Vector3d& click) {
  if (scene.num_points() == 0) throw ContractError("locate_click: empty scene");
  int best = 0;
  double best_d = (scene.points.row(0).transpose() - click).squaredNorm();
  for (int i = 1; i < scene.num_points(); ++i) {
    const double d = (scene.points.row(i).transpose() - click).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return locate_click(scene, best);
}

VisionPrompt locate_click(const Scene& scene, int point_index) {
  if (scene.num_points() == 0) throw ContractError("locate_click: empty scene");
  if (point_index < 0 || point_index >= scene.num_points()) {
    throw LookupError("locate_click: point " + std::to_string(point_index) + " out of range");
  }
  return {point_index, scene.superpoint_id[static_cast<std::size_t>(point_index)]};
}

Var encode_vision_prompts(Var superpoint_features, const std::vector<VisionPrompt>& prompts) {
  std::vector<int> rows;
  rows.reserve(prompts.size());
  for (const VisionPrompt& vp : prompts) rows.push_back(vp.superpoint);
  return gather_rows(superpoint_features, rows);
}

Matrix class_lift(int d_out, int text_dim) {
  Rng rng(kLiftSeed);
  const int tall = std::max(d_out, text_dim), wide = std::min(d_out, text_dim);
  Matrix g(tall, wide);
  for (int c = 0; c < wide; ++c) {
    for (int r = 0; r < tall; ++r) g(r, c) = rng.normal();
  }
  const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(tall, wide);
  // d_out x C: orthonormal columns when d_out >= C, orthonormal rows otherwise.
  return d_out >= text_dim ? q : Matrix(q.transpose());
}

Matrix embed_class_names(const std::vector<std::string>& names, int d_out, VocabularyMode mode,
                         const std::vector<std::string>& training_names) {
  if (names.empty()) throw ContractError("embed_class_names: no names");
  std::set<std::string> seen;
  for (const auto& name : names) {
    if (!seen.insert(name).second) throw ContractError("embed_class_names: duplicate name " + name);
    if (mode == VocabularyMode::kClosed &&
        std::find(training_names.begin(), training_names.end(), name) == training_names.end()) {
      throw LookupError("embed_class_names: '" + name + "' outside the closed vocabulary");
    }
  }
  const Matrix lift = class_lift(d_out);
  Matrix out(static_cast<Index>(names.size()), d_out);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Vector e = lift * embed_text({names[i]});
    out.row(static_cast<Index>(i)) = e.normalized().transpose();
  }
  return out;
}

Matrix class_embeddings_with_no_object(const std::vector<std::string>& names, int d_out) {
  std::vector<std::string> all = names;
  all.emplace_back(kNoObjectName);
  return embed_class_names(all, d_out, VocabularyMode::kOpen);
}

}  // namespace uniseg

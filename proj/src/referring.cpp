#include "uniseg/errors.hpp"
#include "uniseg/rng.hpp"
#include "uniseg/scene.hpp"

#include <algorithm>
#include <map>

namespace uniseg {
namespace {

enum class Relation { kRightOf, kLeftOf, kInFrontOf, kBehind, kNearest };

constexpr Relation kRelations[] = {Relation::kRightOf, Relation::kLeftOf, Relation::kInFrontOf,
                                   Relation::kBehind, Relation::kNearest};

Tokens relation_tokens(Relation r) {
  switch (r) {
    case Relation::kRightOf: return {"right", "of"};
    case Relation::kLeftOf: return {"left", "of"};
    case Relation::kInFrontOf: return {"in", "front", "of"};
    case Relation::kBehind: return {"behind"};
    case Relation::kNearest: return {"nearest"};
  }
  return {};
}

struct InstanceInfo {
  int cls;
  Eigen::RowVector3d centroid;
};

std::map<int, InstanceInfo> instance_table(const Scene& scene) {
  std::map<int, InstanceInfo> table;
  std::map<int, int> counts;
  for (int i = 0; i < scene.num_points(); ++i) {
    const int inst = scene.instance_id[static_cast<std::size_t>(i)];
    if (inst < 0) continue;
    auto [it, inserted] = table.try_emplace(
        inst, InstanceInfo{scene.semantic_id[static_cast<std::size_t>(i)], Eigen::RowVector3d::Zero()});
    it->second.centroid += scene.points.row(i);
    ++counts[inst];
  }
  for (auto& [inst, info] : table) info.centroid /= static_cast<double>(counts[inst]);
  return table;
}

std::vector<int> instances_of(const std::map<int, InstanceInfo>& table, int cls) {
  std::vector<int> out;
  for (const auto& [inst, info] : table) {
    if (info.cls == cls) out.push_back(inst);
  }
  return out;
}

std::optional<int> apply_relation(const std::map<int, InstanceInfo>& table,
                                  const std::vector<int>& candidates, Relation relation,
                                  int anchor) {
  const Eigen::RowVector3d a = table.at(anchor).centroid;
  if (relation == Relation::kNearest) {
    std::vector<std::pair<double, int>> dist;
    for (int c : candidates) dist.emplace_back((table.at(c).centroid - a).norm(), c);
    std::sort(dist.begin(), dist.end());
    if (dist.empty()) return std::nullopt;
    if (dist.size() > 1 && dist[1].first - dist[0].first < 1e-9) return std::nullopt;
    return dist[0].second;
  }
  std::vector<int> hits;
  for (int c : candidates) {
    const Eigen::RowVector3d p = table.at(c).centroid;
    bool hit = false;
    switch (relation) {
      case Relation::kRightOf: hit = p(0) > a(0); break;
      case Relation::kLeftOf: hit = p(0) < a(0); break;
      case Relation::kInFrontOf: hit = p(1) < a(1); break;
      case Relation::kBehind: hit = p(1) > a(1); break;
      case Relation::kNearest: break;
    }
    if (hit) hits.push_back(c);
  }
  if (hits.size() != 1) return std::nullopt;
  return hits.front();
}

std::optional<int> thing_class(const Scene& scene, const std::string& name) {
  const auto it = std::find(scene.class_names.begin(), scene.class_names.end(), name);
  if (it == scene.class_names.end()) return std::nullopt;
  const auto cls = static_cast<int>(it - scene.class_names.begin());
  if (scene.stuff_flags[static_cast<std::size_t>(cls)]) return std::nullopt;
  return cls;
}

}  // namespace

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::optional<int> resolve_expression(const Scene& scene, const Tokens& tokens) {
  if (tokens.size() < 2 || tokens[0] != "the") return std::nullopt;
  const auto cls = thing_class(scene, tokens[1]);
  if (!cls) return std::nullopt;
  const auto table = instance_table(scene);
  const std::vector<int> candidates = instances_of(table, *cls);
  if (tokens.size() == 2) {
    if (candidates.size() == 1) return candidates.front();
    return std::nullopt;
  }
  for (Relation relation : kRelations) {
    const Tokens rel = relation_tokens(relation);
    if (tokens.size() != 2 + rel.size() + 2) continue;
    if (!std::equal(rel.begin(), rel.end(), tokens.begin() + 2)) continue;
    if (tokens[2 + rel.size()] != "the") return std::nullopt;
    const auto anchor_cls = thing_class(scene, tokens.back());
    if (!anchor_cls || *anchor_cls == *cls) return std::nullopt;
    const std::vector<int> anchors = instances_of(table, *anchor_cls);
    if (anchors.size() != 1) return std::nullopt;
    return apply_relation(table, candidates, relation, anchors.front());
  }
  return std::nullopt;
}

Tokens make_text_expression(const Scene& scene, int instance, std::uint64_t seed) {
  const auto table = instance_table(scene);
  const auto target = table.find(instance);
  if (target == table.end()) {
    throw LookupError("instance " + std::to_string(instance) + " not in scene");
  }
  const int cls = target->second.cls;
  const std::string& name = scene.class_names[static_cast<std::size_t>(cls)];
  const std::vector<int> candidates = instances_of(table, cls);
  if (candidates.size() == 1) return {"the", name};

  std::vector<int> anchors;
  for (const auto& [inst, info] : table) {
    if (info.cls != cls && instances_of(table, info.cls).size() == 1) anchors.push_back(inst);
  }
  Rng rng = Rng(seed).split(static_cast<std::uint64_t>(instance));
  rng.shuffle(anchors);
  for (int anchor : anchors) {
    for (Relation relation : kRelations) {
      if (apply_relation(table, candidates, relation, anchor) != instance) continue;
      Tokens tokens{"the", name};
      const Tokens rel = relation_tokens(relation);
      tokens.insert(tokens.end(), rel.begin(), rel.end());
      tokens.push_back("the");
      tokens.push_back(scene.class_names[static_cast<std::size_t>(table.at(anchor).cls)]);
      return tokens;
    }
  }
  throw AmbiguityError("no template expression singles out instance " + std::to_string(instance));
}

}  // namespace uniseg

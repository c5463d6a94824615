#include "fixtures.hpp"

#include "uniseg/corpus.hpp"
#include "uniseg/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <deque>
#include <filesystem>
#include <map>
#include <set>

using namespace uniseg;
using namespace uniseg::testing;

namespace {

SceneRecipe chairs_and_table() {
  SceneRecipe r = default_recipe();
  r.instances = {{"chair", 3}, {"table", 1}};
  return r;
}

// Points on the surface of a unit cube, one instance of one class.
Scene cube_scene(int per_face) {
  Scene s;
  s.class_names = {"cube"};
  s.stuff_flags = {false};
  Rng rng(4);
  const int n = 6 * per_face;
  s.points.resize(n, 3);
  s.colors = Points::Constant(n, 3, 0.5);
  for (int f = 0; f < 6; ++f) {
    for (int i = 0; i < per_face; ++i) {
      const double u = rng.uniform(), v = rng.uniform();
      const double side = f % 2;
      Eigen::RowVector3d p;
      if (f / 2 == 0) p = {side, u, v};
      else if (f / 2 == 1) p = {u, side, v};
      else p = {u, v, side};
      s.points.row(f * per_face + i) = p;
    }
  }
  s.instance_id.assign(n, 0);
  s.semantic_id.assign(n, 0);
  s.superpoint_id.assign(n, 0);
  return s;
}

bool connected_within(const Scene& scene, const std::vector<int>& members) {
  const NeighborTable nb = knn(scene.points, 8);
  std::set<int> inside(members.begin(), members.end());
  std::map<int, std::vector<int>> adj;
  for (int p : members) {
    for (Index k = 0; k < nb.cols(); ++k) {
      const int q = nb(p, k);
      if (inside.count(q)) {
        adj[p].push_back(q);
        adj[q].push_back(p);
      }
    }
  }
  std::set<int> seen{members.front()};
  std::deque<int> queue{members.front()};
  while (!queue.empty()) {
    const int p = queue.front();
    queue.pop_front();
    for (int q : adj[p]) {
      if (seen.insert(q).second) queue.push_back(q);
    }
  }
  return seen.size() == members.size();
}

std::map<int, std::vector<int>> members_of(const std::vector<int>& ids) {
  std::map<int, std::vector<int>> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]].push_back(static_cast<int>(i));
  return out;
}

}  // namespace

TEST_SUITE("scenegen") {
  TEST_CASE("three chairs and a table give four instances") {
    const Scene s = generate_scene(7, chairs_and_table());
    CHECK(s.instances().size() == 4);
    const int floor = s.class_index("floor");
    for (int i = 0; i < s.num_points(); ++i) {
      if (s.semantic_id[static_cast<std::size_t>(i)] == floor) CHECK(s.instance_id[static_cast<std::size_t>(i)] == -1);
    }
  }

  TEST_CASE("generation is deterministic in seed and recipe") {
    CHECK(generate_scene(7, chairs_and_table()) == generate_scene(7, chairs_and_table()));
    CHECK(!(generate_scene(7, chairs_and_table()) == generate_scene(8, chairs_and_table())));
  }

  TEST_CASE("point budget sets N") {
    SceneRecipe r = chairs_and_table();
    r.point_budget = 2048;
    CHECK(generate_scene(1, r).num_points() == 2048);
  }

  TEST_CASE("scene invariants hold across seeds") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const Scene s = generate_scene(seed, default_recipe());
      CAPTURE(seed);
      std::map<int, int> inst_class;
      for (int i = 0; i < s.num_points(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        const int inst = s.instance_id[k], cls = s.semantic_id[k];
        REQUIRE(cls >= 0);
        REQUIRE(cls < s.num_classes());
        if (s.stuff_flags[static_cast<std::size_t>(cls)]) CHECK(inst == -1);
        if (inst >= 0) {
          auto [it, fresh] = inst_class.emplace(inst, cls);
          CHECK(it->second == cls);
        }
      }
      CHECK(s.colors.minCoeff() >= 0.0);
      CHECK(s.colors.maxCoeff() <= 1.0);
    }
  }

  TEST_CASE("crowded recipe is a placement error") {
    SceneRecipe r = default_recipe();
    r.room_x = r.room_y = 1.0;
    r.instances = {{"sofa", 6}};
    r.placement_retries = 20;
    CHECK_THROWS_AS(generate_scene(1, r), PlacementError);
  }

  TEST_CASE("stuff classes cannot carry instances") {
    SceneRecipe r = default_recipe();
    r.instances = {{"floor", 1}};
    CHECK_THROWS_AS(generate_scene(1, r), ContractError);
  }

  TEST_CASE("single cube with target one is one superpoint") {
    const Scene cube = cube_scene(20);
    const auto ids = compute_superpoints(cube, 1);
    CHECK(*std::max_element(ids.begin(), ids.end()) == 0);
  }

  TEST_CASE("superpoint target larger than N is a contract error") {
    const Scene cube = cube_scene(2);
    CHECK_THROWS_AS(compute_superpoints(cube, 13), ContractError);
    CHECK_THROWS_AS(compute_superpoints(cube, 0), ContractError);
  }

  TEST_CASE("superpoints partition, stay pure, connected and near target") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const Scene s = generate_scene(seed, default_recipe());
      const int target = 64;
      const auto ids = compute_superpoints(s, target, seed);
      REQUIRE(ids.size() == static_cast<std::size_t>(s.num_points()));
      const auto groups = members_of(ids);
      const int m = static_cast<int>(groups.size());
      CHECK(groups.begin()->first == 0);
      CHECK(groups.rbegin()->first == m - 1);
      CHECK(m >= target / 2);
      CHECK(m <= 2 * target);
      for (const auto& [id, pts] : groups) {
        for (int p : pts) {
          CHECK(s.instance_id[static_cast<std::size_t>(p)] == s.instance_id[static_cast<std::size_t>(pts[0])]);
          CHECK(s.semantic_id[static_cast<std::size_t>(p)] == s.semantic_id[static_cast<std::size_t>(pts[0])]);
        }
        CHECK(connected_within(s, pts));
      }
    }
  }

  TEST_CASE("stored superpoints match the recipe") {
    const Scene s = generate_scene(2, default_recipe());
    CHECK(s.num_superpoints() == static_cast<int>(members_of(s.superpoint_id).size()));
  }

  TEST_CASE("pseudo masks on an isolated cube over a floor") {
    SceneRecipe r = default_recipe();
    r.walls = false;
    r.instances = {{"cabinet", 1}};
    r.point_budget = 800;
    const Scene s = generate_scene(3, r);
    CHECK(generate_pseudo_masks(s, 0).masks.size() >= 2);
  }

  TEST_CASE("pseudo masks ignore labels and are deterministic") {
    const Scene s = generate_scene(5, default_recipe());
    Scene shuffled = s;
    for (int& v : shuffled.instance_id) v = v < 0 ? v : 100 - v;
    for (int& v : shuffled.semantic_id) v = (v + 3) % s.num_classes();
    std::reverse(shuffled.superpoint_id.begin(), shuffled.superpoint_id.end());
    const auto a = generate_pseudo_masks(s, 9).masks;
    CHECK(a == generate_pseudo_masks(shuffled, 9).masks);
    CHECK(a == generate_pseudo_masks(s, 9).masks);
  }

  TEST_CASE("pseudo masks cover most points") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const Scene s = generate_scene(seed, default_recipe());
      std::size_t covered = 0;
      for (const auto& m : generate_pseudo_masks(s, seed).masks) {
        CHECK(!m.empty());
        covered += m.size();
      }
      CHECK(static_cast<double>(covered) >= 0.8 * s.num_points());
    }
  }

  TEST_CASE("vision prompt strategies") {
    const Scene s = generate_scene(11, default_recipe());
    for (int inst : s.instances()) {
      const auto pts = s.instance_points(inst);
      Eigen::RowVector3d c = Eigen::RowVector3d::Zero();
      for (int p : pts) c += s.points.row(p);
      c /= static_cast<double>(pts.size());
      std::vector<std::pair<double, int>> by_dist;
      for (int p : pts) by_dist.emplace_back((s.points.row(p) - c).norm(), p);
      std::sort(by_dist.begin(), by_dist.end());

      CHECK(sample_vision_prompt(s, inst, ClickStrategy::kCenter, 0.0, 0) == by_dist.front().second);
      CHECK(sample_vision_prompt(s, inst, ClickStrategy::kQuantile, 1.0, 0) == by_dist.back().second);
      CHECK(sample_vision_prompt(s, inst, ClickStrategy::kQuantile, 0.0, 0) == by_dist.front().second);
      const int mid = static_cast<int>(0.5 * static_cast<double>(pts.size()));
      CHECK(sample_vision_prompt(s, inst, ClickStrategy::kQuantile, 0.5, 0) ==
            by_dist[static_cast<std::size_t>(std::max(mid, 1) - 1)].second);
      const int r = sample_vision_prompt(s, inst, ClickStrategy::kRandom, 0.0, 5);
      CHECK(r == sample_vision_prompt(s, inst, ClickStrategy::kRandom, 0.0, 5));
      CHECK(s.instance_id[static_cast<std::size_t>(r)] == inst);
    }
    CHECK_THROWS_AS(sample_vision_prompt(s, 999, ClickStrategy::kCenter, 0.0, 0), LookupError);
  }

  TEST_CASE("center click ties go to the lowest index") {
    Scene s = cube_scene(1);
    // Two points equidistant from the centroid of a symmetric pair.
    s.points.resize(2, 3);
    s.points << 0, 0, 0, 2, 0, 0;
    s.colors = Points::Constant(2, 3, 0.5);
    s.instance_id = {0, 0};
    s.semantic_id = {0, 0};
    s.superpoint_id = {0, 0};
    CHECK(sample_vision_prompt(s, 0, ClickStrategy::kCenter, 0.0, 0) == 0);
  }

  TEST_CASE("two chairs are told apart by the table") {
    SceneRecipe r = default_recipe();
    r.instances = {{"chair", 2}, {"table", 1}};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Scene s = generate_scene(seed, r);
      int table = -1;
      std::vector<int> chairs;
      for (int inst : s.instances()) {
        if (s.class_names[static_cast<std::size_t>(s.instance_class(inst))] == "table") table = inst;
        else chairs.push_back(inst);
      }
      const Tokens t = make_text_expression(s, table, seed);
      CHECK(join_tokens(t) == "the table");
      for (int chair : chairs) {
        try {
          const Tokens e = make_text_expression(s, chair, seed);
          CHECK(e.size() > 2);
          CHECK(resolve_expression(s, e) == chair);
        } catch (const AmbiguityError&) {
        }
      }
    }
  }

  TEST_CASE("right-of relation picks the chair at larger x") {
    Scene s = cube_scene(1);
    s.class_names = {"floor", "chair", "table"};
    s.stuff_flags = {true, false, false};
    s.points.resize(3, 3);
    s.points << 0, 0, 0, 2, 0, 0, 1, 0, 0;
    s.colors = Points::Constant(3, 3, 0.5);
    s.instance_id = {0, 1, 2};
    s.semantic_id = {1, 1, 2};
    s.superpoint_id = {0, 1, 2};
    const Tokens right{"the", "chair", "right", "of", "the", "table"};
    const Tokens left{"the", "chair", "left", "of", "the", "table"};
    CHECK(resolve_expression(s, right) == 1);
    CHECK(resolve_expression(s, left) == 0);
    CHECK(resolve_expression(s, {"the", "chair"}) == std::nullopt);
    CHECK(resolve_expression(s, {"the", "table"}) == 2);
  }

  TEST_CASE("every emitted expression resolves to its target") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const Scene s = generate_scene(seed, default_recipe());
      for (int inst : s.instances()) {
        try {
          const Tokens t = make_text_expression(s, inst, seed);
          CHECK(resolve_expression(s, t) == inst);
        } catch (const AmbiguityError&) {
        }
      }
    }
  }

  TEST_CASE("vocabulary split") {
    const auto names = default_recipe().classes;
    std::vector<std::string> n;
    for (const auto& c : names) n.push_back(c.name);
    const VocabularySplit v = split_vocabulary(n, {"lamp"});
    CHECK(v.novel.size() == 1);
    CHECK(v.base.size() + v.novel.size() == n.size());
    CHECK(std::find(v.base.begin(), v.base.end(), v.novel[0]) == v.base.end());
    CHECK_THROWS_AS(split_vocabulary(n, {"piano"}), LookupError);
  }

  TEST_CASE("scene files round trip bit for bit") {
    const Scene s = generate_scene(13, default_recipe());
    CHECK(parse_scene(serialize_scene(s)) == s);
    const auto path = std::filesystem::temp_directory_path() / "uniseg_scene_rt.json";
    save_scene(s, path.string());
    CHECK(load_scene(path.string()) == s);
    std::filesystem::remove(path);
  }

  TEST_CASE("truncated scene file is a parse error") {
    const std::string text = serialize_scene(tiny_scene(1));
    CHECK_THROWS_AS(parse_scene(text.substr(0, text.size() / 2)), ParseError);
    try {
      (void)parse_scene(text.substr(0, 40));
    } catch (const ParseError& e) {
      // One past the end at most.
      CHECK(e.byte_offset() <= 41);
    }
  }

  TEST_CASE("scene version mismatch is reported") {
    std::string text = serialize_scene(tiny_scene(1));
    const auto at = text.find("\"version\"");
    REQUIRE(at != std::string::npos);
    const auto digit = text.find('1', at);
    text[digit] = '9';
    CHECK_THROWS_AS(parse_scene(text), UnsupportedVersionError);
  }

  TEST_CASE("corpus splits are distinct and reproducible") {
    TrainConfig c = tiny_config();
    const auto a = generate_corpus(c, 1, Split::kTrain, 2);
    const auto b = generate_corpus(c, 1, Split::kTrain, 2);
    const auto v = generate_corpus(c, 1, Split::kVal, 2);
    CHECK(a == b);
    CHECK(!(a[0] == v[0]));
    CHECK(a[0].num_points() == 400);
  }
}

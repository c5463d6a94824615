#include "fixtures.hpp"

#include "uniseg/backbone.hpp"
#include "uniseg/errors.hpp"
#include "uniseg/ops.hpp"

#include <doctest.h>

#include <numeric>

using namespace uniseg;
using namespace uniseg::testing;

namespace {

BackboneConfig small_backbone() { return {8, 8, 2}; }

ParameterSet backbone_params(const BackboneConfig& c, std::uint64_t seed = 1) {
  ParameterSet params;
  Rng rng(seed);
  init_backbone(params, c, rng);
  return params;
}

Matrix features(const Scene& scene, const ParameterSet& params, const BackboneConfig& c) {
  Tape tape;
  ParamBinder p(tape, params, false);
  return extract_point_features(p, build_point_graph(scene, c), c).value();
}

Scene permuted(const Scene& s, const std::vector<int>& order) {
  Scene out = s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto k = static_cast<std::size_t>(order[i]);
    out.points.row(static_cast<Index>(i)) = s.points.row(order[i]);
    out.colors.row(static_cast<Index>(i)) = s.colors.row(order[i]);
    out.instance_id[i] = s.instance_id[k];
    out.semantic_id[i] = s.semantic_id[k];
    out.superpoint_id[i] = s.superpoint_id[k];
  }
  return out;
}

}  // namespace

TEST_SUITE("backbone") {
  TEST_CASE("point features have one finite row per point") {
    const Scene s = tiny_scene(1);
    const BackboneConfig c = small_backbone();
    const Matrix f = features(s, backbone_params(c), c);
    CHECK(f.rows() == s.num_points());
    CHECK(f.cols() == 8);
    CHECK(f.allFinite());
  }

  TEST_CASE("permuting points permutes feature rows") {
    const Scene s = tiny_scene(2);
    std::vector<int> order(static_cast<std::size_t>(s.num_points()));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(3);
    rng.shuffle(order);
    const BackboneConfig c = small_backbone();
    const ParameterSet params = backbone_params(c);
    const Matrix a = features(s, params, c);
    const Matrix b = features(permuted(s, order), params, c);
    for (std::size_t i = 0; i < order.size(); ++i) {
      CHECK((b.row(static_cast<Index>(i)) - a.row(order[i])).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  TEST_CASE("duplicate points get identical features") {
    Scene s = tiny_scene(4);
    const Index n = s.points.rows();
    s.points.conservativeResize(n + 1, 3);
    s.colors.conservativeResize(n + 1, 3);
    s.points.row(n) = s.points.row(17);
    s.colors.row(n) = s.colors.row(17);
    s.instance_id.push_back(s.instance_id[17]);
    s.semantic_id.push_back(s.semantic_id[17]);
    s.superpoint_id.push_back(s.superpoint_id[17]);
    const BackboneConfig c = small_backbone();
    const Matrix f = features(s, backbone_params(c), c);
    CHECK(f.row(n) == f.row(17));
  }

  TEST_CASE("fewer than nine points is a contract error") {
    Scene s = tiny_scene(1);
    s.points.conservativeResize(8, 3);
    s.colors.conservativeResize(8, 3);
    CHECK_THROWS_AS(build_point_graph(s, small_backbone()), ContractError);
  }

  TEST_CASE("gradient of mean features matches central differences") {
    const Scene s = tiny_scene(6);
    const BackboneConfig c = small_backbone();
    const PointGraph graph = build_point_graph(s, c);
    const auto results = check_parameter_gradients(
        [&](ParamBinder& p) { return mean(extract_point_features(p, graph, c)); }, backbone_params(c));
    CHECK(worst(results) <= 1e-4);
    CHECK(all_compared(results));
  }

  TEST_CASE("pooling takes superpoint means") {
    Tape tape;
    Matrix f(2, 2);
    f << 1, 3, 5, 7;
    const Matrix pooled = pool_superpoints(tape.constant(f), {0, 0}, 1).value();
    CHECK(pooled(0, 0) == 3.0);
    CHECK(pooled(0, 1) == 5.0);
  }

  TEST_CASE("one superpoint pools to the global mean") {
    Rng rng(2);
    const Matrix f = random_matrix(rng, 7, 3);
    Tape tape;
    const Matrix pooled = pool_superpoints(tape.constant(f), std::vector<int>(7, 0), 1).value();
    CHECK((pooled - f.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-15);
  }

  TEST_CASE("identity partition pools to the input") {
    Rng rng(3);
    const Matrix f = random_matrix(rng, 5, 4);
    Tape tape;
    CHECK(pool_superpoints(tape.constant(f), {0, 1, 2, 3, 4}, 5).value() == f);
  }

  TEST_CASE("pooling is linear") {
    Rng rng(4);
    const std::vector<int> part{2, 0, 1, 0, 2, 1, 1};
    const Matrix f = random_matrix(rng, 7, 3), g = random_matrix(rng, 7, 3);
    Tape tape;
    const Matrix lhs = pool_superpoints(tape.constant(2.5 * f - 0.5 * g), part, 3).value();
    const Matrix pf = pool_superpoints(tape.constant(f), part, 3).value();
    const Matrix pg = pool_superpoints(tape.constant(g), part, 3).value();
    const Matrix rhs = 2.5 * pf - 0.5 * pg;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(lhs.rows() == 3);
  }

  TEST_CASE("empty superpoint is a contract error") {
    Tape tape;
    CHECK_THROWS_AS(pool_superpoints(tape.constant(Matrix::Ones(3, 2)), {0, 0, 2}, 3), ContractError);
    CHECK_THROWS_AS(pool_superpoints(tape.constant(Matrix::Ones(3, 2)), {0, 0}, 1), ContractError);
  }
}

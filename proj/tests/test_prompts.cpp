#include "fixtures.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/model.hpp"
#include "uniseg/ops.hpp"
#include "uniseg/prompts.hpp"

#include <doctest.h>

using namespace uniseg;
using namespace uniseg::testing;

TEST_SUITE("prompts") {
  TEST_CASE("click on a point takes its superpoint row") {
    const Scene s = tiny_scene(1);
    Rng rng(2);
    const Matrix fs = random_matrix(rng, s.num_superpoints(), 8);
    Tape tape;
    for (int p : {0, 57, 233, s.num_points() - 1}) {
      const VisionPrompt vp = locate_click(s, Eigen::Vector3d(s.points.row(p).transpose()));
      CHECK(vp.point == p);
      CHECK(vp.superpoint == s.superpoint_id[static_cast<std::size_t>(p)]);
      const Matrix f = encode_vision_prompts(tape.constant(fs), {vp}).value();
      CHECK(f.row(0) == fs.row(vp.superpoint));
    }
  }

  TEST_CASE("clicks on the same superpoint give identical features") {
    const Scene s = tiny_scene(1);
    int a = 0, b = -1;
    for (int i = 1; i < s.num_points(); ++i) {
      if (s.superpoint_id[static_cast<std::size_t>(i)] == s.superpoint_id[0]) {
        b = i;
        break;
      }
    }
    REQUIRE(b > 0);
    Rng rng(5);
    const Matrix fs = random_matrix(rng, s.num_superpoints(), 4);
    Tape tape;
    const Matrix f = encode_vision_prompts(tape.constant(fs), {locate_click(s, a), locate_click(s, b)}).value();
    CHECK(f.row(0) == f.row(1));
  }

  TEST_CASE("equidistant click goes to the lower point index") {
    Scene s = tiny_scene(1);
    s.points.row(10) << 0.0, 0.0, 5.0;
    s.points.row(20) << 2.0, 0.0, 5.0;
    CHECK(locate_click(s, Eigen::Vector3d(1.0, 0.0, 5.0)).point == 10);
  }

  TEST_CASE("clicks need a non-empty scene") {
    Scene s;
    CHECK_THROWS_AS(locate_click(s, Eigen::Vector3d::Zero()), ContractError);
    CHECK_THROWS_AS(locate_click(tiny_scene(1), 100000), LookupError);
  }

  TEST_CASE("text embedding is deterministic, unit norm and order sensitive") {
    const Tokens a{"the", "chair", "left", "of", "the", "table"};
    const Tokens b{"the", "table", "left", "of", "the", "chair"};
    CHECK(embed_text(a) == embed_text(a));
    CHECK(std::abs(embed_text(a).norm() - 1.0) <= 1e-12);
    CHECK(embed_text(a).size() == kTextFeatureDim);
    CHECK((embed_text(a) - embed_text(b)).norm() > 1e-3);
    CHECK_THROWS_AS(embed_text({}), ContractError);
  }

  TEST_CASE("text projection") {
    ParameterSet params;
    Rng rng(1);
    init_text_projection(params, kTextFeatureDim, 8, rng);

    SUBCASE("zero weights give zero output") {
      ParameterSet zero = params;
      for (auto& prm : zero) prm.value.setZero();
      Tape tape;
      ParamBinder p(tape, zero, false);
      const Matrix in = embed_text({"the", "lamp"}).transpose();
      CHECK(project_text(p, tape.constant(in)).value() == Matrix::Zero(1, 8));
    }

    SUBCASE("gradient matches central differences") {
      Matrix in(3, kTextFeatureDim);
      in.row(0) = embed_text({"the", "lamp"}).transpose();
      in.row(1) = embed_text({"the", "chair", "nearest", "the", "table"}).transpose();
      in.row(2) = embed_text({"the", "sofa"}).transpose();
      Rng wr(4);
      const Matrix w = random_matrix(wr, 3, 8);
      const auto results = check_parameter_gradients(
          [&](ParamBinder& p) {
            return sum(mul(project_text(p, p.tape().constant(in)), p.tape().constant(w)));
          },
          params);
      CHECK(worst(results) <= 1e-4);
    }

    SUBCASE("second layer is linear at fixed hidden activations") {
      const Matrix in = embed_text({"the", "bin"}).transpose();
      auto run = [&](const ParameterSet& ps) {
        Tape tape;
        ParamBinder p(tape, ps, false);
        return project_text(p, tape.constant(in)).value();
      };
      ParameterSet w2 = params, sum_w = params;
      w2.value("text_proj.1.weight") *= 3.0;
      sum_w.value("text_proj.1.weight") *= 4.0;
      for (ParameterSet* ps : {&w2, &sum_w}) ps->value("text_proj.1.bias").setZero();
      ParameterSet base = params;
      base.value("text_proj.1.bias").setZero();
      CHECK((run(sum_w) - run(base) - run(w2)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  TEST_CASE("class embeddings") {
    const std::vector<std::string> names{"floor", "wall", "chair", "table"};
    const Matrix e = embed_class_names(names, 256, VocabularyMode::kOpen);
    CHECK(e.rows() == 4);
    CHECK(e.cols() == 256);
    CHECK((e.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
    const Matrix again = embed_class_names({"table", "chair"}, 256, VocabularyMode::kOpen);
    CHECK(again.row(0) == e.row(3));
    CHECK(again.row(1) == e.row(2));
    // Names never seen in training still embed in open mode.
    CHECK(embed_class_names({"piano"}, 256, VocabularyMode::kOpen).allFinite());
    CHECK_THROWS_AS(embed_class_names({"piano"}, 256, VocabularyMode::kClosed, names), ContractError);
    CHECK_THROWS_AS(embed_class_names({"chair", "chair"}, 256, VocabularyMode::kOpen), ContractError);
    CHECK_THROWS_AS(embed_class_names({}, 256, VocabularyMode::kOpen), ContractError);
  }

  TEST_CASE("class lift has orthonormal columns") {
    const Matrix lift = class_lift(256);
    CHECK((lift.transpose() * lift - Matrix::Identity(kTextFeatureDim, kTextFeatureDim)).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("no-object row comes last") {
    const Matrix e = class_embeddings_with_no_object({"chair", "table"}, 16);
    CHECK(e.rows() == 3);
    CHECK(e.row(2) == embed_class_names({kNoObjectName}, 16, VocabularyMode::kOpen).row(0));
  }

  TEST_CASE("frozen embeddings are not trainable parameters") {
    const Scene s = tiny_scene(1);
    const Model model = init_model(tiny_config(), s.class_names, s.stuff_flags);
    for (const auto& prm : model.params) {
      CHECK(prm.name.rfind("class", 0) != 0);
      CHECK(prm.name.find("lift") == std::string::npos);
    }
    CHECK(model.class_embeddings.rows() == static_cast<Index>(model.vocabulary.size()) + 1);
  }
}

#include "fixtures.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/ops.hpp"
#include "uniseg/optim.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

using namespace uniseg;
using namespace uniseg::testing;

namespace {

// Contracts an op's output with fixed random weights so every output entry
// reaches the scalar.
Var weighted(Tape& tape, Var out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, tape.constant(random_matrix(rng, out.rows(), out.cols()))));
}

using Op = std::function<Var(Tape&, const std::vector<Var>&)>;
using Inputs = std::function<std::vector<std::pair<std::string, Matrix>>(Rng&)>;

void check_primitive(const char* name, const Op& op, const Inputs& inputs, int trials = 100) {
  CAPTURE(name);
  Rng rng(std::hash<std::string>{}(name));
  for (int t = 0; t < trials; ++t) {
    const auto in = inputs(rng);
    const auto results = check_input_gradients(
        [&](Tape& tape, const std::vector<Var>& v) { return weighted(tape, op(tape, v), t); }, in);
    CAPTURE(t);
    REQUIRE(worst(results) <= 1e-4);
  }
}

Index dim(Rng& rng) { return 1 + static_cast<Index>(rng.index(4)); }

}  // namespace

TEST_SUITE("numerics") {
  TEST_CASE("row softmax of equal logits is uniform") {
    Tape tape;
    const Var s = row_softmax(tape.constant(Matrix::Zero(1, 2)));
    CHECK(s.value()(0, 0) == 0.5);
    CHECK(s.value()(0, 1) == 0.5);
  }

  TEST_CASE("matmul by identity returns the input") {
    Rng rng(1);
    Tape tape;
    const Matrix a = random_matrix(rng, 3, 5);
    CHECK(matmul(tape.constant(a), tape.constant(Matrix::Identity(5, 5))).value() == a);
  }

  TEST_CASE("sigmoid of zero is one half") {
    Tape tape;
    CHECK(sigmoid(tape.constant(Matrix::Zero(1, 1))).scalar() == 0.5);
  }

  TEST_CASE("gradient of x*x at 3 is 6") {
    Tape tape;
    const Var x = tape.variable(Matrix::Constant(1, 1, 3.0));
    tape.backward(mul(x, x));
    CHECK(tape.grad(x)(0, 0) == 6.0);
  }

  TEST_CASE("gradient of sum(sigmoid(x)) at zero is 0.25 everywhere") {
    Tape tape;
    const Var x = tape.variable(Matrix::Zero(3, 4));
    tape.backward(sum(sigmoid(x)));
    CHECK(tape.grad(x) == Matrix::Constant(3, 4, 0.25));
  }

  TEST_CASE("unreached leaves get zero gradient") {
    Tape tape;
    const Var x = tape.variable(Matrix::Ones(2, 2));
    const Var y = tape.variable(Matrix::Ones(3, 1));
    tape.backward(sum(x));
    CHECK(tape.grad(y) == Matrix::Zero(3, 1));
  }

  TEST_CASE("backward rejects a non-scalar loss") {
    Tape tape;
    const Var x = tape.variable(Matrix::Ones(2, 2));
    CHECK_THROWS_AS(tape.backward(x), ContractError);
  }

  TEST_CASE("shape mismatch names the operation") {
    Tape tape;
    const Var a = tape.constant(Matrix::Ones(2, 3));
    const Var b = tape.constant(Matrix::Ones(2, 2));
    try {
      (void)matmul(a, b);
      FAIL("no throw");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, b), DimensionError);
  }

  TEST_CASE("non-finite output is a numeric error") {
    Tape tape;
    CHECK_THROWS_AS(log(tape.constant(Matrix::Zero(1, 1))), NumericError);
    CHECK_THROWS_AS(exp(tape.constant(Matrix::Constant(1, 1, 1e4))), NumericError);
  }

  TEST_CASE("softmax rows are non-negative and sum to one") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
      Tape tape;
      const Matrix s = row_softmax(tape.constant(random_matrix(rng, 4, 7, 30.0))).value();
      CHECK(s.minCoeff() >= 0.0);
      CHECK((s.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    }
  }

  TEST_CASE("backward is bit-identical on an identical tape") {
    Rng rng(9);
    const Matrix a = random_matrix(rng, 4, 6), b = random_matrix(rng, 6, 3);
    auto run = [&]() {
      Tape tape;
      const Var x = tape.variable(a), w = tape.variable(b);
      tape.backward(mean(row_softmax(layer_norm(matmul(x, w)))));
      return std::make_pair(tape.grad(x), tape.grad(w));
    };
    CHECK(run() == run());
  }

  TEST_CASE("primitive gradients match central differences") {
    auto one = [](Index r, Index c) {
      return [r, c](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
        return {{"a", random_matrix(rng, r, c)}};
      };
    };
    auto pair_same = [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
      const Index r = dim(rng), c = dim(rng);
      return {{"a", random_matrix(rng, r, c)}, {"b", random_matrix(rng, r, c)}};
    };
    auto random_one = [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
      const Index r = dim(rng), c = 1 + dim(rng);
      return {{"a", random_matrix(rng, r, c)}};
    };

    check_primitive("add", [](Tape&, auto& v) { return add(v[0], v[1]); }, pair_same);
    check_primitive("sub", [](Tape&, auto& v) { return sub(v[0], v[1]); }, pair_same);
    check_primitive("mul", [](Tape&, auto& v) { return mul(v[0], v[1]); }, pair_same);
    check_primitive(
        "mul broadcast row", [](Tape&, auto& v) { return mul(v[0], v[1]); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          const Index r = dim(rng), c = dim(rng);
          return {{"a", random_matrix(rng, r, c)}, {"b", random_matrix(rng, 1, c)}};
        });
    check_primitive(
        "add broadcast column", [](Tape&, auto& v) { return add(v[0], v[1]); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          const Index r = dim(rng), c = dim(rng);
          return {{"a", random_matrix(rng, r, c)}, {"b", random_matrix(rng, r, 1)}};
        });
    check_primitive(
        "mul broadcast scalar", [](Tape&, auto& v) { return mul(v[0], v[1]); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          return {{"a", random_matrix(rng, dim(rng), dim(rng))}, {"b", random_matrix(rng, 1, 1)}};
        });
    check_primitive("affine", [](Tape&, auto& v) { return affine(v[0], -1.7, 0.3); }, random_one);
    check_primitive(
        "matmul", [](Tape&, auto& v) { return matmul(v[0], v[1]); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          const Index r = dim(rng), k = dim(rng), c = dim(rng);
          return {{"a", random_matrix(rng, r, k)}, {"b", random_matrix(rng, k, c)}};
        });
    check_primitive(
        "matmul_nt", [](Tape&, auto& v) { return matmul_nt(v[0], v[1]); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          const Index r = dim(rng), k = dim(rng), c = dim(rng);
          return {{"a", random_matrix(rng, r, k)}, {"b", random_matrix(rng, c, k)}};
        });
    check_primitive("transpose", [](Tape&, auto& v) { return transpose(v[0]); }, random_one);
    check_primitive(
        "concat_rows", [](Tape&, auto& v) { return concat_rows({v[0], v[1]}); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          const Index c = dim(rng);
          return {{"a", random_matrix(rng, dim(rng), c)}, {"b", random_matrix(rng, dim(rng), c)}};
        });
    check_primitive(
        "concat_cols", [](Tape&, auto& v) { return concat_cols({v[0], v[1]}); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          const Index r = dim(rng);
          return {{"a", random_matrix(rng, r, dim(rng))}, {"b", random_matrix(rng, r, dim(rng))}};
        });
    check_primitive("slice_rows", [](Tape&, auto& v) { return slice_rows(v[0], 1, 2); }, one(4, 3));
    check_primitive("slice_cols", [](Tape&, auto& v) { return slice_cols(v[0], 1, 2); }, one(3, 4));
    check_primitive("gather_rows", [](Tape&, auto& v) { return gather_rows(v[0], {2, 0, 2, 1}); },
                    one(3, 3));
    check_primitive("gather_entries",
                    [](Tape&, auto& v) { return gather_entries(v[0], {{0, 1}, {2, 2}, {0, 1}}); },
                    one(3, 3));
    check_primitive("segment_mean",
                    [](Tape&, auto& v) { return segment_mean(v[0], {1, 0, 1, 2, 1}, 3); }, one(5, 3));
    check_primitive("sum", [](Tape&, auto& v) { return sum(v[0]); }, random_one);
    check_primitive("mean", [](Tape&, auto& v) { return mean(v[0]); }, random_one);
    check_primitive("row_sum", [](Tape&, auto& v) { return row_sum(v[0]); }, random_one);
    check_primitive("row_softmax", [](Tape&, auto& v) { return row_softmax(v[0]); }, random_one);
    check_primitive("row_log_softmax", [](Tape&, auto& v) { return row_log_softmax(v[0]); },
                    random_one);
    check_primitive("sigmoid", [](Tape&, auto& v) { return sigmoid(v[0]); }, random_one);
    check_primitive("exp", [](Tape&, auto& v) { return exp(v[0]); }, random_one);
    check_primitive(
        "log", [](Tape&, auto& v) { return log(v[0]); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          return {{"a", uniform_matrix(rng, dim(rng), dim(rng), 0.2, 3.0)}};
        });
    check_primitive("relu", [](Tape&, auto& v) { return relu(v[0]); }, random_one);
    check_primitive("layer_norm", [](Tape&, auto& v) { return layer_norm(v[0]); }, random_one);
    check_primitive("row_l2_normalize", [](Tape&, auto& v) { return row_l2_normalize(v[0]); },
                    random_one);
    check_primitive(
        "bce", [](Tape&, auto& v) { return bce(v[0], v[1]); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          const Index r = dim(rng), c = dim(rng);
          return {{"p", uniform_matrix(rng, r, c, 0.05, 0.95)}, {"t", uniform_matrix(rng, r, c, 0.0, 1.0)}};
        });
    check_primitive(
        "dice_coefficient", [](Tape&, auto& v) { return dice_coefficient(v[0], v[1]); },
        [](Rng& rng) -> std::vector<std::pair<std::string, Matrix>> {
          const Index r = dim(rng), c = dim(rng);
          return {{"p", uniform_matrix(rng, r, c, 0.0, 1.0)}, {"t", uniform_matrix(rng, r, c, 0.0, 1.0)}};
        });
  }

  TEST_CASE("kinked relu entries are counted, not compared") {
    // A perturbation of 1e-5 crosses the kink at 5e-6.
    const auto results = check_input_gradients(
        [](Tape&, const std::vector<Var>& v) { return sum(relu(v[0])); },
        {{"x", Matrix::Constant(1, 2, 5e-6)}});
    REQUIRE(results.size() == 1);
    CHECK(results[0].kinked == 2);
    CHECK(results[0].rel_error == 0.0);
  }

  TEST_CASE("poly schedule endpoints") {
    PolySchedule s;
    s.total_steps = 100;
    CHECK(s.at(0) == 1e-4);
    CHECK(s.at(100) == 0.0);
    CHECK(s.at(50) == doctest::Approx(1e-4 * std::pow(0.5, 0.9)).epsilon(1e-12));
    s.constant = true;
    CHECK(s.at(50) == 1e-4);
  }

  TEST_CASE("zero-gradient step scales parameters by 1 - lr*wd") {
    ParameterSet params;
    Rng rng(3);
    const Matrix w = random_matrix(rng, 3, 4);
    params.add("w", w);
    AdamWOptions o;
    o.schedule.total_steps = 10;
    AdamW opt(params, o);
    opt.step(params, {Matrix::Zero(3, 4)});
    CHECK(params.value("w") == w * (1.0 - 1e-4 * 0.05));
  }

  TEST_CASE("adamw rejects a non-finite gradient by name") {
    ParameterSet params;
    params.add("decoder.thing", Matrix::Ones(1, 2));
    AdamW opt(params, {});
    Matrix g = Matrix::Zero(1, 2);
    g(0, 1) = std::numeric_limits<double>::quiet_NaN();
    try {
      opt.step(params, {g});
      FAIL("no throw");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("decoder.thing") != std::string::npos);
    }
  }

  TEST_CASE("adamw moments match their parameters") {
    ParameterSet params;
    params.add("a", Matrix::Ones(2, 3));
    params.add("b", Matrix::Ones(1, 5));
    AdamW opt(params, {});
    opt.step(params, {Matrix::Ones(2, 3), Matrix::Ones(1, 5)});
    REQUIRE(opt.first_moments().size() == 2);
    CHECK(opt.first_moments()[1].cols() == 5);
    CHECK(opt.second_moments()[0].rows() == 2);
    CHECK_THROWS_AS(opt.step(params, {Matrix::Ones(2, 3), Matrix::Ones(1, 4)}), DimensionError);
  }

  TEST_CASE("splittable rng streams are reproducible") {
    Rng a(42), b(42);
    CHECK(a.next_u64() == b.next_u64());
    Rng c = Rng(42).split(1), d = Rng(42).split(2);
    CHECK(c.next_u64() != d.next_u64());
    const auto s = sample_without_replacement(10, 4, a);
    CHECK(s.size() == 4);
    CHECK(std::is_sorted(s.begin(), s.end()));
  }
}

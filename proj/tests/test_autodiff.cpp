#include <catch2/catch_amalgamated.hpp>
#include <random>
#include <sstream>

#include "gridil/autodiff.hpp"

using namespace gridil;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

// Fixed non-uniform weighting so reduced-mean gradients differ per entry.
int t_weights(Tape& t, const Matrix& like) {
  Matrix w(like.rows(), like.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = 0.3 + 0.7 * static_cast<double>((i * w.cols() + j) % 5);
  return t.constant(w);
}

}  // namespace

TEST_CASE("forward values of primitives") {
  ParameterStore store;
  Tape tape(store);

  SECTION("sigmoid at zero") {
    int x = tape.constant(Matrix::Zero(1, 1));
    REQUIRE(tape.value(tape.sigmoid(x))(0, 0) == 0.5);
  }

  SECTION("leaky relu negative slope") {
    Matrix m(1, 2);
    m << -2.0, 3.0;
    int y = tape.leaky_relu(tape.constant(m), 0.1);
    REQUIRE_THAT(tape.value(y)(0, 0), Catch::Matchers::WithinAbs(-0.2, 1e-15));
    REQUIRE(tape.value(y)(0, 1) == 3.0);
  }

  SECTION("segment sum aggregates rows") {
    Matrix m(3, 2);
    m << 1, 2, 10, 20, 100, 200;
    EdgeList edges = {{0, 2}, {1, 2}, {2, 0}};
    int y = tape.segment_sum(tape.constant(m), edges);
    REQUIRE(tape.value(y)(2, 0) == 11.0);
    REQUIRE(tape.value(y)(2, 1) == 22.0);
    REQUIRE(tape.value(y)(0, 0) == 100.0);
    REQUIRE(tape.value(y)(1, 0) == 0.0);
  }

  SECTION("shape mismatches throw") {
    int a = tape.constant(Matrix::Zero(2, 3));
    int b = tape.constant(Matrix::Zero(2, 2));
    REQUIRE_THROWS_AS(tape.matmul(a, b), ShapeError);
    REQUIRE_THROWS_AS(tape.add(a, b), ShapeError);
  }
}

TEST_CASE("sigmoid gradient at zero is a quarter") {
  ParameterStore store;
  store.add("x", Matrix::Zero(1, 1));
  Tape tape(store);
  int loss = tape.mean(tape.sigmoid(tape.param("x")));
  tape.backward(loss);
  REQUIRE_THAT(store.grad(0)(0, 0), Catch::Matchers::WithinAbs(0.25, 1e-15));
}

TEST_CASE("every primitive passes grad_check in isolation") {
  std::mt19937_64 rng(123);
  struct Case {
    const char* name;
    std::function<int(Tape&, int)> build;
  };
  EdgeList edges = {{0, 1}, {2, 1}, {1, 0}, {3, 2}};
  const Matrix m32 = random_matrix(3, 2, rng);
  const Matrix m43 = random_matrix(4, 3, rng);
  const Matrix m13 = random_matrix(1, 3, rng);
  const Matrix m23 = random_matrix(2, 3, rng);
  std::vector<Case> cases = {
      {"matmul", [&](Tape& t, int x) { return t.matmul(x, t.constant(m32)); }},
      {"add", [&](Tape& t, int x) { return t.add(x, t.constant(m43)); }},
      {"add_rowvec", [&](Tape& t, int x) { return t.add_rowvec(x, t.constant(m13)); }},
      {"affine", [](Tape& t, int x) { return t.affine(x, -2.5, 0.75); }},
      {"hadamard", [&](Tape& t, int x) { return t.hadamard(x, t.constant(m43)); }},
      {"leaky_relu", [](Tape& t, int x) { return t.leaky_relu(x, 0.1); }},
      {"sigmoid", [](Tape& t, int x) { return t.sigmoid(x); }},
      {"log", [](Tape& t, int x) { return t.log(t.affine(x, 0.2, 3.0)); }},
      {"clamp", [](Tape& t, int x) { return t.clamp(x, -0.5, 0.5); }},
      {"segment_sum", [&](Tape& t, int x) { return t.segment_sum(x, edges); }},
      {"concat_rows", [&](Tape& t, int x) { return t.concat_rows(x, t.constant(m23)); }},
      {"mean", [](Tape& t, int x) { return x; }},
  };
  for (const auto& c : cases) {
    ParameterStore store;
    store.add("x", random_matrix(4, 3, rng));
    Tape tape(store);
    auto eval = [&](bool with_grad) {
      tape.reset();
      int y = c.build(tape, tape.param("x"));
      int loss = tape.mean(tape.hadamard(y, t_weights(tape, tape.value(y))));
      if (with_grad) tape.backward(loss);
      return tape.value(loss)(0, 0);
    };
    // weight the mean so gradients are not uniform
    auto report = grad_check(eval, store, {1e-6, 1e-7, 12, 99});
    INFO(c.name << " worst " << report.worst_param << " rel " << report.max_rel_error);
    REQUIRE(report.max_rel_error < 1e-6);
  }
}

TEST_CASE("gradient accumulation is additive across parameter uses") {
  ParameterStore store;
  std::mt19937_64 rng(5);
  store.add("w", random_matrix(3, 3, rng));
  Tape tape(store);
  int w = tape.param("w");
  int w2 = tape.param("w");
  int y = tape.add(tape.matmul(w, w2), tape.scale(w, 3.0));  // w*w + 3w
  tape.backward(tape.mean(y));
  Matrix both = store.grad(0);

  store.zero_grad();
  tape.reset();
  // d/dw mean(w*w') with w' frozen, plus the other two contributions
  int wa = tape.param("w");
  int frozen = tape.constant(store.value(0));
  tape.backward(tape.mean(tape.matmul(wa, frozen)));
  Matrix left = store.grad(0);
  store.zero_grad();
  tape.reset();
  int wb = tape.param("w");
  tape.backward(tape.mean(tape.matmul(tape.constant(store.value(0)), wb)));
  Matrix right = store.grad(0);
  store.zero_grad();
  tape.reset();
  tape.backward(tape.mean(tape.scale(tape.param("w"), 3.0)));
  Matrix lin = store.grad(0);

  REQUIRE(((left + right + lin) - both).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(2);
  ParameterStore store;
  store.add("w", random_matrix(6, 6, rng));
  auto run = [&] {
    store.zero_grad();
    Tape tape(store);
    int w = tape.param("w");
    int y = tape.sigmoid(tape.matmul(w, tape.constant(Matrix::Identity(6, 6))));
    tape.backward(tape.mean(y));
    return Matrix(store.grad(0));
  };
  Matrix a = run(), b = run();
  REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam") {
  SECTION("zero gradients leave parameters unchanged") {
    ParameterStore store;
    store.add("w", Matrix::Constant(2, 2, 1.5));
    Matrix before = store.value(0);
    store.adam_step({.lr = 0.1});
    REQUIRE((store.value(0) - before).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("first step with unit gradient moves by about lr") {
    ParameterStore store;
    store.add("w", Matrix::Zero(1, 1));
    store.grad(0)(0, 0) = 1.0;
    store.adam_step({.lr = 1e-3});
    REQUIRE_THAT(store.value(0)(0, 0), Catch::Matchers::WithinRel(-1e-3, 1e-6));
  }

  SECTION("quadratic bowl converges") {
    ParameterStore store;
    store.add("w", Matrix::Constant(1, 1, 5.0));
    Tape tape(store);
    for (int i = 0; i < 10000; ++i) {
      tape.reset();
      int w = tape.param("w");
      int loss = tape.mean(tape.hadamard(w, w));
      tape.backward(loss);
      store.adam_step({.lr = 0.01});
      if (std::abs(store.value(0)(0, 0)) < 1e-6) break;
    }
    REQUIRE(std::abs(store.value(0)(0, 0)) < 1e-6);
  }

  SECTION("weight decay pulls toward zero") {
    ParameterStore store;
    store.add("w", Matrix::Constant(1, 1, 2.0));
    store.adam_step({.lr = 0.1, .weight_decay = 0.1});
    REQUIRE(store.value(0)(0, 0) < 2.0);
  }
}

TEST_CASE("external gradient buffers keep the store clean") {
  std::mt19937_64 rng(3);
  ParameterStore store;
  store.add("w", random_matrix(3, 3, rng));
  auto buf = store.make_grad_buffer();
  Tape tape(store, &buf);
  tape.backward(tape.mean(tape.sigmoid(tape.param("w"))));
  REQUIRE(store.grad(0).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(buf[0].cwiseAbs().maxCoeff() > 0.0);
  store.accumulate(buf);
  REQUIRE((store.grad(0) - buf[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  std::mt19937_64 rng(17);
  ParameterStore store;
  store.add("layer/weight", random_matrix(7, 5, rng, 3.7));
  store.add("layer/bias", random_matrix(1, 5, rng, 0.01));
  std::map<std::string, std::string> meta{{"kind", "het_gnn"}, {"note", "x"}};

  std::ostringstream os;
  save_checkpoint(os, store, meta);
  std::istringstream is(os.str());
  auto [loaded, meta2] = load_checkpoint(is);

  REQUIRE(meta2 == meta);
  REQUIRE(loaded.size() == store.size());
  for (int i = 0; i < store.size(); ++i) {
    REQUIRE(loaded.at(i).name == store.at(i).name);
    REQUIRE(loaded.at(i).value == store.at(i).value);
  }
}

#include <cmath>

#include <doctest.h>

#include "phe/diffcore.hpp"
#include "phe/rng.hpp"

using phe::Rng;
using phe::diffcore::Array;
using phe::diffcore::grad_check;
using phe::diffcore::Shape;
using phe::diffcore::Tape;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("row_squared_distance: pythagorean case") {
  Tape tape;
  Array a = tape.constant({1, 2}, {0, 0});
  Array b = tape.constant({1, 2}, {3, 4});
  CHECK(tape.row_squared_distance(a, b).values()[0] == doctest::Approx(25.0));
}

TEST_CASE("softmax_cross_entropy: uniform logits give ln(c)") {
  for (std::size_t c : {2u, 3u, 7u}) {
    Tape tape;
    Array logits = tape.constant({1, c}, std::vector<double>(c, 0.4));
    Array loss = tape.softmax_cross_entropy(logits, {0});
    CHECK(loss.scalar() == doctest::Approx(std::log(static_cast<double>(c))));
  }
}

TEST_CASE("cosine_similarity_rows: orthonormal case") {
  Tape tape;
  Array a = tape.constant({1, 2}, {1, 0});
  Array b = tape.constant({2, 2}, {1, 0, 0, 1});
  Array c = tape.cosine_similarity_rows(a, b);
  CHECK(c.values()[0] == doctest::Approx(1.0));
  CHECK(c.values()[1] == doctest::Approx(0.0));
}

TEST_CASE("cosine_similarity_rows: zero-norm row names the row index") {
  Tape tape;
  Array a = tape.constant({2, 2}, {1, 0, 0, 0});
  Array b = tape.constant({1, 2}, {1, 1});
  CHECK_THROWS_WITH_AS(tape.cosine_similarity_rows(a, b),
                       "cosine_similarity_rows: zero-norm row 1 in left operand", std::invalid_argument);
}

TEST_CASE("shape mismatch raises") {
  Tape tape;
  Array a = tape.constant({2}, {1, 2});
  Array b = tape.constant({3}, {1, 2, 3});
  CHECK_THROWS_AS(tape.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(tape.multiply(a, b), std::invalid_argument);
  Array m = tape.constant({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(tape.matmul(m, b), std::invalid_argument);
}

TEST_CASE("backward: sum gives all-ones gradient") {
  Tape tape;
  Array x = tape.input({2, 3}, {1, -2, 3, 0.5, 4, -1}, true);
  tape.backward(tape.sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: mean of squares, hand-differentiated") {
  Tape tape;
  Array x = tape.input({3}, {1, 2, 3}, true);
  tape.backward(tape.mean(tape.multiply(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0 / 3.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0 / 3.0));
  CHECK(x.grad()[2] == doctest::Approx(2.0));
}

TEST_CASE("backward: non-participating input gets exactly zero") {
  Tape tape;
  Array x = tape.input({2}, {1, 2}, true);
  Array y = tape.input({2}, {3, 4}, true);
  tape.backward(tape.sum(tape.multiply(x, x)));
  CHECK(y.grad()[0] == 0.0);
  CHECK(y.grad()[1] == 0.0);
}

TEST_CASE("backward: repeated calls are identical and root must be scalar") {
  Tape tape;
  Array x = tape.input({3}, {0.5, -1, 2}, true);
  Array y = tape.sum(tape.exp(x));
  tape.backward(y);
  const auto first = x.grad();
  tape.backward(y);
  CHECK(x.grad() == first);
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("backward: linearity in the root") {
  Rng rng(7);
  Tape tape;
  const auto xv = random_values(6, rng);
  Array x = tape.input({6}, xv, true);
  Array f = tape.sum(tape.multiply(x, x));
  Array g = tape.mean(tape.tanh(x));
  const double a = 1.7, b = -0.3;
  tape.backward(tape.add(tape.scale(f, a), tape.scale(g, b)));
  const auto combined = x.grad();
  tape.backward(f);
  const auto gf = x.grad();
  tape.backward(g);
  const auto gg = x.grad();
  for (std::size_t i = 0; i < 6; ++i) CHECK(combined[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("grad_check: every primitive matches finite differences") {
  Rng rng(42);
  const double kTol = 1e-5;
  const double kStep = 1e-6;

  auto check = [&](const char* name, const Shape& shape, auto f) {
    for (int rep = 0; rep < 3; ++rep) {
      auto x = random_values(phe::diffcore::shape_numel(shape), rng);
      INFO(name << " rep " << rep);
      CHECK(grad_check(f, shape, x, kStep) <= kTol);
    }
  };

  check("add+scale", Shape{2, 3}, [](Tape& t, const Array& x) {
    return t.sum(t.add(t.scale(x, 1.5), x));
  });
  check("subtract", Shape{2, 3}, [](Tape& t, const Array& x) {
    Array c = t.constant({2, 3}, {1, 2, 3, 4, 5, 6});
    return t.sum(t.subtract(x, c));
  });
  check("multiply", Shape{2, 3}, [](Tape& t, const Array& x) { return t.sum(t.multiply(x, x)); });
  check("matmul", Shape{2, 3}, [](Tape& t, const Array& x) {
    Array c = t.constant({3, 2}, {1, -1, 0.5, 2, -0.5, 1});
    return t.mean(t.matmul(x, c));
  });
  check("matmul_transpose_b", Shape{2, 3}, [](Tape& t, const Array& x) {
    return t.sum(t.matmul_transpose_b(x, x));
  });
  check("row_squared_distance", Shape{2, 3}, [](Tape& t, const Array& x) {
    Array c = t.constant({2, 3}, {0.3, -0.4, 1, 2, 0, -1});
    return t.sum(t.row_squared_distance(x, c));
  });
  check("exp", Shape{4}, [](Tape& t, const Array& x) { return t.mean(t.exp(x)); });
  check("tanh", Shape{4}, [](Tape& t, const Array& x) { return t.sum(t.tanh(x)); });
  check("relu-ish log", Shape{4}, [](Tape& t, const Array& x) {
    return t.sum(t.log(t.add_scalar(t.multiply(x, x), 0.5)));
  });
  check("add_rowvec", Shape{3}, [](Tape& t, const Array& x) {
    Array a = t.constant({2, 3}, {1, 2, 3, 4, 5, 6});
    return t.sum(t.tanh(t.add_rowvec(a, x)));
  });
  check("cosine", Shape{2, 3}, [&](Tape& t, const Array& x) {
    Array c = t.constant({2, 3}, {1, 0.2, -0.7, 0.4, 1.1, 0.9});
    return t.sum(t.cosine_similarity_rows(t.add_scalar(x, 3.0), c));
  });
  check("softmax_ce", Shape{3, 4}, [](Tape& t, const Array& x) {
    return t.softmax_cross_entropy(x, {0, 2, 3});
  });
  check("abs", Shape{5}, [](Tape& t, const Array& x) {
    return t.sum(t.abs(t.add_scalar(x, 5.0)));  // shifted away from the kink
  });
}

TEST_CASE("grad_check: f = sum has zero error") {
  Rng rng(3);
  auto x = random_values(7, rng);
  CHECK(grad_check([](Tape& t, const Array& a) { return t.sum(a); }, {7}, x, 1e-6) <= 1e-9);
}

TEST_CASE("deterministic evaluation: identical inputs give bit-identical outputs") {
  Rng rng(11);
  const auto xv = random_values(12, rng);
  auto run = [&] {
    Tape tape;
    Array x = tape.input({3, 4}, xv, true);
    Array y = tape.sum(tape.cosine_similarity_rows(tape.exp(x), x));
    tape.backward(y);
    auto out = x.grad();
    out.push_back(y.scalar());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite results are rejected") {
  Tape tape;
  Array x = tape.constant({1}, {1000.0});
  CHECK_THROWS_AS(tape.exp(x), std::runtime_error);
}

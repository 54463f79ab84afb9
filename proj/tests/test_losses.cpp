#include <cmath>

#include <doctest.h>

#include "phe/losses.hpp"

using namespace phe::losses;
using phe::Rng;
using phe::diffcore::Array;
using phe::diffcore::Tape;
using phe::model::FrozenFC;
using phe::model::ModelConfig;

namespace {

FrozenFC fc_for(std::size_t classes, std::size_t k, std::size_t dims = 4) {
  ModelConfig cfg;
  cfg.input_dim = dims;
  cfg.feature_dim = dims;
  cfg.code_length = dims;
  cfg.num_known_classes = classes;
  cfg.protos_per_class = k;
  return FrozenFC(cfg);
}

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

}  // namespace

TEST_CASE("loss_p: hand-evaluated cross-entropy through the frozen layer") {
  Tape tape;
  Array s = tape.constant({1, 2}, {4, 2});
  Array lp = loss_p(tape, s, {0}, fc_for(2, 1), ones(2));
  CHECK(lp.scalar() == doctest::Approx(std::log(1.0 + std::exp(-3.0))));  // CE([3,0], 0)
}

TEST_CASE("loss_p: single class is defined as zero") {
  Tape tape;
  Array s = tape.constant({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(loss_p(tape, s, {0, 0}, fc_for(1, 3), ones(6)).scalar() == 0.0);
}

TEST_CASE("loss_p: all-zero mask gives the maximum-entropy loss ln|Y_S|") {
  Tape tape;
  Array s = tape.constant({2, 6}, {1, 2, 3, 4, 5, 6, 0.5, 1, -1, 2, 0, 3});
  Array lp = loss_p(tape, s, {0, 2}, fc_for(3, 2), std::vector<double>(12, 0.0));
  CHECK(lp.scalar() == doctest::Approx(std::log(3.0)));
}

TEST_CASE("loss_p: out-of-range label raises") {
  Tape tape;
  Array s = tape.constant({1, 2}, {1, 2});
  CHECK_THROWS_AS(loss_p(tape, s, {2}, fc_for(2, 1), ones(2)), std::invalid_argument);
}

TEST_CASE("loss_f: orthogonal feature gives ln|Y_S|, opposite centers give hand value") {
  Tape tape;
  // b orthogonal to both centers -> uniform logits
  Array b = tape.constant({1, 3}, {0, 0, 1});
  Array h = tape.constant({2, 3}, {1, 0, 0, 0, 1, 0});
  CHECK(loss_f(tape, b, h, {0}).scalar() == doctest::Approx(std::log(2.0)));

  // cosine logits (1, -1), label 0
  Array b2 = tape.constant({1, 2}, {1, 0});
  Array h2 = tape.constant({2, 2}, {2, 0, -3, 0});
  CHECK(loss_f(tape, b2, h2, {0}).scalar() == doctest::Approx(std::log(1.0 + std::exp(-2.0))));
}

TEST_CASE("loss_f: aligned feature attains the best unit-cosine loss") {
  Tape tape;
  Array b = tape.constant({1, 3}, {1, 0, 0});
  Array h = tape.constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const double aligned = loss_f(tape, b, h, {0}).scalar();
  Array b_off = tape.constant({1, 3}, {0, 1, 0});
  CHECK(aligned < loss_f(tape, b_off, h, {0}).scalar());
  CHECK(aligned == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 2.0))));
}

TEST_CASE("soft hamming distances on hard codes") {
  Tape tape;
  Array codes = tape.constant({3, 4}, {1, 1, -1, 1,
                                       1, -1, -1, -1,
                                       1, 1, -1, 1});
  Array d = soft_hamming_matrix(tape, codes);
  CHECK(d.values()[0 * 3 + 1] == doctest::Approx(2.0));  // two flipped coordinates
  CHECK(d.values()[0 * 3 + 2] == doctest::Approx(0.0));  // identical
  CHECK(d.values()[0 * 3 + 0] == doctest::Approx(0.0));
  Tape tape2;
  Array opposite = tape2.constant({2, 4}, {1, 1, 1, 1, -1, -1, -1, -1});
  CHECK(soft_hamming_matrix(tape2, opposite).values()[1] == doctest::Approx(4.0));
}

TEST_CASE("loss_sep: hinge over unordered pairs only") {
  Tape tape;
  // codes at pairwise distances {1-2: 2, 1-3: 4, 2-3: 5 ... } built by hand:
  // place three 8-bit codes with distances 5, 2, 4
  Array c = tape.constant({3, 8}, {1, 1, 1, 1, 1, 1, 1, 1,      // A
                                   -1, -1, -1, -1, -1, 1, 1, 1,  // B: d(A,B)=5
                                   -1, -1, 1, 1, 1, 1, 1, 1});   // C: d(A,C)=2, d(B,C)=3
  // with d_max=3, hinges are max(0,3-5)+max(0,3-2)+max(0,3-3) = 1
  CHECK(loss_sep(tape, c, 3).scalar() == doctest::Approx(1.0));

  Array far = tape.constant({2, 8}, {1, 1, 1, 1, 1, 1, 1, 1, -1, -1, -1, -1, 1, 1, 1, 1});
  CHECK(loss_sep(tape, far, 3).scalar() == doctest::Approx(0.0));  // distance 4 >= 3

  Array same = tape.constant({2, 8}, {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
  CHECK(loss_sep(tape, same, 3).scalar() == doctest::Approx(3.0));  // hinge at distance 0
}

TEST_CASE("loss_q: per-center mean of (1 - |entry|)") {
  Tape tape;
  Array exact = tape.constant({2, 3}, {1, -1, 1, -1, 1, -1});
  CHECK(loss_q(tape, exact).scalar() == doctest::Approx(0.0));
  Array zeros = tape.constant({1, 4}, {0, 0, 0, 0});
  CHECK(loss_q(tape, zeros).scalar() == doctest::Approx(1.0));
  Array half = tape.constant({1, 2}, {0.5, -0.5});
  CHECK(loss_q(tape, half).scalar() == doctest::Approx(0.5));
}

TEST_CASE("total_loss: weighting and divergence detection") {
  LossWeights w;
  w.alpha = 0.1;
  w.beta = 3.0;
  w.d_max = 2;
  Tape tape;
  auto scalar = [&](double v) { return tape.constant({1}, {v}); };
  CHECK(total_loss(tape, scalar(1.0), scalar(2.0), scalar(0.5), scalar(0.2), w).scalar() ==
        doctest::Approx(1.85));
  LossWeights off;
  off.alpha = 0.0;
  off.beta = 0.0;
  off.d_max = 2;
  CHECK(total_loss(tape, scalar(1.25), scalar(9), scalar(9), scalar(9), off).scalar() == doctest::Approx(1.25));
  CHECK(total_loss(tape, scalar(0), scalar(0), scalar(0), scalar(0), w).scalar() == 0.0);
}

TEST_CASE("LossWeights validation") {
  LossWeights w;
  w.d_max = 5;
  CHECK_THROWS_AS(w.validate(4), std::invalid_argument);  // d_max > L
  w.d_max = 2;
  w.theta = 1.5;
  CHECK_THROWS_AS(w.validate(4), std::invalid_argument);
}

TEST_CASE("draw_mask: theta=0 is all ones; entries are 0/1") {
  Rng rng(2);
  auto m = draw_mask(3, 5, 0.0, rng);
  for (double v : m) CHECK(v == 1.0);
  auto m2 = draw_mask(20, 20, 0.4, rng);
  std::size_t zeros = 0;
  for (double v : m2) {
    CHECK((v == 0.0 || v == 1.0));
    if (v == 0.0) ++zeros;
  }
  CHECK(zeros > 80);   // ~160 expected
  CHECK(zeros < 240);
}

TEST_CASE("gradients of every loss match finite differences") {
  Rng rng(31);
  const double kTol = 1e-4;
  const std::size_t n = 3, m = 4, L = 5, classes = 2;
  const FrozenFC fc = fc_for(classes, 2);
  std::vector<int> labels = {0, 1, 1};

  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> sv(n * m), bv(n * L), hv(classes * L);
    for (auto& v : sv) v = rng.uniform(0.1, 3.0);
    for (auto& v : bv) v = rng.uniform(-2.0, 2.0);
    for (auto& v : hv) v = rng.uniform(-2.0, 2.0);
    Rng mask_rng(static_cast<std::uint64_t>(rep));
    const auto mask = draw_mask(n, m, 0.3, mask_rng);

    CHECK(phe::diffcore::grad_check(
              [&](Tape& t, const Array& s) { return loss_p(t, s, labels, fc, mask); }, {n, m}, sv, 1e-6) <= kTol);
    CHECK(phe::diffcore::grad_check(
              [&](Tape& t, const Array& b) {
                Array h = t.constant({classes, L}, hv);
                return loss_f(t, b, h, labels);
              },
              {n, L}, bv, 1e-6) <= kTol);
    CHECK(phe::diffcore::grad_check(
              [&](Tape& t, const Array& h) {
                Array b = t.constant({n, L}, bv);
                return loss_f(t, b, h, labels);
              },
              {classes, L}, hv, 1e-6) <= kTol);
    CHECK(phe::diffcore::grad_check(
              [&](Tape& t, const Array& h) { return loss_sep(t, t.tanh(h), 3); }, {classes, L}, hv, 1e-6) <= kTol);
    CHECK(phe::diffcore::grad_check(
              [&](Tape& t, const Array& h) { return loss_q(t, t.tanh(h)); }, {classes, L}, hv, 1e-6) <= kTol);
  }
}

TEST_CASE("loss_sep: inactive hinge pairs get exactly zero gradient") {
  Tape tape;
  // distance 6 between smoothed-ish codes, d_max 3: hinge inactive
  Array h = tape.input({2, 8}, {0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9,
                                -0.9, -0.9, -0.9, -0.9, -0.9, -0.9, 0.9, 0.9},
                       true);
  Array l = loss_sep(tape, h, 3);
  CHECK(l.scalar() == 0.0);
  tape.backward(l);
  for (double g : h.grad()) CHECK(g == 0.0);
}

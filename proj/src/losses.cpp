#include "phe/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace phe::losses {

void LossWeights::validate(std::size_t code_length) const {
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("LossWeights: alpha and beta must be non-negative");
  if (theta < 0.0 || theta > 1.0) throw std::invalid_argument("LossWeights: theta must lie in [0,1]");
  if (d_max < 1 || static_cast<std::size_t>(d_max) > code_length)
    throw std::invalid_argument("LossWeights: d_max must lie in 1..code_length");
}

std::vector<double> draw_mask(std::size_t n, std::size_t m, double theta, Rng& rng) {
  std::vector<double> mask(n * m, 1.0);
  for (auto& v : mask)
    if (rng.bernoulli(theta)) v = 0.0;
  return mask;
}

Array loss_p(Tape& tape, const Array& s, const std::vector<int>& labels, const model::FrozenFC& fc,
             const std::vector<double>& mask) {
  if (mask.size() != s.size()) throw std::invalid_argument("loss_p: mask size does not match similarity matrix");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= fc.num_classes)
      throw std::invalid_argument("loss_p: label " + std::to_string(y) + " outside 0.." +
                                  std::to_string(fc.num_classes - 1));
  Array masked = tape.multiply(s, tape.constant(s.shape(), mask));
  Array logits = model::frozen_logits(tape, masked, fc);
  if (fc.num_classes == 1) return tape.scale(tape.sum(logits), 0.0);  // degenerate single-logit softmax
  return tape.softmax_cross_entropy(logits, labels);
}

Array loss_f(Tape& tape, const Array& b, const Array& h, const std::vector<int>& labels) {
  Array logits = tape.cosine_similarity_rows(b, h);
  return tape.softmax_cross_entropy(logits, labels);
}

Array soft_hamming_matrix(Tape& tape, const Array& centers_smoothed) {
  if (centers_smoothed.rank() != 2) throw std::invalid_argument("soft_hamming_matrix: expected rank-2 centers");
  const double L = static_cast<double>(centers_smoothed.shape()[1]);
  Array gram = tape.matmul_transpose_b(centers_smoothed, centers_smoothed);
  return tape.add_scalar(tape.scale(gram, -0.5), L / 2.0);
}

Array loss_sep(Tape& tape, const Array& centers_smoothed, int d_max) {
  if (d_max < 1) throw std::invalid_argument("loss_sep: d_max must be >= 1");
  const std::size_t c = centers_smoothed.shape()[0];
  Array dist = soft_hamming_matrix(tape, centers_smoothed);
  Array hinge = tape.relu(tape.add_scalar(tape.scale(dist, -1.0), static_cast<double>(d_max)));
  std::vector<double> upper(c * c, 0.0);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i + 1; j < c; ++j) upper[i * c + j] = 1.0;
  return tape.sum(tape.multiply(hinge, tape.constant({c, c}, std::move(upper))));
}

Array loss_q(Tape& tape, const Array& centers_smoothed) {
  if (centers_smoothed.rank() != 2) throw std::invalid_argument("loss_q: expected rank-2 centers");
  const std::size_t c = centers_smoothed.shape()[0];
  const std::size_t l = centers_smoothed.shape()[1];
  // sum_i mean_dims(1 - |h_i|) = C - sum|h| / L
  Array s = tape.sum(tape.abs(centers_smoothed));
  return tape.add_scalar(tape.scale(s, -1.0 / static_cast<double>(l)), static_cast<double>(c));
}

Array total_loss(Tape& tape, const Array& lp, const Array& lsep, const Array& lq, const Array& lf,
                 const LossWeights& w) {
  const struct {
    const char* name;
    const Array* a;
  } parts[] = {{"L_p", &lp}, {"L_sep", &lsep}, {"L_q", &lq}, {"L_f", &lf}};
  for (const auto& part : parts)
    if (!std::isfinite(part.a->scalar()))
      throw std::runtime_error(std::string("total_loss: ") + part.name + " is non-finite");
  Array center = tape.add(lsep, lq);
  return tape.add(lp, tape.add(tape.scale(center, w.alpha), tape.scale(lf, w.beta)));
}

}  // namespace phe::losses

#pragma once

#include <vector>

#include "phe/model.hpp"
#include "phe/rng.hpp"

namespace phe::losses {

using diffcore::Array;
using diffcore::Tape;

struct LossWeights {
  double alpha = 0.1;  // center optimization
  double beta = 3.0;   // hash encoding
  double theta = 0.1;  // mask probability
  int d_max = 1;

  void validate(std::size_t code_length) const;
};

// n x m matrix of 0/1 entries; each entry is 0 with probability theta.
std::vector<double> draw_mask(std::size_t n, std::size_t m, double theta, Rng& rng);

// Masked prototype loss: mean cross-entropy of frozen_logits(mask .* s).
// mask must be all-ones at evaluation time. Defined as 0 for a single class.
Array loss_p(Tape& tape, const Array& s, const std::vector<int>& labels, const model::FrozenFC& fc,
             const std::vector<double>& mask);

// Hash-feature loss: mean cross-entropy of cosine-similarity logits of the
// batch hash features b (n x L) against all centers h (C x L).
Array loss_f(Tape& tape, const Array& b, const Array& h, const std::vector<int>& labels);

// Differentiable pairwise Hamming distances (L - h_i . h_j) / 2 between
// smoothed codes; (C, C).
Array soft_hamming_matrix(Tape& tape, const Array& centers_smoothed);

// Hinge sum over unordered pairs i<j of max(0, d_max - soft distance).
Array loss_sep(Tape& tape, const Array& centers_smoothed, int d_max);

// Sum over centers of the per-dimension mean of (1 - |entry|).
Array loss_q(Tape& tape, const Array& centers_smoothed);

// L_p + alpha (L_sep + L_q) + beta L_f; rejects non-finite components,
// naming the loss that diverged.
Array total_loss(Tape& tape, const Array& lp, const Array& lsep, const Array& lq, const Array& lf,
                 const LossWeights& w);

}  // namespace phe::losses

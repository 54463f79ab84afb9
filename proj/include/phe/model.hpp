#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "phe/coding.hpp"
#include "phe/diffcore.hpp"
#include "phe/rng.hpp"

namespace phe::model {

using diffcore::Array;
using diffcore::Tape;

struct ModelConfig {
  std::size_t input_dim = 64;        // dataset feature dimension D
  std::size_t feature_dim = 64;      // L-hat
  std::size_t code_length = 12;      // L
  std::size_t num_known_classes = 0;
  std::size_t protos_per_class = 10;  // k
  double epsilon = 1e-4;
  double tau = 3.0;
  std::vector<std::size_t> encoder_hidden;  // empty = identity encoder

  std::size_t num_prototypes() const { return protos_per_class * num_known_classes; }
  std::size_t encoder_out_dim() const { return encoder_hidden.empty() ? input_dim : encoder_hidden.back(); }
  void validate() const;
};

struct ParamTensor {
  std::string name;
  diffcore::Shape shape;
  std::vector<double> value;

  bool operator==(const ParamTensor&) const = default;
};

struct ParamSet {
  std::vector<ParamTensor> tensors;

  ParamTensor& find(const std::string& name);
  const ParamTensor& find(const std::string& name) const;
  bool operator==(const ParamSet&) const = default;
};

// Seeded initialization: prototypes from U(-1,1)/sqrt(feature_dim), affine
// weights and biases from fan-in-scaled uniform.
ParamSet init_params(const ModelConfig& cfg, Rng& rng);

// Non-trainable classifier over prototype similarities: weight 1 for a
// prototype of the same class, -0.5 otherwise.
struct FrozenFC {
  std::size_t num_prototypes = 0;
  std::size_t num_classes = 0;
  std::vector<double> weights;  // m x C, row-major

  FrozenFC() = default;
  explicit FrozenFC(const ModelConfig& cfg);
  bool operator==(const FrozenFC&) const = default;
};

// Tape-bound parameters for one forward pass.
struct BoundParams {
  std::map<std::string, Array> arrays;
  const Array& at(const std::string& name) const;
};

BoundParams bind_params(Tape& tape, const ParamSet& params, bool requires_grad);

// z = H_f(E(x)); x is (n, input_dim), z is (n, feature_dim)
Array encode(Tape& tape, const Array& x, const BoundParams& p, const ModelConfig& cfg);

// Eq-style similarity s_j = log((||z - p_j||^2 + 1) / (||z - p_j||^2 + eps)); (n, m)
Array proto_similarity(Tape& tape, const Array& z, const Array& prototypes, double epsilon);

// logits = s W with the frozen +1/-0.5 weights; (n, C)
Array frozen_logits(Tape& tape, const Array& s, const FrozenFC& fc);

// per-class mean of the k prototypes; (C, feature_dim)
Array class_proto_means(Tape& tape, const Array& prototypes, const ModelConfig& cfg);

// three affine layers feature_dim -> feature_dim -> feature_dim -> code_length
// with a rectifier between them; input (n, feature_dim), output (n, code_length)
Array hash_head(Tape& tape, const Array& in, const BoundParams& p);

// full-precision hash centers h = H_h(class means); (C, code_length)
Array hash_centers(Tape& tape, const BoundParams& p, const ModelConfig& cfg);

// tanh(tau * a), the differentiable sign surrogate
Array smoothed_sign(Tape& tape, const Array& a, double tau);

// sign with sign(0) := +1
coding::HashCode hard_sign(std::span<const double> values);

}  // namespace phe::model

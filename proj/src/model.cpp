#include "phe/model.hpp"

#include <cmath>
#include <stdexcept>

namespace phe::model {

void ModelConfig::validate() const {
  if (input_dim < 1 || feature_dim < 1 || code_length < 1)
    throw std::invalid_argument("ModelConfig: dimensions must be >= 1");
  if (num_known_classes < 1) throw std::invalid_argument("ModelConfig: need at least one known class");
  if (protos_per_class < 1) throw std::invalid_argument("ModelConfig: need at least one prototype per class");
  if (epsilon <= 0.0) throw std::invalid_argument("ModelConfig: epsilon must be positive");
  if (tau <= 0.0) throw std::invalid_argument("ModelConfig: tau must be positive");
  for (std::size_t h : encoder_hidden)
    if (h < 1) throw std::invalid_argument("ModelConfig: encoder hidden size must be >= 1");
}

ParamTensor& ParamSet::find(const std::string& name) {
  for (auto& t : tensors)
    if (t.name == name) return t;
  throw std::invalid_argument("ParamSet: no tensor named " + name);
}

const ParamTensor& ParamSet::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw std::invalid_argument("ParamSet: no tensor named " + name);
}

namespace {

ParamTensor uniform_tensor(const std::string& name, diffcore::Shape shape, double bound, Rng& rng) {
  ParamTensor t;
  t.name = name;
  t.shape = std::move(shape);
  t.value.resize(diffcore::shape_numel(t.shape));
  for (auto& v : t.value) v = rng.uniform(-bound, bound);
  return t;
}

void add_affine(ParamSet& out, const std::string& prefix, std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  out.tensors.push_back(uniform_tensor(prefix + ".W", {in_dim, out_dim}, bound, rng));
  out.tensors.push_back(uniform_tensor(prefix + ".b", {out_dim}, bound, rng));
}

}  // namespace

ParamSet init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamSet out;
  std::size_t d = cfg.input_dim;
  for (std::size_t i = 0; i < cfg.encoder_hidden.size(); ++i) {
    add_affine(out, "enc.l" + std::to_string(i), d, cfg.encoder_hidden[i], rng);
    d = cfg.encoder_hidden[i];
  }
  add_affine(out, "hf", d, cfg.feature_dim, rng);
  out.tensors.push_back(uniform_tensor("proto.P", {cfg.num_prototypes(), cfg.feature_dim},
                                       1.0 / std::sqrt(static_cast<double>(cfg.feature_dim)), rng));
  add_affine(out, "hh.l0", cfg.feature_dim, cfg.feature_dim, rng);
  add_affine(out, "hh.l1", cfg.feature_dim, cfg.feature_dim, rng);
  add_affine(out, "hh.l2", cfg.feature_dim, cfg.code_length, rng);
  return out;
}

FrozenFC::FrozenFC(const ModelConfig& cfg)
    : num_prototypes(cfg.num_prototypes()), num_classes(cfg.num_known_classes), weights(num_prototypes * num_classes) {
  for (std::size_t j = 0; j < num_prototypes; ++j) {
    const std::size_t cls = j / cfg.protos_per_class;
    for (std::size_t c = 0; c < num_classes; ++c) weights[j * num_classes + c] = (c == cls) ? 1.0 : -0.5;
  }
}

const Array& BoundParams::at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw std::invalid_argument("BoundParams: no array named " + name);
  return it->second;
}

BoundParams bind_params(Tape& tape, const ParamSet& params, bool requires_grad) {
  BoundParams bp;
  for (const auto& t : params.tensors) bp.arrays.emplace(t.name, tape.input(t.shape, t.value, requires_grad));
  return bp;
}

namespace {

Array affine(Tape& tape, const Array& x, const BoundParams& p, const std::string& prefix) {
  return tape.add_rowvec(tape.matmul(x, p.at(prefix + ".W")), p.at(prefix + ".b"));
}

}  // namespace

Array encode(Tape& tape, const Array& x, const BoundParams& p, const ModelConfig& cfg) {
  const std::size_t width = x.rank() == 1 ? x.shape()[0] : x.shape()[1];
  if (width != cfg.input_dim)
    throw std::invalid_argument("encode: feature width " + std::to_string(width) + " but model expects " +
                                std::to_string(cfg.input_dim));
  Array h = x;
  for (std::size_t i = 0; i < cfg.encoder_hidden.size(); ++i)
    h = tape.relu(affine(tape, h, p, "enc.l" + std::to_string(i)));
  return affine(tape, h, p, "hf");
}

Array proto_similarity(Tape& tape, const Array& z, const Array& prototypes, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("proto_similarity: epsilon must be positive");
  Array d2 = tape.row_squared_distance(z, prototypes);
  return tape.subtract(tape.log(tape.add_scalar(d2, 1.0)), tape.log(tape.add_scalar(d2, epsilon)));
}

Array frozen_logits(Tape& tape, const Array& s, const FrozenFC& fc) {
  const std::size_t m = s.rank() == 1 ? s.shape()[0] : s.shape()[1];
  if (m != fc.num_prototypes)
    throw std::invalid_argument("frozen_logits: " + std::to_string(m) + " similarities for " +
                                std::to_string(fc.num_prototypes) + " prototypes");
  Array w = tape.constant({fc.num_prototypes, fc.num_classes}, fc.weights);
  return tape.matmul(s, w);
}

Array class_proto_means(Tape& tape, const Array& prototypes, const ModelConfig& cfg) {
  const std::size_t m = cfg.num_prototypes();
  const std::size_t c = cfg.num_known_classes;
  std::vector<double> avg(c * m, 0.0);
  for (std::size_t j = 0; j < m; ++j) avg[(j / cfg.protos_per_class) * m + j] = 1.0 / static_cast<double>(cfg.protos_per_class);
  return tape.matmul(tape.constant({c, m}, std::move(avg)), prototypes);
}

Array hash_head(Tape& tape, const Array& in, const BoundParams& p) {
  Array h = tape.relu(affine(tape, in, p, "hh.l0"));
  h = tape.relu(affine(tape, h, p, "hh.l1"));
  return affine(tape, h, p, "hh.l2");
}

Array hash_centers(Tape& tape, const BoundParams& p, const ModelConfig& cfg) {
  return hash_head(tape, class_proto_means(tape, p.at("proto.P"), cfg), p);
}

Array smoothed_sign(Tape& tape, const Array& a, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("smoothed_sign: tau must be positive");
  return tape.tanh(tape.scale(a, tau));
}

coding::HashCode hard_sign(std::span<const double> values) { return coding::HashCode::from_signs(values); }

}  // namespace phe::model

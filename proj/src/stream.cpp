#include "phe/stream.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

#include "phe/model.hpp"

namespace phe::stream {

namespace {

// EMA-weight forward pass to hard codes; rows of x may be a whole batch.
std::vector<coding::HashCode> hash_codes_for(const std::vector<double>& xdata, std::size_t n,
                                             const trainer::Checkpoint& ck) {
  const auto& cfg = ck.config.model;
  diffcore::Tape tape;
  model::BoundParams bound = model::bind_params(tape, ck.ema, false);
  diffcore::Array x = tape.constant({n, cfg.input_dim}, xdata);
  diffcore::Array z = model::encode(tape, x, bound, cfg);
  diffcore::Array b = model::hash_head(tape, z, bound);
  std::vector<coding::HashCode> codes;
  codes.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    codes.push_back(model::hard_sign(
        std::span<const double>(b.values()).subspan(i * cfg.code_length, cfg.code_length)));
  return codes;
}

}  // namespace

CategoryRegistry init_registry(const trainer::Checkpoint& ck, MatchPolicy policy) {
  const auto& cfg = ck.config.model;
  if (cfg.num_known_classes == 0) throw std::invalid_argument("init_registry: checkpoint has no known classes");
  diffcore::Tape tape;
  model::BoundParams bound = model::bind_params(tape, ck.ema, false);
  diffcore::Array h = model::hash_centers(tape, bound, cfg);
  CategoryRegistry reg;
  reg.num_known = cfg.num_known_classes;
  reg.radius = coding::radius(ck.d_max);
  reg.policy = policy;
  for (std::size_t c = 0; c < cfg.num_known_classes; ++c) {
    auto code = model::hard_sign(
        std::span<const double>(h.values()).subspan(c * cfg.code_length, cfg.code_length));
    for (std::size_t prev = 0; prev < reg.entries.size(); ++prev) {
      if (reg.entries[prev].code == code)
        reg.warnings.push_back("known classes " + std::to_string(prev) + " and " + std::to_string(c) +
                               " share hash code " + code.to_string());
    }
    reg.entries.push_back({std::move(code), Origin::known, 0});
  }
  return reg;
}

Prediction match_code(const coding::HashCode& code, CategoryRegistry& registry, std::size_t instance_index) {
  Prediction pred;
  pred.instance_index = instance_index;
  std::size_t best = registry.entries.size();
  std::size_t best_dist = 0;
  for (std::size_t j = 0; j < registry.entries.size(); ++j) {
    const std::size_t d = coding::hamming(code, registry.entries[j].code);
    if (d > static_cast<std::size_t>(registry.radius)) continue;
    if (registry.policy == MatchPolicy::first) {
      best = j;
      best_dist = d;
      break;
    }
    if (best == registry.entries.size() || d < best_dist) {
      best = j;
      best_dist = d;
    }
  }
  if (best < registry.entries.size()) {
    pred.category = best;
    pred.is_new = false;
    pred.distance = static_cast<int>(best_dist);
    return pred;
  }
  registry.entries.push_back({code, Origin::discovered, instance_index + 1});
  pred.category = registry.entries.size() - 1;
  pred.is_new = true;
  pred.distance = -1;
  return pred;
}

Prediction predict_one(std::span<const double> x, CategoryRegistry& registry, const trainer::Checkpoint& ck,
                       std::size_t instance_index) {
  const auto& cfg = ck.config.model;
  if (x.size() != cfg.input_dim)
    throw std::invalid_argument("predict_one: feature width " + std::to_string(x.size()) + " but model expects " +
                                std::to_string(cfg.input_dim));
  auto codes = hash_codes_for(std::vector<double>(x.begin(), x.end()), 1, ck);
  return match_code(codes[0], registry, instance_index);
}

std::vector<Prediction> run_stream(const data::FeatureDataset& dataset, CategoryRegistry& registry,
                                   const trainer::Checkpoint& ck, const StreamOrder& order) {
  std::vector<std::size_t> queries = dataset.query_indices();
  if (order.kind == OrderKind::shuffled && queries.size() > 1) {
    Rng rng = Rng::substream(order.seed, "stream-order");
    for (std::size_t i = queries.size() - 1; i > 0; --i) {
      const std::size_t j = rng.below(i + 1);
      std::swap(queries[i], queries[j]);
    }
  }
  std::vector<Prediction> preds;
  preds.reserve(queries.size());
  if (queries.empty()) return preds;

  // Codes only depend on the frozen EMA weights, so the whole query batch can
  // be encoded up front; matching itself stays strictly sequential.
  std::vector<double> xdata;
  xdata.reserve(queries.size() * dataset.dim);
  for (std::size_t q : queries) {
    if (dataset.rows[q].size() != ck.config.model.input_dim)
      throw std::invalid_argument("run_stream: feature width mismatch at row " + std::to_string(q));
    xdata.insert(xdata.end(), dataset.rows[q].begin(), dataset.rows[q].end());
  }
  const auto codes = hash_codes_for(xdata, queries.size(), ck);
  for (std::size_t i = 0; i < queries.size(); ++i) preds.push_back(match_code(codes[i], registry, queries[i]));
  return preds;
}

void save_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_predictions: cannot open " + path.string());
  for (const auto& p : preds)
    f << p.instance_index << "," << p.category << "," << (p.is_new ? 1 : 0) << "," << p.distance << "\n";
  if (!f) throw std::runtime_error("save_predictions: write failure on " + path.string());
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_predictions: cannot open " + path.string());
  std::vector<Prediction> preds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    Prediction p;
    long long idx = 0, cat = 0, is_new = 0, dist = 0;
    const char* s = line.data();
    const char* end = s + line.size();
    auto read_field = [&](long long& out, bool last) {
      auto [ptr, ec] = std::from_chars(s, end, out);
      if (ec != std::errc() || (last ? ptr != end : (ptr == end || *ptr != ',')))
        throw std::runtime_error("load_predictions: malformed line " + std::to_string(line_no));
      s = last ? ptr : ptr + 1;
    };
    read_field(idx, false);
    read_field(cat, false);
    read_field(is_new, false);
    read_field(dist, true);
    p.instance_index = static_cast<std::size_t>(idx);
    p.category = static_cast<std::size_t>(cat);
    p.is_new = is_new != 0;
    p.distance = static_cast<int>(dist);
    preds.push_back(p);
  }
  return preds;
}

}  // namespace phe::stream

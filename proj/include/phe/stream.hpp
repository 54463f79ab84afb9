#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phe/coding.hpp"
#include "phe/data.hpp"
#include "phe/trainer.hpp"

namespace phe::stream {

enum class MatchPolicy : std::uint8_t {
  first,    // earliest registry entry within the radius (scan order)
  nearest,  // minimum distance, ties to the lowest index
};

enum class Origin : std::uint8_t { known, discovered };

struct RegistryEntry {
  coding::HashCode code;
  Origin origin = Origin::known;
  std::size_t creation_index = 0;  // 0 for known centers, else 1-based query position
};

// Append-only category list; the first num_known entries are the known-class
// centers in class order. Single-threaded per stream.
struct CategoryRegistry {
  std::vector<RegistryEntry> entries;
  std::size_t num_known = 0;
  int radius = 1;
  MatchPolicy policy = MatchPolicy::first;
  std::vector<std::string> warnings;

  std::size_t size() const { return entries.size(); }
};

struct Prediction {
  std::size_t instance_index = 0;
  std::size_t category = 0;
  bool is_new = false;
  int distance = -1;  // -1 when new
};

enum class OrderKind : std::uint8_t { natural, shuffled };

struct StreamOrder {
  OrderKind kind = OrderKind::natural;
  std::uint64_t seed = 0;
};

// Seeds the registry with the hard-signed EMA hash centers. Known classes
// sharing a hard code are recorded as warnings; inference still proceeds.
CategoryRegistry init_registry(const trainer::Checkpoint& ck, MatchPolicy policy = MatchPolicy::first);

// Code-level matching core (also the surface the brute-force oracle checks):
// scans the registry under the policy; appends a new category when no entry
// lies within the radius.
Prediction match_code(const coding::HashCode& code, CategoryRegistry& registry, std::size_t instance_index);

// hard_sign(H_h(H_f(E(x)))) with EMA weights, then match_code.
Prediction predict_one(std::span<const double> x, CategoryRegistry& registry, const trainer::Checkpoint& ck,
                       std::size_t instance_index);

// Sequential pass over the query split in natural or seeded-shuffle order.
// Output positions correspond to the visit order.
std::vector<Prediction> run_stream(const data::FeatureDataset& dataset, CategoryRegistry& registry,
                                   const trainer::Checkpoint& ck, const StreamOrder& order = {});

// One line per prediction: instance_index,predicted_category,is_new,distance
void save_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

}  // namespace phe::stream

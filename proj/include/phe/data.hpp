#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

namespace phe::data {

enum class Split : std::uint8_t { support, query };

// Labeled feature rows with a support/query partition. Immutable once built.
struct FeatureDataset {
  std::size_t dim = 0;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<Split> split;
  std::set<int> known_classes;

  std::size_t size() const { return rows.size(); }
  std::vector<std::size_t> support_indices() const;
  std::vector<std::size_t> query_indices() const;
  std::size_t num_known_classes() const { return known_classes.size(); }
  // distinct labels appearing in the query split
  std::size_t query_class_count() const;
};

struct SynthConfig {
  std::size_t known_classes = 20;
  std::size_t novel_classes = 10;
  std::size_t dim = 64;
  std::size_t samples_per_class = 50;
  std::size_t modes_per_class = 3;
  double between_class_sigma = 1.0;
  double within_class_sigma = 0.1;
  std::uint64_t seed = 0;
};

// Per known class, a uniformly random floor(n/2) of its rows become support;
// every remaining row (including all novel-class rows) becomes query.
FeatureDataset split_support_query(std::vector<std::vector<double>> rows, std::vector<int> labels,
                                   std::set<int> known_classes, std::uint64_t seed);

// Gaussian mixture with modes_per_class mode centers per class; samples are
// assigned to modes round-robin. Classes 0..known-1 are known, the rest novel.
FeatureDataset synth_generate(const SynthConfig& config);

// PHEF v1 text format:
//   phef,1,<N>,<D>,<num_known_classes>
//   <label>,<support|query>,f1,...,fD
// Doubles use shortest round-trip formatting, so save/load is exact.
void save_phef(const std::filesystem::path& path, const FeatureDataset& ds);
FeatureDataset load_phef(const std::filesystem::path& path);

}  // namespace phe::data

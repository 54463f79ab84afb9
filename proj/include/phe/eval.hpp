#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "phe/data.hpp"
#include "phe/stream.hpp"
#include "phe/trainer.hpp"

namespace phe::eval {

// Minimum-cost assignment on a square finite matrix; returns the column
// chosen for each row.
std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost);

struct EvalReport {
  double acc_all = 0.0;
  double acc_old = 0.0;
  double acc_new = 0.0;
  std::size_t estimated_class_count = 0;
  std::size_t y_q_size = 0;
  std::uint64_t order_seed = 0;
};

// Strict-Hungarian clustering accuracy: predicted clusters ranked by size
// (ties to the lower category index), only the top y_q_size retained, the
// rest counted as misclassified; one global assignment of retained clusters
// to ground-truth classes; acc_old / acc_new measured on the known/novel
// truth subsets under that single assignment.
EvalReport strict_acc(const std::vector<std::size_t>& preds, const std::vector<int>& truths,
                      const std::set<int>& known_classes, std::size_t y_q_size);

// Registry size after the stream: known classes plus created categories.
std::size_t estimated_class_count(const stream::CategoryRegistry& registry);

// key=value lines: acc_all, acc_old, acc_new, estimated_classes, y_q_size,
// order_seed; accuracies use six decimal places.
std::string format_report(const EvalReport& r);
void save_report(const std::filesystem::path& path, const EvalReport& r);

struct ProtoActivation {
  std::size_t proto_index = 0;
  int class_id = 0;
  double similarity = 0.0;
  std::size_t nearest_support_row = 0;  // dataset row index closest to this prototype
};

struct ProtoReport {
  std::size_t query_index = 0;
  std::vector<ProtoActivation> top;        // non-increasing similarity
  std::vector<double> per_class_similarity;  // summed over each class's prototypes
};

// Top-n prototype activations of one query row under the EMA weights.
ProtoReport prototype_report(const trainer::Checkpoint& ck, const data::FeatureDataset& dataset,
                             std::size_t query_index, std::size_t top_n);

std::string format_proto_report(const ProtoReport& r);

}  // namespace phe::eval

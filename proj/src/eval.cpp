#include "phe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "phe/model.hpp"

namespace phe::eval {

std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) throw std::invalid_argument("hungarian: empty cost matrix");
  for (const auto& row : cost) {
    if (row.size() != n) throw std::invalid_argument("hungarian: cost matrix is not square");
    for (double v : row)
      if (!std::isfinite(v)) throw std::invalid_argument("hungarian: non-finite cost entry");
  }
  const double inf = std::numeric_limits<double>::infinity();
  // Kuhn-Munkres with potentials, O(n^3); 1-based scratch arrays
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

EvalReport strict_acc(const std::vector<std::size_t>& preds, const std::vector<int>& truths,
                      const std::set<int>& known_classes, std::size_t y_q_size) {
  if (preds.empty() || preds.size() != truths.size())
    throw std::invalid_argument("strict_acc: predictions and truths must be non-empty and equal-length");
  if (y_q_size < 1) throw std::invalid_argument("strict_acc: y_q_size must be >= 1");

  std::map<std::size_t, std::size_t> cluster_sizes;
  for (std::size_t c : preds) ++cluster_sizes[c];
  std::vector<std::pair<std::size_t, std::size_t>> ranked(cluster_sizes.begin(), cluster_sizes.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;  // size ties break to the earlier category
  });
  const std::size_t retained = std::min(y_q_size, ranked.size());
  std::map<std::size_t, std::size_t> cluster_row;  // cluster id -> contingency row
  for (std::size_t r = 0; r < retained; ++r) cluster_row[ranked[r].first] = r;

  std::map<int, std::size_t> class_col;
  for (int t : truths) class_col.emplace(t, class_col.size());
  const std::size_t num_classes = class_col.size();

  const std::size_t dim = std::max(retained, num_classes);
  std::vector<std::vector<double>> counts(dim, std::vector<double>(dim, 0.0));
  double max_count = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto it = cluster_row.find(preds[i]);
    if (it == cluster_row.end()) continue;  // dropped cluster: always misclassified
    double& c = counts[it->second][class_col[truths[i]]];
    max_count = std::max(max_count, ++c);
  }
  std::vector<std::vector<double>> cost(dim, std::vector<double>(dim, max_count));
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) cost[r][c] = max_count - counts[r][c];
  const std::vector<std::size_t> assignment = hungarian(cost);

  // assigned truth label per retained cluster (none when matched to padding)
  std::map<std::size_t, int> cluster_label;
  std::vector<int> col_label(num_classes);
  for (const auto& [label, col] : class_col) col_label[col] = label;
  for (const auto& [cluster, row] : cluster_row)
    if (assignment[row] < num_classes) cluster_label[cluster] = col_label[assignment[row]];

  std::size_t hit_all = 0, hit_old = 0, hit_new = 0, n_old = 0, n_new = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool old_sample = known_classes.count(truths[i]) > 0;
    (old_sample ? n_old : n_new) += 1;
    auto it = cluster_label.find(preds[i]);
    if (it == cluster_label.end() || it->second != truths[i]) continue;
    ++hit_all;
    (old_sample ? hit_old : hit_new) += 1;
  }
  EvalReport r;
  r.acc_all = static_cast<double>(hit_all) / static_cast<double>(preds.size());
  r.acc_old = n_old ? static_cast<double>(hit_old) / static_cast<double>(n_old) : 0.0;
  r.acc_new = n_new ? static_cast<double>(hit_new) / static_cast<double>(n_new) : 0.0;
  r.y_q_size = y_q_size;
  return r;
}

std::size_t estimated_class_count(const stream::CategoryRegistry& registry) { return registry.size(); }

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "acc_all=" << r.acc_all << "\n"
     << "acc_old=" << r.acc_old << "\n"
     << "acc_new=" << r.acc_new << "\n"
     << "estimated_classes=" << r.estimated_class_count << "\n"
     << "y_q_size=" << r.y_q_size << "\n"
     << "order_seed=" << r.order_seed << "\n";
  return os.str();
}

void save_report(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_report: cannot open " + path.string());
  f << format_report(r);
  if (!f) throw std::runtime_error("save_report: write failure on " + path.string());
}

ProtoReport prototype_report(const trainer::Checkpoint& ck, const data::FeatureDataset& dataset,
                             std::size_t query_index, std::size_t top_n) {
  if (query_index >= dataset.size())
    throw std::invalid_argument("prototype_report: query index " + std::to_string(query_index) +
                                " out of range for " + std::to_string(dataset.size()) + " rows");
  const auto& cfg = ck.config.model;
  const std::size_t m = cfg.num_prototypes();
  const auto support = dataset.support_indices();

  diffcore::Tape tape;
  model::BoundParams bound = model::bind_params(tape, ck.ema, false);
  std::vector<double> xdata = dataset.rows[query_index];
  for (std::size_t s : support) xdata.insert(xdata.end(), dataset.rows[s].begin(), dataset.rows[s].end());
  diffcore::Array x = tape.constant({support.size() + 1, dataset.dim}, std::move(xdata));
  diffcore::Array z = model::encode(tape, x, bound, cfg);
  diffcore::Array sim = model::proto_similarity(tape, z, bound.at("proto.P"), cfg.epsilon);
  diffcore::Array d2 = tape.row_squared_distance(z, bound.at("proto.P"));

  ProtoReport report;
  report.query_index = query_index;
  report.per_class_similarity.assign(cfg.num_known_classes, 0.0);
  std::vector<std::size_t> ranked(m);
  for (std::size_t j = 0; j < m; ++j) {
    ranked[j] = j;
    report.per_class_similarity[j / cfg.protos_per_class] += sim.values()[j];
  }
  std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    if (sim.values()[a] != sim.values()[b]) return sim.values()[a] > sim.values()[b];
    return a < b;
  });
  for (std::size_t r = 0; r < std::min(top_n, m); ++r) {
    const std::size_t j = ranked[r];
    ProtoActivation a;
    a.proto_index = j;
    a.class_id = static_cast<int>(j / cfg.protos_per_class);
    a.similarity = sim.values()[j];
    // support row whose latent feature is closest to this prototype
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < support.size(); ++s) {
      const double d = d2.values()[(s + 1) * m + j];
      if (d < best_d) {
        best_d = d;
        best = support[s];
      }
    }
    a.nearest_support_row = best;
    report.top.push_back(a);
  }
  return report;
}

std::string format_proto_report(const ProtoReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "query_index=" << r.query_index << "\n";
  os << "rank,prototype,class,similarity,nearest_support_row\n";
  for (std::size_t i = 0; i < r.top.size(); ++i) {
    const auto& a = r.top[i];
    os << i + 1 << "," << a.proto_index << "," << a.class_id << "," << a.similarity << ","
       << a.nearest_support_row << "\n";
  }
  os << "class,summed_similarity\n";
  for (std::size_t c = 0; c < r.per_class_similarity.size(); ++c) os << c << "," << r.per_class_similarity[c] << "\n";
  return os.str();
}

}  // namespace phe::eval

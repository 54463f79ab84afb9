#include "phe/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "phe/rng.hpp"

namespace phe::data {

std::vector<std::size_t> FeatureDataset::support_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == Split::support) out.push_back(i);
  return out;
}

std::vector<std::size_t> FeatureDataset::query_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == Split::query) out.push_back(i);
  return out;
}

std::size_t FeatureDataset::query_class_count() const {
  std::set<int> seen;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == Split::query) seen.insert(labels[i]);
  return seen.size();
}

FeatureDataset split_support_query(std::vector<std::vector<double>> rows, std::vector<int> labels,
                                   std::set<int> known_classes, std::uint64_t seed) {
  if (rows.size() != labels.size()) throw std::invalid_argument("split_support_query: rows/labels length mismatch");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (known_classes.count(labels[i])) by_class[labels[i]].push_back(i);
  for (int c : known_classes) {
    if (by_class[c].size() < 2)
      throw std::invalid_argument("split_support_query: known class " + std::to_string(c) + " has fewer than 2 samples");
  }
  FeatureDataset ds;
  ds.dim = rows.empty() ? 0 : rows[0].size();
  ds.rows = std::move(rows);
  ds.labels = std::move(labels);
  ds.known_classes = std::move(known_classes);
  ds.split.assign(ds.rows.size(), Split::query);
  Rng rng = Rng::substream(seed, "split");
  for (auto& [c, idx] : by_class) {
    // Fisher-Yates, then the first floor(n/2) go to support
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
      const std::size_t j = rng.below(i + 1);
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < idx.size() / 2; ++i) ds.split[idx[i]] = Split::support;
  }
  return ds;
}

FeatureDataset synth_generate(const SynthConfig& config) {
  if (config.known_classes < 1 || config.samples_per_class < 1 || config.modes_per_class < 1 || config.dim < 1)
    throw std::invalid_argument("synth_generate: all counts must be >= 1");
  Rng rng = Rng::substream(config.seed, "synth");
  const std::size_t total_classes = config.known_classes + config.novel_classes;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (std::size_t c = 0; c < total_classes; ++c) {
    std::vector<std::vector<double>> modes(config.modes_per_class, std::vector<double>(config.dim));
    for (auto& m : modes)
      for (auto& v : m) v = config.between_class_sigma * rng.normal();
    for (std::size_t s = 0; s < config.samples_per_class; ++s) {
      const auto& m = modes[s % config.modes_per_class];
      std::vector<double> row(config.dim);
      for (std::size_t d = 0; d < config.dim; ++d) row[d] = m[d] + config.within_class_sigma * rng.normal();
      rows.push_back(std::move(row));
      labels.push_back(static_cast<int>(c));
    }
  }
  std::set<int> known;
  for (std::size_t c = 0; c < config.known_classes; ++c) known.insert(static_cast<int>(c));
  return split_support_query(std::move(rows), std::move(labels), std::move(known), config.seed);
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("PHEF: bad number '" + std::string(s) + "' at line " + std::to_string(line_no));
  return v;
}

long parse_long(std::string_view s, std::size_t line_no) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("PHEF: bad integer '" + std::string(s) + "' at line " + std::to_string(line_no));
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

void save_phef(const std::filesystem::path& path, const FeatureDataset& ds) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_phef: cannot open " + path.string());
  f << "phef,1," << ds.rows.size() << "," << ds.dim << "," << ds.known_classes.size() << "\n";
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    f << ds.labels[i] << "," << (ds.split[i] == Split::support ? "support" : "query");
    for (double v : ds.rows[i]) f << "," << format_double(v);
    f << "\n";
  }
  if (!f) throw std::runtime_error("save_phef: write failure on " + path.string());
}

FeatureDataset load_phef(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_phef: cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("load_phef: empty file " + path.string());
  auto header = split_commas(line);
  if (header.size() != 5 || header[0] != "phef" || header[1] != "1")
    throw std::runtime_error("load_phef: bad header at line 1");
  const long n = parse_long(header[2], 1);
  const long d = parse_long(header[3], 1);
  const long k = parse_long(header[4], 1);
  if (n < 0 || d <= 0 || k < 0) throw std::runtime_error("load_phef: invalid dimensions at line 1");
  FeatureDataset ds;
  ds.dim = static_cast<std::size_t>(d);
  for (long i = 0; i < n; ++i) {
    const std::size_t line_no = static_cast<std::size_t>(i) + 2;
    if (!std::getline(f, line)) throw std::runtime_error("load_phef: missing row at line " + std::to_string(line_no));
    auto fields = split_commas(line);
    if (fields.size() != static_cast<std::size_t>(d) + 2)
      throw std::runtime_error("load_phef: expected " + std::to_string(d + 2) + " fields at line " +
                               std::to_string(line_no));
    ds.labels.push_back(static_cast<int>(parse_long(fields[0], line_no)));
    if (fields[1] == "support")
      ds.split.push_back(Split::support);
    else if (fields[1] == "query")
      ds.split.push_back(Split::query);
    else
      throw std::runtime_error("load_phef: bad split tag at line " + std::to_string(line_no));
    std::vector<double> row(static_cast<std::size_t>(d));
    for (long j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = parse_double(fields[static_cast<std::size_t>(j) + 2], line_no);
    ds.rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < ds.rows.size(); ++i)
    if (ds.split[i] == Split::support) ds.known_classes.insert(ds.labels[i]);
  if (ds.known_classes.size() != static_cast<std::size_t>(k))
    throw std::runtime_error("load_phef: header lists " + std::to_string(k) + " known classes but support rows cover " +
                             std::to_string(ds.known_classes.size()));
  return ds;
}

}  // namespace phe::data

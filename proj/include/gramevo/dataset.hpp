#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gramevo/format.hpp"
#include "gramevo/rng.hpp"

namespace gramevo {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledSet {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::size_t size() const { return y.size(); }
};

struct DatasetSplit {
  LabeledSet train, validation, test;
  int num_classes = 0;
  std::size_t feature_dim = 0;
};

enum class ToyKind { Rings, Blobs, Xor };

inline const char* toy_kind_name(ToyKind kind) {
  switch (kind) {
    case ToyKind::Rings: return "rings";
    case ToyKind::Blobs: return "blobs";
    case ToyKind::Xor: return "xor";
  }
  return "?";
}

inline bool parse_toy_kind(const std::string& name, ToyKind& out) {
  if (name == "rings") { out = ToyKind::Rings; return true; }
  if (name == "blobs") { out = ToyKind::Blobs; return true; }
  if (name == "xor") { out = ToyKind::Xor; return true; }
  return false;
}

namespace detail {

struct SplitCounts {
  std::size_t train, validation, test;
};

// 70/15/15 with deterministic integer arithmetic; the train split absorbs
// the rounding remainder.
inline SplitCounts stratified_counts(std::size_t m) {
  SplitCounts c{};
  c.validation = m * 15 / 100;
  c.test = m * 15 / 100;
  c.train = m - c.validation - c.test;
  return c;
}

}  // namespace detail

// Deterministic two-class 2-D toy datasets with a stratified 70/15/15 split.
//   rings: concentric circles of radius 1 and 2 with Gaussian radial noise
//   blobs: Gaussian clusters at (-1,-1) and (1,1); linearly separable
//   xor:   clusters at the four corners of [-1,1]^2, class = quadrant parity
inline DatasetSplit make_toy_dataset(ToyKind kind, std::size_t n, double noise, std::uint64_t seed) {
  if (n < 30) throw DatasetError("toy dataset needs at least 30 examples");

  DatasetSplit split;
  split.num_classes = 2;
  split.feature_dim = 2;

  for (int cls = 0; cls < 2; ++cls) {
    std::size_t m = n / 2 + (cls == 0 ? n % 2 : 0);
    RandomStream rng = RandomStream::derive(seed, "toy-dataset",
                                            static_cast<std::uint64_t>(kind) * 2 + cls);
    std::vector<std::vector<double>> points;
    points.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
      double px = 0, py = 0;
      switch (kind) {
        case ToyKind::Rings: {
          double theta = rng.uniform_real(0.0, 2.0 * kPi);
          double radius = (cls == 0 ? 1.0 : 2.0) + rng.gaussian(0.0, noise);
          px = radius * std::cos(theta);
          py = radius * std::sin(theta);
          break;
        }
        case ToyKind::Blobs: {
          double cx = cls == 0 ? -1.0 : 1.0;
          px = cx + rng.gaussian(0.0, noise);
          py = cx + rng.gaussian(0.0, noise);
          break;
        }
        case ToyKind::Xor: {
          // Class 0 owns the (+,+) and (-,-) corners, class 1 the other two.
          bool flip = rng.bernoulli(0.5);
          double cx = flip ? -1.0 : 1.0;
          double cy = cls == 0 ? cx : -cx;
          px = cx + rng.gaussian(0.0, noise);
          py = cy + rng.gaussian(0.0, noise);
          break;
        }
      }
      points.push_back({px, py});
    }

    auto counts = detail::stratified_counts(m);
    for (std::size_t i = 0; i < m; ++i) {
      LabeledSet& dest = i < counts.train                      ? split.train
                         : i < counts.train + counts.validation ? split.validation
                                                                : split.test;
      dest.x.push_back(std::move(points[i]));
      dest.y.push_back(cls);
    }
  }
  return split;
}

// CSV datasets: a header row naming feature columns, a `label` column of
// non-negative integers, and optionally a `split` column of train|valid|test.
// Without a split column rows are split 70/15/15 per class in file order.
inline DatasetSplit load_csv_dataset_text(const std::string& text) {
  auto lines = split(std::string_view(text), '\n');
  std::size_t row = 0;
  while (row < lines.size() && trim(lines[row]).empty()) ++row;
  if (row == lines.size()) throw DatasetError("CSV dataset is empty");

  auto header = split(trim(lines[row]), ',');
  long long label_col = -1, split_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto name = trim(header[i]);
    if (name == "label") label_col = static_cast<long long>(i);
    else if (name == "split") split_col = static_cast<long long>(i);
  }
  if (label_col < 0) throw DatasetError("CSV dataset has no label column");

  DatasetSplit out;
  out.feature_dim = header.size() - 1 - (split_col >= 0 ? 1 : 0);
  if (out.feature_dim == 0) throw DatasetError("CSV dataset has no feature columns");

  struct Row {
    std::vector<double> x;
    int label;
    int split;  // 0 train, 1 valid, 2 test, -1 unassigned
  };
  std::vector<Row> rows;

  for (std::size_t r = row + 1; r < lines.size(); ++r) {
    auto line = trim(lines[r]);
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != header.size())
      throw DatasetError("CSV row " + format_int(static_cast<long long>(r + 1)) + " has " +
                         format_int(static_cast<long long>(fields.size())) + " fields, expected " +
                         format_int(static_cast<long long>(header.size())));
    Row parsed;
    parsed.split = -1;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      auto field = trim(fields[i]);
      if (static_cast<long long>(i) == label_col) {
        long long label = 0;
        if (!parse_long(field, label) || label < 0)
          throw DatasetError("CSV row " + format_int(static_cast<long long>(r + 1)) +
                             " has a bad label: " + std::string(field));
        parsed.label = static_cast<int>(label);
      } else if (static_cast<long long>(i) == split_col) {
        if (field == "train") parsed.split = 0;
        else if (field == "valid") parsed.split = 1;
        else if (field == "test") parsed.split = 2;
        else
          throw DatasetError("CSV row " + format_int(static_cast<long long>(r + 1)) +
                             " has a bad split value: " + std::string(field));
      } else {
        double v = 0;
        if (!parse_double(field, v))
          throw DatasetError("CSV row " + format_int(static_cast<long long>(r + 1)) +
                             " has a non-numeric feature: " + std::string(field));
        parsed.x.push_back(v);
      }
    }
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw DatasetError("CSV dataset has no data rows");

  int max_label = 0;
  for (const auto& r : rows) max_label = std::max(max_label, r.label);
  out.num_classes = max_label + 1;

  if (split_col < 0) {
    // Assign per class in file order: first 70% train, next 15% validation.
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < rows.size(); ++i) by_class[rows[i].label].push_back(i);
    for (auto& [cls, indices] : by_class) {
      auto counts = detail::stratified_counts(indices.size());
      for (std::size_t i = 0; i < indices.size(); ++i)
        rows[indices[i]].split = i < counts.train ? 0 : i < counts.train + counts.validation ? 1 : 2;
    }
  }

  for (auto& r : rows) {
    LabeledSet& dest = r.split == 0 ? out.train : r.split == 1 ? out.validation : out.test;
    dest.x.push_back(std::move(r.x));
    dest.y.push_back(r.label);
  }
  if (out.train.size() == 0 || out.validation.size() == 0 || out.test.size() == 0)
    throw DatasetError("CSV dataset leaves an empty split");
  return out;
}

inline DatasetSplit load_csv_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_csv_dataset_text(buf.str());
}

}  // namespace gramevo

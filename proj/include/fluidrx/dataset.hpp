/*
 * Copyright 2026 The fluidrx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FLUIDRX_DATASET_HPP_
#define FLUIDRX_DATASET_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fluidrx/error.hpp"
#include "fluidrx/format.hpp"
#include "fluidrx/rng.hpp"

namespace fluidrx {

inline constexpr std::string_view kLabelColumn = "discharge_expired";

enum class FeatureCategory { kUnchangeable, kIndirect, kDirect };

inline std::string_view CategoryName(FeatureCategory category) {
  switch (category) {
    case FeatureCategory::kUnchangeable: return "Unchangeable";
    case FeatureCategory::kIndirect: return "Indirect";
    case FeatureCategory::kDirect: return "Direct";
  }
  return "Unchangeable";
}

// Accepts the full names and the one-letter U/I/D forms.
inline FeatureCategory ParseCategory(std::string_view text) {
  if (text == "Unchangeable" || text == "U" || text == "unchangeable") {
    return FeatureCategory::kUnchangeable;
  }
  if (text == "Indirect" || text == "I" || text == "indirect") {
    return FeatureCategory::kIndirect;
  }
  if (text == "Direct" || text == "D" || text == "direct") {
    return FeatureCategory::kDirect;
  }
  throw Error(ErrorCode::kInvalidSpec, "unknown feature category '" + std::string(text) + "'");
}

struct FeatureMeta {
  std::string name;
  FeatureCategory category = FeatureCategory::kIndirect;
  std::string units;
  double raw_min = 0.0;
  double raw_max = 1.0;
  bool binary = false;
};

// Index sets over the feature vector: unchangeable, indirectly changeable and
// directly changeable features.
struct FeaturePartition {
  std::vector<std::size_t> u_indices;
  std::vector<std::size_t> i_indices;
  std::vector<std::size_t> d_indices;

  std::size_t size() const {
    return u_indices.size() + i_indices.size() + d_indices.size();
  }

  static FeaturePartition FromMeta(const std::vector<FeatureMeta>& meta) {
    FeaturePartition partition;
    for (std::size_t j = 0; j < meta.size(); ++j) {
      switch (meta[j].category) {
        case FeatureCategory::kUnchangeable: partition.u_indices.push_back(j); break;
        case FeatureCategory::kIndirect: partition.i_indices.push_back(j); break;
        case FeatureCategory::kDirect: partition.d_indices.push_back(j); break;
      }
    }
    return partition;
  }

  // Disjoint, exhaustive over {0..p-1}, and at least one directly changeable
  // feature.
  void Validate(std::size_t num_features) const {
    std::vector<int> seen(num_features, 0);
    for (const auto* block : {&u_indices, &i_indices, &d_indices}) {
      for (std::size_t j : *block) {
        Require(j < num_features, ErrorCode::kDimensionMismatch,
                "partition index " + std::to_string(j) + " out of range");
        ++seen[j];
      }
    }
    for (std::size_t j = 0; j < num_features; ++j) {
      Require(seen[j] == 1, ErrorCode::kInvalidArgument,
              "feature " + std::to_string(j) + " must belong to exactly one of U/I/D");
    }
    Require(!d_indices.empty(), ErrorCode::kInvalidArgument,
            "partition has no directly changeable features");
  }

  bool operator==(const FeaturePartition&) const = default;
};

struct FeatureRange {
  std::string name;
  double min = 0.0;
  double max = 1.0;

  bool operator==(const FeatureRange&) const = default;
};

// Per-feature min-max scaler fitted on the training split. Values outside the
// fitted range are clamped into [0, 1]; degenerate features map to 0.
class Scaler {
 public:
  Scaler() = default;
  explicit Scaler(std::vector<FeatureRange> ranges) : ranges_(std::move(ranges)) {
    for (const auto& r : ranges_) {
      Require(r.max >= r.min, ErrorCode::kInvalidArgument,
              "scaler range for '" + r.name + "' has max < min");
    }
  }

  const std::vector<FeatureRange>& ranges() const { return ranges_; }
  std::size_t size() const { return ranges_.size(); }

  double Scale(std::size_t j, double value) const {
    const FeatureRange& r = ranges_.at(j);
    if (std::isnan(value)) return value;
    if (r.max == r.min) return 0.0;
    return std::clamp((value - r.min) / (r.max - r.min), 0.0, 1.0);
  }

  double Unscale(std::size_t j, double scaled) const {
    const FeatureRange& r = ranges_.at(j);
    return r.min + scaled * (r.max - r.min);
  }

  std::optional<std::size_t> IndexOf(std::string_view name) const {
    for (std::size_t j = 0; j < ranges_.size(); ++j) {
      if (ranges_[j].name == name) return j;
    }
    return std::nullopt;
  }

  bool operator==(const Scaler&) const = default;

 private:
  std::vector<FeatureRange> ranges_;
};

struct PatientRecord {
  Eigen::VectorXd x;
  int y = 0;
};

// Feature matrix (one row per patient visit) plus binary mortality labels.
// Missing cells are NaN until imputed.
struct Dataset {
  std::vector<FeatureMeta> meta;
  FeaturePartition partition;
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::optional<Scaler> scaler;

  Dataset() = default;
  Dataset(std::vector<FeatureMeta> meta_in, Eigen::MatrixXd features_in,
          std::vector<int> labels_in)
      : meta(std::move(meta_in)),
        partition(FeaturePartition::FromMeta(meta)),
        features(std::move(features_in)),
        labels(std::move(labels_in)) {
    Validate();
  }

  std::size_t size() const { return labels.size(); }
  std::size_t num_features() const { return meta.size(); }

  void Validate() const {
    RequireSize(static_cast<std::size_t>(features.cols()), meta.size(), "feature columns");
    RequireSize(static_cast<std::size_t>(features.rows()), labels.size(), "label count");
    for (int y : labels) {
      Require(y == 0 || y == 1, ErrorCode::kInvalidArgument, "labels must be 0 or 1");
    }
  }

  PatientRecord Record(std::size_t i) const {
    return {features.row(static_cast<Eigen::Index>(i)).transpose(), labels.at(i)};
  }

  std::vector<std::string> FeatureNames() const {
    std::vector<std::string> names;
    names.reserve(meta.size());
    for (const auto& m : meta) names.push_back(m.name);
    return names;
  }

  std::optional<std::size_t> IndexOf(std::string_view name) const {
    for (std::size_t j = 0; j < meta.size(); ++j) {
      if (meta[j].name == name) return j;
    }
    return std::nullopt;
  }

  std::size_t MissingCount() const {
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      for (Eigen::Index j = 0; j < features.cols(); ++j) {
        if (std::isnan(features(i, j))) ++count;
      }
    }
    return count;
  }

  std::size_t PositiveCount() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  }

  double PositiveFraction() const {
    Require(!labels.empty(), ErrorCode::kInvalidArgument, "empty dataset");
    return static_cast<double>(PositiveCount()) / static_cast<double>(labels.size());
  }

  Eigen::VectorXd LabelVector() const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i)) = labels[i];
    return y;
  }

  // Rows in the given order.
  Dataset Subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.meta = meta;
    out.partition = partition;
    out.scaler = scaler;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.features.row(static_cast<Eigen::Index>(r)) =
          features.row(static_cast<Eigen::Index>(rows[r]));
      out.labels.push_back(labels.at(rows[r]));
    }
    return out;
  }

  // Columns by name, in the given order; partition and scaler follow.
  Dataset SelectFeatures(const std::vector<std::string>& names) const {
    std::vector<std::size_t> columns;
    for (const auto& name : names) {
      const auto j = IndexOf(name);
      Require(j.has_value(), ErrorCode::kUnknownColumn, "no feature named '" + name + "'");
      columns.push_back(*j);
    }
    Dataset out;
    out.features.resize(features.rows(), static_cast<Eigen::Index>(columns.size()));
    std::vector<FeatureRange> ranges;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      out.meta.push_back(meta[columns[c]]);
      out.features.col(static_cast<Eigen::Index>(c)) =
          features.col(static_cast<Eigen::Index>(columns[c]));
      if (scaler) ranges.push_back(scaler->ranges().at(columns[c]));
    }
    out.labels = labels;
    out.partition = FeaturePartition::FromMeta(out.meta);
    if (scaler) out.scaler = Scaler(std::move(ranges));
    return out;
  }
};

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::vector<std::string> SplitCsvLine(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos
                                                   ? std::string_view::npos
                                                   : comma - start);
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    cells.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

// Reads a header row plus one row per visit. Columns are matched to `meta` by
// name; the label column must be present. Empty cells become NaN (missing).
inline Dataset ReadCsv(std::istream& in, const std::vector<FeatureMeta>& meta) {
  std::string line;
  Require(static_cast<bool>(std::getline(in, line)), ErrorCode::kParseError, "empty CSV input");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
    line.erase(0, 3);
  }
  const std::vector<std::string> header = detail::SplitCsvLine(line);

  std::map<std::string, std::size_t, std::less<>> meta_index;
  for (std::size_t j = 0; j < meta.size(); ++j) meta_index.emplace(meta[j].name, j);

  std::optional<std::size_t> label_column;
  std::vector<std::optional<std::size_t>> column_to_feature(header.size());
  std::vector<int> feature_seen(meta.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == kLabelColumn) {
      label_column = c;
      continue;
    }
    const auto it = meta_index.find(header[c]);
    if (it == meta_index.end()) {
      throw Error(ErrorCode::kUnknownColumn, "column '" + header[c] + "' not in feature metadata");
    }
    column_to_feature[c] = it->second;
    ++feature_seen[it->second];
  }
  if (!label_column) {
    throw Error(ErrorCode::kMissingLabelColumn,
                "header has no '" + std::string(kLabelColumn) + "' column");
  }
  for (std::size_t j = 0; j < meta.size(); ++j) {
    if (feature_seen[j] != 1) {
      throw Error(ErrorCode::kMissingColumn,
                  "feature '" + meta[j].name + "' must appear exactly once in the header");
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::SplitCsvLine(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kParseError, "row " + std::to_string(row_number) + " has " +
                                              std::to_string(cells.size()) + " cells, expected " +
                                              std::to_string(header.size()));
    }
    std::vector<double> values(meta.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == *label_column) {
        const auto label = TryParseDouble(cells[c]);
        if (!label || (*label != 0.0 && *label != 1.0)) {
          throw Error(ErrorCode::kNonNumericCell,
                      "row " + std::to_string(row_number) + ", column '" + header[c] +
                          "': label must be 0 or 1");
        }
        labels.push_back(static_cast<int>(*label));
        continue;
      }
      if (cells[c].empty()) continue;
      const auto value = TryParseDouble(cells[c]);
      if (!value || !std::isfinite(*value)) {
        throw Error(ErrorCode::kNonNumericCell, "row " + std::to_string(row_number) +
                                                    ", column '" + header[c] + "': '" +
                                                    cells[c] + "'");
      }
      values[*column_to_feature[c]] = *value;
    }
    rows.push_back(std::move(values));
  }

  Eigen::MatrixXd features(static_cast<Eigen::Index>(rows.size()),
                           static_cast<Eigen::Index>(meta.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < meta.size(); ++j) {
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return Dataset(meta, std::move(features), std::move(labels));
}

inline Dataset LoadCsv(const std::string& path, const std::vector<FeatureMeta>& meta) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIoError, "cannot open '" + path + "'");
  return ReadCsv(in, meta);
}

// Writes features in metadata order followed by the label column. Missing
// cells are written empty; numbers use the shortest round-trip form.
inline void WriteCsv(std::ostream& out, const Dataset& ds) {
  for (const auto& m : ds.meta) out << m.name << ',';
  out << kLabelColumn << '\n';
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      const double v = ds.features(i, j);
      if (!std::isnan(v)) out << FormatDouble(v);
      out << ',';
    }
    out << ds.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

inline void SaveCsv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  Require(out.good(), ErrorCode::kIoError, "cannot write '" + path + "'");
  WriteCsv(out, ds);
}

// ---------------------------------------------------------------------------
// Imputation and scaling

// Per-feature mean of the observed (non-missing) cells.
inline Eigen::VectorXd ObservedMeans(const Dataset& ds) {
  Eigen::VectorXd means(ds.features.cols());
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
    double sum = 0.0;
    std::size_t observed = 0;
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
      const double v = ds.features(i, j);
      if (!std::isnan(v)) {
        sum += v;
        ++observed;
      }
    }
    if (observed == 0) {
      throw Error(ErrorCode::kAllMissingFeature, ds.meta[static_cast<std::size_t>(j)].name);
    }
    means(j) = sum / static_cast<double>(observed);
  }
  return means;
}

inline Dataset ImputeWith(const Dataset& ds, const Eigen::VectorXd& means) {
  RequireSize(static_cast<std::size_t>(means.size()), ds.num_features(), "imputation means");
  Dataset out = ds;
  for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
      if (std::isnan(out.features(i, j))) out.features(i, j) = means(j);
    }
  }
  return out;
}

// Replaces every missing cell with the mean of the observed values of its
// feature.
inline Dataset ImputeMean(const Dataset& ds) { return ImputeWith(ds, ObservedMeans(ds)); }

inline Scaler FitScaler(const Dataset& ds) {
  Require(ds.size() > 0, ErrorCode::kInvalidArgument, "cannot fit a scaler on an empty dataset");
  std::vector<FeatureRange> ranges;
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
      const double v = ds.features(i, j);
      if (std::isnan(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const auto& name = ds.meta[static_cast<std::size_t>(j)].name;
    if (!std::isfinite(lo)) throw Error(ErrorCode::kAllMissingFeature, name);
    ranges.push_back({name, lo, hi});
  }
  return Scaler(std::move(ranges));
}

inline Dataset ApplyScaler(const Dataset& ds, const Scaler& scaler) {
  RequireSize(scaler.size(), ds.num_features(), "scaler width");
  Dataset out = ds;
  for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
      out.features(i, j) = scaler.Scale(static_cast<std::size_t>(j), out.features(i, j));
    }
  }
  out.scaler = scaler;
  return out;
}

// Maps a scaled dataset back to raw units using its attached scaler.
inline Dataset InvertScaler(const Dataset& ds) {
  if (!ds.scaler) throw Error(ErrorCode::kScalerNotFitted, "dataset carries no scaler");
  Dataset out = ds;
  for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
      out.features(i, j) = ds.scaler->Unscale(static_cast<std::size_t>(j), out.features(i, j));
    }
  }
  out.scaler.reset();
  return out;
}

inline nlohmann::ordered_json ScalerToJson(const Scaler& scaler) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& r : scaler.ranges()) j[r.name] = {{"min", r.min}, {"max", r.max}};
  return j;
}

inline Scaler ScalerFromJson(const nlohmann::ordered_json& j) {
  Require(j.is_object(), ErrorCode::kParseError, "scaler JSON must be an object");
  std::vector<FeatureRange> ranges;
  for (const auto& [name, value] : j.items()) {
    Require(value.contains("min") && value.contains("max") && value["min"].is_number() &&
                value["max"].is_number(),
            ErrorCode::kParseError, "scaler entry '" + name + "' needs numeric min and max");
    ranges.push_back({name, value["min"].get<double>(), value["max"].get<double>()});
  }
  return Scaler(std::move(ranges));
}

inline nlohmann::ordered_json MetaToJson(const std::vector<FeatureMeta>& meta) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& m : meta) {
    out.push_back({{"name", m.name},
                   {"category", std::string(CategoryName(m.category))},
                   {"units", m.units},
                   {"raw_min", m.raw_min},
                   {"raw_max", m.raw_max},
                   {"binary", m.binary}});
  }
  return out;
}

inline std::vector<FeatureMeta> MetaFromJson(const nlohmann::ordered_json& j) {
  Require(j.is_array(), ErrorCode::kParseError, "feature metadata must be an array");
  std::vector<FeatureMeta> meta;
  for (const auto& item : j) {
    FeatureMeta m;
    m.name = item.at("name").get<std::string>();
    m.category = ParseCategory(item.at("category").get<std::string>());
    m.units = item.value("units", "");
    m.raw_min = item.value("raw_min", 0.0);
    m.raw_max = item.value("raw_max", 1.0);
    m.binary = item.value("binary", false);
    meta.push_back(std::move(m));
  }
  return meta;
}

// ---------------------------------------------------------------------------
// Stratified split

struct DatasetSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  std::vector<std::size_t> test_rows;
};

// Shuffles each class separately and cuts it by the ratios, so every split
// keeps the global positive fraction up to rounding. Rows inside a split are
// in ascending original order.
inline DatasetSplit StratifiedSplit(const Dataset& ds, std::array<double, 3> ratios,
                                    std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  Require(std::abs(total - 1.0) < 1e-9 && ratios[0] >= 0 && ratios[1] >= 0 && ratios[2] >= 0,
          ErrorCode::kInvalidArgument, "split ratios must be non-negative and sum to 1");

  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  for (int c = 0; c < 2; ++c) {
    if (by_class[static_cast<std::size_t>(c)].size() < 3) {
      throw Error(ErrorCode::kClassTooSmall,
                  "class " + std::to_string(c) + " has " +
                      std::to_string(by_class[static_cast<std::size_t>(c)].size()) +
                      " members; at least 3 required");
    }
  }

  DatasetSplit split;
  Rng rng(seed);
  for (auto& members : by_class) {
    rng.Shuffle(members);
    const double n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * n));
    const auto n_val = std::min(static_cast<std::size_t>(std::llround(ratios[1] * n)),
                                members.size() - n_train);
    split.train_rows.insert(split.train_rows.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.validation_rows.insert(split.validation_rows.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                                 members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test_rows.insert(split.test_rows.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), members.end());
  }
  for (auto* rows : {&split.train_rows, &split.validation_rows, &split.test_rows}) {
    std::sort(rows->begin(), rows->end());
  }
  split.train = ds.Subset(split.train_rows);
  split.validation = ds.Subset(split.validation_rows);
  split.test = ds.Subset(split.test_rows);
  return split;
}

// Common preparation: split 80/10/10, impute every split with the training
// means, then fit the scaler on the training split and apply it to all three.
inline DatasetSplit PrepareSplits(const Dataset& raw, std::uint64_t seed) {
  DatasetSplit split = StratifiedSplit(raw, {0.8, 0.1, 0.1}, seed);
  const Eigen::VectorXd means = ObservedMeans(split.train);
  split.train = ImputeWith(split.train, means);
  split.validation = ImputeWith(split.validation, means);
  split.test = ImputeWith(split.test, means);
  const Scaler scaler = FitScaler(split.train);
  split.train = ApplyScaler(split.train, scaler);
  split.validation = ApplyScaler(split.validation, scaler);
  split.test = ApplyScaler(split.test, scaler);
  return split;
}

}  // namespace fluidrx

#endif  // FLUIDRX_DATASET_HPP_

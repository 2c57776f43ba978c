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

#ifndef FLUIDRX_BUNDLE_HPP_
#define FLUIDRX_BUNDLE_HPP_

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluidrx/classifier.hpp"
#include "fluidrx/dataset.hpp"
#include "fluidrx/error.hpp"
#include "fluidrx/ife.hpp"

namespace fluidrx {

// Everything needed to serve recommendations for one trained cohort.
struct ModelBundle {
  std::string id;
  ClassifierModel classifier;
  IfeModel ife;
  Scaler scaler;
  std::vector<FeatureMeta> meta;
  FeaturePartition partition;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  std::vector<std::string> FeatureNames() const {
    std::vector<std::string> names;
    for (const auto& m : meta) names.push_back(m.name);
    return names;
  }

  std::vector<std::string> BlockNames(const std::vector<std::size_t>& block) const {
    std::vector<std::string> names;
    for (std::size_t j : block) names.push_back(meta.at(j).name);
    return names;
  }
};

namespace detail {

[[noreturn]] inline void Inconsistent(const std::string& field, const std::string& message) {
  throw Error(ErrorCode::kInconsistentBundle, field + ": " + message);
}

inline std::string JoinNames(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ",") + n;
  return out;
}

}  // namespace detail

// Cross-checks feature names, ordering and shapes. Error messages start with
// the offending field so clients can attach them to an input.
inline void ValidateBundle(const ModelBundle& b) {
  const std::vector<std::string> names = b.FeatureNames();
  if (names.empty()) detail::Inconsistent("meta", "no features");
  try {
    b.partition.Validate(names.size());
  } catch (const Error& e) {
    detail::Inconsistent("partition", e.what());
  }
  if (b.partition != FeaturePartition::FromMeta(b.meta)) {
    detail::Inconsistent("partition", "does not match the feature categories");
  }
  std::vector<std::string> scaler_names;
  for (const auto& r : b.scaler.ranges()) scaler_names.push_back(r.name);
  if (scaler_names != names) {
    detail::Inconsistent("scaler", "features [" + detail::JoinNames(scaler_names) + "] differ from [" +
                                       detail::JoinNames(names) + "]");
  }
  if (b.classifier.feature_names != names) {
    detail::Inconsistent("classifier.feature_names", "[" + detail::JoinNames(b.classifier.feature_names) +
                                                         "] differ from [" + detail::JoinNames(names) + "]");
  }
  if (b.classifier.num_features() != names.size()) {
    detail::Inconsistent("classifier.dims", "input width differs from the feature count");
  }
  if (b.ife.u_indices != b.partition.u_indices || b.ife.i_indices != b.partition.i_indices ||
      b.ife.d_indices != b.partition.d_indices) {
    detail::Inconsistent("ife", "index blocks differ from the partition");
  }
  std::vector<std::string> ife_inputs = b.BlockNames(b.partition.u_indices);
  const std::vector<std::string> d_names = b.BlockNames(b.partition.d_indices);
  ife_inputs.insert(ife_inputs.end(), d_names.begin(), d_names.end());
  if (b.ife.input_names != ife_inputs) {
    detail::Inconsistent("ife.feature_names", "[" + detail::JoinNames(b.ife.input_names) + "] differ from [" +
                                                  detail::JoinNames(ife_inputs) + "]");
  }
  if (b.ife.output_names != b.BlockNames(b.partition.i_indices)) {
    detail::Inconsistent("ife.output_names", "[" + detail::JoinNames(b.ife.output_names) + "] differ from [" +
                                                 detail::JoinNames(b.BlockNames(b.partition.i_indices)) + "]");
  }
  if (b.ife.network.input_size() != ife_inputs.size() || b.ife.network.output_size() != b.partition.i_indices.size()) {
    detail::Inconsistent("ife.dims", "network shape differs from the partition");
  }
}

inline nlohmann::ordered_json BundleMetadataJson(const ModelBundle& b) {
  nlohmann::ordered_json j;
  j["id"] = b.id;
  j["features"] = MetaToJson(b.meta);
  j["scaler"] = ScalerToJson(b.scaler);
  j["partition"] = {{"u", b.BlockNames(b.partition.u_indices)},
                    {"i", b.BlockNames(b.partition.i_indices)},
                    {"d", b.BlockNames(b.partition.d_indices)}};
  j["classifier"] = {{"variant", std::string(VariantName(b.classifier.variant))},
                     {"dims", b.classifier.network.Widths()}};
  j["ife"] = {{"variant", std::string(IfeVariantName(b.ife.variant))}, {"dims", b.ife.network.Widths()}};
  j["metadata"] = b.metadata;
  return j;
}

inline nlohmann::ordered_json BundleToJson(const ModelBundle& b) {
  nlohmann::ordered_json j;
  j["format"] = "fluidrx-bundle/1";
  if (!b.id.empty()) j["id"] = b.id;
  j["features"] = MetaToJson(b.meta);
  j["scaler"] = ScalerToJson(b.scaler);
  j["classifier"] = ClassifierToJson(b.classifier);
  j["ife"] = IfeToJson(b.ife);
  j["metadata"] = b.metadata;
  return j;
}

// Parses and validates. Structural problems are kParseError, cross-model
// mismatches kInconsistentBundle.
inline ModelBundle BundleFromJson(const nlohmann::ordered_json& j) {
  Require(j.is_object(), ErrorCode::kParseError, "bundle must be a JSON object");
  for (const char* field : {"features", "scaler", "classifier", "ife"}) {
    Require(j.contains(field), ErrorCode::kParseError, std::string("bundle is missing '") + field + "'");
  }
  ModelBundle b;
  try {
    b.id = j.value("id", "");
    b.meta = MetaFromJson(j["features"]);
    b.scaler = ScalerFromJson(j["scaler"]);
    b.classifier = ClassifierFromJson(j["classifier"]);
    b.ife = IfeFromJson(j["ife"]);
    if (j.contains("metadata")) b.metadata = j["metadata"];
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kDimensionMismatch) throw Error(ErrorCode::kInconsistentBundle, e.what());
    throw;
  }
  b.partition = FeaturePartition::FromMeta(b.meta);
  ValidateBundle(b);
  return b;
}

inline void SaveBundle(const std::string& path, const ModelBundle& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << BundleToJson(b).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

inline ModelBundle LoadBundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  try {
    return BundleFromJson(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
}

}  // namespace fluidrx

#endif  // FLUIDRX_BUNDLE_HPP_

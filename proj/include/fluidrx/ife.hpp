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

#ifndef FLUIDRX_IFE_HPP_
#define FLUIDRX_IFE_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluidrx/dataset.hpp"
#include "fluidrx/error.hpp"
#include "fluidrx/network.hpp"
#include "fluidrx/parallel.hpp"

namespace fluidrx {

enum class IfeVariant { kLinear, kFeedForward };

inline std::string_view IfeVariantName(IfeVariant v) {
  return v == IfeVariant::kLinear ? "Linear" : "FeedForward";
}

struct IfeConfig {
  IfeVariant variant = IfeVariant::kFeedForward;
  std::size_t hidden_nodes = 10;  // 0 for Linear
  int epochs = 250;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;

  static IfeConfig Linear(int epochs, std::uint64_t seed = 0) {
    return {IfeVariant::kLinear, 0, epochs, 0.01, seed};
  }
  static IfeConfig FeedForward(std::size_t hidden, int epochs, std::uint64_t seed = 0) {
    return {IfeVariant::kFeedForward, hidden, epochs, 0.01, seed};
  }

  void Validate() const {
    Require(epochs > 0, ErrorCode::kInvalidArgument, "epochs must be positive");
    Require(learning_rate > 0, ErrorCode::kInvalidArgument, "learning_rate must be positive");
    Require((variant == IfeVariant::kLinear) == (hidden_nodes == 0), ErrorCode::kInvalidArgument,
            "Linear IFE has no hidden nodes; FeedForward needs some");
  }
};

// Regression H: (x_U, x_D) -> x_I. Input is the U block followed by the D
// block; the output head is linear.
struct IfeModel {
  IfeVariant variant = IfeVariant::kLinear;
  DenseNetwork network;
  std::vector<std::size_t> u_indices;
  std::vector<std::size_t> d_indices;
  std::vector<std::size_t> i_indices;
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  std::string scaler_ref;

  Eigen::VectorXd Input(const Eigen::VectorXd& x_u, const Eigen::VectorXd& x_d) const {
    RequireSize(static_cast<std::size_t>(x_u.size()), u_indices.size(), "x_u");
    RequireSize(static_cast<std::size_t>(x_d.size()), d_indices.size(), "x_d");
    Eigen::VectorXd in(x_u.size() + x_d.size());
    in << x_u, x_d;
    return in;
  }

  bool operator==(const IfeModel&) const = default;
};

inline Eigen::VectorXd PredictIndirect(const IfeModel& m, const Eigen::VectorXd& x_u, const Eigen::VectorXd& x_d) {
  return m.network.Forward(m.Input(x_u, x_d));
}

// d x_I / d x_D, shape |I| x |D|.
inline Eigen::MatrixXd IfeJacobian(const IfeModel& m, const Eigen::VectorXd& x_u, const Eigen::VectorXd& x_d) {
  const Eigen::MatrixXd full = m.network.Jacobian(m.Input(x_u, x_d));
  return full.rightCols(x_d.size());
}

namespace detail {

inline Eigen::MatrixXd GatherColumns(const Eigen::MatrixXd& x, const std::vector<std::size_t>& columns) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(columns[c]));
  }
  return out;
}

inline std::vector<std::string> Names(const Dataset& ds, const std::vector<std::size_t>& columns) {
  std::vector<std::string> names;
  for (std::size_t j : columns) names.push_back(ds.meta.at(j).name);
  return names;
}

}  // namespace detail

inline Eigen::MatrixXd IfeInputs(const IfeModel& m, const Dataset& ds) {
  std::vector<std::size_t> columns = m.u_indices;
  columns.insert(columns.end(), m.d_indices.begin(), m.d_indices.end());
  return detail::GatherColumns(ds.features, columns);
}

inline Eigen::MatrixXd IfeTargets(const IfeModel& m, const Dataset& ds) {
  return detail::GatherColumns(ds.features, m.i_indices);
}

struct IfeFit {
  IfeModel model;
  std::vector<double> loss_history;
};

// Minimizes MSE pooled over all indirect features with full-batch Adam.
inline IfeFit FitIfe(const Dataset& train, const IfeConfig& cfg) {
  cfg.Validate();
  const FeaturePartition& part = train.partition;
  if (part.i_indices.empty()) {
    throw Error(ErrorCode::kEmptyIndirectBlock, "dataset has no indirectly changeable features");
  }
  Require(train.size() > 0, ErrorCode::kInvalidArgument, "empty training set");
  Require(train.features.allFinite(), ErrorCode::kInvalidArgument,
          "training features contain missing or non-finite values");

  IfeFit fit;
  IfeModel& m = fit.model;
  m.variant = cfg.variant;
  m.u_indices = part.u_indices;
  m.d_indices = part.d_indices;
  m.i_indices = part.i_indices;
  m.input_names = detail::Names(train, part.u_indices);
  const auto d_names = detail::Names(train, part.d_indices);
  m.input_names.insert(m.input_names.end(), d_names.begin(), d_names.end());
  m.output_names = detail::Names(train, part.i_indices);

  const std::size_t in = m.u_indices.size() + m.d_indices.size();
  const std::size_t out = m.i_indices.size();
  m.network = DenseNetwork::GlorotUniform(
      cfg.variant == IfeVariant::kLinear ? std::vector<std::size_t>{in, out}
                                         : std::vector<std::size_t>{in, cfg.hidden_nodes, out},
      cfg.seed);

  const Eigen::MatrixXd x = IfeInputs(m, train);
  const Eigen::MatrixXd y = IfeTargets(m, train);
  const double scale = 1.0 / static_cast<double>(y.size());
  AdamState adam(m.network, {cfg.learning_rate});
  auto loss_of = [&](const Eigen::MatrixXd& residual) {
    const double loss = residual.squaredNorm() * scale;
    if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFiniteLoss, "IFE training loss diverged");
    return loss;
  };
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Eigen::MatrixXd residual = m.network.ForwardBatch(x) - y;
    fit.loss_history.push_back(loss_of(residual));
    adam.Step(m.network, m.network.Backward(x, 2.0 * scale * residual));
  }
  fit.loss_history.push_back(loss_of(m.network.ForwardBatch(x) - y));
  return fit;
}

inline IfeModel TrainIfe(const Dataset& train, const IfeConfig& cfg) { return FitIfe(train, cfg).model; }

struct RegressionMetrics {
  double mse = 0.0;
  double mae = 0.0;
};

// Pooled over every indirect feature of every record.
inline RegressionMetrics EvaluateIfe(const IfeModel& m, const Dataset& ds) {
  Require(ds.size() > 0, ErrorCode::kInvalidArgument, "cannot evaluate on an empty dataset");
  RequireSize(ds.num_features(), m.u_indices.size() + m.d_indices.size() + m.i_indices.size(),
              "dataset width");
  const Eigen::MatrixXd residual = m.network.ForwardBatch(IfeInputs(m, ds)) - IfeTargets(m, ds);
  const auto count = static_cast<double>(residual.size());
  return {residual.squaredNorm() / count, residual.cwiseAbs().sum() / count};
}

struct IfeGridRow {
  IfeConfig config;
  RegressionMetrics train;
  RegressionMetrics validation;
};

struct IfeSelection {
  IfeModel best;
  IfeConfig best_config;
  std::vector<IfeGridRow> table;
};

// Linear plus 3/5/10 hidden nodes, all at 250 epochs.
inline std::vector<IfeConfig> DefaultIfeGrid(std::uint64_t seed = 0) {
  return {IfeConfig::Linear(250, seed), IfeConfig::FeedForward(3, 250, seed),
          IfeConfig::FeedForward(5, 250, seed), IfeConfig::FeedForward(10, 250, seed)};
}

// Lowest validation MSE wins; the earlier grid entry wins ties.
inline IfeSelection SelectIfe(const Dataset& train, const Dataset& validation,
                              const std::vector<IfeConfig>& grid, std::size_t threads = 1) {
  Require(!grid.empty(), ErrorCode::kInvalidArgument, "empty IFE grid");
  std::vector<IfeModel> models(grid.size());
  std::vector<IfeGridRow> rows(grid.size());
  ParallelFor(grid.size(), threads, [&](std::size_t k) {
    models[k] = TrainIfe(train, grid[k]);
    rows[k] = {grid[k], EvaluateIfe(models[k], train), EvaluateIfe(models[k], validation)};
  });
  std::size_t best = 0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (rows[k].validation.mse < rows[best].validation.mse) best = k;
  }
  return {models[best], grid[best], std::move(rows)};
}

inline nlohmann::ordered_json IfeToJson(const IfeModel& m) {
  nlohmann::ordered_json j;
  j["kind"] = "ife";
  j["variant"] = std::string(IfeVariantName(m.variant));
  const auto net = NetworkToJson(m.network);
  j["dims"] = net["dims"];
  j["weights"] = net["weights"];
  j["biases"] = net["biases"];
  j["hidden_activation"] = "relu";
  j["output_activation"] = "none";
  j["feature_names"] = m.input_names;
  j["output_names"] = m.output_names;
  j["u_indices"] = m.u_indices;
  j["d_indices"] = m.d_indices;
  j["i_indices"] = m.i_indices;
  j["scaler_ref"] = m.scaler_ref;
  return j;
}

inline IfeModel IfeFromJson(const nlohmann::ordered_json& j) {
  try {
    IfeModel m;
    const auto variant = j.at("variant").get<std::string>();
    Require(variant == "Linear" || variant == "FeedForward", ErrorCode::kParseError,
            "unknown IFE variant '" + variant + "'");
    Require(j.value("output_activation", "none") == "none", ErrorCode::kParseError,
            "IFE output activation must be 'none'");
    m.variant = variant == "Linear" ? IfeVariant::kLinear : IfeVariant::kFeedForward;
    m.network = NetworkFromJson(j);
    Require((m.variant == IfeVariant::kLinear) == (m.network.layers().size() == 1),
            ErrorCode::kParseError, "variant does not match the layer count");
    m.input_names = j.at("feature_names").get<std::vector<std::string>>();
    m.output_names = j.at("output_names").get<std::vector<std::string>>();
    m.u_indices = j.at("u_indices").get<std::vector<std::size_t>>();
    m.d_indices = j.at("d_indices").get<std::vector<std::size_t>>();
    m.i_indices = j.at("i_indices").get<std::vector<std::size_t>>();
    m.scaler_ref = j.value("scaler_ref", "");
    RequireSize(m.network.input_size(), m.u_indices.size() + m.d_indices.size(), "IFE input width");
    RequireSize(m.network.output_size(), m.i_indices.size(), "IFE output width");
    RequireSize(m.input_names.size(), m.network.input_size(), "IFE feature_names");
    RequireSize(m.output_names.size(), m.network.output_size(), "IFE output_names");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

}  // namespace fluidrx

#endif  // FLUIDRX_IFE_HPP_

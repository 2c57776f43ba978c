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

#ifndef FLUIDRX_CLASSIFIER_HPP_
#define FLUIDRX_CLASSIFIER_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluidrx/dataset.hpp"
#include "fluidrx/error.hpp"
#include "fluidrx/network.hpp"
#include "fluidrx/parallel.hpp"
#include "fluidrx/rng.hpp"

namespace fluidrx {

enum class ClassifierVariant { kLogistic, kFeedForward };

inline std::string_view VariantName(ClassifierVariant v) {
  return v == ClassifierVariant::kLogistic ? "Logistic" : "FeedForward";
}

struct ClassifierConfig {
  ClassifierVariant variant = ClassifierVariant::kFeedForward;
  std::size_t hidden_nodes = 3;  // 0 for Logistic
  int epochs = 200;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;  // 0 = full batch

  static ClassifierConfig Logistic(int epochs, std::uint64_t seed = 0) {
    return {ClassifierVariant::kLogistic, 0, epochs, 0.01, seed, 0};
  }
  static ClassifierConfig FeedForward(std::size_t hidden, int epochs, std::uint64_t seed = 0) {
    return {ClassifierVariant::kFeedForward, hidden, epochs, 0.01, seed, 0};
  }

  void Validate() const {
    Require(epochs > 0, ErrorCode::kInvalidArgument, "epochs must be positive");
    Require(learning_rate > 0, ErrorCode::kInvalidArgument, "learning_rate must be positive");
    if (variant == ClassifierVariant::kLogistic) {
      Require(hidden_nodes == 0, ErrorCode::kInvalidArgument, "logistic model has no hidden nodes");
    } else {
      Require(hidden_nodes > 0, ErrorCode::kInvalidArgument, "feed-forward model needs hidden nodes");
    }
  }

  std::vector<std::size_t> Widths(std::size_t inputs) const {
    if (variant == ClassifierVariant::kLogistic) return {inputs, 1};
    return {inputs, hidden_nodes, 1};
  }

  std::size_t ParameterCount(std::size_t inputs) const {
    const auto w = Widths(inputs);
    std::size_t count = 0;
    for (std::size_t k = 0; k + 1 < w.size(); ++k) count += w[k] * w[k + 1] + w[k + 1];
    return count;
  }
};

// f(x) = sigmoid(g(x)), with g either linear or a one-hidden-layer ReLU
// network. Immutable once trained.
struct ClassifierModel {
  ClassifierVariant variant = ClassifierVariant::kLogistic;
  DenseNetwork network;
  std::vector<std::string> feature_names;
  std::string scaler_ref;

  std::size_t num_features() const { return network.input_size(); }

  bool operator==(const ClassifierModel&) const = default;
};

// Clamped to the open interval: in double precision 1/(1+e^-z) rounds to
// exactly 1 once z exceeds about 37.
inline double Sigmoid(double z) {
  constexpr double kLo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  if (z >= 0) return std::min(1.0 / (1.0 + std::exp(-z)), hi);
  const double e = std::exp(z);
  return std::max(e / (1.0 + e), kLo);
}

// log(1 + e^z) without overflow.
inline double Softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double Logit(const ClassifierModel& m, const Eigen::VectorXd& x) {
  RequireSize(static_cast<std::size_t>(x.size()), m.num_features(), "classifier input");
  return m.network.Forward(x)(0);
}

inline double PredictProba(const ClassifierModel& m, const Eigen::VectorXd& x) {
  return Sigmoid(Logit(m, x));
}

inline Eigen::VectorXd PredictProbaBatch(const ClassifierModel& m, const Eigen::MatrixXd& x) {
  RequireSize(static_cast<std::size_t>(x.cols()), m.num_features(), "classifier input");
  const Eigen::VectorXd logits = m.network.ForwardBatch(x).col(0);
  return logits.unaryExpr([](double z) { return Sigmoid(z); });
}

// d f / d x = f (1 - f) dg/dx, back-propagated through the ReLU layer.
inline Eigen::VectorXd GradientWrtInput(const ClassifierModel& m, const Eigen::VectorXd& x) {
  const double p = PredictProba(m, x);
  return p * (1.0 - p) * m.network.Jacobian(x).row(0).transpose();
}

inline ClassifierModel ZeroClassifier(ClassifierVariant variant, std::size_t inputs, std::size_t hidden = 0) {
  ClassifierModel m;
  m.variant = variant;
  m.network = DenseNetwork::Zeros(variant == ClassifierVariant::kLogistic
                                      ? std::vector<std::size_t>{inputs, 1}
                                      : std::vector<std::size_t>{inputs, hidden, 1});
  for (std::size_t j = 0; j < inputs; ++j) m.feature_names.push_back("x" + std::to_string(j));
  return m;
}

// ---------------------------------------------------------------------------
// Training

struct ClassifierFit {
  ClassifierModel model;
  std::vector<double> loss_history;  // mean BCE before each step, then final
};

inline double BinaryCrossEntropy(const Eigen::VectorXd& logits, const Eigen::VectorXd& y) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) loss += Softplus(logits(i)) - y(i) * logits(i);
  return loss / static_cast<double>(logits.size());
}

namespace detail {

inline void RequireFinite(const Eigen::MatrixXd& x, std::string_view what) {
  Require(x.allFinite(), ErrorCode::kInvalidArgument,
          std::string(what) + " contains missing or non-finite values");
}

}  // namespace detail

// Minimizes mean binary cross-entropy with Adam. Deterministic for a fixed
// config seed.
inline ClassifierFit FitClassifier(const Dataset& train, const ClassifierConfig& cfg) {
  cfg.Validate();
  Require(train.size() > 0, ErrorCode::kInvalidArgument, "empty training set");
  Require(train.num_features() > 0, ErrorCode::kDimensionMismatch, "training set has no features");
  detail::RequireFinite(train.features, "training features");

  const Eigen::MatrixXd& x = train.features;
  const Eigen::VectorXd y = train.LabelVector();
  ClassifierFit fit;
  fit.model.variant = cfg.variant;
  fit.model.feature_names = train.FeatureNames();
  fit.model.network = DenseNetwork::GlorotUniform(cfg.Widths(train.num_features()), cfg.seed);
  AdamState adam(fit.model.network, {cfg.learning_rate});

  auto full_loss = [&] {
    const double loss = BinaryCrossEntropy(fit.model.network.ForwardBatch(x).col(0), y);
    if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFiniteLoss, "training loss diverged");
    return loss;
  };

  const std::size_t n = train.size();
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
  Rng shuffle_rng(DeriveSeed(cfg.seed, 1));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto step_on = [&](const Eigen::MatrixXd& xb, const Eigen::VectorXd& yb) {
    const Eigen::VectorXd logits = fit.model.network.ForwardBatch(xb).col(0);
    Eigen::MatrixXd upstream(xb.rows(), 1);
    for (Eigen::Index i = 0; i < xb.rows(); ++i) {
      upstream(i, 0) = (Sigmoid(logits(i)) - yb(i)) / static_cast<double>(xb.rows());
    }
    adam.Step(fit.model.network, fit.model.network.Backward(xb, upstream));
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    fit.loss_history.push_back(full_loss());
    if (full_batch) {
      step_on(x, y);
      continue;
    }
    shuffle_rng.Shuffle(order);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      Eigen::MatrixXd xb(static_cast<Eigen::Index>(end - start), x.cols());
      Eigen::VectorXd yb(static_cast<Eigen::Index>(end - start));
      for (std::size_t r = start; r < end; ++r) {
        xb.row(static_cast<Eigen::Index>(r - start)) = x.row(static_cast<Eigen::Index>(order[r]));
        yb(static_cast<Eigen::Index>(r - start)) = y(static_cast<Eigen::Index>(order[r]));
      }
      step_on(xb, yb);
    }
  }
  fit.loss_history.push_back(full_loss());
  return fit;
}

inline ClassifierModel TrainClassifier(const Dataset& train, const ClassifierConfig& cfg) {
  return FitClassifier(train, cfg).model;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double accuracy = 0.0;
  double auc = 0.0;
};

// Fraction of correct predictions, predicting positive when score > threshold.
inline double Accuracy(const Eigen::VectorXd& scores, const std::vector<int>& labels, double threshold = 0.5) {
  RequireSize(static_cast<std::size_t>(scores.size()), labels.size(), "scores");
  Require(!labels.empty(), ErrorCode::kInvalidArgument, "accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int predicted = scores(static_cast<Eigen::Index>(i)) > threshold ? 1 : 0;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

// Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 P(tie), computed from
// mid-ranks.
inline double Auc(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
  RequireSize(static_cast<std::size_t>(scores.size()), labels.size(), "scores");
  const std::size_t n = labels.size();
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::kSingleClassDataset, "AUC needs both classes");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) < scores(static_cast<Eigen::Index>(b));
  });
  double positive_rank_sum = 0.0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    const double value = scores(static_cast<Eigen::Index>(order[start]));
    while (end < n && scores(static_cast<Eigen::Index>(order[end])) == value) ++end;
    const double mid_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += mid_rank;
    }
    start = end;
  }
  return (positive_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

inline Metrics Evaluate(const ClassifierModel& m, const Dataset& ds) {
  Require(ds.size() > 0, ErrorCode::kInvalidArgument, "cannot evaluate on an empty dataset");
  const Eigen::VectorXd scores = PredictProbaBatch(m, ds.features);
  return {Accuracy(scores, ds.labels), Auc(scores, ds.labels)};
}

// ---------------------------------------------------------------------------
// Model selection

struct GridRow {
  ClassifierConfig config;
  Metrics train;
  Metrics validation;
};

struct GridSearchResult {
  ClassifierModel best;
  ClassifierConfig best_config;
  std::vector<GridRow> table;
};

// Logistic plus 3/5/10 hidden nodes, each at 100/150/200/250 epochs.
inline std::vector<ClassifierConfig> DefaultClassifierGrid(std::uint64_t seed = 0) {
  std::vector<ClassifierConfig> grid;
  for (std::size_t hidden : {0u, 3u, 5u, 10u}) {
    for (int epochs : {100, 150, 200, 250}) {
      grid.push_back(hidden == 0 ? ClassifierConfig::Logistic(epochs, seed)
                                 : ClassifierConfig::FeedForward(hidden, epochs, seed));
    }
  }
  return grid;
}

// Best = highest validation AUC; ties go to fewer parameters, then fewer
// epochs. Trainings may run on several threads; the outcome does not depend
// on the thread count.
inline GridSearchResult GridSearch(const Dataset& train, const Dataset& validation,
                                   const std::vector<ClassifierConfig>& grid, std::size_t threads = 1) {
  Require(!grid.empty(), ErrorCode::kInvalidArgument, "empty model grid");
  std::vector<ClassifierModel> models(grid.size());
  std::vector<GridRow> rows(grid.size());
  ParallelFor(grid.size(), threads, [&](std::size_t k) {
    models[k] = TrainClassifier(train, grid[k]);
    rows[k] = {grid[k], Evaluate(models[k], train), Evaluate(models[k], validation)};
  });
  const std::size_t p = train.num_features();
  std::size_t best = 0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const auto& a = rows[k];
    const auto& b = rows[best];
    if (a.validation.auc != b.validation.auc) {
      if (a.validation.auc > b.validation.auc) best = k;
      continue;
    }
    const std::size_t pa = a.config.ParameterCount(p);
    const std::size_t pb = b.config.ParameterCount(p);
    if (pa != pb) {
      if (pa < pb) best = k;
      continue;
    }
    if (a.config.epochs < b.config.epochs) best = k;
  }
  return {models[best], grid[best], std::move(rows)};
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json ClassifierToJson(const ClassifierModel& m) {
  nlohmann::ordered_json j;
  j["kind"] = "classifier";
  j["variant"] = std::string(VariantName(m.variant));
  const auto net = NetworkToJson(m.network);
  j["dims"] = net["dims"];
  j["weights"] = net["weights"];
  j["biases"] = net["biases"];
  j["hidden_activation"] = "relu";
  j["output_activation"] = "sigmoid";
  j["feature_names"] = m.feature_names;
  j["scaler_ref"] = m.scaler_ref;
  return j;
}

inline ClassifierModel ClassifierFromJson(const nlohmann::ordered_json& j) {
  try {
    ClassifierModel m;
    const auto variant = j.at("variant").get<std::string>();
    Require(variant == "Logistic" || variant == "FeedForward", ErrorCode::kParseError,
            "unknown classifier variant '" + variant + "'");
    m.variant = variant == "Logistic" ? ClassifierVariant::kLogistic : ClassifierVariant::kFeedForward;
    m.network = NetworkFromJson(j);
    Require(m.network.output_size() == 1, ErrorCode::kParseError, "classifier must have one output");
    Require((m.variant == ClassifierVariant::kLogistic) == (m.network.layers().size() == 1),
            ErrorCode::kParseError, "variant does not match the layer count");
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    RequireSize(m.feature_names.size(), m.network.input_size(), "classifier feature_names");
    m.scaler_ref = j.value("scaler_ref", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

}  // namespace fluidrx

#endif  // FLUIDRX_CLASSIFIER_HPP_

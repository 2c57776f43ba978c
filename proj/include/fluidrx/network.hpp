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

#ifndef FLUIDRX_NETWORK_HPP_
#define FLUIDRX_NETWORK_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluidrx/error.hpp"
#include "fluidrx/format.hpp"
#include "fluidrx/rng.hpp"

namespace fluidrx {

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out

  bool operator==(const DenseLayer& other) const {
    return weights.rows() == other.weights.rows() && weights.cols() == other.weights.cols() &&
           bias.size() == other.bias.size() && weights == other.weights && bias == other.bias;
  }
};

// Feed-forward network: ReLU after every layer except the last, whose output
// is left linear. Callers attach their own output head (sigmoid, identity).
class DenseNetwork {
 public:
  DenseNetwork() = default;
  explicit DenseNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    Require(!layers_.empty(), ErrorCode::kInvalidArgument, "network needs at least one layer");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      RequireSize(static_cast<std::size_t>(layers_[k].bias.size()),
                  static_cast<std::size_t>(layers_[k].weights.rows()), "layer bias");
      if (k > 0) {
        RequireSize(static_cast<std::size_t>(layers_[k].weights.cols()),
                    static_cast<std::size_t>(layers_[k - 1].weights.rows()), "layer input width");
      }
    }
  }

  // Glorot-uniform weights, zero biases. `widths` = {in, hidden..., out}.
  static DenseNetwork GlorotUniform(const std::vector<std::size_t>& widths, std::uint64_t seed) {
    Require(widths.size() >= 2, ErrorCode::kInvalidArgument, "need input and output widths");
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
      const auto in = static_cast<Eigen::Index>(widths[k]);
      const auto out = static_cast<Eigen::Index>(widths[k + 1]);
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = rng.Uniform(-limit, limit);
      }
      layers.push_back(std::move(layer));
    }
    return DenseNetwork(std::move(layers));
  }

  static DenseNetwork Zeros(const std::vector<std::size_t>& widths) {
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
      const auto in = static_cast<Eigen::Index>(widths[k]);
      const auto out = static_cast<Eigen::Index>(widths[k + 1]);
      layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    }
    return DenseNetwork(std::move(layers));
  }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  std::size_t input_size() const { return static_cast<std::size_t>(layers_.front().weights.cols()); }
  std::size_t output_size() const { return static_cast<std::size_t>(layers_.back().weights.rows()); }

  std::vector<std::size_t> Widths() const {
    std::vector<std::size_t> widths{input_size()};
    for (const auto& layer : layers_) widths.push_back(static_cast<std::size_t>(layer.weights.rows()));
    return widths;
  }

  std::size_t ParameterCount() const {
    std::size_t count = 0;
    for (const auto& layer : layers_) count += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    return count;
  }

  Eigen::VectorXd Forward(const Eigen::VectorXd& x) const {
    RequireSize(static_cast<std::size_t>(x.size()), input_size(), "network input");
    Eigen::VectorXd a = x;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      Eigen::VectorXd z = layers_[k].weights * a + layers_[k].bias;
      if (k + 1 < layers_.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return a;
  }

  // Rows of `x` are samples; returns one output row per sample.
  Eigen::MatrixXd ForwardBatch(const Eigen::MatrixXd& x) const {
    RequireSize(static_cast<std::size_t>(x.cols()), input_size(), "network input");
    Eigen::MatrixXd a = x;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      Eigen::MatrixXd z = a * layers_[k].weights.transpose();
      z.rowwise() += layers_[k].bias.transpose();
      if (k + 1 < layers_.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return a;
  }

  // Full Jacobian d(output)/d(input), output_size x input_size. ReLU uses
  // subgradient 0 at the kink.
  Eigen::MatrixXd Jacobian(const Eigen::VectorXd& x) const {
    RequireSize(static_cast<std::size_t>(x.size()), input_size(), "network input");
    Eigen::VectorXd a = x;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(x.size(), x.size());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      Eigen::VectorXd z = layers_[k].weights * a + layers_[k].bias;
      jac = layers_[k].weights * jac;
      if (k + 1 < layers_.size()) {
        for (Eigen::Index r = 0; r < z.size(); ++r) {
          if (z(r) <= 0.0) {
            jac.row(r).setZero();
            z(r) = 0.0;
          }
        }
      }
      a = std::move(z);
    }
    return jac;
  }

  // Parameter gradients of sum_i upstream_i . output_i over a batch.
  std::vector<DenseLayer> Backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& upstream) const {
    std::vector<Eigen::MatrixXd> activations{x};
    std::vector<Eigen::MatrixXd> pre;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      Eigen::MatrixXd z = activations.back() * layers_[k].weights.transpose();
      z.rowwise() += layers_[k].bias.transpose();
      pre.push_back(z);
      activations.push_back(k + 1 < layers_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
    }
    std::vector<DenseLayer> grads(layers_.size());
    Eigen::MatrixXd delta = upstream;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      grads[k].weights = delta.transpose() * activations[k];
      grads[k].bias = delta.colwise().sum().transpose();
      if (k > 0) {
        delta = (delta * layers_[k].weights).cwiseProduct(
            (pre[k - 1].array() > 0.0).cast<double>().matrix());
      }
    }
    return grads;
  }

  bool operator==(const DenseNetwork&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

struct AdamOptions {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction, one moment pair per parameter tensor.
class AdamState {
 public:
  AdamState(const DenseNetwork& net, AdamOptions options) : options_(options) {
    for (const auto& layer : net.layers()) {
      m_.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                    Eigen::VectorXd::Zero(layer.bias.size())});
      v_.push_back(m_.back());
    }
  }

  void Step(DenseNetwork& net, const std::vector<DenseLayer>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    auto& layers = net.mutable_layers();
    for (std::size_t k = 0; k < layers.size(); ++k) {
      Update(layers[k].weights, grads[k].weights, m_[k].weights, v_[k].weights, c1, c2);
      Update(layers[k].bias, grads[k].bias, m_[k].bias, v_[k].bias, c1, c2);
    }
  }

 private:
  template <typename Param, typename Grad, typename Moment>
  void Update(Param& param, const Grad& grad, Moment& m, Moment& v, double c1, double c2) {
    m = options_.beta1 * m + (1.0 - options_.beta1) * grad;
    v = options_.beta2 * v + (1.0 - options_.beta2) * grad.cwiseProduct(grad);
    param.array() -= options_.learning_rate * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + options_.epsilon);
  }

  AdamOptions options_;
  std::vector<DenseLayer> m_;
  std::vector<DenseLayer> v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Serialization. Every value is written as its shortest round-trip decimal
// string, so load(save(net)) reproduces the weights bit for bit.

inline nlohmann::ordered_json NetworkToJson(const DenseNetwork& net) {
  nlohmann::ordered_json dims = nlohmann::ordered_json::array();
  for (std::size_t w : net.Widths()) dims.push_back(w);
  nlohmann::ordered_json weights = nlohmann::ordered_json::array();
  nlohmann::ordered_json biases = nlohmann::ordered_json::array();
  for (const auto& layer : net.layers()) {
    nlohmann::ordered_json w = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(FormatDouble(layer.weights(r, c)));
    }
    nlohmann::ordered_json b = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) b.push_back(FormatDouble(layer.bias(r)));
    weights.push_back(std::move(w));
    biases.push_back(std::move(b));
  }
  return {{"dims", std::move(dims)}, {"weights", std::move(weights)}, {"biases", std::move(biases)}};
}

namespace detail {

inline double JsonNumber(const nlohmann::ordered_json& value) {
  if (value.is_string()) return ParseDouble(value.get<std::string>());
  Require(value.is_number(), ErrorCode::kParseError, "expected a number or numeric string");
  return value.get<double>();
}

}  // namespace detail

inline DenseNetwork NetworkFromJson(const nlohmann::ordered_json& j) {
  try {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    Require(dims.size() >= 2 && weights.size() + 1 == dims.size() && biases.size() + 1 == dims.size(),
            ErrorCode::kParseError, "network dims do not match the layer arrays");
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      const auto in = static_cast<Eigen::Index>(dims[k]);
      const auto out = static_cast<Eigen::Index>(dims[k + 1]);
      Require(weights[k].size() == static_cast<std::size_t>(in * out) &&
                  biases[k].size() == static_cast<std::size_t>(out),
              ErrorCode::kParseError, "layer " + std::to_string(k) + " has the wrong size");
      DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) {
          layer.weights(r, c) = detail::JsonNumber(weights[k][static_cast<std::size_t>(r * in + c)]);
        }
        layer.bias(r) = detail::JsonNumber(biases[k][static_cast<std::size_t>(r)]);
      }
      layers.push_back(std::move(layer));
    }
    return DenseNetwork(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

}  // namespace fluidrx

#endif  // FLUIDRX_NETWORK_HPP_

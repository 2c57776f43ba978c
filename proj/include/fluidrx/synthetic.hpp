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

#ifndef FLUIDRX_SYNTHETIC_HPP_
#define FLUIDRX_SYNTHETIC_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluidrx/dataset.hpp"
#include "fluidrx/error.hpp"
#include "fluidrx/rng.hpp"

namespace fluidrx {

// Five-number summary (plus mean) of one clinical feature. For binary
// features only `mean` matters: it is the probability of a 1.
struct SyntheticFeature {
  std::string name;
  FeatureCategory category = FeatureCategory::kIndirect;
  std::string units;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  bool binary = false;
  std::optional<double> effect;  // latent mortality weight; drawn when absent

  std::array<double, 5> Knots() const { return {min, q1, median, q3, max}; }

  // Piecewise-linear inverse CDF through (0,min) (.25,q1) (.5,median)
  // (.75,q3) (1,max).
  double InverseCdf(double p) const {
    const auto knots = Knots();
    p = std::clamp(p, 0.0, 1.0);
    const double scaled = p * 4.0;
    const auto segment = std::min<std::size_t>(static_cast<std::size_t>(scaled), 3);
    const double t = scaled - static_cast<double>(segment);
    return knots[segment] + t * (knots[segment + 1] - knots[segment]);
  }

  // Largest p with InverseCdf(p) <= value; flat stretches map to their top.
  double Cdf(double value) const {
    const auto knots = Knots();
    if (value >= knots[4]) return 1.0;
    if (value < knots[0]) return 0.0;
    std::size_t k = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      if (knots[s] <= value) k = s;
    }
    return 0.25 * (static_cast<double>(k) + (value - knots[k]) / (knots[k + 1] - knots[k]));
  }
};

struct SyntheticSpec {
  std::vector<SyntheticFeature> features;
  double positive_rate = 0.22;
  double noise_sd = 0.05;
  std::uint64_t structure_seed = 0;

  void Validate() const {
    Require(!features.empty(), ErrorCode::kInvalidSpec, "spec has no features");
    Require(positive_rate > 0.0 && positive_rate < 1.0, ErrorCode::kInvalidSpec,
            "positive_rate must lie in (0,1)");
    Require(noise_sd >= 0.0, ErrorCode::kInvalidSpec, "noise_sd must be non-negative");
    bool has_direct = false;
    for (const auto& f : features) {
      Require(!f.name.empty(), ErrorCode::kInvalidSpec, "feature with empty name");
      if (f.binary) {
        Require(f.mean >= 0.0 && f.mean <= 1.0, ErrorCode::kInvalidSpec,
                "binary feature '" + f.name + "' needs mean in [0,1]");
      } else {
        Require(f.min <= f.q1 && f.q1 <= f.median && f.median <= f.q3 && f.q3 <= f.max &&
                    f.min < f.max,
                ErrorCode::kInvalidSpec,
                "feature '" + f.name + "' violates min <= q1 <= median <= q3 <= max");
      }
      has_direct = has_direct || f.category == FeatureCategory::kDirect;
    }
    Require(has_direct, ErrorCode::kInvalidSpec, "spec has no directly changeable feature");
  }

  std::vector<FeatureMeta> Meta() const {
    std::vector<FeatureMeta> meta;
    for (const auto& f : features) {
      meta.push_back({f.name, f.category, f.units, f.binary ? 0.0 : f.min,
                      f.binary ? 1.0 : f.max, f.binary});
    }
    return meta;
  }
};

// Hidden structure of a spec: the mixing matrix that generates indirect
// features from standardized (U, D) columns, the planted D partner of every
// indirect feature, and the latent mortality weights. Fixed per spec.
struct SyntheticStructure {
  FeaturePartition partition;
  Eigen::MatrixXd mixing;                 // |I| x (|U| + |D|), columns U then D
  std::vector<std::size_t> partner;       // per I row: feature index of its D partner
  Eigen::VectorXd effects;                // one weight per feature
};

inline SyntheticStructure BuildStructure(const SyntheticSpec& spec) {
  spec.Validate();
  SyntheticStructure s;
  s.partition = FeaturePartition::FromMeta(spec.Meta());
  const std::size_t n_u = s.partition.u_indices.size();
  const std::size_t n_d = s.partition.d_indices.size();
  const std::size_t n_i = s.partition.i_indices.size();
  Rng rng(spec.structure_seed);
  s.mixing.resize(static_cast<Eigen::Index>(n_i), static_cast<Eigen::Index>(n_u + n_d));
  for (Eigen::Index r = 0; r < s.mixing.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.mixing.cols(); ++c) s.mixing(r, c) = rng.Uniform(-0.25, 0.25);
  }
  for (std::size_t k = 0; k < n_i; ++k) {
    const std::size_t d_slot = k % n_d;
    const double sign = rng.Uniform() < 0.5 ? -1.0 : 1.0;
    s.mixing(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n_u + d_slot)) = 0.5 * sign;
    s.partner.push_back(s.partition.d_indices[d_slot]);
  }
  s.effects.resize(static_cast<Eigen::Index>(spec.features.size()));
  for (std::size_t j = 0; j < spec.features.size(); ++j) {
    const auto& e = spec.features[j].effect;
    s.effects(static_cast<Eigen::Index>(j)) = e ? *e : rng.Uniform(-1.0, 1.0);
  }
  return s;
}

namespace detail {

inline double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Intercept for which the mean predicted rate over `logits` equals `target`.
inline double SolveIntercept(const Eigen::VectorXd& logits, double target) {
  double lo = -60.0;
  double hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) mean += Sigmoid(logits(i) + mid);
    mean /= static_cast<double>(logits.size());
    (mean < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Draws a raw-unit cohort:
//  * U and D features from their quantile-interpolated distributions, using
//    stratified uniforms;
//  * I features as mixing * standardized(U, D) + Normal(0, noise_sd), pushed
//    through their own quantile distribution by rank, so marginals match the
//    summary while the dependence on (U, D) stays monotone;
//  * labels ~ Bernoulli(sigmoid(effects . (cdf(x) - 0.5) + intercept)) with
//    the intercept solved so the expected positive rate is exact.
inline Dataset GenerateSynthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed) {
  Require(n >= 100, ErrorCode::kInvalidSpec, "synthetic cohort needs n >= 100");
  const SyntheticStructure structure = BuildStructure(spec);
  const auto& part = structure.partition;
  const auto p = static_cast<Eigen::Index>(spec.features.size());
  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd x(rows, p);
  Rng rng(seed);

  std::vector<std::size_t> inputs = part.u_indices;
  inputs.insert(inputs.end(), part.d_indices.begin(), part.d_indices.end());

  // Stratified uniforms: one draw per 1/n slice in shuffled order, so the
  // empirical quantiles of every column sit within 1/n of the targets.
  std::vector<std::size_t> slice(n);
  for (std::size_t j : inputs) {
    const auto& f = spec.features[j];
    std::iota(slice.begin(), slice.end(), std::size_t{0});
    rng.Shuffle(slice);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double u = (static_cast<double>(slice[static_cast<std::size_t>(i)]) + rng.Uniform()) / static_cast<double>(n);
      x(i, static_cast<Eigen::Index>(j)) = f.binary ? (u < f.mean ? 1.0 : 0.0) : f.InverseCdf(u);
    }
  }

  Eigen::MatrixXd standardized(rows, static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t c = 0; c < inputs.size(); ++c) {
    const Eigen::VectorXd column = x.col(static_cast<Eigen::Index>(inputs[c]));
    const double mean = column.mean();
    const double sd = std::sqrt((column.array() - mean).square().mean());
    standardized.col(static_cast<Eigen::Index>(c)) =
        sd > 0 ? Eigen::VectorXd((column.array() - mean) / sd) : Eigen::VectorXd::Zero(rows);
  }

  if (!part.i_indices.empty()) {
    Eigen::MatrixXd latent = standardized * structure.mixing.transpose();
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index k = 0; k < latent.cols(); ++k) latent(i, k) += rng.Normal(0.0, spec.noise_sd);
    }
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < part.i_indices.size(); ++k) {
      const std::size_t j = part.i_indices[k];
      const auto& f = spec.features[j];
      std::iota(order.begin(), order.end(), std::size_t{0});
      const auto col = static_cast<Eigen::Index>(k);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return latent(static_cast<Eigen::Index>(a), col) < latent(static_cast<Eigen::Index>(b), col);
      });
      for (std::size_t rank = 0; rank < n; ++rank) {
        const double prob = (static_cast<double>(rank) + 0.5) / static_cast<double>(n);
        x(static_cast<Eigen::Index>(order[rank]), static_cast<Eigen::Index>(j)) =
            f.binary ? (prob > 1.0 - f.mean ? 1.0 : 0.0) : f.InverseCdf(prob);
      }
    }
  }

  Eigen::VectorXd logits = Eigen::VectorXd::Zero(rows);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& f = spec.features[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double position = f.binary ? x(i, j) : f.Cdf(x(i, j));
      logits(i) += structure.effects(j) * (position - 0.5);
    }
  }
  const double intercept = detail::SolveIntercept(logits, spec.positive_rate);
  std::vector<int> labels(n);
  for (Eigen::Index i = 0; i < rows; ++i) {
    labels[static_cast<std::size_t>(i)] = rng.Uniform() < detail::Sigmoid(logits(i) + intercept) ? 1 : 0;
  }
  return Dataset(spec.Meta(), std::move(x), std::move(labels));
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json SyntheticSpecToJson(const SyntheticSpec& spec) {
  nlohmann::ordered_json features = nlohmann::ordered_json::object();
  for (const auto& f : spec.features) {
    nlohmann::ordered_json item = {{"category", std::string(CategoryName(f.category))},
                                   {"units", f.units},
                                   {"min", f.min},
                                   {"q1", f.q1},
                                   {"median", f.median},
                                   {"mean", f.mean},
                                   {"q3", f.q3},
                                   {"max", f.max}};
    if (f.binary) item["binary"] = true;
    if (f.effect) item["effect"] = *f.effect;
    features[f.name] = std::move(item);
  }
  return {{"positive_rate", spec.positive_rate},
          {"noise_sd", spec.noise_sd},
          {"structure_seed", spec.structure_seed},
          {"features", std::move(features)}};
}

inline SyntheticSpec SyntheticSpecFromJson(const nlohmann::ordered_json& j) {
  Require(j.is_object() && j.contains("features") && j["features"].is_object(),
          ErrorCode::kInvalidSpec, "spec JSON needs a 'features' object keyed by name");
  SyntheticSpec spec;
  spec.positive_rate = j.value("positive_rate", 0.22);
  spec.noise_sd = j.value("noise_sd", 0.05);
  spec.structure_seed = j.value("structure_seed", std::uint64_t{0});
  try {
    for (const auto& [name, item] : j["features"].items()) {
      SyntheticFeature f;
      f.name = name;
      f.category = ParseCategory(item.at("category").get<std::string>());
      f.units = item.value("units", "");
      f.binary = item.value("binary", false);
      f.mean = item.at("mean").get<double>();
      if (!f.binary) {
        f.min = item.at("min").get<double>();
        f.q1 = item.at("q1").get<double>();
        f.median = item.at("median").get<double>();
        f.q3 = item.at("q3").get<double>();
        f.max = item.at("max").get<double>();
      } else {
        f.min = item.value("min", 0.0);
        f.q1 = item.value("q1", 0.0);
        f.median = item.value("median", 0.0);
        f.q3 = item.value("q3", 1.0);
        f.max = item.value("max", 1.0);
      }
      if (item.contains("effect")) f.effect = item["effect"].get<double>();
      spec.features.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidSpec, e.what());
  }
  spec.Validate();
  return spec;
}

inline SyntheticSpec LoadSyntheticSpec(const std::string& path) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIoError, "cannot open '" + path + "'");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
  return SyntheticSpecFromJson(j);
}

// ---------------------------------------------------------------------------
// Built-in cohort summary.
//
// Vitals, labs, age and weight reproduce the published ICU sepsis cohort
// summary verbatim, implausible extremes included (pH max 53.5, systolic BP
// min 0). Gender and the nine IV fluid amounts (mL per visit, zero when not
// prescribed) have no published summary and are set by hand. Effects are
// the latent mortality weights; fluids without an effect entry get zero.
inline SyntheticSpec DefaultSepsisSpec() {
  using C = FeatureCategory;
  auto vital = [](std::string name, std::string units, double mn, double q1, double med,
                  double mean, double q3, double mx, std::optional<double> effect = 0.0) {
    return SyntheticFeature{std::move(name), C::kIndirect, std::move(units), mn, q1, med, mean, q3, mx,
                            false, effect};
  };
  auto fluid = [](std::string name, double q1, double med, double mean, double q3, double mx,
                  double effect) {
    return SyntheticFeature{std::move(name), C::kDirect, "mL", 0.0, q1, med, mean, q3, mx, false, effect};
  };
  SyntheticSpec spec;
  spec.positive_rate = 0.22;
  spec.noise_sd = 0.05;
  spec.structure_seed = 20;
  spec.features = {
      vital("base_excess", "mEq/L", -31.0, -5.0, -2.3, -2.7, 0.0, 16.5, -2.0),
      vital("blood_co2", "mEq/L", 4.5, 19.8, 22.6, 22.8, 25.8, 44.0),
      vital("blood_hemoglobin", "g/dL", 6.0, 9.1, 9.9, 10.1, 11.0, 19.5),
      vital("blood_urea_nitrogen", "mg/dL", 1.0, 17.0, 29.0, 36.01, 48.2, 212.5, 3.0),
      vital("body_temperature", "F", 47.4, 97.5, 98.1, 98.1, 98.8, 107.2),
      vital("diastolic_bp", "mmHg", 18.0, 50.8, 56.4, 57.1, 63.0, 90.3, -2.4),
      vital("gcs", "score", 3.0, 10.6, 13.9, 12.5, 15.0, 15.0, -8.0),
      vital("heart_rate", "/min", 46.6, 78.4, 88.2, 89.0, 98.9, 137.3, 4.0),
      vital("hematocrit", "%", 19.7, 27.8, 29.9, 30.7, 32.9, 61.6),
      vital("lactate", "mg/dL", 0.6, 1.5, 2.0, 2.5, 2.9, 18.3, 4.0),
      vital("o2_flow", "L/min", 0.3, 2.2, 3.4, 5.1, 6.3, 100.0),
      vital("paco2", "mmHg", 19.0, 33.6, 38.5, 39.8, 43.8, 121.0),
      vital("pao2", "mmHg", 27.0, 83.0, 104.1, 108.1, 127.5, 350.0),
      vital("ph", "pH", 2.4, 7.3, 7.4, 7.4, 7.4, 53.5),
      vital("po2", "mmHg", 26.0, 73.3, 100.0, 103.9, 126.7, 467.0),
      vital("pt", "s", 11.6, 13.8, 14.9, 16.6, 17.6, 55.2),
      vital("ptt", "s", 14.9, 24.0, 27.9, 31.7, 35.4, 128.3),
      vital("platelet_count", "x1000/mm3", 16.8, 145.7, 215.3, 227.5, 288.0, 985.0, -1.6),
      vital("respiratory_rate", "/min", 10.7, 17.7, 20.3, 20.5, 22.9, 38.1, 4.0),
      vital("serum_creatinine", "mg/dL", 0.2, 0.8, 1.2, 1.9, 2.0, 141.9, 1.6),
      vital("serum_chloride", "mEq/L", 84.0, 102.6, 106.2, 106.1, 109.6, 137.6),
      vital("serum_glucose", "mg/dL", 30.3, 107.9, 126.7, 135.4, 150.8, 447.7),
      vital("serum_magnesium", "mEq/L", 1.1, 1.8, 2.0, 2.0, 2.1, 18.3),
      vital("serum_potassium", "mEq/L", 2.7, 3.7, 4.0, 4.1, 4.3, 7.3),
      vital("serum_sodium", "mEq/L", 118.3, 136.9, 139.2, 139.3, 141.8, 163.1),
      vital("systolic_bp", "mmHg", 0.0, 102.2, 109.9, 111.7, 120.7, 210.1, -4.0),
      vital("wbc_count", "x1000/mm3", 0.5, 8.3, 11.7, 13.2, 15.8, 97.1, 1.6),
      {"age", C::kUnchangeable, "years", 19.0, 56.3, 68.0, 66.4, 79.0, 89.0, false, 7.0},
      {"weight", C::kUnchangeable, "kg", 0.0, 63.8, 76.8, 80.3, 90.8, 233.9, false, 0.0},
      {"gender", C::kUnchangeable, "male=1", 0.0, 0.0, 1.0, 0.55, 1.0, 1.0, true, 0.0},
      fluid("D10W", 0.0, 0.0, 60.0, 100.0, 400.0, 0.0),
      fluid("D5HNS", 0.0, 150.0, 180.0, 300.0, 600.0, -0.6),
      fluid("D5LR", 0.0, 200.0, 230.0, 400.0, 800.0, -0.8),
      fluid("D5NS", 0.0, 0.0, 70.0, 120.0, 500.0, 0.0),
      fluid("D5W", 0.0, 150.0, 190.0, 320.0, 700.0, 0.5),
      fluid("DNS", 0.0, 0.0, 40.0, 60.0, 300.0, 0.0),
      fluid("HNS", 0.0, 0.0, 70.0, 120.0, 500.0, 0.0),
      fluid("LR", 0.0, 400.0, 420.0, 700.0, 1400.0, -1.2),
      fluid("NS", 100.0, 500.0, 540.0, 900.0, 1800.0, -1.0),
  };
  spec.Validate();
  return spec;
}

}  // namespace fluidrx

#endif  // FLUIDRX_SYNTHETIC_HPP_

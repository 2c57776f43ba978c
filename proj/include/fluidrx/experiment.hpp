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

#ifndef FLUIDRX_EXPERIMENT_HPP_
#define FLUIDRX_EXPERIMENT_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluidrx/classifier.hpp"
#include "fluidrx/dataset.hpp"
#include "fluidrx/format.hpp"
#include "fluidrx/ife.hpp"
#include "fluidrx/optimizer.hpp"
#include "fluidrx/parallel.hpp"
#include "fluidrx/rng.hpp"

namespace fluidrx {

inline std::vector<double> DefaultBudgets() {
  std::vector<double> budgets;
  for (int k = 1; k <= 10; ++k) budgets.push_back(k / 10.0);
  return budgets;
}

// Request for one scaled record with the physician prescription taken from
// its observed x_D.
inline RecommendationRequest RequestForRecord(const IfeModel& h, const Dataset& ds, std::size_t row, double budget) {
  RequireSize(ds.num_features(), h.u_indices.size() + h.i_indices.size() + h.d_indices.size(), "dataset width");
  const Eigen::VectorXd x = ds.features.row(static_cast<Eigen::Index>(row)).transpose();
  auto gather = [&](const std::vector<std::size_t>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = x(static_cast<Eigen::Index>(idx[k]));
    return out;
  };
  return {gather(h.u_indices), gather(h.i_indices), gather(h.d_indices), budget, {}};
}

struct SweepRow {
  double budget = 0.0;
  double mean_prob = 0.0;
  double std_prob = 0.0;
  double mean_rel_improvement = 0.0;
  double std_rel_improvement = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;                               // one per budget, input order
  std::vector<std::vector<RecommendationResult>> results;  // [budget][instance]
};

namespace detail {

inline std::pair<double, double> MeanStd(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

inline SweepRow Aggregate(double budget, const std::vector<RecommendationResult>& results) {
  std::vector<double> probs;
  std::vector<double> rel;
  for (const auto& r : results) {
    Require(r.objective_before > 0.0, ErrorCode::kInvalidArgument, "baseline probability must be positive");
    probs.push_back(r.prob_after);
    rel.push_back((r.objective_before - r.prob_after) / r.objective_before);
  }
  const auto [mp, sp] = MeanStd(probs);
  const auto [mr, sr] = MeanStd(rel);
  return {budget, mp, sp, mr, sr};
}

}  // namespace detail

// Optimizes one request at every budget. Budgets are visited in ascending
// order and the optimum of the previous budget seeds the next one, so the
// returned objective is non-increasing in the budget. Results come back in
// input order; req.budget and req.warm_starts are ignored.
inline std::vector<RecommendationResult> SweepRequest(const ClassifierModel& f, const IfeModel& h,
                                                      RecommendationRequest req, const std::vector<double>& budgets,
                                                      const OptimizeConfig& cfg) {
  Require(!budgets.empty(), ErrorCode::kInvalidArgument, "no budgets");
  for (double b : budgets) {
    if (!(b >= 0.0)) throw Error(ErrorCode::kNegativeBudget, "budgets must be >= 0");
  }
  std::vector<std::size_t> order(budgets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return budgets[a] < budgets[b]; });

  std::vector<RecommendationResult> results(budgets.size());
  req.warm_starts.clear();
  for (std::size_t b : order) {
    req.budget = budgets[b];
    results[b] = OptimizeRecommendation(f, h, req, cfg);
    req.warm_starts = {results[b].x_d_optimized};
  }
  return results;
}

// Sweeps every test record. `centers`, when given, replaces the observed x_D
// as start point and ball centre. Aggregates use population standard
// deviations and the per-record relative improvement against the objective
// at the start point.
inline SweepReport RunSweepFrom(const ClassifierModel& f, const IfeModel& h, const Dataset& test,
                                const std::vector<double>& budgets, const OptimizeConfig& cfg,
                                const std::vector<Eigen::VectorXd>* centers, std::size_t threads) {
  Require(test.size() > 0, ErrorCode::kInvalidArgument, "empty test set");
  Require(!budgets.empty(), ErrorCode::kInvalidArgument, "no budgets");
  if (centers) RequireSize(centers->size(), test.size(), "start points");
  cfg.Validate();

  SweepReport report;
  report.results.assign(budgets.size(), std::vector<RecommendationResult>(test.size()));
  ParallelFor(test.size(), threads, [&](std::size_t i) {
    RecommendationRequest req = RequestForRecord(h, test, i, 0.0);
    if (centers) req.x_d_physician = (*centers)[i];
    std::vector<RecommendationResult> results = SweepRequest(f, h, std::move(req), budgets, cfg);
    for (std::size_t b = 0; b < budgets.size(); ++b) report.results[b][i] = std::move(results[b]);
  });
  for (std::size_t b = 0; b < budgets.size(); ++b) {
    report.rows.push_back(detail::Aggregate(budgets[b], report.results[b]));
  }
  return report;
}

inline SweepReport RunBudgetSweep(const ClassifierModel& f, const IfeModel& h, const Dataset& test,
                                  const std::vector<double>& budgets, const OptimizeConfig& cfg,
                                  std::size_t threads = 1) {
  return RunSweepFrom(f, h, test, budgets, cfg, nullptr, threads);
}

struct RobustnessReport {
  SweepReport hitl;    // starts at the observed prescription
  SweepReport random;  // starts at a uniform draw per D feature
  std::vector<Eigen::VectorXd> random_starts;
};

// Both arms run on the same records and budgets. In the random arm the draw
// plays the role of the physician input, so the budget ball is centred on it.
inline RobustnessReport RunRobustness(const ClassifierModel& f, const IfeModel& h, const Dataset& test,
                                      const std::vector<double>& budgets, const OptimizeConfig& cfg,
                                      double init_lo, double init_hi, std::uint64_t seed,
                                      std::size_t threads = 1) {
  Require(0.0 <= init_lo && init_lo <= init_hi && init_hi <= 1.0, ErrorCode::kInvalidArgument,
          "random init range must satisfy 0 <= lo <= hi <= 1");
  RobustnessReport report;
  Rng rng(seed);
  for (std::size_t i = 0; i < test.size(); ++i) {
    Eigen::VectorXd start(static_cast<Eigen::Index>(h.d_indices.size()));
    for (Eigen::Index k = 0; k < start.size(); ++k) start(k) = init_lo == init_hi ? init_lo : rng.Uniform(init_lo, init_hi);
    report.random_starts.push_back(std::move(start));
  }
  report.hitl = RunSweepFrom(f, h, test, budgets, cfg, nullptr, threads);
  report.random = RunSweepFrom(f, h, test, budgets, cfg, &report.random_starts, threads);
  return report;
}

struct AvgRecRow {
  double budget = 0.0;
  std::string feature;
  std::string stratum;  // "positive" or "negative"
  double mean_delta = 0.0;
  std::size_t n = 0;
};

struct AvgRecReport {
  std::vector<AvgRecRow> rows;
};

// Mean recommended change per D feature, split by whether the record's
// predicted mortality before optimization exceeds `threshold`. Empty strata
// produce no rows.
inline AvgRecReport SummarizeAvgRecs(const std::vector<double>& budgets,
                                     const std::vector<std::vector<RecommendationResult>>& results,
                                     const std::vector<std::string>& d_names, double threshold = 0.5) {
  RequireSize(results.size(), budgets.size(), "results per budget");
  AvgRecReport report;
  for (std::size_t b = 0; b < budgets.size(); ++b) {
    Require(!results[b].empty(), ErrorCode::kInvalidArgument, "no results to summarize");
    for (const bool positive : {true, false}) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d_names.size()));
      std::size_t n = 0;
      for (const auto& r : results[b]) {
        if ((r.prob_before > threshold) != positive) continue;
        RequireSize(static_cast<std::size_t>(r.delta.size()), d_names.size(), "delta");
        sum += r.delta;
        ++n;
      }
      if (n == 0) continue;
      for (std::size_t k = 0; k < d_names.size(); ++k) {
        report.rows.push_back({budgets[b], d_names[k], positive ? "positive" : "negative",
                               sum(static_cast<Eigen::Index>(k)) / static_cast<double>(n), n});
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report output

inline void WriteSweepCsv(std::ostream& out, const SweepReport& report) {
  out << "budget,mean_prob,std_prob,mean_rel_improvement,std_rel_improvement\n";
  for (const auto& r : report.rows) {
    out << FormatDouble(r.budget) << ',' << FormatDouble(r.mean_prob) << ',' << FormatDouble(r.std_prob) << ','
        << FormatDouble(r.mean_rel_improvement) << ',' << FormatDouble(r.std_rel_improvement) << '\n';
  }
}

inline void WriteAvgRecsCsv(std::ostream& out, const AvgRecReport& report) {
  out << "budget,feature,stratum,mean_delta,n\n";
  for (const auto& r : report.rows) {
    out << FormatDouble(r.budget) << ',' << r.feature << ',' << r.stratum << ',' << FormatDouble(r.mean_delta)
        << ',' << r.n << '\n';
  }
}

inline void WriteRobustnessCsv(std::ostream& out, const RobustnessReport& report) {
  out << "arm,budget,mean_prob,std_prob,mean_rel_improvement,std_rel_improvement\n";
  for (const auto* arm : {&report.hitl, &report.random}) {
    const char* name = arm == &report.hitl ? "hitl" : "random";
    for (const auto& r : arm->rows) {
      out << name << ',' << FormatDouble(r.budget) << ',' << FormatDouble(r.mean_prob) << ','
          << FormatDouble(r.std_prob) << ',' << FormatDouble(r.mean_rel_improvement) << ','
          << FormatDouble(r.std_rel_improvement) << '\n';
    }
  }
}

inline nlohmann::ordered_json SweepToJson(const SweepReport& report) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"budget", r.budget},
                    {"mean_prob", r.mean_prob},
                    {"std_prob", r.std_prob},
                    {"mean_rel_improvement", r.mean_rel_improvement},
                    {"std_rel_improvement", r.std_rel_improvement}});
  }
  double before = 0.0;
  double baseline = 0.0;
  const auto& first = report.results.front();
  for (const auto& r : first) {
    before += r.prob_before;
    baseline += r.objective_before;
  }
  return {{"instances", first.size()},
          {"mean_prob_before_observed", before / static_cast<double>(first.size())},
          {"mean_objective_before", baseline / static_cast<double>(first.size())},
          {"rows", std::move(rows)}};
}

inline nlohmann::ordered_json AvgRecsToJson(const AvgRecReport& report) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"budget", r.budget},
                    {"feature", r.feature},
                    {"stratum", r.stratum},
                    {"mean_delta", r.mean_delta},
                    {"n", r.n}});
  }
  return rows;
}

inline nlohmann::ordered_json RobustnessToJson(const RobustnessReport& report) {
  return {{"hitl", SweepToJson(report.hitl)}, {"random", SweepToJson(report.random)}};
}

}  // namespace fluidrx

#endif  // FLUIDRX_EXPERIMENT_HPP_

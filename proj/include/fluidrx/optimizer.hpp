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

#ifndef FLUIDRX_OPTIMIZER_HPP_
#define FLUIDRX_OPTIMIZER_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "json.hpp"

#include "fluidrx/classifier.hpp"
#include "fluidrx/error.hpp"
#include "fluidrx/ife.hpp"
#include "fluidrx/projection.hpp"

namespace fluidrx {

struct OptimizeConfig {
  double budget = 0.5;  // default when building requests; requests carry their own
  double step_size = 0.05;
  int max_iters = 200;
  double convergence_tol = 1e-6;
  std::uint64_t seed = 0;  // reserved for randomized tie-breaking; unused

  void Validate() const {
    if (!(budget >= 0.0)) throw Error(ErrorCode::kNegativeBudget, "budget must be >= 0");
    Require(step_size > 0, ErrorCode::kInvalidArgument, "step_size must be positive");
    Require(max_iters >= 1, ErrorCode::kInvalidArgument, "max_iters must be >= 1");
    Require(convergence_tol > 0, ErrorCode::kInvalidArgument, "convergence_tol must be positive");
  }
};

// All vectors are in normalized [0,1] units, ordered like the model's
// partition blocks.
struct RecommendationRequest {
  Eigen::VectorXd x_u;
  Eigen::VectorXd x_i_observed;   // only used for prob_before
  Eigen::VectorXd x_d_physician;  // centre of the budget ball and first start point
  double budget = 0.0;
  // Extra feasible start points (e.g. the optimum found for a smaller
  // budget). PGD also runs from each; the best point overall is returned.
  std::vector<Eigen::VectorXd> warm_starts;
};

struct TrajectoryPoint {
  int iter = 0;
  double objective = 0.0;
};

struct RecommendationResult {
  Eigen::VectorXd x_d_optimized;
  Eigen::VectorXd delta;          // x_d_optimized - x_d_physician
  Eigen::VectorXd x_i_predicted;  // H output at the optimum, clamped to [0,1]
  double prob_before = 0.0;       // f at the physician point with observed x_I
  double objective_before = 0.0;  // f at the physician point with predicted x_I
  double prob_after = 0.0;        // f at the optimum with predicted x_I
  std::vector<TrajectoryPoint> trajectory;
  bool converged = false;
  int iters_used = 0;
};

// f(x_U, clamp(H(x_U, x_D)), x_D) for fixed x_U, with its analytic gradient
// in x_D. The clamp passes the gradient through inside [0,1] and blocks it
// outside.
class ComposedObjective {
 public:
  ComposedObjective(const ClassifierModel& f, const IfeModel& h, Eigen::VectorXd x_u)
      : f_(f), h_(h), x_u_(std::move(x_u)) {
    RequireSize(f_.num_features(), h_.u_indices.size() + h_.i_indices.size() + h_.d_indices.size(),
                "classifier width vs IFE partition");
    RequireSize(static_cast<std::size_t>(x_u_.size()), h_.u_indices.size(), "x_u");
  }

  Eigen::VectorXd Assemble(const Eigen::VectorXd& x_i, const Eigen::VectorXd& x_d) const {
    RequireSize(static_cast<std::size_t>(x_i.size()), h_.i_indices.size(), "x_i");
    RequireSize(static_cast<std::size_t>(x_d.size()), h_.d_indices.size(), "x_d");
    Eigen::VectorXd x(static_cast<Eigen::Index>(f_.num_features()));
    Scatter(x, h_.u_indices, x_u_);
    Scatter(x, h_.i_indices, x_i);
    Scatter(x, h_.d_indices, x_d);
    return x;
  }

  Eigen::VectorXd PredictedIndirect(const Eigen::VectorXd& x_d) const {
    return PredictIndirect(h_, x_u_, x_d).cwiseMax(0.0).cwiseMin(1.0);
  }

  double Value(const Eigen::VectorXd& x_d) const {
    return PredictProba(f_, Assemble(PredictedIndirect(x_d), x_d));
  }

  Eigen::VectorXd Gradient(const Eigen::VectorXd& x_d) const {
    const Eigen::VectorXd raw_i = PredictIndirect(h_, x_u_, x_d);
    const Eigen::VectorXd x = Assemble(raw_i.cwiseMax(0.0).cwiseMin(1.0), x_d);
    const Eigen::VectorXd grad_x = GradientWrtInput(f_, x);
    Eigen::VectorXd grad_i = Gather(grad_x, h_.i_indices);
    for (Eigen::Index k = 0; k < raw_i.size(); ++k) {
      if (raw_i(k) < 0.0 || raw_i(k) > 1.0) grad_i(k) = 0.0;
    }
    return Gather(grad_x, h_.d_indices) + IfeJacobian(h_, x_u_, x_d).transpose() * grad_i;
  }

  const Eigen::VectorXd& x_u() const { return x_u_; }

 private:
  static void Scatter(Eigen::VectorXd& x, const std::vector<std::size_t>& idx, const Eigen::VectorXd& block) {
    for (std::size_t k = 0; k < idx.size(); ++k) x(static_cast<Eigen::Index>(idx[k])) = block(static_cast<Eigen::Index>(k));
  }
  static Eigen::VectorXd Gather(const Eigen::VectorXd& x, const std::vector<std::size_t>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = x(static_cast<Eigen::Index>(idx[k]));
    return out;
  }

  const ClassifierModel& f_;
  const IfeModel& h_;
  Eigen::VectorXd x_u_;
};

inline void ValidateRequest(const IfeModel& h, const RecommendationRequest& req) {
  RequireSize(static_cast<std::size_t>(req.x_u.size()), h.u_indices.size(), "x_u");
  RequireSize(static_cast<std::size_t>(req.x_i_observed.size()), h.i_indices.size(), "x_i_observed");
  RequireSize(static_cast<std::size_t>(req.x_d_physician.size()), h.d_indices.size(), "x_d_physician");
  if (!(req.budget >= 0.0)) throw Error(ErrorCode::kNegativeBudget, "budget must be >= 0");
  Require(std::isfinite(req.budget) && req.x_u.allFinite() && req.x_i_observed.allFinite() &&
              req.x_d_physician.allFinite(),
          ErrorCode::kInvalidArgument, "request values must be finite");
  Require(req.x_d_physician.size() == 0 ||
              (req.x_d_physician.minCoeff() >= 0.0 && req.x_d_physician.maxCoeff() <= 1.0),
          ErrorCode::kInvalidArgument, "x_d_physician must lie in [0,1]");
  for (const auto& start : req.warm_starts) {
    RequireSize(static_cast<std::size_t>(start.size()), h.d_indices.size(), "warm start");
  }
}

// Projected gradient descent on the composed objective over the L1 ball of
// radius `budget` around the physician's prescription, intersected with the
// unit box. Returns the lowest-objective iterate visited.
inline RecommendationResult OptimizeRecommendation(const ClassifierModel& f, const IfeModel& h,
                                                   const RecommendationRequest& req, const OptimizeConfig& cfg) {
  cfg.Validate();
  ValidateRequest(h, req);
  const ComposedObjective objective(f, h, req.x_u);
  const Eigen::VectorXd& center = req.x_d_physician;

  RecommendationResult result;
  result.prob_before = PredictProba(f, objective.Assemble(req.x_i_observed, center));
  result.objective_before = objective.Value(center);

  Eigen::VectorXd best = center;
  double best_value = result.objective_before;

  auto descend = [&](Eigen::VectorXd x, bool primary) {
    double value = objective.Value(x);
    if (value < best_value) {
      best_value = value;
      best = x;
    }
    if (primary) result.trajectory.push_back({0, value});
    for (int t = 1; t <= cfg.max_iters; ++t) {
      const Eigen::VectorXd grad = objective.Gradient(x);
      if (!grad.allFinite()) throw Error(ErrorCode::kNonFiniteGradient, "objective gradient is not finite");
      Eigen::VectorXd next = ProjectFeasible(x - cfg.step_size * grad, center, req.budget);
      value = objective.Value(next);
      if (value < best_value) {
        best_value = value;
        best = next;
      }
      const double moved = (next - x).cwiseAbs().maxCoeff();
      x = std::move(next);
      if (primary) {
        result.trajectory.push_back({t, value});
        result.iters_used = t;
      }
      if (moved < cfg.convergence_tol) {
        if (primary) result.converged = true;
        break;
      }
    }
  };

  descend(center, true);
  for (const auto& start : req.warm_starts) {
    descend(ProjectFeasible(start, center, req.budget), false);
  }

  result.x_d_optimized = best;
  result.delta = best - center;
  result.x_i_predicted = objective.PredictedIndirect(best);
  result.prob_after = best_value;
  return result;
}

// ---------------------------------------------------------------------------
// JSON (normalized units)

namespace detail {

inline nlohmann::ordered_json VectorJson(const Eigen::VectorXd& v) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Eigen::VectorXd VectorFromJson(const nlohmann::ordered_json& j, std::string_view field) {
  Require(j.is_array(), ErrorCode::kParseError, std::string(field) + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    Require(j[i].is_number(), ErrorCode::kParseError, std::string(field) + " must hold numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

}  // namespace detail

inline nlohmann::ordered_json RequestToJson(const RecommendationRequest& req) {
  return {{"x_u", detail::VectorJson(req.x_u)},
          {"x_i_observed", detail::VectorJson(req.x_i_observed)},
          {"x_d_physician", detail::VectorJson(req.x_d_physician)},
          {"budget", req.budget}};
}

inline RecommendationRequest RequestFromJson(const nlohmann::ordered_json& j) {
  Require(j.is_object(), ErrorCode::kParseError, "request must be a JSON object");
  for (const char* field : {"x_u", "x_i_observed", "x_d_physician", "budget"}) {
    Require(j.contains(field), ErrorCode::kParseError, std::string("request is missing '") + field + "'");
  }
  RecommendationRequest req;
  req.x_u = detail::VectorFromJson(j["x_u"], "x_u");
  req.x_i_observed = detail::VectorFromJson(j["x_i_observed"], "x_i_observed");
  req.x_d_physician = detail::VectorFromJson(j["x_d_physician"], "x_d_physician");
  Require(j["budget"].is_number(), ErrorCode::kParseError, "budget must be a number");
  req.budget = j["budget"].get<double>();
  return req;
}

inline nlohmann::ordered_json ResultToJson(const RecommendationResult& r, bool include_trajectory = true) {
  nlohmann::ordered_json j = {{"x_d_optimized", detail::VectorJson(r.x_d_optimized)},
                              {"delta", detail::VectorJson(r.delta)},
                              {"x_i_predicted", detail::VectorJson(r.x_i_predicted)},
                              {"prob_before", r.prob_before},
                              {"objective_before", r.objective_before},
                              {"prob_after", r.prob_after},
                              {"converged", r.converged},
                              {"iters_used", r.iters_used}};
  if (include_trajectory) {
    nlohmann::ordered_json trajectory = nlohmann::ordered_json::array();
    for (const auto& p : r.trajectory) trajectory.push_back({{"iter", p.iter}, {"objective", p.objective}});
    j["trajectory"] = std::move(trajectory);
  }
  return j;
}

}  // namespace fluidrx

#endif  // FLUIDRX_OPTIMIZER_HPP_

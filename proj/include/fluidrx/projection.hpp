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

#ifndef FLUIDRX_PROJECTION_HPP_
#define FLUIDRX_PROJECTION_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "fluidrx/error.hpp"

namespace fluidrx {

struct ProjectionOptions {
  double tolerance = 1e-10;  // on the multiplier bracket
  int max_bisections = 200;
};

namespace detail {

// Minimizer of 0.5 (w - v)^2 + lambda |w - c| over w in [0, 1]: soft-threshold
// v toward c by lambda, then clip to the box.
inline double ShrinkClip(double v, double c, double lambda) {
  const double shrunk = v > c ? std::max(c, v - lambda) : std::min(c, v + lambda);
  return std::clamp(shrunk, 0.0, 1.0);
}

}  // namespace detail

// Euclidean projection of v onto {w : ||w - center||_1 <= budget, 0 <= w <= 1}.
// center must lie in the unit box. When clipping alone is not enough, the
// multiplier lambda of the L1 constraint is found by bisection on
//   phi(lambda) = sum_i |ShrinkClip(v_i, c_i, lambda) - c_i| - budget,
// which is continuous and non-increasing; the feasible end of the bracket is
// returned, so the L1 constraint always holds.
inline Eigen::VectorXd ProjectFeasible(const Eigen::VectorXd& v, const Eigen::VectorXd& center, double budget,
                                       const ProjectionOptions& options = {}) {
  RequireSize(static_cast<std::size_t>(v.size()), static_cast<std::size_t>(center.size()), "projection input");
  if (!(budget >= 0.0)) throw Error(ErrorCode::kNegativeBudget, "budget must be >= 0");
  Require(v.allFinite() && center.allFinite(), ErrorCode::kInvalidArgument, "projection inputs must be finite");
  Require(center.minCoeff() >= 0.0 && center.maxCoeff() <= 1.0, ErrorCode::kInvalidArgument,
          "projection center must lie in [0,1]");
  if (budget == 0.0 || v.size() == 0) return center;

  Eigen::VectorXd w = v.cwiseMax(0.0).cwiseMin(1.0);
  if ((w - center).lpNorm<1>() <= budget) return w;

  auto at = [&](double lambda) {
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = detail::ShrinkClip(v(i), center(i), lambda);
    return out;
  };
  double lo = 0.0;
  double hi = (v - center).cwiseAbs().maxCoeff();
  for (int it = 0; it < options.max_bisections && hi - lo > options.tolerance; ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((at(mid) - center).lpNorm<1>() > budget) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return at(hi);
}

}  // namespace fluidrx

#endif  // FLUIDRX_PROJECTION_HPP_

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

#ifndef FLUIDRX_FEATSEL_HPP_
#define FLUIDRX_FEATSEL_HPP_

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluidrx/classifier.hpp"
#include "fluidrx/dataset.hpp"
#include "fluidrx/error.hpp"
#include "fluidrx/rng.hpp"

namespace fluidrx {

enum class SelectionMetric { kAuc, kAccuracy };
enum class EvalMode { kHeldOutSplit, kTrainSet };

struct CseConfig {
  std::size_t patience = 10;
  SelectionMetric metric = SelectionMetric::kAuc;
  std::uint64_t seed = 0;
  ClassifierConfig inner_classifier = ClassifierConfig::FeedForward(3, 150);
  EvalMode eval_mode = EvalMode::kHeldOutSplit;
  double held_out_fraction = 0.25;

  void Validate() const {
    Require(patience >= 1, ErrorCode::kInvalidArgument, "patience must be >= 1");
    if (eval_mode == EvalMode::kHeldOutSplit) {
      Require(held_out_fraction > 0.0 && held_out_fraction < 1.0, ErrorCode::kInvalidArgument,
              "held_out_fraction must lie in (0,1)");
    }
    inner_classifier.Validate();
  }
};

struct CseStep {
  std::size_t k = 0;
  std::string feature;
  double score = 0.0;  // c^(k)
  double delta = 0.0;  // c^(k) minus the score of the current selection
  bool accepted = false;
  std::size_t stall = 0;  // consecutive non-improving iterations after this one
};

struct CseTrace {
  std::vector<CseStep> steps;
  std::vector<std::string> selected;  // in acceptance order
};

// Randomized greedy forward selection. Each iteration draws one feature
// uniformly from those not selected, retrains the inner classifier on the
// selection plus that feature and keeps it only when the metric improves on
// the current selection's score (the very first feature is always kept).
// Rejected features go back into the pool. Stops after `patience`
// consecutive rejections or when the pool is empty.
inline CseTrace ClassifierSubsetEval(const Dataset& train, const CseConfig& cfg) {
  cfg.Validate();
  if (train.num_features() == 0) throw Error(ErrorCode::kEmptyFeatureSet, "no features to select from");

  Dataset fit_set = train;
  Dataset eval_set = train;
  if (cfg.eval_mode == EvalMode::kHeldOutSplit) {
    const double fraction = cfg.held_out_fraction;
    DatasetSplit split = StratifiedSplit(train, {1.0 - fraction, fraction, 0.0}, DeriveSeed(cfg.seed, 17));
    std::vector<std::size_t> eval_rows = split.validation_rows;
    eval_rows.insert(eval_rows.end(), split.test_rows.begin(), split.test_rows.end());
    std::sort(eval_rows.begin(), eval_rows.end());
    fit_set = std::move(split.train);
    eval_set = train.Subset(eval_rows);
  }

  auto score_of = [&](const std::vector<std::string>& features) {
    const ClassifierModel model = TrainClassifier(fit_set.SelectFeatures(features), cfg.inner_classifier);
    const Dataset eval = eval_set.SelectFeatures(features);
    const Eigen::VectorXd scores = PredictProbaBatch(model, eval.features);
    return cfg.metric == SelectionMetric::kAuc ? Auc(scores, eval.labels) : Accuracy(scores, eval.labels);
  };

  // The pool keeps the original feature order so draws are reproducible.
  const std::vector<std::string> all = train.FeatureNames();
  std::vector<std::size_t> pool(all.size());
  for (std::size_t j = 0; j < all.size(); ++j) pool[j] = j;

  Rng rng(cfg.seed);
  CseTrace trace;
  double current = 0.0;
  std::size_t stall = 0;
  for (std::size_t k = 1;; ++k) {
    const std::size_t slot = rng.Index(pool.size());
    const std::size_t feature = pool[slot];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(slot));
    trace.selected.push_back(all[feature]);

    const double score = score_of(trace.selected);
    const double delta = score - current;
    const bool accepted = delta > 0.0 || trace.selected.size() == 1;
    if (accepted) {
      current = score;
      stall = 0;
    } else {
      trace.selected.pop_back();
      pool.insert(std::upper_bound(pool.begin(), pool.end(), feature), feature);
      ++stall;
    }
    trace.steps.push_back({k, all[feature], score, delta, accepted, stall});
    if (stall == cfg.patience || pool.empty()) break;
  }
  return trace;
}

inline void WriteTraceJsonl(std::ostream& out, const CseTrace& trace) {
  for (const auto& s : trace.steps) {
    const nlohmann::ordered_json line = {{"k", s.k},         {"feature", s.feature},   {"score", s.score},
                                         {"delta", s.delta}, {"accepted", s.accepted}, {"stall", s.stall}};
    out << line.dump() << '\n';
  }
}

inline nlohmann::ordered_json SelectedToJson(const CseTrace& trace) {
  return nlohmann::ordered_json(trace.selected);
}

}  // namespace fluidrx

#endif  // FLUIDRX_FEATSEL_HPP_

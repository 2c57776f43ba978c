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

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "test_support.hpp"

namespace fluidrx {
namespace {

using testing::MakeDataset;
using testing::MakeMeta;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<FeatureMeta> VitalsMeta() {
  return {{"heart_rate", FeatureCategory::kIndirect, "/min", 40, 140, false},
          {"lactate", FeatureCategory::kIndirect, "mg/dL", 0, 20, false},
          {"age", FeatureCategory::kUnchangeable, "years", 18, 90, false},
          {"NS", FeatureCategory::kDirect, "mL", 0, 2000, false}};
}

Dataset ReadText(const std::string& text, const std::vector<FeatureMeta>& meta) {
  std::istringstream in(text);
  return ReadCsv(in, meta);
}

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

TEST(Csv, ParsesCompleteFile) {
  const Dataset ds = ReadText(
      "heart_rate,lactate,age,NS,discharge_expired\n"
      "88.2,2.0,68,500,0\n"
      "101,3.5,75,1000,1\n"
      "79.5,1.1,52,0,0\n",
      VitalsMeta());
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.MissingCount(), 0u);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_DOUBLE_EQ(ds.features(1, 1), 3.5);
  EXPECT_EQ(ds.partition.d_indices, std::vector<std::size_t>{3});
}

TEST(Csv, ColumnOrderFollowsMetaNotFile) {
  const Dataset ds = ReadText(
      "discharge_expired,NS,age,lactate,heart_rate\n"
      "1,500,68,2.0,88\n",
      VitalsMeta());
  EXPECT_DOUBLE_EQ(ds.features(0, 0), 88);
  EXPECT_DOUBLE_EQ(ds.features(0, 3), 500);
}

TEST(Csv, MisspelledHeaderIsUnknownColumn) {
  EXPECT_EQ(CodeOf([] { ReadText("hart_rate,lactate,age,NS,discharge_expired\n1,2,3,4,0\n", VitalsMeta()); }),
            ErrorCode::kUnknownColumn);
}

TEST(Csv, MissingLabelColumn) {
  EXPECT_EQ(CodeOf([] { ReadText("heart_rate,lactate,age,NS\n1,2,3,4\n", VitalsMeta()); }),
            ErrorCode::kMissingLabelColumn);
}

TEST(Csv, NonNumericCellNamesRowAndColumn) {
  try {
    ReadText("heart_rate,lactate,age,NS,discharge_expired\n88,high,3,4,0\n", VitalsMeta());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonNumericCell);
    EXPECT_NE(std::string(e.what()).find("lactate"), std::string::npos);
  }
}

TEST(Csv, BlankCellIsMissingAndImputable) {
  Dataset ds = ReadText(
      "heart_rate,lactate,age,NS,discharge_expired\n"
      "88,,68,500,0\n"
      "100,3,75,1000,1\n"
      "80,1,52,0,0\n",
      VitalsMeta());
  EXPECT_EQ(ds.MissingCount(), 1u);
  const Dataset imputed = ImputeMean(ds);
  EXPECT_EQ(imputed.MissingCount(), 0u);
  EXPECT_DOUBLE_EQ(imputed.features(0, 1), 2.0);
}

TEST(Csv, WriteThenReadRoundTripsExactly) {
  Rng rng(3);
  Eigen::MatrixXd x(20, 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = rng.Normal() * 1e3;
  x(4, 2) = kNaN;
  std::vector<int> y(20);
  for (int i = 0; i < 20; ++i) y[static_cast<std::size_t>(i)] = i % 3 == 0;
  const Dataset ds(VitalsMeta(), x, y);
  std::ostringstream out;
  WriteCsv(out, ds);
  const Dataset back = ReadText(out.str(), VitalsMeta());
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.MissingCount(), 1u);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      if (!std::isnan(x(i, j))) {
        EXPECT_EQ(back.features(i, j), x(i, j));
      }
}

TEST(Impute, MeanOfObserved) {
  Eigen::MatrixXd x(3, 2);
  x << 1, 5, kNaN, 5, 3, 5;
  const Dataset out = ImputeMean(MakeDataset("ID", x, {0, 1, 0}));
  EXPECT_DOUBLE_EQ(out.features(1, 0), 2.0);
}

TEST(Impute, NoMissingIsIdentity) {
  Eigen::MatrixXd x(3, 2);
  x << 1, 5, 2, 6, 3, 7;
  const Dataset ds = MakeDataset("ID", x, {0, 1, 0});
  EXPECT_EQ(ImputeMean(ds).features, ds.features);
}

TEST(Impute, AllMissingFeature) {
  Eigen::MatrixXd x(2, 2);
  x << kNaN, 1, kNaN, 2;
  EXPECT_EQ(CodeOf([&] { ImputeMean(MakeDataset("ID", x, {0, 1})); }), ErrorCode::kAllMissingFeature);
}

TEST(Impute, MatchesIndependentMeansOnBlankedFixture) {
  Rng rng(11);
  Eigen::MatrixXd x(100, 5);
  for (Eigen::Index i = 0; i < 100; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) x(i, j) = rng.Uniform() < 0.1 ? kNaN : rng.Normal(10.0, 3.0);
  std::vector<int> y(100, 0);
  y[0] = 1;
  const Dataset out = ImputeMean(MakeDataset("UIIID", x, y));
  for (Eigen::Index j = 0; j < 5; ++j) {
    long double sum = 0;
    int count = 0;
    for (Eigen::Index i = 0; i < 100; ++i) {
      if (!std::isnan(x(i, j))) {
        sum += x(i, j);
        ++count;
      }
    }
    const double observed_mean = static_cast<double>(sum / count);
    EXPECT_NEAR(out.features.col(j).mean(), observed_mean, 1e-12);
    for (Eigen::Index i = 0; i < 100; ++i)
      if (std::isnan(x(i, j))) {
        EXPECT_NEAR(out.features(i, j), observed_mean, 1e-12);
      }
  }
}

TEST(Scaler, EndpointsAndMidpoint) {
  Eigen::MatrixXd x(3, 1);
  x << 2, 4, 6;
  const Dataset ds = MakeDataset("D", x, {0, 1, 0});
  const Dataset scaled = ApplyScaler(ds, FitScaler(ds));
  EXPECT_EQ(scaled.features(0, 0), 0.0);
  EXPECT_EQ(scaled.features(1, 0), 0.5);
  EXPECT_EQ(scaled.features(2, 0), 1.0);
}

TEST(Scaler, ClampsOutOfRange) {
  const Scaler s({{"d0", 2.0, 6.0}});
  EXPECT_EQ(s.Scale(0, 8.0), 1.0);
  EXPECT_EQ(s.Scale(0, -1.0), 0.0);
}

TEST(Scaler, DegenerateFeatureMapsToZero) {
  Eigen::MatrixXd x(3, 2);
  x << 5, 1, 5, 2, 5, 3;
  const Dataset scaled = ApplyScaler(MakeDataset("ID", x, {0, 1, 0}), FitScaler(MakeDataset("ID", x, {0, 1, 0})));
  EXPECT_TRUE((scaled.features.col(0).array() == 0.0).all());
}

TEST(Scaler, InvertWithoutScalerFails) {
  Eigen::MatrixXd x(2, 1);
  x << 1, 2;
  EXPECT_EQ(CodeOf([&] { InvertScaler(MakeDataset("D", x, {0, 1})); }), ErrorCode::kScalerNotFitted);
}

TEST(ScalerProperty, RoundTripWithinTolerance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(50, 4);
    for (Eigen::Index i = 0; i < 50; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = rng.Normal(0, 1 + 100.0 * static_cast<double>(j));
    const Dataset ds = MakeDataset("UIID", x, std::vector<int>(50, 0));
    const Dataset scaled = ApplyScaler(ds, FitScaler(ds));
    EXPECT_GE(scaled.features.minCoeff(), 0.0);
    EXPECT_LE(scaled.features.maxCoeff(), 1.0);
    const Dataset back = InvertScaler(scaled);
    EXPECT_LE((back.features - x).cwiseAbs().maxCoeff() / (1 + x.cwiseAbs().maxCoeff()), 1e-12);
  }
}

TEST(Scaler, JsonRoundTrip) {
  const Scaler s({{"a", -1.5, 2.25}, {"b", 0.1, 0.30000000000000004}});
  const Scaler back = ScalerFromJson(nlohmann::ordered_json::parse(ScalerToJson(s).dump()));
  EXPECT_EQ(back, s);
  EXPECT_EQ(ScalerToJson(s).dump(), R"({"a":{"min":-1.5,"max":2.25},"b":{"min":0.1,"max":0.30000000000000004}})");
}

Dataset Labelled(std::size_t n, std::size_t positives) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) << static_cast<double>(i), 1.0;
  std::vector<int> y(n, 0);
  for (std::size_t i = 0; i < positives; ++i) y[i * (n / positives)] = 1;
  return MakeDataset("ID", x, y);
}

TEST(Split, SizesAndPositivesFollowRatios) {
  const DatasetSplit split = StratifiedSplit(Labelled(1000, 220), {0.8, 0.1, 0.1}, 5);
  EXPECT_EQ(split.train.size(), 800u);
  EXPECT_EQ(split.validation.size(), 100u);
  EXPECT_EQ(split.test.size(), 100u);
  EXPECT_NEAR(static_cast<double>(split.train.PositiveCount()), 176, 1);
  EXPECT_NEAR(static_cast<double>(split.validation.PositiveCount()), 22, 1);
  EXPECT_NEAR(static_cast<double>(split.test.PositiveCount()), 22, 1);
}

TEST(Split, DeterministicUnderSeed) {
  const Dataset ds = Labelled(300, 60);
  const auto a = StratifiedSplit(ds, {0.8, 0.1, 0.1}, 42);
  const auto b = StratifiedSplit(ds, {0.8, 0.1, 0.1}, 42);
  EXPECT_EQ(a.train_rows, b.train_rows);
  EXPECT_EQ(a.validation_rows, b.validation_rows);
  EXPECT_EQ(a.test_rows, b.test_rows);
  EXPECT_NE(a.train_rows, StratifiedSplit(ds, {0.8, 0.1, 0.1}, 43).train_rows);
}

TEST(Split, TooFewPositives) {
  EXPECT_EQ(CodeOf([] { StratifiedSplit(Labelled(10, 1), {0.8, 0.1, 0.1}, 0); }), ErrorCode::kClassTooSmall);
}

TEST(SplitProperty, ExactPartitionForAllSeeds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t n = 30 + seed * 7;
    const auto split = StratifiedSplit(Labelled(n, 3 + seed % 9), {0.8, 0.1, 0.1}, seed);
    std::vector<std::size_t> all = split.train_rows;
    all.insert(all.end(), split.validation_rows.begin(), split.validation_rows.end());
    all.insert(all.end(), split.test_rows.begin(), split.test_rows.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
  }
}

TEST(Prepare, ImputesWithTrainingMeansOnly) {
  Rng rng(2);
  Eigen::MatrixXd x(200, 2);
  std::vector<int> y(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    x.row(i) << rng.Normal(), rng.Normal();
    y[static_cast<std::size_t>(i)] = i % 4 == 0;
  }
  for (Eigen::Index i = 0; i < 200; i += 10) x(i, 0) = kNaN;
  const Dataset ds = MakeDataset("ID", x, y);
  const DatasetSplit split = PrepareSplits(ds, 9);
  const Dataset raw_train = ds.Subset(split.train_rows);
  const double train_mean = ObservedMeans(raw_train)(0);
  const Scaler& s = *split.train.scaler;
  for (std::size_t k = 0; k < split.test_rows.size(); ++k) {
    if (std::isnan(x(static_cast<Eigen::Index>(split.test_rows[k]), 0))) {
      EXPECT_DOUBLE_EQ(split.test.features(static_cast<Eigen::Index>(k), 0), s.Scale(0, train_mean));
    }
  }
  for (const Dataset* d : {&split.train, &split.validation, &split.test}) {
    EXPECT_EQ(d->MissingCount(), 0u);
    EXPECT_GE(d->features.minCoeff(), 0.0);
    EXPECT_LE(d->features.maxCoeff(), 1.0);
  }
}

TEST(Partition, DisjointExhaustiveAndHasDirect) {
  FeaturePartition p = FeaturePartition::FromMeta(MakeMeta("UIDID"));
  EXPECT_NO_THROW(p.Validate(5));
  FeaturePartition dup = p;
  dup.u_indices.push_back(1);
  EXPECT_THROW(dup.Validate(5), Error);
  EXPECT_THROW(FeaturePartition::FromMeta(MakeMeta("UII")).Validate(3), Error);
}

TEST(Meta, JsonRoundTrip) {
  const auto meta = VitalsMeta();
  const auto back = MetaFromJson(nlohmann::ordered_json::parse(MetaToJson(meta).dump()));
  ASSERT_EQ(back.size(), meta.size());
  for (std::size_t j = 0; j < meta.size(); ++j) {
    EXPECT_EQ(back[j].name, meta[j].name);
    EXPECT_EQ(back[j].category, meta[j].category);
    EXPECT_EQ(back[j].raw_max, meta[j].raw_max);
  }
}

TEST(Select, KeepsRequestedOrderAndScaler) {
  Eigen::MatrixXd x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  Dataset ds = MakeDataset("UID", x, {0, 1});
  ds = ApplyScaler(ds, FitScaler(ds));
  const Dataset sel = ds.SelectFeatures({"d2", "u0"});
  EXPECT_EQ(sel.FeatureNames(), (std::vector<std::string>{"d2", "u0"}));
  EXPECT_EQ(sel.scaler->ranges()[0].name, "d2");
  EXPECT_THROW(ds.SelectFeatures({"nope"}), Error);
}

}  // namespace
}  // namespace fluidrx

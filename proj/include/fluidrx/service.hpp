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

#ifndef FLUIDRX_SERVICE_HPP_
#define FLUIDRX_SERVICE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "fluidrx/bundle.hpp"
#include "fluidrx/error.hpp"
#include "fluidrx/experiment.hpp"
#include "fluidrx/optimizer.hpp"

namespace fluidrx {

// An Error tied to one request field, e.g. "x_d.NS".
class FieldError : public Error {
 public:
  FieldError(ErrorCode code, std::string field, const std::string& message)
      : Error(code, field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// ---------------------------------------------------------------------------
// Registry

// Bundles are immutable once registered and handed out as shared pointers,
// so readers never wait on each other; only Add/Remove take the write lock.
class BundleRegistry {
 public:
  explicit BundleRegistry(std::optional<std::filesystem::path> persist_dir = std::nullopt)
      : dir_(std::move(persist_dir)) {
    if (!dir_) return;
    std::filesystem::create_directories(*dir_);
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(*dir_)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      ModelBundle b = LoadBundle(path.string());
      b.id = path.stem().string();
      next_ = std::max(next_, Ordinal(b.id) + 1);
      std::string key = b.id;
      bundles_.emplace(std::move(key), std::make_shared<const ModelBundle>(std::move(b)));
    }
  }

  std::string Add(ModelBundle bundle) {
    ValidateBundle(bundle);
    std::unique_lock lock(mutex_);
    char id[32];
    std::snprintf(id, sizeof id, "bundle-%06llu", static_cast<unsigned long long>(next_));
    bundle.id = id;
    if (dir_) SaveBundle((*dir_ / (bundle.id + ".json")).string(), bundle);
    ++next_;
    bundles_.emplace(id, std::make_shared<const ModelBundle>(std::move(bundle)));
    return id;
  }

  std::shared_ptr<const ModelBundle> Get(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = bundles_.find(id);
    if (it == bundles_.end()) throw Error(ErrorCode::kNotFound, "no bundle '" + id + "'");
    return it->second;
  }

  std::vector<std::shared_ptr<const ModelBundle>> List() const {
    std::shared_lock lock(mutex_);
    std::vector<std::shared_ptr<const ModelBundle>> out;
    for (const auto& [id, b] : bundles_) out.push_back(b);
    return out;
  }

  bool Remove(const std::string& id) {
    std::unique_lock lock(mutex_);
    if (bundles_.erase(id) == 0) return false;
    if (dir_) std::filesystem::remove(*dir_ / (id + ".json"));
    return true;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return bundles_.size();
  }

 private:
  static std::uint64_t Ordinal(const std::string& id) {
    const auto dash = id.rfind('-');
    std::uint64_t n = 0;
    if (dash == std::string::npos) return 0;
    for (char c : id.substr(dash + 1)) {
      if (c < '0' || c > '9') return 0;
      n = n * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return n;
  }

  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const ModelBundle>> bundles_;
  std::uint64_t next_ = 1;
};

// ---------------------------------------------------------------------------
// Raw-unit requests

// Clinical-unit values in partition block order.
struct RawRequest {
  Eigen::VectorXd x_u;
  Eigen::VectorXd x_i;
  Eigen::VectorXd x_d;
  double budget = 0.0;
};

namespace detail {

inline double RawValue(const nlohmann::ordered_json& v, const std::string& field) {
  if (v.is_number()) {
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw FieldError(ErrorCode::kNonFiniteInput, field, "value is not finite");
    return x;
  }
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const char* token : {"nan", "inf", "+inf", "-inf", "infinity", "+infinity", "-infinity"}) {
      if (s == token) throw FieldError(ErrorCode::kNonFiniteInput, field, "value is not finite");
    }
  }
  throw FieldError(ErrorCode::kParseError, field, "value must be a number");
}

inline Eigen::VectorXd RawBlock(const ModelBundle& b, const nlohmann::ordered_json& body, const std::string& key,
                                const std::vector<std::size_t>& block) {
  if (!body.contains(key) || !body[key].is_object()) {
    throw FieldError(ErrorCode::kParseError, key, "must be an object keyed by feature name");
  }
  const auto& values = body[key];
  const std::vector<std::string> names = b.BlockNames(block);
  for (const auto& [name, value] : values.items()) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw FieldError(ErrorCode::kUnknownColumn, key + "." + name, "not a feature of this block");
    }
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const std::string field = key + "." + names[k];
    if (!values.contains(names[k])) throw FieldError(ErrorCode::kMissingColumn, field, "missing");
    out(static_cast<Eigen::Index>(k)) = RawValue(values[names[k]], field);
  }
  return out;
}

inline double ParseBudget(const nlohmann::ordered_json& v) {
  const double budget = RawValue(v, "budget");
  if (budget < 0.0) throw FieldError(ErrorCode::kNegativeBudget, "budget", "must be >= 0");
  return budget;
}

inline Eigen::VectorXd ScaleBlock(const ModelBundle& b, const Eigen::VectorXd& raw, const std::vector<std::size_t>& block) {
  Eigen::VectorXd out(raw.size());
  for (Eigen::Index k = 0; k < raw.size(); ++k) out(k) = b.scaler.Scale(block[static_cast<std::size_t>(k)], raw(k));
  return out;
}

inline Eigen::VectorXd UnscaleBlock(const ModelBundle& b, const Eigen::VectorXd& scaled,
                                    const std::vector<std::size_t>& block) {
  Eigen::VectorXd out(scaled.size());
  for (Eigen::Index k = 0; k < scaled.size(); ++k) out(k) = b.scaler.Unscale(block[static_cast<std::size_t>(k)], scaled(k));
  return out;
}

}  // namespace detail

// Body shape: {"x_u": {name: value}, "x_i": {...}, "x_d": {...}, "budget": b}.
// Every block must name exactly its features. The budget is optional when
// `need_budget` is false.
inline RawRequest ParseRawRequest(const ModelBundle& b, const nlohmann::ordered_json& body, bool need_budget = true) {
  if (!body.is_object()) throw FieldError(ErrorCode::kParseError, "request", "must be a JSON object");
  RawRequest raw;
  raw.x_u = detail::RawBlock(b, body, "x_u", b.partition.u_indices);
  raw.x_i = detail::RawBlock(b, body, "x_i", b.partition.i_indices);
  raw.x_d = detail::RawBlock(b, body, "x_d", b.partition.d_indices);
  if (body.contains("budget")) {
    raw.budget = detail::ParseBudget(body["budget"]);
  } else if (need_budget) {
    throw FieldError(ErrorCode::kParseError, "budget", "missing");
  }
  // Fluids outside the training range cannot be represented in [0,1].
  for (std::size_t k = 0; k < b.partition.d_indices.size(); ++k) {
    const FeatureRange& r = b.scaler.ranges()[b.partition.d_indices[k]];
    const double v = raw.x_d(static_cast<Eigen::Index>(k));
    if (v < r.min || v > r.max) {
      throw FieldError(ErrorCode::kInvalidArgument, "x_d." + r.name,
                       "must lie in [" + FormatDouble(r.min) + ", " + FormatDouble(r.max) + "]");
    }
  }
  return raw;
}

inline RecommendationRequest ScaleRequest(const ModelBundle& b, const RawRequest& raw) {
  return {detail::ScaleBlock(b, raw.x_u, b.partition.u_indices), detail::ScaleBlock(b, raw.x_i, b.partition.i_indices),
          detail::ScaleBlock(b, raw.x_d, b.partition.d_indices), raw.budget, {}};
}

inline nlohmann::ordered_json RecommendResponse(const ModelBundle& b, const RawRequest& raw,
                                                const RecommendationRequest& scaled,
                                                const RecommendationResult& r) {
  const auto& d = b.partition.d_indices;
  nlohmann::ordered_json fluids = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < d.size(); ++k) {
    const auto e = static_cast<Eigen::Index>(k);
    const FeatureRange& range = b.scaler.ranges()[d[k]];
    // Raw deltas are applied to the raw input so a zero move reproduces it
    // exactly instead of going through a scale/unscale round trip.
    const double delta = r.delta(e) * (range.max - range.min);
    fluids.push_back({{"name", range.name},
                      {"units", b.meta[d[k]].units},
                      {"physician", raw.x_d(e)},
                      {"recommended", raw.x_d(e) + delta},
                      {"delta", delta},
                      {"physician_normalized", scaled.x_d_physician(e)},
                      {"recommended_normalized", r.x_d_optimized(e)},
                      {"delta_normalized", r.delta(e)}});
  }
  nlohmann::ordered_json indirect = nlohmann::ordered_json::object();
  const Eigen::VectorXd predicted = detail::UnscaleBlock(b, r.x_i_predicted, b.partition.i_indices);
  for (std::size_t k = 0; k < b.partition.i_indices.size(); ++k) {
    indirect[b.meta[b.partition.i_indices[k]].name] = predicted(static_cast<Eigen::Index>(k));
  }
  nlohmann::ordered_json j;
  j["bundle_id"] = b.id;
  j["budget"] = scaled.budget;
  j["prob_before"] = r.prob_before;
  j["objective_before"] = r.objective_before;
  j["prob_after"] = r.prob_after;
  j["converged"] = r.converged;
  j["iters_used"] = r.iters_used;
  j["fluids"] = std::move(fluids);
  j["x_i_predicted"] = std::move(indirect);
  j["request_normalized"] = RequestToJson(scaled);
  j["normalized"] = ResultToJson(r, true);
  return j;
}

// ---------------------------------------------------------------------------
// Handlers. Transport-independent so tests can call them directly.

struct ApiResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

struct ServiceOptions {
  OptimizeConfig optimize;
  std::size_t max_payload_bytes = 16u << 20;
  std::string ui_dir;  // static console assets mounted at /ui when non-empty
};

inline int StatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kNonFiniteInput: return 422;
    case ErrorCode::kIoError: return 500;
    default: return 400;
  }
}

inline ApiResponse ErrorResponse(const Error& e) {
  nlohmann::ordered_json err = {{"code", std::string(ErrorCodeName(e.code()))}, {"message", e.what()}};
  if (const auto* fe = dynamic_cast<const FieldError*>(&e)) {
    err["field"] = fe->field();
  } else if (e.code() == ErrorCode::kInconsistentBundle) {
    // "InconsistentBundle: <field>: <message>"
    const std::string what = e.what();
    const auto start = what.find(": ");
    const auto end = what.find(": ", start + 2);
    if (start != std::string::npos && end != std::string::npos) err["field"] = what.substr(start + 2, end - start - 2);
  }
  return {StatusFor(e.code()), {{"error", std::move(err)}}};
}

template <typename Fn>
ApiResponse Guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return ErrorResponse(e);
  } catch (const nlohmann::json::exception& e) {
    return ErrorResponse(Error(ErrorCode::kParseError, e.what()));
  } catch (const std::exception& e) {
    return {500, {{"error", {{"code", "Internal"}, {"message", e.what()}}}}};
  }
}

inline nlohmann::ordered_json ParseBody(const std::string& body) {
  try {
    return nlohmann::ordered_json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("body is not valid JSON: ") + e.what());
  }
}

inline ApiResponse HandlePostBundle(BundleRegistry& registry, const std::string& body) {
  return Guarded([&] {
    const std::string id = registry.Add(BundleFromJson(ParseBody(body)));
    return ApiResponse{201, {{"id", id}}};
  });
}

inline ApiResponse HandleListBundles(const BundleRegistry& registry) {
  return Guarded([&] {
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& b : registry.List()) list.push_back(BundleMetadataJson(*b));
    return ApiResponse{200, {{"bundles", std::move(list)}}};
  });
}

inline ApiResponse HandleGetBundle(const BundleRegistry& registry, const std::string& id, bool full) {
  return Guarded([&] {
    const auto b = registry.Get(id);
    nlohmann::ordered_json j = BundleMetadataJson(*b);
    if (full) j["bundle"] = BundleToJson(*b);
    return ApiResponse{200, std::move(j)};
  });
}

inline ApiResponse HandleDeleteBundle(BundleRegistry& registry, const std::string& id) {
  return Guarded([&] {
    if (!registry.Remove(id)) throw Error(ErrorCode::kNotFound, "no bundle '" + id + "'");
    return ApiResponse{200, {{"deleted", id}}};
  });
}

inline ApiResponse HandleRecommend(const BundleRegistry& registry, const std::string& id, const std::string& body,
                                   const ServiceOptions& options) {
  return Guarded([&] {
    const auto b = registry.Get(id);
    const RawRequest raw = ParseRawRequest(*b, ParseBody(body));
    const RecommendationRequest req = ScaleRequest(*b, raw);
    const RecommendationResult result = OptimizeRecommendation(b->classifier, b->ife, req, options.optimize);
    return ApiResponse{200, RecommendResponse(*b, raw, req, result)};
  });
}

// Body: {"budgets": [...], "request": {x_u, x_i, x_d}}.
inline ApiResponse HandleSweep(const BundleRegistry& registry, const std::string& id, const std::string& body,
                               const ServiceOptions& options) {
  return Guarded([&] {
    const auto b = registry.Get(id);
    const nlohmann::ordered_json j = ParseBody(body);
    if (!j.is_object()) throw FieldError(ErrorCode::kParseError, "body", "must be a JSON object");
    if (!j.contains("budgets") || !j["budgets"].is_array()) {
      throw FieldError(ErrorCode::kParseError, "budgets", "must be an array");
    }
    if (j["budgets"].empty()) throw FieldError(ErrorCode::kInvalidArgument, "budgets", "must not be empty");
    if (!j.contains("request")) throw FieldError(ErrorCode::kParseError, "request", "missing");
    std::vector<double> budgets;
    for (const auto& v : j["budgets"]) budgets.push_back(detail::ParseBudget(v));
    const RawRequest raw = ParseRawRequest(*b, j["request"], false);
    const RecommendationRequest req = ScaleRequest(*b, raw);
    const std::vector<RecommendationResult> results = SweepRequest(b->classifier, b->ife, req, budgets, options.optimize);
    nlohmann::ordered_json points = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < budgets.size(); ++k) {
      points.push_back({{"budget", budgets[k]},
                        {"prob_after", results[k].prob_after},
                        {"delta_normalized", detail::VectorJson(results[k].delta)}});
    }
    return ApiResponse{200,
                       {{"bundle_id", b->id},
                        {"prob_before", results.front().prob_before},
                        {"objective_before", results.front().objective_before},
                        {"points", std::move(points)}}};
  });
}

// ---------------------------------------------------------------------------
// HTTP wiring

inline void Reply(httplib::Response& res, const ApiResponse& api) {
  res.status = api.status;
  res.set_content(api.body.dump(), "application/json");
}

inline void MountRoutes(httplib::Server& server, BundleRegistry& registry, const ServiceOptions& options) {
  server.set_payload_max_length(options.max_payload_bytes);
  server.Post("/bundles", [&registry](const httplib::Request& req, httplib::Response& res) {
    Reply(res, HandlePostBundle(registry, req.body));
  });
  server.Get("/bundles", [&registry](const httplib::Request&, httplib::Response& res) {
    Reply(res, HandleListBundles(registry));
  });
  server.Get(R"(/bundles/([A-Za-z0-9_.-]+))", [&registry](const httplib::Request& req, httplib::Response& res) {
    const std::string full = req.get_param_value("full");
    Reply(res, HandleGetBundle(registry, req.matches[1], full == "1" || full == "true"));
  });
  server.Delete(R"(/bundles/([A-Za-z0-9_.-]+))", [&registry](const httplib::Request& req, httplib::Response& res) {
    Reply(res, HandleDeleteBundle(registry, req.matches[1]));
  });
  server.Post(R"(/bundles/([A-Za-z0-9_.-]+)/recommend)",
              [&registry, options](const httplib::Request& req, httplib::Response& res) {
                Reply(res, HandleRecommend(registry, req.matches[1], req.body, options));
              });
  server.Post(R"(/bundles/([A-Za-z0-9_.-]+)/sweep)",
              [&registry, options](const httplib::Request& req, httplib::Response& res) {
                Reply(res, HandleSweep(registry, req.matches[1], req.body, options));
              });
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  if (!options.ui_dir.empty()) {
    Require(server.set_mount_point("/ui", options.ui_dir), ErrorCode::kIoError,
            "cannot serve UI assets from " + options.ui_dir);
  }
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const char* code = res.status == 413 ? "PayloadTooLarge" : res.status == 404 ? "NotFound" : "HttpError";
    const nlohmann::ordered_json body = {{"error", {{"code", code}, {"message", httplib::status_message(res.status)}}}};
    res.set_content(body.dump(), "application/json");
  });
}

}  // namespace fluidrx

#endif  // FLUIDRX_SERVICE_HPP_

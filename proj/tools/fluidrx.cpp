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

// fluidrx command-line tool: cohort synthesis, training, feature selection,
// recommendations, budget sweeps and the HTTP service.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fluidrx.hpp"
#include "fluidrx/service.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fluidrx;

namespace {

bool g_verbose = false;

void Log(const std::string& message) {
  if (g_verbose) std::cerr << "[fluidrx] " << message << '\n';
}

void WriteText(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
  Log("wrote " + path.string());
}

void WriteJson(const fs::path& path, const json& j) { WriteText(path, j.dump(2) + "\n"); }

json ReadJson(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
}

std::vector<double> ParseBudgets(const std::string& text) {
  if (text.empty()) return DefaultBudgets();
  std::vector<double> budgets;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) budgets.push_back(ParseDouble(item));
  Require(!budgets.empty(), ErrorCode::kInvalidArgument, "--budgets is empty");
  return budgets;
}

// Feature metadata for a cohort CSV: an explicit --meta file, else the
// sidecar written by `synth`, else the built-in sepsis layout.
std::vector<FeatureMeta> ResolveMeta(const std::string& data, const std::string& meta) {
  if (!meta.empty()) return MetaFromJson(ReadJson(meta));
  fs::path sidecar = fs::path(data).replace_extension(".meta.json");
  if (fs::exists(sidecar)) return MetaFromJson(ReadJson(sidecar.string()));
  return DefaultSepsisSpec().Meta();
}

// Optional --config file. Recognized sections: "optimize",
// "classifier_grid", "ife_grid" and "cse"; everything else is ignored.
struct ToolConfig {
  json raw = json::object();

  OptimizeConfig Optimize(std::uint64_t seed) const {
    OptimizeConfig cfg;
    cfg.seed = seed;
    if (raw.contains("optimize")) {
      const auto& o = raw["optimize"];
      cfg.step_size = o.value("step_size", cfg.step_size);
      cfg.max_iters = o.value("max_iters", cfg.max_iters);
      cfg.convergence_tol = o.value("convergence_tol", cfg.convergence_tol);
    }
    cfg.Validate();
    return cfg;
  }

  std::vector<ClassifierConfig> ClassifierGrid(std::uint64_t seed) const {
    if (!raw.contains("classifier_grid")) return DefaultClassifierGrid(seed);
    std::vector<ClassifierConfig> grid;
    for (const auto& item : raw["classifier_grid"]) {
      const std::size_t hidden = item.value("hidden_nodes", std::size_t{0});
      const int epochs = item.value("epochs", 150);
      ClassifierConfig c = hidden == 0 ? ClassifierConfig::Logistic(epochs, seed)
                                       : ClassifierConfig::FeedForward(hidden, epochs, seed);
      c.learning_rate = item.value("learning_rate", c.learning_rate);
      c.batch_size = item.value("batch_size", c.batch_size);
      c.Validate();
      grid.push_back(c);
    }
    return grid;
  }

  std::vector<IfeConfig> IfeGrid(std::uint64_t seed) const {
    if (!raw.contains("ife_grid")) return DefaultIfeGrid(seed);
    std::vector<IfeConfig> grid;
    for (const auto& item : raw["ife_grid"]) {
      const std::size_t hidden = item.value("hidden_nodes", std::size_t{0});
      const int epochs = item.value("epochs", 250);
      IfeConfig c = hidden == 0 ? IfeConfig::Linear(epochs, seed) : IfeConfig::FeedForward(hidden, epochs, seed);
      c.learning_rate = item.value("learning_rate", c.learning_rate);
      c.Validate();
      grid.push_back(c);
    }
    return grid;
  }
};

ToolConfig LoadConfig(const std::string& path) {
  ToolConfig cfg;
  if (!path.empty()) cfg.raw = ReadJson(path);
  Require(cfg.raw.is_object(), ErrorCode::kParseError, "--config must hold a JSON object");
  return cfg;
}

// ---------------------------------------------------------------------------
// Report tables

std::string ClassifierGridCsv(const GridSearchResult& r) {
  std::ostringstream out;
  out << "variant,hidden_nodes,epochs,train_accuracy,train_auc,validation_accuracy,validation_auc,selected\n";
  for (const auto& row : r.table) {
    const bool selected = row.config.variant == r.best_config.variant &&
                          row.config.hidden_nodes == r.best_config.hidden_nodes &&
                          row.config.epochs == r.best_config.epochs;
    out << VariantName(row.config.variant) << ',' << row.config.hidden_nodes << ',' << row.config.epochs << ','
        << FormatDouble(row.train.accuracy) << ',' << FormatDouble(row.train.auc) << ','
        << FormatDouble(row.validation.accuracy) << ',' << FormatDouble(row.validation.auc) << ','
        << (selected ? 1 : 0) << '\n';
  }
  return out.str();
}

json ClassifierGridJson(const GridSearchResult& r) {
  json rows = json::array();
  for (const auto& row : r.table) {
    rows.push_back({{"variant", std::string(VariantName(row.config.variant))},
                    {"hidden_nodes", row.config.hidden_nodes},
                    {"epochs", row.config.epochs},
                    {"train", {{"accuracy", row.train.accuracy}, {"auc", row.train.auc}}},
                    {"validation", {{"accuracy", row.validation.accuracy}, {"auc", row.validation.auc}}}});
  }
  return {{"selected",
           {{"variant", std::string(VariantName(r.best_config.variant))},
            {"hidden_nodes", r.best_config.hidden_nodes},
            {"epochs", r.best_config.epochs}}},
          {"rows", std::move(rows)}};
}

std::string IfeGridCsv(const IfeSelection& r) {
  std::ostringstream out;
  out << "variant,hidden_nodes,epochs,train_mse,train_mae,validation_mse,validation_mae,selected\n";
  for (const auto& row : r.table) {
    const bool selected = row.config.variant == r.best_config.variant &&
                          row.config.hidden_nodes == r.best_config.hidden_nodes &&
                          row.config.epochs == r.best_config.epochs;
    out << IfeVariantName(row.config.variant) << ',' << row.config.hidden_nodes << ',' << row.config.epochs << ','
        << FormatDouble(row.train.mse) << ',' << FormatDouble(row.train.mae) << ','
        << FormatDouble(row.validation.mse) << ',' << FormatDouble(row.validation.mae) << ',' << (selected ? 1 : 0)
        << '\n';
  }
  return out.str();
}

json IfeGridJson(const IfeSelection& r) {
  json rows = json::array();
  for (const auto& row : r.table) {
    rows.push_back({{"variant", std::string(IfeVariantName(row.config.variant))},
                    {"hidden_nodes", row.config.hidden_nodes},
                    {"epochs", row.config.epochs},
                    {"train", {{"mse", row.train.mse}, {"mae", row.train.mae}}},
                    {"validation", {{"mse", row.validation.mse}, {"mae", row.validation.mae}}}});
  }
  return {{"selected",
           {{"variant", std::string(IfeVariantName(r.best_config.variant))},
            {"hidden_nodes", r.best_config.hidden_nodes},
            {"epochs", r.best_config.epochs}}},
          {"rows", std::move(rows)}};
}

std::string CsvOf(const Dataset& ds) {
  std::ostringstream out;
  WriteCsv(out, ds);
  return out.str();
}

Dataset FirstRows(const Dataset& ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.size()) return ds;
  std::vector<std::size_t> rows(limit);
  for (std::size_t i = 0; i < limit; ++i) rows[i] = i;
  return ds.Subset(rows);
}

// ---------------------------------------------------------------------------
// Subcommands

struct Common {
  std::uint64_t seed = 7;
  std::string config;
  std::string out;
  std::size_t threads = 1;
};

void RunSynth(const Common& c, const std::string& spec_path, std::size_t n, const std::string& dump_spec) {
  const SyntheticSpec spec = spec_path.empty() ? DefaultSepsisSpec() : LoadSyntheticSpec(spec_path);
  if (!dump_spec.empty()) WriteJson(dump_spec, SyntheticSpecToJson(spec));
  if (c.out.empty()) return;
  Log("generating " + std::to_string(n) + " rows");
  const Dataset ds = GenerateSynthetic(spec, n, c.seed);
  WriteText(c.out, CsvOf(ds));
  WriteJson(fs::path(c.out).replace_extension(".meta.json"), MetaToJson(ds.meta));
}

void RunTrain(const Common& c, const std::string& data, const std::string& meta) {
  const ToolConfig cfg = LoadConfig(c.config);
  const fs::path out = c.out.empty() ? fs::path("train_out") : fs::path(c.out);
  const Dataset raw = LoadCsv(data, ResolveMeta(data, meta));
  fs::create_directories(out);
  Log("loaded " + std::to_string(raw.size()) + " rows, " + std::to_string(raw.num_features()) + " features");
  const DatasetSplit split = PrepareSplits(raw, c.seed);

  Log("classifier grid search");
  const GridSearchResult grid = GridSearch(split.train, split.validation, cfg.ClassifierGrid(c.seed), c.threads);
  Log("IFE grid search");
  const IfeSelection ife = SelectIfe(split.train, split.validation, cfg.IfeGrid(c.seed), c.threads);

  ModelBundle bundle;
  bundle.meta = raw.meta;
  bundle.partition = raw.partition;
  bundle.scaler = *split.train.scaler;
  bundle.classifier = grid.best;
  bundle.classifier.scaler_ref = "scaler";
  bundle.ife = ife.best;
  bundle.ife.scaler_ref = "scaler";
  const Metrics test = Evaluate(grid.best, split.test);
  bundle.metadata = {{"seed", c.seed},
                     {"data", fs::path(data).filename().string()},
                     {"rows", {{"train", split.train.size()}, {"validation", split.validation.size()},
                               {"test", split.test.size()}}},
                     {"classifier", ClassifierGridJson(grid)["selected"]},
                     {"ife", IfeGridJson(ife)["selected"]},
                     {"test_metrics", {{"accuracy", test.accuracy}, {"auc", test.auc}}}};
  ValidateBundle(bundle);

  SaveBundle((out / "bundle.json").string(), bundle);
  WriteText(out / "classifier_grid.csv", ClassifierGridCsv(grid));
  WriteJson(out / "classifier_grid.json", ClassifierGridJson(grid));
  WriteText(out / "ife_grid.csv", IfeGridCsv(ife));
  WriteJson(out / "ife_grid.json", IfeGridJson(ife));
  WriteText(out / "train.csv", CsvOf(split.train));
  WriteText(out / "validation.csv", CsvOf(split.validation));
  WriteText(out / "test.csv", CsvOf(split.test));
  std::cout << "selected " << VariantName(grid.best_config.variant) << '(' << grid.best_config.hidden_nodes
            << ") epochs=" << grid.best_config.epochs << " test_auc=" << FormatDouble(test.auc) << '\n';
}

void RunSelectFeatures(const Common& c, const std::string& data, const std::string& meta, std::size_t patience,
                       const std::string& metric, const std::string& eval) {
  const ToolConfig cfg = LoadConfig(c.config);
  const fs::path out = c.out.empty() ? fs::path("featsel_out") : fs::path(c.out);
  const Dataset raw = LoadCsv(data, ResolveMeta(data, meta));
  const DatasetSplit split = PrepareSplits(raw, c.seed);

  CseConfig cse;
  cse.seed = c.seed;
  cse.patience = patience;
  cse.metric = metric == "accuracy" ? SelectionMetric::kAccuracy : SelectionMetric::kAuc;
  cse.eval_mode = eval == "train" ? EvalMode::kTrainSet : EvalMode::kHeldOutSplit;
  if (cfg.raw.contains("cse")) {
    const auto& j = cfg.raw["cse"];
    cse.held_out_fraction = j.value("held_out_fraction", cse.held_out_fraction);
    cse.inner_classifier.hidden_nodes = j.value("hidden_nodes", cse.inner_classifier.hidden_nodes);
    cse.inner_classifier.epochs = j.value("epochs", cse.inner_classifier.epochs);
  }
  cse.inner_classifier.seed = c.seed;
  const CseTrace trace = ClassifierSubsetEval(split.train, cse);

  std::ostringstream jsonl;
  WriteTraceJsonl(jsonl, trace);
  WriteText(out / "cse_trace.jsonl", jsonl.str());
  WriteJson(out / "selected_features.json", SelectedToJson(trace));
  std::cout << "selected " << trace.selected.size() << " features in " << trace.steps.size() << " iterations\n";
}

void RunRecommend(const Common& c, const std::string& bundle_path, const std::string& request_path,
                  double budget) {
  const ToolConfig cfg = LoadConfig(c.config);
  const ModelBundle bundle = LoadBundle(bundle_path);
  json body = ReadJson(request_path);
  if (budget >= 0.0) body["budget"] = budget;
  const RawRequest raw = ParseRawRequest(bundle, body);
  const RecommendationRequest req = ScaleRequest(bundle, raw);
  const RecommendationResult result = OptimizeRecommendation(bundle.classifier, bundle.ife, req, cfg.Optimize(c.seed));
  const json response = RecommendResponse(bundle, raw, req, result);
  if (!c.out.empty()) WriteJson(fs::path(c.out) / "recommendation.json", response);
  std::cout << response.dump(2) << '\n';
}

Dataset LoadEvalSet(const ModelBundle& bundle, const std::string& bundle_path, const std::string& data,
                     std::size_t limit) {
  const std::string path = data.empty() ? (fs::path(bundle_path).parent_path() / "test.csv").string() : data;
  Dataset ds = LoadCsv(path, bundle.meta);
  Require(ds.MissingCount() == 0, ErrorCode::kInvalidArgument, path + " has missing values; pass normalized splits");
  return FirstRows(ds, limit);
}

void RunSweep(const Common& c, const std::string& bundle_path, const std::string& data, const std::string& budgets,
              std::size_t limit) {
  const ToolConfig cfg = LoadConfig(c.config);
  const fs::path out = c.out.empty() ? fs::path("sweep_out") : fs::path(c.out);
  const ModelBundle bundle = LoadBundle(bundle_path);
  const Dataset test = LoadEvalSet(bundle, bundle_path, data, limit);
  const std::vector<double> b = ParseBudgets(budgets);
  Log("sweeping " + std::to_string(test.size()) + " records over " + std::to_string(b.size()) + " budgets");
  const SweepReport report = RunBudgetSweep(bundle.classifier, bundle.ife, test, b, cfg.Optimize(c.seed), c.threads);
  const AvgRecReport avg = SummarizeAvgRecs(b, report.results, bundle.BlockNames(bundle.partition.d_indices));

  std::ostringstream sweep_csv, avg_csv;
  WriteSweepCsv(sweep_csv, report);
  WriteAvgRecsCsv(avg_csv, avg);
  WriteText(out / "sweep.csv", sweep_csv.str());
  WriteJson(out / "sweep.json", SweepToJson(report));
  WriteText(out / "avg_recs.csv", avg_csv.str());
  WriteJson(out / "avg_recs.json", AvgRecsToJson(avg));
  std::cout << sweep_csv.str();
}

void RunRobustnessCmd(const Common& c, const std::string& bundle_path, const std::string& data,
                      const std::string& budgets, std::size_t limit, double lo, double hi) {
  const ToolConfig cfg = LoadConfig(c.config);
  const fs::path out = c.out.empty() ? fs::path("robustness_out") : fs::path(c.out);
  const ModelBundle bundle = LoadBundle(bundle_path);
  const Dataset test = LoadEvalSet(bundle, bundle_path, data, limit);
  const RobustnessReport report = RunRobustness(bundle.classifier, bundle.ife, test, ParseBudgets(budgets),
                                                cfg.Optimize(c.seed), lo, hi, c.seed, c.threads);
  std::ostringstream csv;
  WriteRobustnessCsv(csv, report);
  WriteText(out / "robustness.csv", csv.str());
  WriteJson(out / "robustness.json", RobustnessToJson(report));
  std::cout << csv.str();
}

int RunServe(const Common& c, std::string host, int port, const std::string& bundle_dir, const std::string& ui_dir,
             const std::vector<std::string>& preload, std::size_t max_payload_mb) {
  const ToolConfig cfg = LoadConfig(c.config);
  ServiceOptions options;
  options.optimize = cfg.Optimize(c.seed);
  options.ui_dir = ui_dir;
  options.max_payload_bytes = max_payload_mb << 20;
  BundleRegistry registry(bundle_dir.empty() ? std::nullopt : std::optional<fs::path>(bundle_dir));
  for (const auto& path : preload) std::cout << "registered " << registry.Add(LoadBundle(path)) << '\n';

  httplib::Server server;
  MountRoutes(server, registry, options);
  server.new_task_queue = [threads = std::max<std::size_t>(c.threads, 4)] {
    return new httplib::ThreadPool(threads);
  };
  std::cout << "listening on http://" << host << ':' << port << '\n' << std::flush;
  if (!server.listen(host, port)) throw Error(ErrorCode::kIoError, "cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sepsis IV-fluid recommendation via inverse classification"};
  app.require_subcommand(1);
  Common common;
  app.add_flag("-v,--verbose", g_verbose, "Log progress to stderr");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
    sub->add_option("--config", common.config, "JSON configuration file");
    sub->add_option("--out", common.out, "Output directory (file for synth)");
    sub->add_option("--threads", common.threads, "Worker threads; results do not depend on it")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_flag("-v,--verbose", g_verbose, "Log progress to stderr");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort CSV");
  add_common(synth);
  std::string spec_path, dump_spec;
  std::size_t n = 5000;
  synth->add_option("--spec", spec_path, "Synthetic spec JSON (default: built-in cohort)");
  synth->add_option("--n", n, "Number of rows")->capture_default_str();
  synth->add_option("--dump-spec", dump_spec, "Write the effective spec JSON here");

  auto* train = app.add_subcommand("train", "Grid-search the classifier and IFE, write a model bundle");
  add_common(train);
  std::string data, meta;
  train->add_option("--data", data, "Cohort CSV (raw units)")->required();
  train->add_option("--meta", meta, "Feature metadata JSON");

  auto* featsel = app.add_subcommand("select-features", "Randomized forward feature selection");
  add_common(featsel);
  std::size_t patience = 10;
  std::string metric = "auc", eval = "heldout";
  featsel->add_option("--data", data, "Cohort CSV (raw units)")->required();
  featsel->add_option("--meta", meta, "Feature metadata JSON");
  featsel->add_option("--patience", patience, "Consecutive rejections before stopping")->capture_default_str();
  featsel->add_option("--metric", metric)->check(CLI::IsMember({"auc", "accuracy"}))->capture_default_str();
  featsel->add_option("--eval", eval, "Scoring set")->check(CLI::IsMember({"heldout", "train"}))->capture_default_str();

  std::string bundle_path, request_path, budgets;
  double budget = -1.0;
  std::size_t limit = 0;
  auto* recommend = app.add_subcommand("recommend", "Optimize one prescription (raw units JSON)");
  add_common(recommend);
  recommend->add_option("--bundle", bundle_path)->required();
  recommend->add_option("--request", request_path, "Request JSON: x_u, x_i, x_d objects and budget")->required();
  recommend->add_option("--budget", budget, "Overrides the request budget");

  auto* sweep = app.add_subcommand("sweep", "Budget sweep over a normalized test split");
  add_common(sweep);
  sweep->add_option("--bundle", bundle_path)->required();
  sweep->add_option("--data", data, "Normalized split CSV (default: test.csv next to the bundle)");
  sweep->add_option("--budgets", budgets, "Comma-separated budgets (default 0.1..1.0)");
  sweep->add_option("--limit", limit, "Use only the first N records (0 = all)");

  auto* robust = app.add_subcommand("robustness", "Physician-initialized vs random-initialized sweeps");
  add_common(robust);
  double init_lo = 0.0, init_hi = 0.1;
  robust->add_option("--bundle", bundle_path)->required();
  robust->add_option("--data", data, "Normalized split CSV (default: test.csv next to the bundle)");
  robust->add_option("--budgets", budgets, "Comma-separated budgets (default 0.1..1.0)");
  robust->add_option("--limit", limit, "Use only the first N records (0 = all)");
  robust->add_option("--init-lo", init_lo)->capture_default_str();
  robust->add_option("--init-hi", init_hi)->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  add_common(serve);
  std::string host = "127.0.0.1", bundle_dir, ui_dir;
  int port = 8080;
  std::vector<std::string> preload;
  std::size_t max_payload_mb = 16;
  serve->add_option("--host", host, "Listen address (env FLUIDRX_HOST)")->capture_default_str();
  serve->add_option("--port", port, "Listen port (env FLUIDRX_PORT)")->capture_default_str();
  serve->add_option("--bundle-dir", bundle_dir, "Persist registered bundles here");
  serve->add_option("--ui-dir", ui_dir, "Static console assets served under /ui");
  serve->add_option("--bundle", preload, "Register these bundle files at startup");
  serve->add_option("--max-payload-mb", max_payload_mb)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  // Read by hand: CLI11 silently ignores an environment value that fails
  // validation, which would bind the default port instead of erroring.
  if (*serve) {
    if (serve->count("--host") == 0) {
      if (const char* env = std::getenv("FLUIDRX_HOST")) host = env;
    }
    std::string port_text = std::to_string(port);
    std::string port_source = "--port";
    if (serve->count("--port") == 0) {
      if (const char* env = std::getenv("FLUIDRX_PORT")) {
        port_text = env;
        port_source = "FLUIDRX_PORT";
      }
    }
    const char* end = port_text.data() + port_text.size();
    const auto [ptr, ec] = std::from_chars(port_text.data(), end, port);
    if (ec != std::errc() || ptr != end || port < 0 || port > 65535) {
      std::cerr << port_source << ": '" << port_text << "' is not a port in [0, 65535]\n";
      return 2;
    }
  }

  try {
    if (*synth) RunSynth(common, spec_path, n, dump_spec);
    if (*train) RunTrain(common, data, meta);
    if (*featsel) RunSelectFeatures(common, data, meta, patience, metric, eval);
    if (*recommend) RunRecommend(common, bundle_path, request_path, budget);
    if (*sweep) RunSweep(common, bundle_path, data, budgets, limit);
    if (*robust) RunRobustnessCmd(common, bundle_path, data, budgets, limit, init_lo, init_hi);
    if (*serve) return RunServe(common, host, port, bundle_dir, ui_dir, preload, max_payload_mb);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

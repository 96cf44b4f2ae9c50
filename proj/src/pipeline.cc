/*
 * Copyright 2026 The refusalkit Authors.
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

#include "refusal/pipeline.h"

#include <algorithm>
#include <functional>
#include <sstream>

#include "refusal/analyze.h"
#include "refusal/digest.h"
#include "refusal/error.h"
#include "refusal/http_backend.h"
#include "refusal/identify.h"
#include "refusal/text.h"

namespace refusal {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTrainFile = "train.jsonl";
constexpr const char* kTestFile = "test.jsonl";
constexpr const char* kPartitionFile = "partition.json";
constexpr const char* kTrainingFile = "training.jsonl";
constexpr const char* kConstructSummaryFile = "construct_summary.json";
constexpr const char* kEvalResultsFile = "eval_results.jsonl";
constexpr const char* kApCurveFile = "ap_curve.csv";
constexpr const char* kEvalSummaryFile = "eval_summary.json";
constexpr const char* kPerplexityFile = "perplexity.csv";
constexpr const char* kEntropyFile = "entropy.csv";
constexpr const char* kHistogramFile = "confidence_histogram.csv";
constexpr const char* kAnalysisSummaryFile = "analysis_summary.json";
constexpr const char* kManifestFile = "manifest.json";

std::string_view policy_name(RefusalPolicy p) {
  switch (p) {
    case RefusalPolicy::kNever: return "never";
    case RefusalPolicy::kRefuseUnfamiliar: return "refuse_unfamiliar";
    case RefusalPolicy::kAlways: return "always";
  }
  return "never";
}

RefusalPolicy parse_policy(std::string_view text) {
  if (text == "never") return RefusalPolicy::kNever;
  if (text == "refuse_unfamiliar") return RefusalPolicy::kRefuseUnfamiliar;
  if (text == "always") return RefusalPolicy::kAlways;
  throw ValidationError("unknown refusal policy '" + std::string(text) + "'");
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config field '") + key + "': " + e.what());
  }
}

ojson dataset_spec_json(const DatasetSpec& d) {
  ojson out;
  out["path"] = d.path.string();
  out["schema"] = to_string(d.schema);
  out["sample"] = d.sample ? json(*d.sample) : json(nullptr);
  out["dedupe"] = d.dedupe;
  return out;
}

DatasetSpec dataset_spec_from_json(const json& doc, const fs::path& base) {
  if (!doc.is_object() || !doc.contains("path")) {
    throw ValidationError("dataset entry needs a 'path'");
  }
  DatasetSpec d;
  d.path = resolve(base, doc["path"].get<std::string>());
  d.schema = parse_schema(get_or<std::string>(doc, "schema", "qa_jsonl"));
  if (doc.contains("sample") && !doc["sample"].is_null()) d.sample = doc["sample"].get<size_t>();
  d.dedupe = get_or<bool>(doc, "dedupe", false);
  return d;
}

FileDigest digest_of(const fs::path& path, const fs::path& relative_to = {}) {
  const std::string shown =
      relative_to.empty() ? path.string() : path.lexically_relative(relative_to).string();
  return {shown, sha256_file(path)};
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw MissingInputError(what + " not found: " + path.string());
}

Dataset load_dataset(const DatasetSpec& spec, uint64_t seed) {
  require_file(spec.path, "dataset");
  Dataset d = parse_dataset(spec.path, spec.schema);
  if (spec.dedupe) d = dedupe_exact(d);
  if (spec.sample) d = sample_subset(d, *spec.sample, seed);
  return d;
}

Dataset load_canonical(const fs::path& path) {
  require_file(path, "dataset artifact");
  return parse_dataset(path, Schema::kCanonical);
}

}  // namespace

bool ModelSpec::operator==(const ModelSpec& o) const {
  return kind == o.kind && name == o.name && knowledge == o.knowledge && seed == o.seed &&
         refusal_policy == o.refusal_policy && refusal_text == o.refusal_text &&
         endpoint == o.endpoint && auth_env == o.auth_env &&
         limits.max_concurrent == o.limits.max_concurrent && limits.timeout == o.limits.timeout &&
         limits.max_attempts == o.limits.max_attempts &&
         limits.backoff_base == o.limits.backoff_base;
}

ojson to_json(const ModelSpec& spec) {
  ojson out;
  out["kind"] = spec.kind == BackendKind::kHttpEndpoint ? "http" : "synthetic";
  out["name"] = spec.name;
  if (spec.kind == BackendKind::kInProcessSynthetic) {
    out["knowledge"] = spec.knowledge.string();
    out["seed"] = spec.seed;
    out["refusal_policy"] = policy_name(spec.refusal_policy);
    out["refusal_text"] = spec.refusal_text ? json(*spec.refusal_text) : json(nullptr);
  } else {
    out["endpoint"] = spec.endpoint;
    out["auth_env"] = spec.auth_env ? json(*spec.auth_env) : json(nullptr);
  }
  out["max_concurrent"] = spec.limits.max_concurrent;
  out["timeout_ms"] = spec.limits.timeout.count();
  out["max_attempts"] = spec.limits.max_attempts;
  out["backoff_ms"] = spec.limits.backoff_base.count();
  return out;
}

ModelSpec model_spec_from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("model entry must be an object");
  ModelSpec spec;
  const std::string kind = get_or<std::string>(doc, "kind", "synthetic");
  if (kind == "synthetic") {
    spec.kind = BackendKind::kInProcessSynthetic;
    spec.knowledge = get_or<std::string>(doc, "knowledge", "");
    if (spec.knowledge.empty()) throw ValidationError("synthetic model needs 'knowledge'");
    spec.seed = get_or<uint64_t>(doc, "seed", 0);
    spec.refusal_policy = parse_policy(get_or<std::string>(doc, "refusal_policy", "never"));
    if (doc.contains("refusal_text") && !doc["refusal_text"].is_null()) {
      spec.refusal_text = doc["refusal_text"].get<std::string>();
    }
    spec.name = get_or<std::string>(doc, "name", "synthetic");
  } else if (kind == "http") {
    spec.kind = BackendKind::kHttpEndpoint;
    spec.endpoint = get_or<std::string>(doc, "endpoint", "");
    if (spec.endpoint.empty()) throw ValidationError("http model needs 'endpoint'");
    spec.name = get_or<std::string>(doc, "name", "");
    if (spec.name.empty()) throw ValidationError("http model needs 'name'");
    if (doc.contains("auth_env") && !doc["auth_env"].is_null()) {
      spec.auth_env = doc["auth_env"].get<std::string>();
    }
  } else {
    throw ValidationError("unknown model kind '" + kind + "'");
  }
  spec.limits.max_concurrent = get_or<int>(doc, "max_concurrent", spec.limits.max_concurrent);
  spec.limits.timeout =
      std::chrono::milliseconds(get_or<int64_t>(doc, "timeout_ms", spec.limits.timeout.count()));
  spec.limits.max_attempts = get_or<int>(doc, "max_attempts", spec.limits.max_attempts);
  spec.limits.backoff_base = std::chrono::milliseconds(
      get_or<int64_t>(doc, "backoff_ms", spec.limits.backoff_base.count()));
  spec.limits.validate();
  return spec;
}

ModelHandle open_model(const ModelSpec& spec) {
  if (spec.kind == BackendKind::kHttpEndpoint) {
    return make_http_model(spec.endpoint, spec.name, spec.limits, spec.auth_env);
  }
  require_file(spec.knowledge, "knowledge table");
  SyntheticOptions options;
  options.refusal_policy = spec.refusal_policy;
  if (spec.refusal_text) options.refusal_text = *spec.refusal_text;
  auto backend = std::make_shared<SyntheticBackend>(
      SyntheticModel(load_knowledge_table(spec.knowledge, spec.seed), options));
  return make_synthetic_model(std::move(backend), spec.limits, spec.name);
}

bool RunConfig::operator==(const RunConfig& o) const {
  return to_json(*this) == to_json(o);
}

ojson to_json(const RunConfig& c) {
  ojson out;
  out["output_dir"] = c.output_dir.string();
  out["seed"] = c.seed;
  ojson models = ojson::object();
  if (c.identification_model) models["identification"] = to_json(*c.identification_model);
  if (c.evaluation_model) models["evaluation"] = to_json(*c.evaluation_model);
  if (c.analysis_model) models["analysis"] = to_json(*c.analysis_model);
  out["models"] = models;
  ojson datasets = ojson::object();
  if (c.train) datasets["train"] = dataset_spec_json(*c.train);
  if (c.test) datasets["test"] = dataset_spec_json(*c.test);
  out["datasets"] = datasets;
  out["prompt_template"] = c.prompt_template ? json(c.prompt_template->string()) : json(nullptr);
  out["identify"] = {{"method", to_string(c.method)},
                     {"window", c.window},
                     {"k", c.k},
                     {"temperature", c.temperature},
                     {"fraction", c.fraction},
                     {"allow_partial", c.allow_partial}};
  out["construct"] = {{"strategy", to_string(c.strategy)}};
  out["evaluate"] = {{"mode", to_string(c.eval_mode)},
                     {"w", c.w},
                     {"k_votes", c.k_votes},
                     {"theta", c.theta},
                     {"ap_convention", to_string(c.ap_convention)}};
  out["analyze"] = {{"reports", c.reports},
                    {"bins", c.bins},
                    {"k", c.analysis_k},
                    {"temperature", c.analysis_temperature}};
  return out;
}

RunConfig config_from_json(const json& doc, const fs::path& base) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c;
  c.output_dir = resolve(base, get_or<std::string>(doc, "output_dir", "out"));
  c.seed = get_or<uint64_t>(doc, "seed", 0);

  const json models = doc.value("models", json::object());
  auto model_at = [&](const char* key) -> std::optional<ModelSpec> {
    if (!models.contains(key) || models[key].is_null()) return std::nullopt;
    ModelSpec spec = model_spec_from_json(models[key]);
    spec.knowledge = resolve(base, spec.knowledge);
    return spec;
  };
  c.identification_model = model_at("identification");
  c.evaluation_model = model_at("evaluation");
  c.analysis_model = model_at("analysis");

  const json datasets = doc.value("datasets", json::object());
  if (datasets.contains("train") && !datasets["train"].is_null()) {
    c.train = dataset_spec_from_json(datasets["train"], base);
  }
  if (datasets.contains("test") && !datasets["test"].is_null()) {
    c.test = dataset_spec_from_json(datasets["test"], base);
  }
  if (doc.contains("prompt_template") && !doc["prompt_template"].is_null()) {
    c.prompt_template = resolve(base, doc["prompt_template"].get<std::string>());
  }

  const json identify = doc.value("identify", json::object());
  const std::string method = get_or<std::string>(identify, "method", "supervised");
  if (method == "supervised") {
    c.method = IdentificationMethod::kSupervised;
  } else if (method == "unsupervised") {
    c.method = IdentificationMethod::kUnsupervised;
  } else {
    throw ValidationError("unknown identification method '" + method + "'");
  }
  c.window = get_or<size_t>(identify, "window", c.window);
  c.k = get_or<int>(identify, "k", c.k);
  c.temperature = get_or<double>(identify, "temperature", c.temperature);
  c.fraction = get_or<double>(identify, "fraction", c.fraction);
  c.allow_partial = get_or<bool>(identify, "allow_partial", c.allow_partial);

  const json construct = doc.value("construct", json::object());
  c.strategy = parse_strategy(get_or<std::string>(construct, "strategy", "padding"));

  const json evaluate = doc.value("evaluate", json::object());
  c.eval_mode = parse_eval_mode(get_or<std::string>(evaluate, "mode", "rtuning"));
  c.w = get_or<double>(evaluate, "w", c.w);
  c.k_votes = get_or<int>(evaluate, "k_votes", c.k_votes);
  c.theta = get_or<double>(evaluate, "theta", c.theta);
  c.ap_convention = parse_ap_convention(get_or<std::string>(evaluate, "ap_convention", "standard"));

  const json analyze = doc.value("analyze", json::object());
  c.reports = get_or<std::vector<std::string>>(analyze, "reports", c.reports);
  for (const std::string& r : c.reports) {
    if (r != "perplexity" && r != "entropy" && r != "confidence") {
      throw ValidationError("unknown analysis report '" + r + "'");
    }
  }
  c.bins = get_or<size_t>(analyze, "bins", c.bins);
  c.analysis_k = get_or<int>(analyze, "k", c.analysis_k);
  c.analysis_temperature = get_or<double>(analyze, "temperature", c.analysis_temperature);
  return c;
}

RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInputError("config not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

std::string config_digest(const RunConfig& config) { return sha256_hex(to_json(config).dump()); }

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return "ingest";
    case Stage::kIdentify: return "identify";
    case Stage::kConstruct: return "construct";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kAnalyze: return "analyze";
  }
  return "ingest";
}

Stage parse_stage(std::string_view text) {
  for (Stage s : all_stages()) {
    if (to_string(s) == text) return s;
  }
  throw ValidationError("unknown stage '" + std::string(text) + "'");
}

std::set<Stage> parse_stages(std::string_view comma_separated) {
  std::set<Stage> out;
  size_t pos = 0;
  while (pos <= comma_separated.size()) {
    size_t end = comma_separated.find(',', pos);
    if (end == std::string_view::npos) end = comma_separated.size();
    const std::string_view name = trim(comma_separated.substr(pos, end - pos));
    if (!name.empty()) out.insert(parse_stage(name));
    pos = end + 1;
  }
  if (out.empty()) throw ValidationError("no stages selected");
  return out;
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {Stage::kIngest, Stage::kIdentify, Stage::kConstruct,
                                            Stage::kEvaluate, Stage::kAnalyze};
  return stages;
}

ojson manifest_json(const RunConfig& config, const std::vector<ManifestEntry>& entries) {
  ojson out;
  out["tool"] = kToolName;
  out["version"] = kToolVersion;
  out["config_sha256"] = config_digest(config);
  out["config"] = to_json(config);
  ojson list = ojson::array();
  for (const ManifestEntry& e : entries) {
    ojson entry;
    entry["stage"] = to_string(e.stage);
    ojson inputs = ojson::array();
    for (const FileDigest& f : e.inputs) inputs.push_back({{"path", f.path}, {"sha256", f.sha256}});
    entry["inputs"] = inputs;
    entry["parameters"] = e.parameters;
    ojson outputs = ojson::array();
    for (const FileDigest& f : e.outputs) outputs.push_back({{"path", f.path}, {"sha256", f.sha256}});
    entry["outputs"] = outputs;
    list.push_back(std::move(entry));
  }
  out["entries"] = list;
  return out;
}

namespace {

class PipelineRunner {
 public:
  PipelineRunner(const RunConfig& config, const std::set<Stage>& stages)
      : c_(config), stages_(stages), dir_(config.output_dir) {}

  void validate() const {
    // Validation when the config cannot supply an input, missing input when
    // it can but the upstream artifact is not on disk.
    auto need = [&](const char* stage, Stage producer, const char* file, bool configured,
                    const std::string& what) {
      if (stages_.count(producer) && configured) return;
      if (!stages_.count(producer) && fs::exists(dir_ / file)) return;
      if (!configured) throw ValidationError(std::string(stage) + " needs " + what);
      throw MissingInputError(std::string(stage) + " needs " + (dir_ / file).string() +
                              " (run " + std::string(to_string(producer)) + ")");
    };
    const bool train = c_.train.has_value();
    if (stages_.count(Stage::kIngest) && !train) {
      throw ValidationError("ingest needs datasets.train");
    }
    if (stages_.count(Stage::kIdentify)) {
      need("identify", Stage::kIngest, kTrainFile, train,
           "a training dataset (datasets.train)");
      if (!c_.identification_model) throw ValidationError("identify needs models.identification");
    }
    if (stages_.count(Stage::kConstruct)) {
      need("construct", Stage::kIngest, kTrainFile, train,
           "a training dataset (datasets.train)");
      need("construct", Stage::kIdentify, kPartitionFile, c_.identification_model.has_value(),
           "a partition (models.identification)");
    }
    if (stages_.count(Stage::kEvaluate)) {
      need("evaluate", Stage::kIngest, kTestFile, c_.test.has_value(),
           "a test dataset (datasets.test)");
      if (!c_.evaluation_model) throw ValidationError("evaluate needs models.evaluation");
    }
    if (stages_.count(Stage::kAnalyze)) {
      need("analyze", Stage::kIngest, kTrainFile, train, "a training dataset (datasets.train)");
      need("analyze", Stage::kIdentify, kPartitionFile, c_.identification_model.has_value(),
           "a partition (models.identification)");
      const bool needs_model = std::any_of(c_.reports.begin(), c_.reports.end(), [](const auto& r) {
        return r == "perplexity" || r == "entropy";
      });
      if (needs_model && !c_.analysis_model) throw ValidationError("analyze needs models.analysis");
    }
    if (c_.prompt_template && !fs::exists(*c_.prompt_template)) {
      throw MissingInputError("prompt template not found: " + c_.prompt_template->string());
    }
  }

  PipelineResult run() {
    PipelineResult result;
    try {
      validate();
    } catch (const MissingInputError& e) {
      return {kExitMissingInput, e.what(), {}};
    } catch (const Error& e) {
      return {kExitValidation, e.what(), {}};
    }
    if (c_.prompt_template) tmpl_ = load_template(*c_.prompt_template);
    load_existing_manifest();
    for (Stage stage : all_stages()) {
      if (!stages_.count(stage)) continue;
      try {
        ManifestEntry entry = run_stage(stage);
        upsert(std::move(entry));
        write_manifest();
      } catch (const MissingInputError& e) {
        result.exit_code = kExitMissingInput;
        result.error = std::string(to_string(stage)) + ": " + e.what();
        break;
      } catch (const ValidationError& e) {
        result.exit_code = kExitValidation;
        result.error = std::string(to_string(stage)) + ": " + e.what();
        break;
      } catch (const std::exception& e) {
        result.exit_code = kExitStageFailed;
        result.error = std::string(to_string(stage)) + ": " + e.what();
        break;
      }
    }
    result.manifest = entries_;
    return result;
  }

 private:
  fs::path path(const char* file) const { return dir_ / file; }
  FileDigest out_digest(const char* file) const { return digest_of(path(file), dir_); }
  FileDigest in_digest(const fs::path& p) const {
    return p.parent_path() == dir_ ? digest_of(p, dir_) : digest_of(p);
  }

  void load_existing_manifest() {
    const fs::path manifest = path(kManifestFile);
    if (!fs::exists(manifest)) return;
    try {
      const json doc = json::parse(read_file(manifest));
      for (const json& e : doc.at("entries")) {
        ManifestEntry entry;
        entry.stage = parse_stage(e.at("stage").get<std::string>());
        for (const json& f : e.at("inputs")) entry.inputs.push_back({f.at("path"), f.at("sha256")});
        entry.parameters = e.at("parameters");
        for (const json& f : e.at("outputs")) entry.outputs.push_back({f.at("path"), f.at("sha256")});
        entries_.push_back(std::move(entry));
      }
    } catch (const std::exception&) {
      entries_.clear();  // unreadable manifest: start over
    }
  }

  void upsert(ManifestEntry entry) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const ManifestEntry& e) { return e.stage == entry.stage; });
    if (it != entries_.end()) {
      *it = std::move(entry);
    } else {
      entries_.push_back(std::move(entry));
    }
    std::sort(entries_.begin(), entries_.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
      return static_cast<int>(a.stage) < static_cast<int>(b.stage);
    });
  }

  void write_manifest() const {
    write_file(path(kManifestFile), manifest_json(c_, entries_).dump(2) + "\n");
  }

  ManifestEntry run_stage(Stage stage) {
    switch (stage) {
      case Stage::kIngest: return ingest();
      case Stage::kIdentify: return identify();
      case Stage::kConstruct: return construct();
      case Stage::kEvaluate: return evaluate();
      case Stage::kAnalyze: return analyze();
    }
    throw Error("unknown stage");
  }

  ManifestEntry ingest() {
    ManifestEntry e;
    e.stage = Stage::kIngest;
    e.parameters["seed"] = c_.seed;
    e.parameters["prng"] = Prng::kName;
    e.parameters["train"] = dataset_spec_json(*c_.train);
    Dataset train = load_dataset(*c_.train, c_.seed);
    train.name = "train";
    e.inputs.push_back(in_digest(c_.train->path));
    write_canonical_jsonl(train, path(kTrainFile));
    e.outputs.push_back(out_digest(kTrainFile));
    if (c_.test) {
      e.parameters["test"] = dataset_spec_json(*c_.test);
      Dataset test = load_dataset(*c_.test, c_.seed);
      e.inputs.push_back(in_digest(c_.test->path));
      write_canonical_jsonl(test, path(kTestFile));
      e.outputs.push_back(out_digest(kTestFile));
    }
    return e;
  }

  void add_model_input(ManifestEntry& e, const ModelSpec& spec) const {
    if (spec.kind == BackendKind::kInProcessSynthetic) e.inputs.push_back(in_digest(spec.knowledge));
  }

  ManifestEntry identify() {
    ManifestEntry e;
    e.stage = Stage::kIdentify;
    const Dataset train = load_canonical(path(kTrainFile));
    e.inputs.push_back(out_digest(kTrainFile));
    add_model_input(e, *c_.identification_model);
    const ModelHandle model = open_model(*c_.identification_model);
    Partition p;
    if (c_.method == IdentificationMethod::kSupervised) {
      SupervisedOptions options;
      options.window = c_.window;
      options.prompt_template = tmpl_;
      p = supervised_split(model, train, options);
    } else {
      UnsupervisedOptions options;
      options.k = c_.k;
      options.temperature = c_.temperature;
      options.uncertain_fraction = c_.fraction;
      options.window = c_.window;
      const auto views = question_views(train, tmpl_);
      p = unsupervised_split(model, views, options);
    }
    e.parameters = p.parameters;
    e.parameters["method"] = to_string(p.method);
    e.parameters["model"] = to_json(*c_.identification_model);
    e.parameters["allow_partial"] = c_.allow_partial;
    save_partition(p, path(kPartitionFile));
    e.outputs.push_back(out_digest(kPartitionFile));
    require_resolved(p, c_.allow_partial);
    return e;
  }

  ManifestEntry construct() {
    ManifestEntry e;
    e.stage = Stage::kConstruct;
    const Dataset train = load_canonical(path(kTrainFile));
    require_file(path(kPartitionFile), "partition");
    const Partition p = load_partition(path(kPartitionFile));
    e.inputs = {out_digest(kTrainFile), out_digest(kPartitionFile)};
    const BuildSummary summary =
        build_training_file(train, p, c_.strategy, c_.seed, path(kTrainingFile), tmpl_);
    json summary_json = to_json(summary);
    summary_json["strategy"] = to_string(c_.strategy);
    summary_json["seed"] = c_.seed;
    write_file(path(kConstructSummaryFile), summary_json.dump(2) + "\n");
    e.parameters = {{"strategy", to_string(c_.strategy)}, {"seed", c_.seed}};
    e.outputs = {out_digest(kTrainingFile), out_digest(kConstructSummaryFile)};
    return e;
  }

  ManifestEntry evaluate() {
    ManifestEntry e;
    e.stage = Stage::kEvaluate;
    const Dataset test = load_canonical(path(kTestFile));
    e.inputs.push_back(out_digest(kTestFile));
    add_model_input(e, *c_.evaluation_model);
    const ModelHandle model = open_model(*c_.evaluation_model);
    EvalConfig cfg;
    cfg.w = c_.w;
    cfg.k_votes = c_.k_votes;
    cfg.certainty_threshold = c_.theta;
    cfg.window = c_.window;
    cfg.ap_convention = c_.ap_convention;
    cfg.prompt_template = tmpl_;
    const EvalRun run = evaluate_dataset(model, test, c_.eval_mode, cfg);
    write_file(path(kEvalResultsFile), to_jsonl(run.results));
    write_file(path(kApCurveFile), ap_curve_csv(run.curve));
    write_file(path(kEvalSummaryFile), run.summary.dump(2) + "\n");
    e.parameters = run.summary;
    e.parameters["model"] = to_json(*c_.evaluation_model);
    e.outputs = {out_digest(kEvalResultsFile), out_digest(kApCurveFile),
                 out_digest(kEvalSummaryFile)};
    if (!run.unresolved.empty() && !c_.allow_partial) {
      throw ValidationError(std::to_string(run.unresolved.size()) +
                            " evaluation item(s) unresolved (first: " + run.unresolved.front().id +
                            ": " + run.unresolved.front().error + ")");
    }
    return e;
  }

  ManifestEntry analyze() {
    ManifestEntry e;
    e.stage = Stage::kAnalyze;
    const Dataset train = load_canonical(path(kTrainFile));
    require_file(path(kPartitionFile), "partition");
    const Partition p = load_partition(path(kPartitionFile));
    e.inputs = {out_digest(kTrainFile), out_digest(kPartitionFile)};
    e.parameters = {{"reports", c_.reports},
                    {"bins", c_.bins},
                    {"k", c_.analysis_k},
                    {"temperature", c_.analysis_temperature}};
    ojson summary = ojson::object();
    auto wants = [&](const char* r) {
      return std::find(c_.reports.begin(), c_.reports.end(), r) != c_.reports.end();
    };
    std::optional<ModelHandle> model;
    if (wants("perplexity") || wants("entropy")) {
      add_model_input(e, *c_.analysis_model);
      e.parameters["model"] = to_json(*c_.analysis_model);
      model.emplace(open_model(*c_.analysis_model));
    }
    if (wants("perplexity")) {
      PerplexityOptions options;
      options.prompt_template = tmpl_;
      const PerplexityReport r = dataset_perplexity(*model, train, p, options);
      write_file(path(kPerplexityFile), per_item_csv(r.per_item, p, "perplexity"));
      e.outputs.push_back(out_digest(kPerplexityFile));
      summary["perplexity"] = to_json(r);
    }
    if (wants("entropy")) {
      EntropyOptions options;
      options.k = c_.analysis_k;
      options.temperature = c_.analysis_temperature;
      const EntropyReport r = entropy_report(*model, train, p, options);
      write_file(path(kEntropyFile), per_item_csv(r.per_item, p, "entropy"));
      e.outputs.push_back(out_digest(kEntropyFile));
      summary["entropy"] = to_json(r);
    }
    if (wants("confidence") && fs::exists(path(kEvalResultsFile))) {
      e.inputs.push_back(out_digest(kEvalResultsFile));
      std::vector<std::pair<std::string, double>> values;
      for (const EvalResult& r : load_eval_results(path(kEvalResultsFile))) {
        values.emplace_back(r.id, r.combined_conf);
      }
      const auto bins = confidence_histogram(values, c_.bins);
      write_file(path(kHistogramFile), histogram_csv(bins));
      e.outputs.push_back(out_digest(kHistogramFile));
      summary["confidence"] = {{"values", values.size()}, {"bins", c_.bins}};
    }
    write_file(path(kAnalysisSummaryFile), summary.dump(2) + "\n");
    e.outputs.push_back(out_digest(kAnalysisSummaryFile));
    return e;
  }

  const RunConfig& c_;
  const std::set<Stage>& stages_;
  fs::path dir_;
  PromptTemplate tmpl_;
  std::vector<ManifestEntry> entries_;
};

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, const std::set<Stage>& stages) {
  return PipelineRunner(config, stages).run();
}

}  // namespace refusal

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

#ifndef REFUSAL_PIPELINE_H_
#define REFUSAL_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "refusal/construct.h"
#include "refusal/corpus.h"
#include "refusal/evaluate.h"
#include "refusal/gateway.h"
#include "refusal/synthetic_model.h"

namespace refusal {

inline constexpr std::string_view kToolName = "refusalkit";
inline constexpr std::string_view kToolVersion = "0.1.0";

// How to reach a model. Secrets are never stored: http models name an
// environment variable holding the bearer token.
struct ModelSpec {
  BackendKind kind = BackendKind::kInProcessSynthetic;
  std::string name = "synthetic";
  // in_process_synthetic
  std::filesystem::path knowledge;
  uint64_t seed = 0;
  RefusalPolicy refusal_policy = RefusalPolicy::kNever;
  std::optional<std::string> refusal_text;
  // http_endpoint
  std::string endpoint;
  std::optional<std::string> auth_env;
  RequestLimits limits;

  bool operator==(const ModelSpec& o) const;
};

nlohmann::ordered_json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& doc);
ModelHandle open_model(const ModelSpec& spec);

struct DatasetSpec {
  std::filesystem::path path;
  Schema schema = Schema::kQaJsonl;
  std::optional<size_t> sample;
  bool dedupe = false;

  bool operator==(const DatasetSpec&) const = default;
};

struct RunConfig {
  std::filesystem::path output_dir = "out";
  uint64_t seed = 0;

  std::optional<ModelSpec> identification_model;
  std::optional<ModelSpec> evaluation_model;
  std::optional<ModelSpec> analysis_model;

  std::optional<DatasetSpec> train;
  std::optional<DatasetSpec> test;
  std::optional<std::filesystem::path> prompt_template;

  // identify
  IdentificationMethod method = IdentificationMethod::kSupervised;
  size_t window = kDefaultMatchWindow;
  int k = 10;
  double temperature = 0.7;
  double fraction = 0.5;
  bool allow_partial = false;

  // construct
  Strategy strategy = Strategy::kPadding;

  // evaluate
  EvalMode eval_mode = EvalMode::kRTuning;
  double w = 0.5;
  int k_votes = 10;
  double theta = 0.5;
  APConvention ap_convention = APConvention::kStandard;

  // analyze
  std::vector<std::string> reports = {"perplexity", "entropy", "confidence"};
  size_t bins = 10;
  int analysis_k = 5;
  double analysis_temperature = 0.7;

  bool operator==(const RunConfig& o) const;
};

nlohmann::ordered_json to_json(const RunConfig& config);
// Relative paths are resolved against `base_dir`.
RunConfig config_from_json(const nlohmann::json& doc,
                           const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
std::string config_digest(const RunConfig& config);

enum class Stage { kIngest, kIdentify, kConstruct, kEvaluate, kAnalyze };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);
std::set<Stage> parse_stages(std::string_view comma_separated);
const std::vector<Stage>& all_stages();

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitValidation = 3,
  kExitMissingInput = 4,
  kExitStageFailed = 5,
};

struct FileDigest {
  std::string path;
  std::string sha256;
};

struct ManifestEntry {
  Stage stage = Stage::kIngest;
  std::vector<FileDigest> inputs;
  nlohmann::ordered_json parameters;
  std::vector<FileDigest> outputs;
};

struct PipelineResult {
  int exit_code = kExitOk;
  std::string error;
  std::vector<ManifestEntry> manifest;
};

nlohmann::ordered_json manifest_json(const RunConfig& config,
                                     const std::vector<ManifestEntry>& entries);

// Runs the requested stages in dependency order inside config.output_dir.
// Each stage reads earlier stages' artifacts from that directory and
// appends a manifest entry; manifest.json is rewritten after every stage.
// The first failing stage stops the run with a distinct exit code.
PipelineResult run_pipeline(const RunConfig& config, const std::set<Stage>& stages);

}  // namespace refusal

#endif  // REFUSAL_PIPELINE_H_

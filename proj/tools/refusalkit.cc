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

// refusalkit: command-line driver for the refusal-aware tuning pipeline.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "refusal/digest.h"
#include "refusal/error.h"
#include "refusal/pipeline.h"
#include "refusal/report.h"
#include "refusal/synthetic_server.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace refusal;

namespace {

struct ModelFlags {
  std::string model_file;
  std::string synthetic;
  uint64_t synthetic_seed = 0;
  std::string refusal_policy = "never";
  std::string endpoint;
  std::string model_name;
  std::string auth_env;
  int max_concurrent = 0;
  int64_t timeout_ms = 0;
  int max_attempts = 0;
};

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  std::string train;
  std::string test;
  std::string schema;
  std::optional<size_t> sample;
  bool dedupe = false;
  std::string prompt_template;
  ModelFlags model;
};

struct StageFlags {
  std::optional<std::string> method;
  std::optional<size_t> window;
  std::optional<int> k;
  std::optional<double> temperature;
  std::optional<double> fraction;
  bool allow_partial = false;
  std::optional<std::string> strategy;
  std::optional<std::string> mode;
  std::optional<double> w;
  std::optional<int> k_votes;
  std::optional<double> theta;
  std::optional<std::string> ap_convention;
  std::vector<std::string> reports;
  std::optional<size_t> bins;
  std::optional<int> analysis_k;
  std::optional<double> analysis_temperature;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "Run configuration (JSON)");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--seed", f.seed, "Seed for sampling and construction");
  app->add_option("--train", f.train, "Training dataset file");
  app->add_option("--test", f.test, "Test dataset file");
  app->add_option("--schema", f.schema, "Input schema: qa_jsonl, mc_jsonl, nli_as_mc, canonical");
  app->add_option("--sample", f.sample, "Draw a seeded subset of N items");
  app->add_flag("--dedupe", f.dedupe, "Drop exact duplicate questions");
  app->add_option("--template", f.prompt_template, "Prompt template (JSON)");
  ModelFlags& m = f.model;
  app->add_option("--model", m.model_file, "Model spec (JSON), used for every role");
  app->add_option("--synthetic", m.synthetic, "Knowledge table for the synthetic model");
  app->add_option("--synthetic-seed", m.synthetic_seed, "Synthetic model seed");
  app->add_option("--refusal-policy", m.refusal_policy,
                  "Synthetic refusal policy: never, refuse_unfamiliar, always");
  app->add_option("--endpoint", m.endpoint, "Completions endpoint base URL");
  app->add_option("--model-name", m.model_name, "Model name sent to the endpoint");
  app->add_option("--auth-env", m.auth_env, "Environment variable holding a bearer token");
  app->add_option("--max-concurrent", m.max_concurrent, "In-flight request limit");
  app->add_option("--timeout-ms", m.timeout_ms, "Per-request timeout");
  app->add_option("--max-attempts", m.max_attempts, "Attempts per request, including the first");
}

void add_identify(CLI::App* app, StageFlags& s) {
  app->add_option("--method", s.method, "supervised or unsupervised")
      ->check(CLI::IsMember({"supervised", "unsupervised"}));
  app->add_option("--window", s.window, "Tokens compared when matching answers");
  app->add_option("--k", s.k, "Samples per question (unsupervised)");
  app->add_option("--temperature", s.temperature, "Sampling temperature (unsupervised)");
  app->add_option("--fraction", s.fraction, "Share of questions labelled uncertain");
  app->add_flag("--allow-partial", s.allow_partial, "Keep going when items stay unresolved");
}

void add_construct(CLI::App* app, StageFlags& s) {
  app->add_option("--strategy", s.strategy, "padding or replacement")
      ->check(CLI::IsMember({"padding", "replacement"}));
}

void add_evaluate(CLI::App* app, StageFlags& s) {
  app->add_option("--mode", s.mode, "rtuning, vanilla, vanilla-c or refusal-bench")
      ->check(CLI::IsMember({"rtuning", "vanilla", "vanilla-c", "refusal-bench"}));
  app->add_option("--w", s.w, "Weight of prediction confidence");
  app->add_option("--k-votes", s.k_votes, "Samples for vote confidence (vanilla-c)");
  app->add_option("--theta", s.theta, "Certainty threshold for the answer rate");
  app->add_option("--ap-convention", s.ap_convention, "standard or shifted")
      ->check(CLI::IsMember({"standard", "shifted"}));
}

void add_analyze(CLI::App* app, StageFlags& s, bool prefixed) {
  app->add_option("--report", s.reports, "perplexity, entropy, confidence (repeatable)")
      ->check(CLI::IsMember({"perplexity", "entropy", "confidence"}));
  app->add_option("--bins", s.bins, "Confidence histogram bins");
  app->add_option(prefixed ? "--analysis-k" : "--k", s.analysis_k, "Samples per question");
  app->add_option(prefixed ? "--analysis-temperature" : "--temperature", s.analysis_temperature,
                  "Sampling temperature");
}

std::optional<ModelSpec> model_from_flags(const ModelFlags& m) {
  std::optional<ModelSpec> spec;
  if (!m.model_file.empty()) {
    spec = model_spec_from_json(json::parse(read_file(m.model_file)));
    spec->knowledge = fs::absolute(fs::path(m.model_file).parent_path() / spec->knowledge);
  } else if (!m.synthetic.empty()) {
    spec.emplace();
    spec->kind = BackendKind::kInProcessSynthetic;
    spec->knowledge = m.synthetic;
    spec->seed = m.synthetic_seed;
    json probe = {{"kind", "synthetic"}, {"knowledge", m.synthetic},
                  {"refusal_policy", m.refusal_policy}};
    spec->refusal_policy = model_spec_from_json(probe).refusal_policy;
  } else if (!m.endpoint.empty()) {
    if (m.model_name.empty()) throw ValidationError("--endpoint needs --model-name");
    spec.emplace();
    spec->kind = BackendKind::kHttpEndpoint;
    spec->endpoint = m.endpoint;
    spec->name = m.model_name;
    if (!m.auth_env.empty()) spec->auth_env = m.auth_env;
  }
  if (spec) {
    if (m.max_concurrent > 0) spec->limits.max_concurrent = m.max_concurrent;
    if (m.timeout_ms > 0) spec->limits.timeout = std::chrono::milliseconds(m.timeout_ms);
    if (m.max_attempts > 0) spec->limits.max_attempts = m.max_attempts;
    spec->limits.validate();
  }
  return spec;
}

RunConfig build_config(const CommonFlags& f, const StageFlags& s) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.seed) c.seed = *f.seed;
  auto dataset = [&](std::optional<DatasetSpec>& slot, const std::string& path) {
    if (!path.empty()) {
      if (!slot) slot.emplace();
      slot->path = path;
    }
    if (slot) {
      if (!f.schema.empty()) slot->schema = parse_schema(f.schema);
      if (f.dedupe) slot->dedupe = true;
    }
  };
  dataset(c.train, f.train);
  dataset(c.test, f.test);
  if (f.sample && c.train) c.train->sample = f.sample;
  if (!f.prompt_template.empty()) c.prompt_template = f.prompt_template;
  if (auto spec = model_from_flags(f.model)) {
    c.identification_model = c.evaluation_model = c.analysis_model = *spec;
  }
  if (s.method) {
    c.method = *s.method == "unsupervised" ? IdentificationMethod::kUnsupervised
                                           : IdentificationMethod::kSupervised;
  }
  if (s.window) c.window = *s.window;
  if (s.k) c.k = *s.k;
  if (s.temperature) c.temperature = *s.temperature;
  if (s.fraction) c.fraction = *s.fraction;
  if (s.allow_partial) c.allow_partial = true;
  if (s.strategy) c.strategy = parse_strategy(*s.strategy);
  if (s.mode) c.eval_mode = parse_eval_mode(*s.mode);
  if (s.w) c.w = *s.w;
  if (s.k_votes) c.k_votes = *s.k_votes;
  if (s.theta) c.theta = *s.theta;
  if (s.ap_convention) c.ap_convention = parse_ap_convention(*s.ap_convention);
  if (!s.reports.empty()) c.reports = s.reports;
  if (s.bins) c.bins = *s.bins;
  if (s.analysis_k) c.analysis_k = *s.analysis_k;
  if (s.analysis_temperature) c.analysis_temperature = *s.analysis_temperature;
  // Round-trip through the config parser so flag values get the same checks.
  return config_from_json(json::parse(to_json(c).dump()));
}

int run_stages(const CommonFlags& f, const StageFlags& s, const std::set<Stage>& stages) {
  const RunConfig config = build_config(f, s);
  const PipelineResult result = run_pipeline(config, stages);
  for (const ManifestEntry& e : result.manifest) {
    if (!stages.count(e.stage)) continue;
    for (const FileDigest& d : e.outputs) {
      std::cout << to_string(e.stage) << "\t" << d.path << "\t" << d.sha256 << "\n";
    }
  }
  if (result.exit_code != kExitOk) std::cerr << "refusalkit: error: " << result.error << "\n";
  return result.exit_code;
}

std::optional<json> read_json_if_exists(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  return json::parse(read_file(path));
}

int run_report(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<MethodRow> methods;
  std::vector<GroupRow> perplexity;
  std::vector<GroupRow> entropy;
  std::vector<RefusalRow> refusal;
  for (const std::string& spec : runs) {
    const size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ValidationError("--run expects LABEL=DIR, got '" + spec + "'");
    }
    const std::string label = spec.substr(0, eq);
    const fs::path dir = spec.substr(eq + 1);
    if (!fs::is_directory(dir)) throw MissingInputError("run directory not found: " + dir.string());
    bool found = false;
    if (auto eval = read_json_if_exists(dir / "eval_summary.json")) {
      found = true;
      if (eval->value("mode", "") == "refusal-bench") {
        refusal.push_back({eval->value("dataset", ""), label,
                           (*eval)["refusal_rate"].is_number()
                               ? std::optional<double>((*eval)["refusal_rate"].get<double>())
                               : std::nullopt});
      } else {
        methods.push_back(row_from_summary(label, *eval));
      }
    }
    if (auto analysis = read_json_if_exists(dir / "analysis_summary.json")) {
      found = true;
      auto group = [&](const char* key, std::vector<GroupRow>& rows) {
        if (!analysis->contains(key)) return;
        const json& r = (*analysis)[key];
        auto num = [&](const char* k) -> std::optional<double> {
          return r.contains(k) && r[k].is_number() ? std::optional<double>(r[k].get<double>())
                                                   : std::nullopt;
        };
        rows.push_back({label, r.value("model", ""), num("mean_certain"), num("mean_uncertain")});
      };
      group("perplexity", perplexity);
      group("entropy", entropy);
    }
    if (!found) throw MissingInputError("no evaluation or analysis summary in " + dir.string());
  }
  std::string text;
  if (!methods.empty()) text += render_method_table(methods);
  if (!perplexity.empty()) {
    if (!text.empty()) text += "\n";
    text += "Perplexity\n\n" + render_group_table(perplexity, 2);
  }
  if (!entropy.empty()) {
    if (!text.empty()) text += "\n";
    text += "Entropy\n\n" + render_group_table(entropy, 3);
  }
  if (!refusal.empty()) {
    if (!text.empty()) text += "\n";
    text += render_refusal_table(refusal);
  }
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return kExitOk;
}

SyntheticServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

int serve_synthetic(const ModelFlags& m, const std::string& host, int port) {
  if (m.synthetic.empty()) throw ValidationError("serve-synthetic needs --synthetic");
  if (!fs::exists(m.synthetic)) throw MissingInputError("knowledge table not found: " + m.synthetic);
  json probe = {{"kind", "synthetic"}, {"knowledge", m.synthetic},
                {"refusal_policy", m.refusal_policy}};
  SyntheticOptions options;
  options.refusal_policy = model_spec_from_json(probe).refusal_policy;
  auto backend = std::make_shared<SyntheticBackend>(
      SyntheticModel(load_knowledge_table(m.synthetic, m.synthetic_seed), options));
  SyntheticServer server(backend);
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cerr << "serving on http://" << host << ":" << port << "\n";
  server.listen(host, port);
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Refusal-aware instruction tuning: identify, construct, evaluate, analyze"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommonFlags common;
  StageFlags stage;

  std::map<CLI::App*, Stage> stage_commands;
  auto add_stage = [&](const char* name, const char* help, Stage s) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, common);
    stage_commands[sub] = s;
    return sub;
  };
  add_stage("ingest", "Normalize datasets into canonical JSONL", Stage::kIngest);
  add_identify(add_stage("identify", "Split training questions into certain and uncertain",
                         Stage::kIdentify),
               stage);
  add_construct(add_stage("construct", "Build the refusal-aware training file",
                          Stage::kConstruct),
                stage);
  add_evaluate(add_stage("evaluate", "Score a model on the test set", Stage::kEvaluate), stage);
  add_analyze(add_stage("analyze", "Perplexity, entropy and confidence reports",
                        Stage::kAnalyze),
              stage, false);

  CLI::App* run = app.add_subcommand("run", "Run several stages from one configuration");
  add_common(run, common);
  add_identify(run, stage);
  add_construct(run, stage);
  add_evaluate(run, stage);
  add_analyze(run, stage, true);
  std::string stages_text = "ingest,identify,construct,evaluate,analyze";
  run->add_option("--stages", stages_text, "Comma-separated stages");

  CLI::App* report = app.add_subcommand("report", "Collate run directories into summary tables");
  std::vector<std::string> report_runs;
  std::string report_out;
  report->add_option("--run", report_runs, "LABEL=DIR (repeatable)")->required();
  report->add_option("--out", report_out, "Write the tables here instead of stdout");

  CLI::App* serve = app.add_subcommand("serve-synthetic",
                                       "Serve the synthetic model over the completions protocol");
  ModelFlags serve_model;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8089;
  serve->add_option("--synthetic", serve_model.synthetic, "Knowledge table")->required();
  serve->add_option("--synthetic-seed", serve_model.synthetic_seed, "Synthetic model seed");
  serve->add_option("--refusal-policy", serve_model.refusal_policy, "Synthetic refusal policy");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Bind port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (const auto& [sub, s] : stage_commands) {
      if (sub->parsed()) return run_stages(common, stage, {s});
    }
    if (run->parsed()) return run_stages(common, stage, parse_stages(stages_text));
    if (report->parsed()) return run_report(report_runs, report_out);
    if (serve->parsed()) return serve_synthetic(serve_model, serve_host, serve_port);
  } catch (const MissingInputError& e) {
    std::cerr << "refusalkit: error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const ValidationError& e) {
    std::cerr << "refusalkit: error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    std::cerr << "refusalkit: error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "refusalkit: error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "refusalkit: error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

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

#include "refusal/evaluate.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "refusal/construct.h"
#include "refusal/digest.h"
#include "refusal/error.h"
#include "refusal/synthetic_model.h"
#include "refusal/text.h"

namespace refusal {

using json = nlohmann::json;

namespace {

constexpr std::string_view kProbeStart = "Are you sure";

// Lowercase, typographic apostrophes folded to ASCII, whitespace collapsed.
std::string fold_for_refusal(std::string_view text) {
  std::string folded;
  folded.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    if (text.substr(i, 3) == "\xE2\x80\x99" || text.substr(i, 3) == "\xE2\x80\x98") {
      folded.push_back('\'');
      i += 2;
    } else {
      folded.push_back(text[i]);
    }
  }
  std::string out;
  for (std::string_view token : split_whitespace(folded)) {
    if (!out.empty()) out.push_back(' ');
    out += to_lower_ascii(token);
  }
  return out;
}

std::string strip_trailing_punct(std::string s) {
  while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

// Generation up to the probe sentence, trimmed, minus one trailing period.
std::string extract_prediction(std::string_view text) {
  std::string_view head = text.substr(0, text.find(kProbeStart));
  std::string out(trim(head));
  if (!out.empty() && out.back() == '.') out.pop_back();
  return std::string(trim(out));
}

std::vector<std::string> letters(const QAItem& item) {
  std::vector<std::string> out;
  for (const Choice& c : item.choices) out.push_back(c.letter);
  return out;
}

std::string format_fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

std::string_view to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::kRTuning: return "rtuning";
    case EvalMode::kVanilla: return "vanilla";
    case EvalMode::kVanillaC: return "vanilla-c";
    case EvalMode::kRefusalBench: return "refusal-bench";
  }
  return "rtuning";
}

EvalMode parse_eval_mode(std::string_view text) {
  if (text == "rtuning") return EvalMode::kRTuning;
  if (text == "vanilla") return EvalMode::kVanilla;
  if (text == "vanilla-c") return EvalMode::kVanillaC;
  if (text == "refusal-bench") return EvalMode::kRefusalBench;
  throw ValidationError("unknown evaluation mode '" + std::string(text) + "'");
}

std::string_view to_string(APConvention convention) {
  return convention == APConvention::kStandard ? "standard" : "shifted";
}

APConvention parse_ap_convention(std::string_view text) {
  if (text == "standard") return APConvention::kStandard;
  if (text == "shifted") return APConvention::kShifted;
  throw ValidationError("unknown AP convention '" + std::string(text) + "'");
}

std::vector<std::string> default_refusal_lexicon() {
  std::vector<std::string> lexicon(kUncertaintyExpressions.begin(), kUncertaintyExpressions.end());
  for (const char* extra : {"do not know", "don't know", "not known", "impossible to know",
                            "impossible to answer", "unsure"}) {
    lexicon.emplace_back(extra);
  }
  return lexicon;
}

void EvalConfig::validate() const {
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("w must lie in [0, 1]");
  if (k_votes < 1) throw ValidationError("k_votes must be >= 1");
  if (!(vote_temperature > 0.0)) throw ValidationError("vote temperature must be > 0");
  if (!(certainty_threshold >= 0.0 && certainty_threshold <= 1.0)) {
    throw ValidationError("certainty threshold must lie in [0, 1]");
  }
}

nlohmann::ordered_json to_json(const EvalResult& r) {
  nlohmann::ordered_json out;
  out["id"] = r.id;
  out["prediction"] = r.prediction;
  out["correct"] = r.correct;
  out["refused"] = r.refused;
  out["pred_conf"] = r.pred_conf;
  out["cert_conf"] = r.cert_conf;
  out["combined_conf"] = r.combined_conf;
  out["raw"] = r.raw;
  return out;
}

EvalResult eval_result_from_json(const json& doc) {
  try {
    EvalResult r;
    r.id = doc.at("id").get<std::string>();
    r.prediction = doc.value("prediction", "");
    r.correct = doc.at("correct").get<bool>();
    r.refused = doc.value("refused", false);
    r.pred_conf = doc.at("pred_conf").get<double>();
    r.cert_conf = doc.at("cert_conf").get<double>();
    r.combined_conf = doc.at("combined_conf").get<double>();
    r.raw = doc.value("raw", "");
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed evaluation record: ") + e.what());
  }
}

std::vector<EvalResult> load_eval_results(const std::filesystem::path& path) {
  std::vector<EvalResult> out;
  std::istringstream in(read_file(path));
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(eval_result_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

AnswerPass answer_pass(const ModelHandle& m, const QAItem& item, const EvalConfig& cfg) {
  const std::string prompt = render_prompt(item, cfg.prompt_template);
  AnswerPass out;
  if (item.task_kind == TaskKind::kMultipleChoice) {
    const auto candidates = letters(item);
    const ChoiceScores scores = choice_scores(m, prompt, candidates);
    double max_score = -INFINITY;
    for (const auto& [c, s] : scores.scores) max_score = std::max(max_score, s);
    double total = 0.0;
    for (const auto& [c, s] : scores.scores) total += std::exp(s - max_score);
    out.prediction = scores.argmax;
    out.pred_conf = std::exp(scores.scores.at(scores.argmax) - max_score) / total;
    out.raw.text = scores.argmax;
    return out;
  }

  CompletionRequest r;
  r.prompt = prompt;
  r.max_tokens = cfg.qa_max_tokens;
  r.temperature = 0.0;
  r.logprobs = true;
  r.stop = {"\n"};
  out.raw = m.complete(r).front();
  out.prediction = extract_prediction(out.raw.text);
  if (out.prediction.empty()) return out;

  const std::string& text = out.raw.text;
  const size_t begin = text.find(out.prediction);
  const size_t end = begin + out.prediction.size();
  double sum = 0.0;
  size_t count = 0;
  size_t offset = 0;
  for (const TokenLogprob& t : out.raw.tokens) {
    const size_t t_begin = offset;
    offset += t.text.size();
    if (offset <= begin || t_begin >= end) continue;
    if (!t.logprob) throw CapabilityError("answer token without logprob");
    sum += *t.logprob;
    ++count;
  }
  if (count == 0) throw CapabilityError("backend returned no logprobs for the answer");
  out.pred_conf = std::exp(sum / static_cast<double>(count));
  return out;
}

double certainty_probe(const ModelHandle& m, const QAItem& item, std::string_view prediction,
                       const PromptTemplate& tmpl) {
  std::string answer(trim(prediction));
  if (!answer.empty() && answer.back() == '.') answer.pop_back();
  const std::string prompt =
      render_prompt(item, tmpl) + answer + ". " + std::string(kCertaintyProbe);
  const ChoiceScores scores = choice_scores(m, prompt, {" sure", " unsure"});
  const double sure = scores.scores.at(" sure");
  const double unsure = scores.scores.at(" unsure");
  return 1.0 / (1.0 + std::exp(unsure - sure));
}

double combined_confidence(double pred_conf, double cert_conf, double w) {
  return w * pred_conf + (1.0 - w) * cert_conf;
}

AccuracyReport accuracy(const std::vector<EvalResult>& results) {
  AccuracyReport report;
  report.total = results.size();
  for (const EvalResult& r : results) {
    if (r.refused) continue;
    ++report.willing;
    if (r.correct) ++report.correct;
  }
  if (report.willing == 0) {
    report.no_willing = true;
  } else {
    report.accuracy =
        static_cast<double>(report.correct) / static_cast<double>(report.willing);
  }
  return report;
}

APCurve ap_score(const std::vector<EvalResult>& results, APConvention convention) {
  if (results.empty()) throw ValidationError("ap_score needs at least one result");
  std::vector<const EvalResult*> ranked;
  ranked.reserve(results.size());
  for (const EvalResult& r : results) ranked.push_back(&r);
  std::sort(ranked.begin(), ranked.end(), [](const EvalResult* a, const EvalResult* b) {
    if (a->combined_conf != b->combined_conf) return a->combined_conf > b->combined_conf;
    return a->id < b->id;
  });
  size_t total_correct = 0;
  for (const EvalResult* r : ranked) total_correct += r->correct ? 1 : 0;

  APCurve curve;
  curve.degenerate = total_correct == 0;
  size_t correct = 0;
  double previous_recall = 0.0;
  double previous_precision = 1.0;
  for (size_t k = 1; k <= ranked.size(); ++k) {
    if (ranked[k - 1]->correct) ++correct;
    APPoint point;
    point.k = k;
    point.precision = static_cast<double>(correct) / static_cast<double>(k);
    point.recall = curve.degenerate
                       ? 0.0
                       : static_cast<double>(correct) / static_cast<double>(total_correct);
    const double gain = point.recall - previous_recall;
    curve.ap += gain * (convention == APConvention::kStandard ? point.precision
                                                              : previous_precision);
    previous_recall = point.recall;
    previous_precision = point.precision;
    curve.points.push_back(point);
  }
  return curve;
}

Vote majority_vote_confidence(const std::vector<std::string>& samples, size_t k, size_t window) {
  if (k == 0 || samples.size() != k) {
    throw ValidationError("majority vote needs exactly k >= 1 samples");
  }
  std::map<std::string, size_t> counts;
  std::map<std::string, size_t> first_seen;
  std::vector<std::string> keys;
  keys.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    keys.push_back(normalize_answer(samples[i], window));
    ++counts[keys.back()];
    first_seen.emplace(keys.back(), i);
  }
  size_t best = 0;
  for (size_t i = 1; i < samples.size(); ++i) {
    if (counts[keys[i]] > counts[keys[best]]) best = i;
  }
  best = first_seen.at(keys[best]);
  return {std::string(trim(samples[best])),
          static_cast<double>(counts[keys[best]]) / static_cast<double>(k)};
}

bool is_refusal(std::string_view text, const std::vector<std::string>& lexicon) {
  const std::string haystack = fold_for_refusal(text);
  if (haystack.empty()) return false;
  for (const std::string& phrase : lexicon) {
    const std::string needle = strip_trailing_punct(fold_for_refusal(phrase));
    if (!needle.empty() && haystack.find(needle) != std::string::npos) return true;
  }
  return false;
}

bool is_refusal(std::string_view text) {
  static const std::vector<std::string> lexicon = default_refusal_lexicon();
  return is_refusal(text, lexicon);
}

namespace {

EvalResult evaluate_item(const ModelHandle& m, const QAItem& item, EvalMode mode,
                         const EvalConfig& cfg) {
  EvalResult r;
  r.id = item.id;
  const auto is_correct = [&](const std::string& prediction) {
    return !r.refused && item.answer &&
           match_answer(prediction, *item.answer, item.task_kind, cfg.window);
  };

  switch (mode) {
    case EvalMode::kRTuning:
    case EvalMode::kVanilla: {
      AnswerPass pass = answer_pass(m, item, cfg);
      r.prediction = pass.prediction;
      r.raw = pass.raw.text;
      r.refused = is_refusal(r.prediction, cfg.refusal_lexicon);
      r.correct = is_correct(r.prediction);
      r.pred_conf = pass.pred_conf;
      if (mode == EvalMode::kRTuning) {
        r.cert_conf = certainty_probe(m, item, r.prediction, cfg.prompt_template);
        r.combined_conf = combined_confidence(r.pred_conf, r.cert_conf, cfg.w);
      } else {
        r.cert_conf = r.pred_conf;
        r.combined_conf = r.pred_conf;
      }
      break;
    }
    case EvalMode::kVanillaC: {
      CompletionRequest req;
      req.prompt = render_prompt(item, cfg.prompt_template);
      req.max_tokens = item.task_kind == TaskKind::kQa ? cfg.qa_max_tokens : 1;
      req.temperature = cfg.vote_temperature;
      req.n_samples = cfg.k_votes;
      req.stop = {"\n"};
      std::vector<std::string> samples;
      for (const Completion& c : m.complete(req)) samples.push_back(extract_prediction(c.text));
      const Vote vote = majority_vote_confidence(samples, samples.size(), cfg.window);
      r.prediction = vote.answer;
      r.raw = vote.answer;
      r.refused = is_refusal(r.prediction, cfg.refusal_lexicon);
      r.correct = is_correct(r.prediction);
      r.pred_conf = r.cert_conf = r.combined_conf = vote.confidence;
      break;
    }
    case EvalMode::kRefusalBench: {
      CompletionRequest req;
      req.prompt = (cfg.permit_refusal ? cfg.refusal_preamble : std::string()) +
                   render_prompt(item, cfg.prompt_template);
      req.max_tokens = cfg.qa_max_tokens;
      req.temperature = 0.0;
      req.stop = {"\n"};
      r.raw = m.complete(req).front().text;
      r.prediction = extract_prediction(r.raw);
      r.refused = is_refusal(r.raw, cfg.refusal_lexicon);
      r.correct = false;
      break;
    }
  }
  return r;
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

RefusalReport refusal_rate(const ModelHandle& m, const Dataset& d, const EvalConfig& cfg) {
  cfg.validate();
  RefusalReport report;
  auto keyed = parallel_keyed<EvalResult>(
      d.items.size(), m.limits().max_concurrent,
      [&](size_t i) { return evaluate_item(m, d.items[i], EvalMode::kRefusalBench, cfg); });
  for (size_t i = 0; i < keyed.size(); ++i) {
    if (!keyed[i].ok()) {
      report.unresolved.push_back({d.items[i].id, keyed[i].error->message});
      continue;
    }
    report.refused += keyed[i].value->refused ? 1 : 0;
    report.results.push_back(std::move(*keyed[i].value));
  }
  report.total = report.results.size();
  report.rate = report.total == 0 ? 0.0
                                  : static_cast<double>(report.refused) /
                                        static_cast<double>(report.total);
  return report;
}

EvalRun evaluate_dataset(const ModelHandle& m, const Dataset& d, EvalMode mode,
                         const EvalConfig& cfg) {
  cfg.validate();
  EvalRun run;
  run.mode = mode;
  auto keyed = parallel_keyed<EvalResult>(
      d.items.size(), m.limits().max_concurrent,
      [&](size_t i) { return evaluate_item(m, d.items[i], mode, cfg); });
  for (size_t i = 0; i < keyed.size(); ++i) {
    if (!keyed[i].ok()) {
      run.unresolved.push_back({d.items[i].id, keyed[i].error->message});
      continue;
    }
    run.results.push_back(std::move(*keyed[i].value));
  }

  const AccuracyReport by_lexicon = accuracy(run.results);
  std::vector<EvalResult> by_certainty_view = run.results;
  for (EvalResult& r : by_certainty_view) {
    r.refused = r.refused || r.cert_conf < cfg.certainty_threshold;
  }
  const AccuracyReport by_certainty = accuracy(by_certainty_view);
  size_t refused = 0;
  for (const EvalResult& r : run.results) refused += r.refused ? 1 : 0;
  const double n = static_cast<double>(run.results.size());

  auto& s = run.summary;
  s["mode"] = to_string(mode);
  s["model"] = m.model_name();
  s["dataset"] = d.name;
  s["items"] = d.items.size();
  s["evaluated"] = run.results.size();
  s["unresolved"] = run.unresolved.size();
  s["w"] = mode == EvalMode::kRTuning ? cfg.w : 1.0;
  s["k_votes"] = cfg.k_votes;
  s["vote_temperature"] = cfg.vote_temperature;
  s["window"] = cfg.window;
  s["certainty_threshold"] = cfg.certainty_threshold;
  s["ap_convention"] = to_string(cfg.ap_convention);
  s["accuracy_lexicon"] = nullable(by_lexicon.accuracy);
  s["willing_lexicon"] = by_lexicon.willing;
  s["answer_rate_lexicon"] = n > 0 ? json(static_cast<double>(by_lexicon.willing) / n) : json(nullptr);
  s["accuracy_certainty"] = nullable(by_certainty.accuracy);
  s["willing_certainty"] = by_certainty.willing;
  s["answer_rate_certainty"] =
      n > 0 ? json(static_cast<double>(by_certainty.willing) / n) : json(nullptr);
  s["no_willing"] = by_lexicon.no_willing;
  s["refusal_rate"] = n > 0 ? json(static_cast<double>(refused) / n) : json(nullptr);
  if (!run.results.empty() && mode != EvalMode::kRefusalBench) {
    run.curve = ap_score(run.results, cfg.ap_convention);
    s["ap"] = run.curve.ap;
    s["ap_degenerate"] = run.curve.degenerate;
  } else {
    s["ap"] = nullptr;
    s["ap_degenerate"] = true;
  }
  if (mode == EvalMode::kRefusalBench) {
    s["permit_refusal"] = cfg.permit_refusal;
    s["refusal_preamble"] = cfg.permit_refusal ? cfg.refusal_preamble : "";
  }
  return run;
}

std::string to_jsonl(const std::vector<EvalResult>& results) {
  std::string out;
  for (const EvalResult& r : results) {
    out += to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

std::string ap_curve_csv(const APCurve& curve) {
  std::string out = "k,precision,recall\n";
  for (const APPoint& p : curve.points) {
    out += std::to_string(p.k) + "," + format_fixed(p.precision, 6) + "," +
           format_fixed(p.recall, 6) + "\n";
  }
  return out;
}

}  // namespace refusal

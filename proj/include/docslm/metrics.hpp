#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "docslm/protocol.hpp"

namespace docslm {

// All n-gram metrics tokenize by lowercasing and splitting on whitespace.

// Sentence BLEU: geometric mean of clipped n-gram precisions for n = 1..max_n
// times the brevity penalty exp(1 - r/c) when c < r. A zero match count for
// n >= 2 is smoothed to 1/(total + 1). Empty candidate scores 0.
double bleu(std::string_view candidate, std::string_view reference, int max_n = 4);

// Multi-reference BLEU: clip counts are the max over references and r is the
// reference length closest to the candidate length (ties to the shorter).
double bleu_multi(std::string_view candidate, std::span<const std::string> references,
                  int max_n = 4);

struct RougeScores {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

// F1 scores. When neither side has an n-gram of some order, that order scores
// 1 if the two token sequences are identical and non-empty, else 0.
RougeScores rouge(std::string_view candidate, std::string_view reference);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

class EmbedderInterface {
 public:
  virtual ~EmbedderInterface() = default;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

// L2-normalized hashed bag of metric tokens.
class HashedBagEmbedder final : public EmbedderInterface {
 public:
  explicit HashedBagEmbedder(std::size_t dimension = 4096) : dimension_(dimension) {}
  std::vector<double> embed(std::string_view text) const override;
  std::size_t dimension() const { return dimension_; }
  std::size_t bucket(std::string_view token) const;

 private:
  std::size_t dimension_;
};

// Cosine similarity clamped below at 0; zero vectors score 0.
double sts_score(std::string_view candidate, std::string_view reference, const EmbedderInterface& e);

// Mean over i of bleu_multi(texts[i], texts[j != i]). Lower is more diverse.
double self_bleu(std::span<const std::string> texts);

inline constexpr double kGevalMin = 1.0;
inline constexpr double kGevalMax = 4.5;

// Clamps into [1, 4.5] then maps affinely onto [0, 1].
double rescale_geval(double g);

class JudgeInterface {
 public:
  virtual ~JudgeInterface() = default;
  // Implementations may return anything; callers clamp to [1, 4.5].
  virtual double judge(std::string_view candidate, std::string_view document, Intent task) const = 0;
};

class StubJudge final : public JudgeInterface {
 public:
  using Fn = std::function<double(std::string_view, std::string_view, Intent)>;
  explicit StubJudge(double constant) : fn_([constant](auto, auto, auto) { return constant; }) {}
  explicit StubJudge(Fn fn) : fn_(std::move(fn)) {}
  double judge(std::string_view candidate, std::string_view document, Intent task) const override {
    return fn_(candidate, document, task);
  }

 private:
  Fn fn_;
};

struct EvalPair {
  std::string candidate;
  std::string reference;
  std::string document;
};

struct TaskReport {
  Intent task = Intent::summarization;
  std::size_t n = 0;
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double sts = 0.0;
  std::optional<double> geval_rescaled;  // summarization / question answering only
  std::optional<double> diversity;       // question suggestion only
  double average = 0.0;
  // Set when a summarization / question answering report had no judge.
  bool geval_missing = false;

  nlohmann::json to_json() const;
  static TaskReport from_json(const nlohmann::json& j);
};

// Arithmetic mean of BLEU, R1, R2, RL, STS and, when present, rescaled GEval.
double task_average(const TaskReport& r);

// Question-suggestion payloads are JSON arrays of questions. Returns the
// questions, or the non-empty lines of `text` when it is not such an array.
std::vector<std::string> question_set(std::string_view text);

TaskReport evaluate_task(std::span<const EvalPair> pairs, Intent task, const EmbedderInterface& e,
                         const JudgeInterface* judge);

struct OverallReport {
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double sts = 0.0;
  std::optional<double> geval;
  double average = 0.0;

  nlohmann::json to_json() const;
};

// Per-metric mean across the tasks reporting it, then the mean of those columns.
OverallReport aggregate_overall(const TaskReport& summ, const TaskReport& qs, const TaskReport& qa);

// Aligned-text tables in the published layouts.
std::string format_task_table(std::string_view model, const TaskReport& r);
std::string format_overall_table(std::string_view model, const OverallReport& r);
std::string format_intent_table(std::string_view model, double accuracy);

}  // namespace docslm

#include "docslm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "docslm/format.hpp"
#include "docslm/text.hpp"

namespace docslm {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, int n) {
  NgramCounts counts;
  const auto un = static_cast<std::size_t>(n);
  if (tokens.size() < un) return counts;
  for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + un))];
  }
  return counts;
}

std::size_t ngram_total(std::size_t len, int n) {
  const auto un = static_cast<std::size_t>(n);
  return len >= un ? len - un + 1 : 0;
}

double bleu_tokens(const std::vector<std::string>& cand,
                   const std::vector<std::vector<std::string>>& refs, int max_n) {
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be at least 1");
  if (cand.empty() || refs.empty()) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const NgramCounts cand_counts = count_ngrams(cand, n);
    std::vector<NgramCounts> ref_counts;
    ref_counts.reserve(refs.size());
    for (const auto& r : refs) ref_counts.push_back(count_ngrams(r, n));

    std::size_t matches = 0;
    for (const auto& [gram, count] : cand_counts) {
      std::size_t best = 0;
      for (const auto& rc : ref_counts) {
        auto it = rc.find(gram);
        if (it != rc.end()) best = std::max(best, it->second);
      }
      matches += std::min(count, best);
    }
    const std::size_t total = ngram_total(cand.size(), n);
    double precision;
    if (matches > 0) {
      precision = static_cast<double>(matches) / static_cast<double>(total);
    } else if (n == 1) {
      return 0.0;
    } else {
      precision = 1.0 / static_cast<double>(total + 1);
    }
    log_sum += std::log(precision);
  }

  const auto c = static_cast<double>(cand.size());
  double r = static_cast<double>(refs.front().size());
  for (const auto& ref : refs) {
    const auto len = static_cast<double>(ref.size());
    const double d = std::abs(len - c);
    const double best = std::abs(r - c);
    if (d < best || (d == best && len < r)) r = len;
  }
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

double rouge_n(const std::vector<std::string>& cand, const std::vector<std::string>& ref, int n) {
  const std::size_t cand_total = ngram_total(cand.size(), n);
  const std::size_t ref_total = ngram_total(ref.size(), n);
  if (cand_total == 0 && ref_total == 0) return !cand.empty() && cand == ref ? 1.0 : 0.0;
  if (cand_total == 0 || ref_total == 0) return 0.0;
  const NgramCounts cc = count_ngrams(cand, n);
  const NgramCounts rc = count_ngrams(ref, n);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : cc) {
    auto it = rc.find(gram);
    if (it != rc.end()) overlap += std::min(count, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(cand_total);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
  return 2.0 * p * r / (p + r);
}

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

std::string joined(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out.push_back('\n');
    out += p;
  }
  return out;
}

}  // namespace

double bleu(std::string_view candidate, std::string_view reference, int max_n) {
  return bleu_tokens(metric_tokens(candidate), {metric_tokens(reference)}, max_n);
}

double bleu_multi(std::string_view candidate, std::span<const std::string> references, int max_n) {
  std::vector<std::vector<std::string>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(metric_tokens(r));
  return bleu_tokens(metric_tokens(candidate), refs, max_n);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScores rouge(std::string_view candidate, std::string_view reference) {
  const auto cand = metric_tokens(candidate);
  const auto ref = metric_tokens(reference);
  RougeScores s;
  if (cand.empty() || ref.empty()) return s;
  s.rouge1 = rouge_n(cand, ref, 1);
  s.rouge2 = rouge_n(cand, ref, 2);
  const auto l = static_cast<double>(lcs_length(cand, ref));
  if (l > 0) {
    const double p = l / static_cast<double>(cand.size());
    const double r = l / static_cast<double>(ref.size());
    s.rougeL = 2.0 * p * r / (p + r);
  }
  return s;
}

// ---------------------------------------------------------------------------

std::size_t HashedBagEmbedder::bucket(std::string_view token) const {
  return static_cast<std::size_t>(fnv1a64(token) % dimension_);
}

std::vector<double> HashedBagEmbedder::embed(std::string_view text) const {
  std::vector<double> v(dimension_, 0.0);
  for (const auto& tok : metric_tokens(text)) v[bucket(tok)] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

double sts_score(std::string_view candidate, std::string_view reference, const EmbedderInterface& e) {
  const auto a = e.embed(candidate);
  const auto b = e.embed(reference);
  if (a.size() != b.size()) throw std::invalid_argument("sts_score: embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  if (a == b) return 1.0;
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

double self_bleu(std::span<const std::string> texts) {
  if (texts.size() < 2) throw std::invalid_argument("self_bleu needs at least 2 texts");
  double sum = 0.0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::vector<std::string> others;
    for (std::size_t j = 0; j < texts.size(); ++j) {
      if (j != i) others.push_back(texts[j]);
    }
    sum += bleu_multi(texts[i], others);
  }
  return sum / static_cast<double>(texts.size());
}

double rescale_geval(double g) {
  const double clamped = std::clamp(g, kGevalMin, kGevalMax);
  return (clamped - kGevalMin) / (kGevalMax - kGevalMin);
}

// ---------------------------------------------------------------------------

double task_average(const TaskReport& r) {
  std::vector<double> cols{r.bleu, r.rouge1, r.rouge2, r.rougeL, r.sts};
  if (r.geval_rescaled) cols.push_back(*r.geval_rescaled);
  return mean_of(cols);
}

std::vector<std::string> question_set(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.is_array() && std::all_of(j.begin(), j.end(), [](const auto& e) { return e.is_string(); })) {
      return j.get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception&) {
  }
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) lines.emplace_back(line);
    pos = eol + 1;
  }
  return lines;
}

TaskReport evaluate_task(std::span<const EvalPair> pairs, Intent task, const EmbedderInterface& e,
                         const JudgeInterface* judge) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_task: no pairs");
  const bool is_qs = task == Intent::question_suggestion;
  const auto n = static_cast<double>(pairs.size());

  TaskReport report;
  report.task = task;
  report.n = pairs.size();
  double geval_sum = 0.0, diversity_sum = 0.0;
  for (const auto& pair : pairs) {
    std::string cand = pair.candidate;
    std::string ref = pair.reference;
    if (is_qs) {
      const auto cand_set = question_set(pair.candidate);
      cand = joined(cand_set);
      ref = joined(question_set(pair.reference));
      // A set with fewer than two questions has no spread; score it as fully repetitive.
      diversity_sum += cand_set.size() >= 2 ? self_bleu(cand_set) : 1.0;
    } else if (judge != nullptr) {
      geval_sum += rescale_geval(judge->judge(pair.candidate, pair.document, task));
    }
    report.bleu += bleu(cand, ref);
    const RougeScores rs = rouge(cand, ref);
    report.rouge1 += rs.rouge1;
    report.rouge2 += rs.rouge2;
    report.rougeL += rs.rougeL;
    report.sts += sts_score(cand, ref, e);
  }
  report.bleu /= n;
  report.rouge1 /= n;
  report.rouge2 /= n;
  report.rougeL /= n;
  report.sts /= n;
  if (is_qs) {
    report.diversity = diversity_sum / n;
  } else if (judge != nullptr) {
    report.geval_rescaled = geval_sum / n;
  } else {
    report.geval_missing = true;
  }
  report.average = task_average(report);
  return report;
}

OverallReport aggregate_overall(const TaskReport& summ, const TaskReport& qs, const TaskReport& qa) {
  const TaskReport* all[] = {&summ, &qs, &qa};
  OverallReport o;
  for (const TaskReport* r : all) {
    o.bleu += r->bleu / 3.0;
    o.rouge1 += r->rouge1 / 3.0;
    o.rouge2 += r->rouge2 / 3.0;
    o.rougeL += r->rougeL / 3.0;
    o.sts += r->sts / 3.0;
  }
  std::vector<double> gevals;
  for (const TaskReport* r : all) {
    if (r->geval_rescaled) gevals.push_back(*r->geval_rescaled);
  }
  if (!gevals.empty()) o.geval = mean_of(gevals);
  std::vector<double> cols{o.bleu, o.rouge1, o.rouge2, o.rougeL, o.sts};
  if (o.geval) cols.push_back(*o.geval);
  o.average = mean_of(cols);
  return o;
}

// ---------------------------------------------------------------------------

nlohmann::json TaskReport::to_json() const {
  nlohmann::json j{{"task", to_string(task)}, {"n", n},           {"bleu", bleu},
                   {"rouge1", rouge1},        {"rouge2", rouge2}, {"rougeL", rougeL},
                   {"sts", sts},              {"average", average}};
  j["geval_rescaled"] = geval_rescaled ? nlohmann::json(*geval_rescaled) : nlohmann::json(nullptr);
  j["diversity"] = diversity ? nlohmann::json(*diversity) : nlohmann::json(nullptr);
  j["geval_missing"] = geval_missing;
  return j;
}

TaskReport TaskReport::from_json(const nlohmann::json& j) {
  TaskReport r;
  const auto task = parse_intent(j.at("task").get<std::string>());
  if (!task) throw std::invalid_argument("unknown task in report");
  r.task = *task;
  r.n = j.value("n", std::size_t{0});
  r.bleu = j.at("bleu").get<double>();
  r.rouge1 = j.at("rouge1").get<double>();
  r.rouge2 = j.at("rouge2").get<double>();
  r.rougeL = j.at("rougeL").get<double>();
  r.sts = j.at("sts").get<double>();
  if (j.contains("geval_rescaled") && !j["geval_rescaled"].is_null()) r.geval_rescaled = j["geval_rescaled"].get<double>();
  if (j.contains("diversity") && !j["diversity"].is_null()) r.diversity = j["diversity"].get<double>();
  r.geval_missing = j.value("geval_missing", false);
  r.average = j.contains("average") ? j["average"].get<double>() : task_average(r);
  return r;
}

nlohmann::json OverallReport::to_json() const {
  nlohmann::json j{{"bleu", bleu}, {"rouge1", rouge1}, {"rouge2", rouge2},
                   {"rougeL", rougeL}, {"sts", sts}, {"average", average}};
  j["geval"] = geval ? nlohmann::json(*geval) : nlohmann::json(nullptr);
  return j;
}

namespace {

std::string opt_cell(const std::optional<double>& v) { return v ? fixed(*v, 2) : "—"; }

std::string_view task_title(Intent t) {
  switch (t) {
    case Intent::summarization: return "Summarization";
    case Intent::question_suggestion: return "Question Suggestion";
    case Intent::question_answering: return "Question Answering";
  }
  return "";
}

}  // namespace

std::string format_task_table(std::string_view model, const TaskReport& r) {
  const bool is_qs = r.task == Intent::question_suggestion;
  std::string out = std::string(task_title(r.task)) + " task (n=" + std::to_string(r.n) +
                    "; lowercase whitespace tokens, ROUGE as F1";
  out += is_qs ? ", Diversity = Self-BLEU, lower is better, excluded from Average)\n"
               : ", GEval rescaled (g-1)/3.5)\n";
  if (r.geval_missing) out += "GEval omitted: no judge configured; Average over 5 metrics\n";
  out += render_table(
      {{"Model", "BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L", "STS Score", is_qs ? "Diversity" : "GEval", "Average"},
       {std::string(model), fixed(r.bleu, 2), fixed(r.rouge1, 2), fixed(r.rouge2, 2), fixed(r.rougeL, 2),
        fixed(r.sts, 2), opt_cell(is_qs ? r.diversity : r.geval_rescaled), fixed(r.average, 4)}});
  return out;
}

std::string format_overall_table(std::string_view model, const OverallReport& r) {
  std::string out = "Average of three tasks (per-metric mean, then mean of metrics)\n";
  out += render_table({{"Model", "BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L", "STS Score", "GEval", "Average"},
                       {std::string(model), fixed(r.bleu, 2), fixed(r.rouge1, 2), fixed(r.rouge2, 2),
                        fixed(r.rougeL, 2), fixed(r.sts, 2), opt_cell(r.geval), fixed(r.average, 4)}});
  return out;
}

std::string format_intent_table(std::string_view model, double accuracy) {
  return render_table({{"Model", "Accuracy (%)"}, {std::string(model), fixed(100.0 * accuracy, 2)}});
}

}  // namespace docslm

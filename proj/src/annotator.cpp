#include "docslm/annotator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "docslm/format.hpp"
#include "docslm/http.hpp"
#include "docslm/jsonl.hpp"
#include "docslm/random.hpp"

namespace docslm {
namespace {

constexpr std::string_view kContextHeader = "DOCUMENT CONTEXT (may be truncated)";

// Words of the final document context block of an annotation prompt.
std::vector<std::string> context_words(const std::string& prompt) {
  std::string_view body = prompt;
  const std::size_t header = body.rfind(kContextHeader);
  if (header != std::string_view::npos) body.remove_prefix(header + kContextHeader.size());
  const std::size_t response = body.rfind("RESPONSE");
  if (response != std::string_view::npos) body = body.substr(0, response);

  std::vector<std::string> words;
  bool skip_next = false;
  for (const auto& raw : metric_tokens(body)) {
    if (raw == "###" || raw == "document") {
      skip_next = raw == "document";
      continue;
    }
    if (skip_next) {  // "excerpt" and the "k:" counter after "document"
      if (raw == "excerpt") continue;
      skip_next = false;
      if (!raw.empty() && raw.back() == ':') continue;
    }
    std::string w;
    for (char c : raw) {
      if (std::isalnum(static_cast<unsigned char>(c))) w.push_back(c);
    }
    if (w.size() >= 3 && w != "truncated" && w != "due" && w != "length") words.push_back(w);
  }
  return words;
}

std::string trim_copy(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Piece count under the fallback splitter; equals the fallback tokenizer's
// length for collision-free text and does not depend on call order.
std::int64_t approx_tokens(std::string_view text) {
  return static_cast<std::int64_t>(split_pieces(text).size());
}

std::string pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(rng.below(pool.size()))];
}

}  // namespace

// ---------------------------------------------------------------------------

StubCompletionClient::StubCompletionClient()
    : StubCompletionClient([](const std::string& prompt, int) { return canned_annotation(prompt); }) {}

StubCompletionClient::StubCompletionClient(Responder responder)
    : responder_(std::move(responder)) {}

Completion StubCompletionClient::complete(const std::string& prompt, const CompletionParams&) {
  const int index = calls_.fetch_add(1);
  {
    std::lock_guard lock(mutex_);
    prompts_.push_back(prompt);
  }
  Completion c;
  c.text = responder_(prompt, index);
  c.prompt_tokens = approx_tokens(prompt);
  c.completion_tokens = approx_tokens(c.text);
  return c;
}

std::vector<std::string> StubCompletionClient::prompts() const {
  std::lock_guard lock(mutex_);
  return prompts_;
}

std::string StubCompletionClient::canned_annotation(const std::string& prompt) {
  std::vector<std::string> words = context_words(prompt);
  if (words.empty()) words = {"content"};
  const auto word_at = [&](std::size_t i) { return words[i % words.size()]; };

  std::string summary = "The document covers";
  for (std::size_t i = 0; i < std::min<std::size_t>(8, words.size()); ++i) summary += " " + words[i];
  summary += ".";

  nlohmann::json questions = nlohmann::json::array();
  nlohmann::json answers = nlohmann::json::array();
  for (std::size_t q = 0; q < 3; ++q) {
    const std::size_t at = q * words.size() / 3;
    questions.push_back("What does the document say about " + word_at(at) + "?");
    answers.push_back("The document mentions " + word_at(at) + " together with " + word_at(at + 1) +
                      " and " + word_at(at + 2) + ".");
  }
  const nlohmann::json reply{{"tasks",
                              {{"summarization", summary},
                               {"question_suggestion", questions},
                               {"question_answering", answers}}}};
  return reply.dump(2);
}

// ---------------------------------------------------------------------------

HttpCompletionClient::HttpCompletionClient(Options options)
    : options_(std::move(options)) {}

Completion HttpCompletionClient::complete(const std::string& prompt, const CompletionParams& params) {
  nlohmann::json body{{"model", options_.model},
                      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                      {"max_tokens", params.max_tokens},
                      {"temperature", params.temperature}};
  if (params.seed) body["seed"] = *params.seed;
  HttpHeaders headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  const HttpResponse res = http_post(options_.base_url, options_.path, body.dump(), headers, options_.timeout_s);
  if (res.status != 200) {
    throw std::runtime_error("completion endpoint returned HTTP " + std::to_string(res.status) + ": " +
                             res.body.substr(0, 200));
  }
  const auto j = nlohmann::json::parse(res.body);
  Completion c;
  const auto& choice = j.at("choices").at(0);
  if (choice.contains("message")) {
    c.text = choice["message"].at("content").get<std::string>();
  } else {
    c.text = choice.at("text").get<std::string>();
  }
  if (j.contains("usage")) {
    c.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{-1});
    c.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{-1});
  }
  if (c.prompt_tokens < 0 || !j.contains("usage")) c.prompt_tokens = approx_tokens(prompt);
  if (c.completion_tokens < 0 || !j.contains("usage")) c.completion_tokens = approx_tokens(c.text);
  return c;
}

// ---------------------------------------------------------------------------

std::optional<AnnotationPayload> parse_annotation_json(std::string_view raw, std::string* error) {
  const auto fail = [&](std::string msg) -> std::optional<AnnotationPayload> {
    if (error) *error = std::move(msg);
    return std::nullopt;
  };

  std::string text = trim_copy(raw);
  if (text.starts_with("```")) {
    const auto eol = text.find('\n');
    text = eol == std::string::npos ? std::string() : text.substr(eol + 1);
    const auto fence = text.rfind("```");
    if (fence != std::string::npos) text.erase(fence);
    text = trim_copy(text);
  }
  if (text.starts_with("\"tasks\"")) text = "{" + text + "}";

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    return fail(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("tasks") || !j["tasks"].is_object()) {
    return fail("missing \"tasks\" object");
  }
  const auto& tasks = j["tasks"];
  AnnotationPayload p;
  if (!tasks.contains("summarization") || !tasks["summarization"].is_string()) {
    return fail("summarization must be a string");
  }
  p.summary = trim_copy(tasks["summarization"].get<std::string>());
  if (p.summary.empty()) return fail("summarization is empty");

  const auto string_list = [&](const char* key, std::vector<std::string>& out) -> bool {
    if (!tasks.contains(key) || !tasks[key].is_array()) {
      if (error) *error = std::string(key) + " must be an array";
      return false;
    }
    for (const auto& e : tasks[key]) {
      if (!e.is_string() || trim_copy(e.get<std::string>()).empty()) {
        if (error) *error = std::string(key) + " entries must be non-empty strings";
        return false;
      }
      out.push_back(trim_copy(e.get<std::string>()));
    }
    if (out.size() != 3) {
      if (error) *error = std::string(key) + " has " + std::to_string(out.size()) + " entries, expected 3";
      return false;
    }
    return true;
  };
  if (!string_list("question_suggestion", p.questions)) return std::nullopt;
  if (!string_list("question_answering", p.answers)) return std::nullopt;
  return p;
}

AnnotationResult annotate_document(const ChunkedDocument& cd, const TokenizerInterface& tok,
                                   CompletionClientInterface& client, RetryPolicy retry,
                                   const CompletionParams& params) {
  if (retry.max_attempts < 1) throw std::invalid_argument("max_attempts must be at least 1");
  const std::string prompt =
      render_annotation_prompt(render_document_context(cd, tok, cd.truncated()));

  AnnotationResult result;
  result.doc_id = cd.doc_id;
  std::string last_error, last_raw;
  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    Completion c;
    try {
      c = client.complete(prompt, params);
    } catch (const std::exception& e) {
      throw CompletionTransportError("completion failed on attempt " + std::to_string(attempt) + " for " +
                                         cd.doc_id + ": " + e.what(),
                                     attempt);
    }
    result.prompt_tokens += std::max<std::int64_t>(0, c.prompt_tokens);
    result.completion_tokens += std::max<std::int64_t>(0, c.completion_tokens);
    auto payload = parse_annotation_json(c.text, &last_error);
    if (!payload) {
      last_raw = std::move(c.text);
      continue;
    }
    result.attempts = attempt;
    result.summary = std::move(payload->summary);
    result.suggested_questions = std::move(payload->questions);
    result.answers = std::move(payload->answers);
    for (std::size_t i = 0; i < result.suggested_questions.size(); ++i) {
      const std::size_t words = count_words(result.suggested_questions[i]);
      if (words >= kQuestionWordLimit) {
        result.warnings.push_back("question " + std::to_string(i + 1) + " has " + std::to_string(words) +
                                  " words (limit is fewer than " + std::to_string(kQuestionWordLimit) + ")");
      }
    }
    return result;
  }
  throw AnnotationError("annotation of " + cd.doc_id + " failed after " + std::to_string(retry.max_attempts) +
                            " attempt(s): " + last_error,
                        last_raw, retry.max_attempts);
}

// ---------------------------------------------------------------------------

nlohmann::json DocAssistExample::to_json() const {
  return {{"doc_id", doc_id}, {"task", to_string(task)}, {"request", request},
          {"document", document_text}, {"target", target}};
}

DocAssistExample DocAssistExample::from_json(const nlohmann::json& j) {
  DocAssistExample ex;
  ex.doc_id = j.at("doc_id").get<std::string>();
  const auto task = parse_intent(j.at("task").get<std::string>());
  if (!task) throw std::invalid_argument("unknown task '" + j.at("task").get<std::string>() + "'");
  ex.task = *task;
  ex.request = j.at("request").get<std::string>();
  ex.document_text = j.at("document").get<std::string>();
  ex.target = j.at("target").get<std::string>();
  return ex;
}

FinetuneText finetune_text(const DocAssistExample& ex) {
  return {render_finetune_prompt(ex.document_text, ex.request),
          serialize_reply(AssistantReply{ex.task, ex.target})};
}

std::vector<DocAssistExample> expand_annotation(const AnnotationResult& result,
                                                const std::string& document_text,
                                                const RequestPools& pools, std::uint64_t seed) {
  if (result.suggested_questions.size() != 3 || result.answers.size() != 3) {
    throw std::invalid_argument("annotation for " + result.doc_id + " does not carry 3 questions and 3 answers");
  }
  Rng rng(seed ^ fnv1a64(result.doc_id));
  std::vector<DocAssistExample> out;
  out.reserve(5);
  out.push_back({result.doc_id, Intent::summarization, pick(pools.summarization, rng), document_text,
                 result.summary});
  out.push_back({result.doc_id, Intent::question_suggestion, pick(pools.question_suggestion, rng),
                 document_text, nlohmann::json(result.suggested_questions).dump()});
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back({result.doc_id, Intent::question_answering, result.suggested_questions[i], document_text,
                   result.answers[i]});
  }
  return out;
}

// ---------------------------------------------------------------------------

TokenUsageStats usage_report(std::span<const AnnotationResult> results) {
  if (results.empty()) throw std::invalid_argument("usage_report: no annotation results");
  std::vector<std::int64_t> prompt, completion;
  for (const auto& r : results) {
    prompt.push_back(r.prompt_tokens);
    completion.push_back(r.completion_tokens);
  }
  return {summarize_counts(prompt), summarize_counts(completion)};
}

nlohmann::json TokenUsageStats::to_json() const {
  const auto stats = [](const TokenStats& s) {
    return nlohmann::json{{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}, {"count", s.count}};
  };
  return {{"prompt_tokens", stats(prompt)}, {"completion_tokens", stats(completion)}};
}

std::string format_usage_table(const TokenUsageStats& usage) {
  const auto row = [](const char* label, const TokenStats& s) {
    return std::vector<std::string>{
        label, with_commas(s.mean, 2) + " ± " + with_commas(s.std, 2),
        with_commas(static_cast<double>(s.min), 0) + " -- " + with_commas(static_cast<double>(s.max), 0)};
  };
  return render_table({{"Token Type", "Mean ± STD", "Token Range"},
                       row("Prompt Tokens", usage.prompt),
                       row("Completion Tokens", usage.completion)});
}

// ---------------------------------------------------------------------------

void split_examples(std::vector<DocAssistExample> all, const SplitConfig& cfg,
                    std::vector<DocAssistExample>& train, std::vector<DocAssistExample>& test) {
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must lie in [0, 1)");
  }
  const std::size_t n = all.size();
  const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(cfg.seed);
  rng.shuffle(order);
  std::vector<bool> is_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;
  train.clear();
  test.clear();
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? test : train).push_back(std::move(all[i]));
}

DocAssistBuild build_docassist(std::span<const Document> docs, const TokenizerInterface& tok,
                               CompletionClientInterface& client, const BuildOptions& options) {
  if (!(options.split.test_fraction >= 0.0 && options.split.test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must lie in [0, 1)");
  }
  const std::size_t n = docs.size();
  std::vector<ChunkedDocument> chunked(n);
  std::vector<std::optional<AnnotationResult>> results(n);
  std::vector<std::optional<std::string>> errors(n);

  // Chunk serially so tokenizer state evolves in input order.
  for (std::size_t i = 0; i < n; ++i) {
    chunked[i] = chunk_document(docs[i], tok, options.chunk_count, options.chunk_size);
    if (chunked[i].chunks.empty()) errors[i] = "document has no tokens";
  }

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      if (errors[i]) continue;
      try {
        results[i] = annotate_document(chunked[i], tok, client, options.retry, options.params);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t n_workers =
      std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, options.max_in_flight))));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return docs[a].id < docs[b].id; });

  DocAssistBuild build;
  std::vector<DocAssistExample> all;
  for (std::size_t i : order) {
    if (!results[i]) {
      build.failures.push_back({docs[i].id, errors[i].value_or("unknown failure")});
      continue;
    }
    const std::string text = tok.decode(chunked[i].flattened());
    auto examples = expand_annotation(*results[i], text, options.pools, options.split.seed);
    all.insert(all.end(), std::make_move_iterator(examples.begin()), std::make_move_iterator(examples.end()));
    build.annotations.push_back(std::move(*results[i]));
  }
  if (build.annotations.empty()) {
    throw DatasetBuildError("no document could be annotated (" + std::to_string(build.failures.size()) +
                                " failure(s)" +
                                (build.failures.empty() ? std::string() : "; first: " + build.failures[0].message) + ")",
                            build.failures);
  }
  build.usage = usage_report(build.annotations);
  split_examples(std::move(all), options.split, build.train, build.test);

  std::size_t warnings = 0;
  for (const auto& a : build.annotations) warnings += a.warnings.size();
  build.metadata = {{"documents", n},
                    {"annotated", build.annotations.size()},
                    {"failed", build.failures.size()},
                    {"examples", build.train.size() + build.test.size()},
                    {"train_examples", build.train.size()},
                    {"test_examples", build.test.size()},
                    {"test_fraction", options.split.test_fraction},
                    {"seed", options.split.seed},
                    {"split_unit", "example"},
                    {"document_overlap_between_splits_possible", true},
                    {"question_length_warnings", warnings},
                    {"request_pools", options.pools.to_json()},
                    {"max_attempts", options.retry.max_attempts},
                    {"chunk_count", options.chunk_count},
                    {"chunk_size", options.chunk_size}};
  return build;
}

void write_docassist(const std::filesystem::path& path, std::span<const DocAssistExample> examples) {
  std::vector<nlohmann::json> rows;
  rows.reserve(examples.size());
  for (const auto& ex : examples) rows.push_back(ex.to_json());
  write_jsonl(path, rows);
}

std::vector<DocAssistExample> read_docassist(const std::filesystem::path& path) {
  std::vector<DocAssistExample> out;
  for_each_jsonl(path, [&](const nlohmann::json& row, std::size_t) { out.push_back(DocAssistExample::from_json(row)); });
  return out;
}

}  // namespace docslm

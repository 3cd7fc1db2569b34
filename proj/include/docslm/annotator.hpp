#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "docslm/corpus.hpp"
#include "docslm/prompts.hpp"
#include "docslm/protocol.hpp"

namespace docslm {

struct CompletionParams {
  int max_tokens = 1024;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
};

struct Completion {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

// A text-completion endpoint. Implementations must tolerate concurrent calls.
class CompletionClientInterface {
 public:
  virtual ~CompletionClientInterface() = default;
  virtual Completion complete(const std::string& prompt, const CompletionParams& params) = 0;
};

// Offline client. The default responder reads the last DOCUMENT CONTEXT block
// of an annotation prompt and fills a canned JSON answer from its words, so
// the same prompt always yields the same reply. Token counts are fallback
// splitter piece counts.
class StubCompletionClient final : public CompletionClientInterface {
 public:
  // (prompt, zero-based call index) -> reply text. May throw to simulate a
  // transport failure.
  using Responder = std::function<std::string(const std::string& prompt, int call_index)>;

  StubCompletionClient();
  explicit StubCompletionClient(Responder responder);

  Completion complete(const std::string& prompt, const CompletionParams& params) override;

  int call_count() const { return calls_.load(); }
  std::vector<std::string> prompts() const;

  static std::string canned_annotation(const std::string& prompt);

 private:
  Responder responder_;
  std::atomic<int> calls_{0};
  mutable std::mutex mutex_;
  std::vector<std::string> prompts_;
};

// OpenAI-style chat completion endpoint. The bearer token is read from the
// environment variable named by `api_key_env` at call time; unset means no
// Authorization header.
class HttpCompletionClient final : public CompletionClientInterface {
 public:
  struct Options {
    std::string base_url = "http://127.0.0.1:8080";
    std::string path = "/v1/chat/completions";
    std::string model = "default";
    std::string api_key_env = "DOCSLM_API_KEY";
    double timeout_s = 120.0;
  };

  explicit HttpCompletionClient(Options options);
  Completion complete(const std::string& prompt, const CompletionParams& params) override;

 private:
  Options options_;
};

struct AnnotationResult {
  std::string doc_id;
  std::string summary;
  std::vector<std::string> suggested_questions;  // exactly 3
  std::vector<std::string> answers;              // exactly 3
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  int attempts = 0;
  std::vector<std::string> warnings;
};

// Raised when every attempt produced text that failed the schema.
class AnnotationError : public std::runtime_error {
 public:
  AnnotationError(const std::string& what, std::string raw_text, int attempts)
      : std::runtime_error(what), raw_text_(std::move(raw_text)), attempts_(attempts) {}
  const std::string& raw_text() const { return raw_text_; }
  int attempts() const { return attempts_; }

 private:
  std::string raw_text_;
  int attempts_;
};

// Raised when the client itself failed; not retried.
class CompletionTransportError : public std::runtime_error {
 public:
  CompletionTransportError(const std::string& what, int attempt)
      : std::runtime_error(what), attempt_(attempt) {}
  int attempt() const { return attempt_; }

 private:
  int attempt_;
};

struct RetryPolicy {
  int max_attempts = 3;
};

inline constexpr std::size_t kQuestionWordLimit = 12;

struct AnnotationPayload {
  std::string summary;
  std::vector<std::string> questions;
  std::vector<std::string> answers;
};

// Accepts the {"tasks": {...}} object, optionally fenced in ``` or missing its
// outer braces as in the in-context examples. Returns nullopt and sets `error`
// on any schema violation.
std::optional<AnnotationPayload> parse_annotation_json(std::string_view raw, std::string* error);

AnnotationResult annotate_document(const ChunkedDocument& cd, const TokenizerInterface& tok,
                                   CompletionClientInterface& client, RetryPolicy retry = {},
                                   const CompletionParams& params = {});

struct DocAssistExample {
  std::string doc_id;
  Intent task = Intent::summarization;
  std::string request;
  std::string document_text;
  std::string target;

  nlohmann::json to_json() const;
  static DocAssistExample from_json(const nlohmann::json& j);
  bool operator==(const DocAssistExample&) const = default;
};

// The fine-tuning prompt and the serialized reply the model should produce.
struct FinetuneText {
  std::string prompt;
  std::string target;
};
FinetuneText finetune_text(const DocAssistExample& ex);

// One summarization, one question-suggestion (target = JSON array of the three
// questions) and three question-answering examples per annotation. Requests
// for the first two are drawn from `pools` with a generator seeded by `seed`
// and the document id.
std::vector<DocAssistExample> expand_annotation(const AnnotationResult& result,
                                                const std::string& document_text,
                                                const RequestPools& pools, std::uint64_t seed);

struct TokenUsageStats {
  TokenStats prompt;
  TokenStats completion;

  nlohmann::json to_json() const;
};

TokenUsageStats usage_report(std::span<const AnnotationResult> results);

// Table layout: "Token Type | Mean ± STD | Token Range".
std::string format_usage_table(const TokenUsageStats& usage);

struct SplitConfig {
  double test_fraction = 2000.0 / 414000.0;
  std::uint64_t seed = 0;
};

struct BuildOptions {
  SplitConfig split;
  RetryPolicy retry;
  CompletionParams params;
  RequestPools pools = RequestPools::defaults();
  int max_in_flight = 4;
  int chunk_count = kDefaultChunkCount;
  int chunk_size = kDefaultChunkSize;
};

struct BuildFailure {
  std::string doc_id;
  std::string message;
};

struct DocAssistBuild {
  std::vector<DocAssistExample> train;
  std::vector<DocAssistExample> test;
  TokenUsageStats usage;
  std::vector<AnnotationResult> annotations;  // ordered by doc_id
  std::vector<BuildFailure> failures;
  nlohmann::json metadata;
};

class DatasetBuildError : public std::runtime_error {
 public:
  DatasetBuildError(const std::string& what, std::vector<BuildFailure> failures)
      : std::runtime_error(what), failures_(std::move(failures)) {}
  const std::vector<BuildFailure>& failures() const { return failures_; }

 private:
  std::vector<BuildFailure> failures_;
};

// Annotates up to `max_in_flight` documents concurrently; output does not
// depend on completion order. Fails only when no document could be annotated.
DocAssistBuild build_docassist(std::span<const Document> docs, const TokenizerInterface& tok,
                               CompletionClientInterface& client, const BuildOptions& options = {});

// Seeded uniform split over examples; |test| = round(fraction * n).
void split_examples(std::vector<DocAssistExample> all, const SplitConfig& cfg,
                    std::vector<DocAssistExample>& train, std::vector<DocAssistExample>& test);

void write_docassist(const std::filesystem::path& path, std::span<const DocAssistExample> examples);
std::vector<DocAssistExample> read_docassist(const std::filesystem::path& path);

}  // namespace docslm

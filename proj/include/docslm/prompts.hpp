#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "docslm/corpus.hpp"
#include "docslm/text.hpp"

namespace docslm {

class PromptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

// A plain-text template with `{{name}}` slots. No conditionals or loops.
class PromptTemplate {
 public:
  PromptTemplate(std::string name, std::string body);

  static PromptTemplate from_file(const std::filesystem::path& path);
  // One of the fixtures compiled in from templates/.
  static PromptTemplate builtin(std::string_view name);

  const std::string& name() const { return name_; }
  const std::string& body() const { return body_; }
  const std::set<std::string, std::less<>>& required_placeholders() const { return required_; }

  // Single pass over the body: bound values are inserted verbatim and never
  // rescanned. Throws PromptError naming the first unbound slot.
  std::string render(const Bindings& bindings) const;

 private:
  std::string name_;
  std::string body_;
  std::set<std::string, std::less<>> required_;
};

// Raw text of a compiled-in fixture.
const std::string& builtin_text(std::string_view name);

struct RenderedDocumentContext {
  std::string text;
};

inline constexpr std::string_view kTruncationMarker = "(truncated due to length...)";

// Chunk k (1-based) is introduced by "### Document Excerpt k:". When
// `was_truncated`, the marker is appended to the last chunk.
RenderedDocumentContext render_document_context(const ChunkedDocument& cd,
                                                const TokenizerInterface& tok, bool was_truncated);
RenderedDocumentContext render_document_context(const std::vector<std::string>& chunk_texts,
                                                bool was_truncated);

std::string render_annotation_prompt(const RenderedDocumentContext& ctx);

std::string render_finetune_prompt(std::string_view document_text, std::string_view request);

enum class BenchmarkPromptKind { bare_question, summarize_chunks };

const std::vector<std::string>& benchmark_questions();
const std::vector<std::string>& summarize_requests();

// bare_question: the five short questions. summarize_chunks: each summarize
// request followed by the first `chunk_count` chunks as document context.
std::vector<std::string> benchmark_prompt_set(BenchmarkPromptKind kind, const ChunkedDocument* cd,
                                              const TokenizerInterface* tok, int chunk_count);

// Per-task user-request phrasings used when expanding annotations into
// training examples. Question answering uses the question itself.
struct RequestPools {
  std::vector<std::string> summarization;
  std::vector<std::string> question_suggestion;

  static RequestPools defaults();
  static RequestPools from_json(const nlohmann::json& j);
  static RequestPools load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

}  // namespace docslm

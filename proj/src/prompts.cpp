#include "docslm/prompts.hpp"

#include <sstream>

#include "docslm/jsonl.hpp"

namespace docslm {
namespace detail {
const std::map<std::string, std::string, std::less<>>& builtin_template_table();
}  // namespace detail

namespace {

constexpr std::string_view kOpen = "{{";
constexpr std::string_view kClose = "}}";

bool is_slot_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

std::string strip_final_newline(std::string s) {
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

std::vector<std::string> fixture_lines(std::string_view name) {
  std::vector<std::string> lines;
  std::istringstream in(builtin_text(name));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string name, std::string body)
    : name_(std::move(name)), body_(std::move(body)) {
  std::size_t pos = 0;
  while ((pos = body_.find(kOpen, pos)) != std::string::npos) {
    const std::size_t end = body_.find(kClose, pos + kOpen.size());
    if (end == std::string::npos) break;
    const std::string_view slot(body_.data() + pos + kOpen.size(), end - pos - kOpen.size());
    if (is_slot_name(slot)) required_.emplace(slot);
    pos = end + kClose.size();
  }
}

PromptTemplate PromptTemplate::from_file(const std::filesystem::path& path) {
  return PromptTemplate(path.stem().string(), read_text_file(path));
}

PromptTemplate PromptTemplate::builtin(std::string_view name) {
  return PromptTemplate(std::string(name), builtin_text(name));
}

const std::string& builtin_text(std::string_view name) {
  const auto& table = detail::builtin_template_table();
  auto it = table.find(name);
  if (it == table.end()) throw PromptError("no built-in template named '" + std::string(name) + "'");
  return it->second;
}

std::string PromptTemplate::render(const Bindings& bindings) const {
  for (const auto& slot : required_) {
    if (!bindings.contains(slot)) {
      throw PromptError("template '" + name_ + "' is missing a binding for {{" + slot + "}}");
    }
  }
  std::string out;
  out.reserve(body_.size() + 256);
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = body_.find(kOpen, pos);
    if (open == std::string::npos) break;
    const std::size_t close = body_.find(kClose, open + kOpen.size());
    if (close == std::string::npos) break;
    const std::string_view slot(body_.data() + open + kOpen.size(), close - open - kOpen.size());
    out.append(body_, pos, open - pos);
    if (is_slot_name(slot)) {
      out += bindings.find(slot)->second;
    } else {
      out.append(body_, open, close + kClose.size() - open);
    }
    pos = close + kClose.size();
  }
  out.append(body_, pos, std::string::npos);
  return out;
}

// ---------------------------------------------------------------------------

RenderedDocumentContext render_document_context(const std::vector<std::string>& chunk_texts,
                                                bool was_truncated) {
  if (chunk_texts.empty()) throw PromptError("empty document context");
  std::string text;
  for (std::size_t k = 0; k < chunk_texts.size(); ++k) {
    if (k > 0) text.push_back('\n');
    std::string_view chunk = chunk_texts[k];
    while (!chunk.empty() && chunk.front() == ' ') chunk.remove_prefix(1);
    text += "### Document Excerpt " + std::to_string(k + 1) + ": ";
    text += chunk;
  }
  if (was_truncated) text += kTruncationMarker;
  return {std::move(text)};
}

RenderedDocumentContext render_document_context(const ChunkedDocument& cd,
                                                const TokenizerInterface& tok, bool was_truncated) {
  std::vector<std::string> texts;
  texts.reserve(cd.chunks.size());
  for (const auto& chunk : cd.chunks) texts.push_back(tok.decode(chunk));
  return render_document_context(texts, was_truncated);
}

std::string render_annotation_prompt(const RenderedDocumentContext& ctx) {
  static const PromptTemplate tpl = PromptTemplate::builtin("annotation_prompt");
  return tpl.render({{"summ_req", strip_final_newline(builtin_text("summ_req"))},
                     {"suggestion_req", strip_final_newline(builtin_text("suggestion_req"))},
                     {"qa_req", strip_final_newline(builtin_text("qa_req"))},
                     {"document", ctx.text}});
}

std::string render_finetune_prompt(std::string_view document_text, std::string_view request) {
  if (document_text.empty()) throw PromptError("fine-tune prompt needs a non-empty document");
  if (request.empty()) throw PromptError("fine-tune prompt needs a non-empty request");
  static const PromptTemplate tpl = PromptTemplate::builtin("finetune_prompt");
  return tpl.render({{"document", std::string(document_text)}, {"request", std::string(request)}});
}

const std::vector<std::string>& benchmark_questions() {
  static const std::vector<std::string> lines = fixture_lines("benchmark_questions");
  return lines;
}

const std::vector<std::string>& summarize_requests() {
  static const std::vector<std::string> lines = fixture_lines("summarize_requests");
  return lines;
}

std::vector<std::string> benchmark_prompt_set(BenchmarkPromptKind kind, const ChunkedDocument* cd,
                                              const TokenizerInterface* tok, int chunk_count) {
  if (kind == BenchmarkPromptKind::bare_question) return benchmark_questions();
  if (chunk_count < 1) throw PromptError("summarize prompts need at least one chunk");
  if (cd == nullptr || tok == nullptr) throw PromptError("summarize prompts need a chunked document");
  if (cd->chunks.size() < static_cast<std::size_t>(chunk_count)) {
    throw PromptError("document " + cd->doc_id + " has " + std::to_string(cd->chunks.size()) +
                      " chunks, " + std::to_string(chunk_count) + " requested");
  }
  std::vector<std::string> texts;
  for (int k = 0; k < chunk_count; ++k) texts.push_back(tok->decode(cd->chunks[static_cast<std::size_t>(k)]));
  const std::string context = render_document_context(texts, false).text;
  std::vector<std::string> prompts;
  for (const auto& request : summarize_requests()) prompts.push_back(request + "\n\n" + context);
  return prompts;
}

// ---------------------------------------------------------------------------

RequestPools RequestPools::defaults() {
  static const RequestPools pools = from_json(nlohmann::json::parse(builtin_text("request_pools")));
  return pools;
}

RequestPools RequestPools::from_json(const nlohmann::json& j) {
  RequestPools p;
  p.summarization = j.at("summarization").get<std::vector<std::string>>();
  p.question_suggestion = j.at("question_suggestion").get<std::vector<std::string>>();
  if (p.summarization.empty() || p.question_suggestion.empty()) {
    throw PromptError("request pools must be non-empty");
  }
  return p;
}

RequestPools RequestPools::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

nlohmann::json RequestPools::to_json() const {
  return {{"summarization", summarization}, {"question_suggestion", question_suggestion}};
}

}  // namespace docslm

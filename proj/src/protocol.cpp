#include "docslm/protocol.hpp"

namespace docslm {
namespace {

constexpr std::string_view kIntentTag = "<intent>:";
constexpr std::string_view kOpenResponse = "<response>";
constexpr std::string_view kCloseResponse = "</response>";

std::string_view trim(std::string_view s) {
  const auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(Intent intent) {
  switch (intent) {
    case Intent::summarization: return "summarization";
    case Intent::question_suggestion: return "question_suggestion";
    case Intent::question_answering: return "question_answering";
  }
  return "summarization";
}

std::optional<Intent> parse_intent(std::string_view token) {
  for (Intent i : kAllIntents) {
    if (to_string(i) == token) return i;
  }
  return std::nullopt;
}

std::string serialize_reply(const AssistantReply& reply) {
  std::string out;
  out.reserve(reply.response.size() + 64);
  out += kIntentTag;
  out += ' ';
  out += to_string(reply.intent);
  out += '\n';
  out += kOpenResponse;
  out += '\n';
  out += reply.response;
  out += '\n';
  out += kCloseResponse;
  return out;
}

AssistantReply parse_reply(std::string_view text) {
  const std::string_view body = trim(text);
  if (!body.starts_with(kIntentTag)) throw ProtocolError("no intent");
  std::size_t eol = body.find('\n');
  if (eol == std::string_view::npos) eol = body.size();
  const std::string_view token = trim(body.substr(kIntentTag.size(), eol - kIntentTag.size()));
  const auto intent = parse_intent(token);
  if (!intent) throw ProtocolError("unknown intent");

  const std::size_t open = body.find(kOpenResponse, eol);
  if (open == std::string_view::npos) throw ProtocolError("no response");
  const std::size_t start = open + kOpenResponse.size();
  const std::size_t close = body.rfind(kCloseResponse);
  if (close == std::string_view::npos || close < start) throw ProtocolError("unterminated response");

  std::string_view response = body.substr(start, close - start);
  if (response.starts_with('\n')) response.remove_prefix(1);
  if (response.ends_with('\n')) response.remove_suffix(1);
  return AssistantReply{*intent, std::string(response)};
}

std::optional<AssistantReply> try_parse_reply(std::string_view text, std::string* error) {
  try {
    return parse_reply(text);
  } catch (const ProtocolError& e) {
    if (error) *error = e.what();
    return std::nullopt;
  }
}

double intent_accuracy(std::span<const std::optional<Intent>> predicted,
                       std::span<const Intent> gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("intent_accuracy: " + std::to_string(predicted.size()) +
                                " predictions for " + std::to_string(gold.size()) + " labels");
  }
  if (gold.empty()) throw std::invalid_argument("intent_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] && *predicted[i] == gold[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

}  // namespace docslm

#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace docslm {

enum class Intent { summarization, question_suggestion, question_answering };

inline constexpr Intent kAllIntents[] = {Intent::summarization, Intent::question_suggestion,
                                         Intent::question_answering};

std::string_view to_string(Intent intent);
// Case-sensitive; nullopt for anything outside the closed set.
std::optional<Intent> parse_intent(std::string_view token);

struct AssistantReply {
  Intent intent = Intent::summarization;
  std::string response;

  bool operator==(const AssistantReply&) const = default;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "<intent>: {name}\n<response>\n{response}\n</response>"
std::string serialize_reply(const AssistantReply& reply);

// Tolerates surrounding whitespace. The response is the text between the first
// "<response>" after the intent line and the last "</response>", minus the
// single newline the serializer puts on each side. Throws ProtocolError with
// "no intent", "unknown intent", "no response" or "unterminated response".
AssistantReply parse_reply(std::string_view text);

// Non-throwing variant.
std::optional<AssistantReply> try_parse_reply(std::string_view text, std::string* error = nullptr);

// Unparseable predictions (nullopt) count as wrong.
double intent_accuracy(std::span<const std::optional<Intent>> predicted,
                       std::span<const Intent> gold);

}  // namespace docslm

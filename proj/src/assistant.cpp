#include "docslm/assistant.hpp"

#include <algorithm>

namespace docslm {

std::vector<std::string> finetune_texts(std::span<const DocAssistExample> examples) {
  std::vector<std::string> texts;
  texts.reserve(examples.size() * 2);
  for (const auto& ex : examples) {
    auto ft = finetune_text(ex);
    texts.push_back(std::move(ft.prompt));
    texts.push_back(std::move(ft.target));
  }
  return texts;
}

slm::Sequence encode_example(const DocAssistExample& ex, const TokenizerInterface& tok,
                             const slm::ModelConfig& cfg) {
  const auto ft = finetune_text(ex);
  TokenSeq y = tok.encode(ft.target);
  y.push_back(VocabTokenizer::kEos);
  return slm::finetune_example(tok.encode(ft.prompt), y, cfg);
}

EncodedExamples encode_examples(std::span<const DocAssistExample> examples, const TokenizerInterface& tok,
                                const slm::ModelConfig& cfg) {
  EncodedExamples out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto ft = finetune_text(examples[i]);
    TokenSeq x = tok.encode(ft.prompt);
    TokenSeq y = tok.encode(ft.target);
    y.push_back(VocabTokenizer::kEos);
    if (x.size() + y.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
      ++out.skipped;
      continue;
    }
    out.sequences.push_back(slm::finetune_example(x, y, cfg));
    out.source_index.push_back(i);
  }
  return out;
}

std::string generate_reply(const slm::Parameters& p, const TokenizerInterface& tok, const std::string& prompt,
                           int max_new, const slm::TokenCallback& on_token) {
  const TokenSeq x = tok.encode(prompt);
  const int room = p.config().max_seq_len - static_cast<int>(x.size());
  if (room < 1) {
    throw std::length_error("prompt of " + std::to_string(x.size()) + " tokens does not fit the model context of " +
                            std::to_string(p.config().max_seq_len));
  }
  slm::DecodeOptions decode;
  decode.eos = VocabTokenizer::kEos;
  const TokenSeq y = slm::generate(p, x, std::min(max_new, room), decode, on_token);
  return tok.decode(y);
}

}  // namespace docslm

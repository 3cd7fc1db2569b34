#pragma once

#include <span>
#include <string>
#include <vector>

#include "docslm/annotator.hpp"
#include "docslm/slm.hpp"
#include "docslm/text.hpp"

// Glue between DocAssist examples and the model: encoding for fine-tuning and
// greedy reply generation.
namespace docslm {

// Prompt and target texts of every example, for building a vocabulary.
std::vector<std::string> finetune_texts(std::span<const DocAssistExample> examples);

// x = encode(prompt), y = encode(serialized reply) + EOS.
slm::Sequence encode_example(const DocAssistExample& ex, const TokenizerInterface& tok,
                             const slm::ModelConfig& cfg);

struct EncodedExamples {
  std::vector<slm::Sequence> sequences;
  std::vector<std::size_t> source_index;  // example index of each sequence
  std::size_t skipped = 0;                // longer than max_seq_len
};

EncodedExamples encode_examples(std::span<const DocAssistExample> examples, const TokenizerInterface& tok,
                                const slm::ModelConfig& cfg);

// Greedy decode until EOS. max_new is reduced to fit the context; throws
// std::length_error when the prompt alone does not fit.
std::string generate_reply(const slm::Parameters& p, const TokenizerInterface& tok, const std::string& prompt,
                           int max_new, const slm::TokenCallback& on_token = {});

}  // namespace docslm

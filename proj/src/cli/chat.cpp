#include <fstream>
#include <iostream>

#include "cli/cli.hpp"
#include "docslm/assistant.hpp"
#include "docslm/corpus.hpp"
#include "docslm/jsonl.hpp"
#include "docslm/prompts.hpp"
#include "docslm/protocol.hpp"

namespace docslm::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

int run_chat(const ChatOptions& options, Io io) {
  const auto ck = slm::load_checkpoint(options.checkpoint);
  const auto model_tok = VocabTokenizer::from_json(ck.tokenizer);
  const auto chunk_tok = make_tokenizer(options.tokenizer);

  Document doc{std::filesystem::path(options.document).filename().string(), read_text_file(options.document),
               SourceKind::generated};
  const auto cd = chunk_document(doc, *chunk_tok, options.chunks, options.chunk_size);
  if (cd.chunks.empty()) throw std::runtime_error(options.document + " has no text");
  const std::string document_text = chunk_tok->decode(cd.flattened());
  const auto pools = RequestPools::defaults();

  std::ofstream log(options.session_log, std::ios::app);
  if (!log) throw std::runtime_error("cannot open session log " + options.session_log);
  log << "# session: " << options.document << " with " << options.checkpoint << "\n";

  const auto ask = [&](const std::string& request) {
    log << "user: " << request << "\n";
    const std::string prompt = render_finetune_prompt(document_text, request);
    std::string raw;
    try {
      raw = generate_reply(ck.params, model_tok, prompt, options.max_new);
    } catch (const std::length_error& e) {
      io.out << "error: " << e.what() << "\n";
      log << "error: " << e.what() << "\n";
      return;
    }
    std::string why;
    if (const auto reply = try_parse_reply(raw, &why)) {
      io.out << "[" << to_string(reply->intent) << "] " << reply->response << "\n";
    } else {
      io.out << "warning: reply does not follow the protocol (" << why << ")\n" << raw << "\n";
    }
    log << "assistant: " << raw << "\n";
  };

  io.out << "Loaded " << doc.id << " (" << cd.total_tokens << " tokens in " << cd.chunks.size() << " chunks"
         << (cd.truncated() ? ", truncated" : "") << ")\n";
  ask(pools.summarization.front());
  io.out << "Commands: /summary, /suggest, /quit\n";

  std::string line;
  while (true) {
    io.out << "> " << std::flush;
    if (!std::getline(io.in, line)) break;
    const std::string input = trim(line);
    if (input.empty()) continue;
    if (input == "/quit") break;
    if (input == "/summary") {
      ask(pools.summarization.front());
    } else if (input == "/suggest") {
      ask(pools.question_suggestion.front());
    } else {
      ask(input);
    }
  }
  io.out << "\n";
  log << "# end of session\n";
  return 0;
}

}  // namespace docslm::cli

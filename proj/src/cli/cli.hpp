#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace docslm::cli {

struct Io {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

// Runs one subcommand. `args` excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args, Io io);

// Fills every option of `cmd` that was not given on the command line from a
// flat JSON object keyed by long option name (without dashes). Unknown keys
// are an error.
void apply_json_config(CLI::App& cmd, const std::filesystem::path& path);

// Flat JSON of every option's effective value.
nlohmann::json effective_config(const CLI::App& cmd);

// Writes effective_config(cmd) plus the subcommand name to `path`.
void write_config_snapshot(const CLI::App& cmd, const std::filesystem::path& path);

struct ChatOptions {
  std::string checkpoint;
  std::string document;
  std::string session_log;
  int max_new = 256;
  std::string tokenizer = "fallback";
  int chunks = 5;
  int chunk_size = 200;
};

int run_chat(const ChatOptions& options, Io io);

}  // namespace docslm::cli

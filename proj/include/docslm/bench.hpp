#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "docslm/corpus.hpp"
#include "docslm/slm.hpp"
#include "docslm/text.hpp"

namespace docslm::bench {

// Called once per generated token, in order. Backends that only see text
// (HTTP) pass id -1.
using TokenSink = std::function<void(TokenId id, std::string_view text)>;

// A streaming generator. The harness owns the clock: it counts prompt tokens
// before starting the timer and timestamps the call, the first sink call and
// the return. Implementations must not batch across calls.
class GenerationBackendInterface {
 public:
  virtual ~GenerationBackendInterface() = default;

  virtual std::string name() const = 0;
  virtual const TokenizerInterface& tokenizer() const = 0;
  virtual std::size_t count_prompt_tokens(const std::string& prompt) const { return tokenizer().count(prompt); }

  // Generates at most max_new tokens. May throw; the harness records the failure.
  virtual void generate(const std::string& prompt, int max_new, const TokenSink& on_token) = 0;
};

// ttft = t_first - t_start, itps = prompt_tokens / ttft,
// otps = (output_tokens - 1) / (t_end - t_first) when output_tokens >= 2,
// runtime = t_end - t_start.
struct EfficiencyRecord {
  std::int64_t prompt_tokens = 0;
  std::int64_t output_tokens = 0;
  double ttft_s = 0.0;
  double itps = 0.0;
  std::optional<double> otps;
  double runtime_s = 0.0;

  nlohmann::json to_json() const;
  static EfficiencyRecord from_json(const nlohmann::json& j);
};

inline constexpr std::string_view kMetricDefinitions =
    "TTFT = first-token time - call start (prompt token counting excluded); "
    "ITPS = prompt tokens / TTFT; OTPS = (output tokens - 1) / (end - first-token time); "
    "Runtime = end - call start. Cells are arithmetic means over prompts.";

// Throws std::invalid_argument if max_new < 1 and std::runtime_error
// ("no output") if the backend emitted nothing.
EfficiencyRecord measure(GenerationBackendInterface& backend, const std::string& prompt, int max_new);

// Per-metric arithmetic mean; otps averages the records that have it.
EfficiencyRecord mean_record(const std::vector<EfficiencyRecord>& records);

struct SweepConfig {
  std::vector<int> chunk_counts{0, 1, 2, 3, 4};
  int repeats = 5;
  int max_new = 128;
  int warmup_runs = 0;  // untimed runs discarded before each cell

  void validate() const;
  nlohmann::json to_json() const;
};

struct SweepCell {
  std::string model;
  int chunk_count = 0;
  int n_ok = 0;
  int n_failed = 0;
  std::optional<EfficiencyRecord> mean;  // absent when no run succeeded
  std::vector<std::string> errors;

  bool incomplete() const { return !mean.has_value(); }
  nlohmann::json to_json() const;
  static SweepCell from_json(const nlohmann::json& j);
};

struct SweepReport {
  std::vector<SweepCell> cells;

  std::vector<std::string> models() const;      // first-seen order
  std::vector<int> chunk_counts() const;        // ascending
  const SweepCell* find(std::string_view model, int chunk_count) const;
  // Appends other's cells, replacing cells with the same (model, chunk_count).
  void merge(const SweepReport& other);

  nlohmann::json to_json() const;
  static SweepReport from_json(const nlohmann::json& j);
};

// Chunk count 0 uses the five bare questions; k >= 1 uses the five summarize
// requests over the first k chunks of `doc`, decoded with `doc_tokenizer` (the
// tokenizer that chunked it). Prompt i of a cell is prompt i mod 5. Failed
// runs are recorded in the cell, never rethrown.
SweepReport sweep(GenerationBackendInterface& backend, const ChunkedDocument& doc,
                  const TokenizerInterface& doc_tokenizer, const SweepConfig& cfg,
                  const std::function<void(const SweepCell&)>& on_cell = {});

// "(a) Prompt: questions only", "(b) Prompt: 1 chunk ~ 200 tokens", ...
std::string panel_title(int chunk_count);

// One panel per chunk count with columns Model | ITPS (t/s) | OTPS (t/s) |
// TTFT (s) | Runtime (s); two decimals; "—" for incomplete cells or absent OTPS.
std::string render_report(const SweepReport& report);

// ---------------------------------------------------------------------------
// Backends

// Sleeps prompt_tokens / prefill_rate before the first token, then
// 1 / decode_rate between tokens, emitting the script (stopping early at its end).
class SimulatedBackend final : public GenerationBackendInterface {
 public:
  SimulatedBackend(double prefill_rate, double decode_rate, TokenSeq script, std::string name = "simulated",
                   std::shared_ptr<const TokenizerInterface> tokenizer = nullptr);

  std::string name() const override { return name_; }
  const TokenizerInterface& tokenizer() const override { return *tokenizer_; }
  void generate(const std::string& prompt, int max_new, const TokenSink& on_token) override;

  // Token ids 0, 1, ..., n-1 as single-byte text.
  static TokenSeq counting_script(int n);

 private:
  double prefill_rate_;
  double decode_rate_;
  TokenSeq script_;
  std::string name_;
  std::shared_ptr<const TokenizerInterface> tokenizer_;
};

class SlmBackend final : public GenerationBackendInterface {
 public:
  SlmBackend(std::shared_ptr<const slm::Parameters> params, std::shared_ptr<const TokenizerInterface> tokenizer,
             std::string name = "slm", slm::DecodeOptions decode = {});

  // Tokenizer comes from the checkpoint; EOS defaults to the vocabulary's marker.
  static std::unique_ptr<SlmBackend> from_checkpoint(const std::filesystem::path& path, std::string name,
                                                     slm::DecodeOptions decode = {});

  std::string name() const override { return name_; }
  const TokenizerInterface& tokenizer() const override { return *tokenizer_; }
  void generate(const std::string& prompt, int max_new, const TokenSink& on_token) override;

 private:
  std::shared_ptr<const slm::Parameters> params_;
  std::shared_ptr<const TokenizerInterface> tokenizer_;
  std::string name_;
  slm::DecodeOptions decode_;
};

// Streaming text-completion endpoint (POST {"prompt", "max_tokens", "stream": true},
// server-sent events whose data is {"choices": [{"text": ...}]} until "[DONE]").
// Each non-empty text event counts as one token.
class HttpStreamingBackend final : public GenerationBackendInterface {
 public:
  struct Options {
    std::string name = "http";
    std::string base_url = "http://127.0.0.1:8080";
    std::string path = "/v1/completions";
    std::string model = "default";
    std::string api_key_env = "DOCSLM_API_KEY";
    double timeout_s = 300.0;
    std::string tokenizer = "fallback";
  };

  explicit HttpStreamingBackend(Options options);

  std::string name() const override { return options_.name; }
  const TokenizerInterface& tokenizer() const override { return *tokenizer_; }
  void generate(const std::string& prompt, int max_new, const TokenSink& on_token) override;

 private:
  Options options_;
  std::unique_ptr<TokenizerInterface> tokenizer_;
};

// Manifest: {"backends": [{"name": ..., "adapter": "simulated" | "slm" | "http", ...}]}.
//   simulated: prefill_rate, decode_rate, script_length (default 256)
//   slm:       checkpoint (relative to the manifest), temperature, seed
//   http:      base_url, path, model, api_key_env, timeout_s, tokenizer
std::unique_ptr<GenerationBackendInterface> make_backend(const nlohmann::json& entry,
                                                         const std::filesystem::path& base_dir = {});
std::vector<std::unique_ptr<GenerationBackendInterface>> load_manifest(const std::filesystem::path& path);

}  // namespace docslm::bench

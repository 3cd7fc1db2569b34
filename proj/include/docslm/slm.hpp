#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "docslm/text.hpp"

// Decoder-only transformer: token + learned absolute position embeddings,
// pre-norm blocks (LayerNorm -> causal multi-head attention, LayerNorm -> GELU
// MLP of width 4*d), final LayerNorm and a linear output head. Attention
// scores carry no positional bias. All arithmetic is in double precision.
namespace docslm::slm {

enum class Positional { learned_absolute };

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 2;
  int d_model = 32;
  int vocab_size = 64;
  int max_seq_len = 128;
  bool bias_enabled = true;
  Positional positional = Positional::learned_absolute;

  // Throws std::invalid_argument on inconsistent values.
  void validate() const;
  int head_dim() const { return d_model / n_heads; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Published model specifications, kept as metadata. The listed model dimension
// is recorded as printed even though it does not fit the parameter counts.
struct Preset {
  std::string name;
  int n_layers = 0;
  int n_heads = 0;
  int model_dimension = 0;
  double pretrain_learning_rate = 0.0;
  int pretrain_global_batch = 0;
  std::string pretrain_tokens;
  std::string optimizer;
  double finetune_learning_rate = 0.0;
  int finetune_global_batch = 0;
  int finetune_epochs = 0;
  std::string warning;

  nlohmann::json to_json() const;
};

const std::vector<Preset>& presets();
// Throws std::invalid_argument for unknown names.
const Preset& preset(std::string_view name);

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

inline constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);

// Offsets into the flat parameter vector. Bias offsets are kAbsent when the
// config disables biases. Weight matrices are stored [in, out] row-major.
struct LayerOffsets {
  std::size_t ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
  std::size_t ln2_g, ln2_b, fc_w, fc_b, out_w, out_b;
};

struct ParamLayout {
  std::size_t wte = 0, wpe = 0;
  std::vector<LayerOffsets> layers;
  std::size_t lnf_g = 0, lnf_b = kAbsent, head_w = 0, head_b = kAbsent;
  std::size_t total = 0;
  std::vector<TensorInfo> tensors;
};

ParamLayout make_layout(const ModelConfig& cfg);

class Parameters {
 public:
  explicit Parameters(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  const TensorInfo& tensor(std::string_view name) const;
  std::span<double> view(std::string_view name);
  std::span<const double> view(std::string_view name) const;

  // Embeddings ~ N(0, embedding_scale^2), other weights ~ N(0, scale^2) with
  // residual output projections scaled down by sqrt(2 * n_layers), biases 0,
  // LayerNorm gains 1.
  void init_random(std::uint64_t seed, double scale = 0.02, double embedding_scale = 1.0);
  void set_zero();

 private:
  ModelConfig cfg_;
  ParamLayout layout_;
  std::vector<double> values_;
};

// Row-major matrix.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// A token sequence with next-token targets at positions [first_target, size).
// Pre-training uses first_target = 1; fine-tuning uses the prompt length so
// prompt positions carry no loss.
struct Sequence {
  TokenSeq tokens;
  std::size_t first_target = 1;

  std::size_t target_count() const { return tokens.size() - first_target; }
};

// Pre-training sequence; throws if shorter than 2 tokens or over max_seq_len.
Sequence pretrain_sequence(TokenSeq tokens, const ModelConfig& cfg);
// Prompt x followed by target y; throws on empty y or len(x)+len(y) > max_seq_len.
Sequence finetune_example(const TokenSeq& x, const TokenSeq& y, const ModelConfig& cfg);

// Full logits [len x vocab]. Throws on empty or overlong input and on
// out-of-range token ids.
Matrix forward(const Parameters& p, std::span<const TokenId> tokens);

// Row-wise softmax of a logits matrix.
Matrix softmax_rows(const Matrix& logits);

// Mean over target positions of -log softmax(logits[i-1])[tokens[i]].
double sequence_loss(const Parameters& p, const Sequence& s);
double pretrain_loss(const Parameters& p, std::span<const TokenId> tokens);
double finetune_loss(const Parameters& p, const TokenSeq& x, const TokenSeq& y);

// Loss of one sequence and its gradient, added to `grad` scaled by
// `grad_scale`. `grad` must have p.size() entries.
double loss_and_grad(const Parameters& p, const Sequence& s, std::vector<double>& grad,
                     double grad_scale = 1.0);

// ---------------------------------------------------------------------------
// Training

enum class OptimizerRule { adamw, lion, sgd };
std::string to_string(OptimizerRule rule);
OptimizerRule parse_optimizer_rule(std::string_view text);

struct OptimizerConfig {
  OptimizerRule rule = OptimizerRule::adamw;
  double learning_rate = 1e-3;
  int batch_size = 8;
  int steps = 100;  // total schedule length; a resumed run stops at the same step
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;  // Lion conventionally uses 0.99
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  int warmup_steps = 0;
  bool cosine_decay = false;  // decay to min_lr_ratio * learning_rate at the last step
  double min_lr_ratio = 0.1;
  int stop_at = 0;  // end this run once the global step reaches it (0 = steps)

  // Learning rate for a 1-based step.
  double learning_rate_at(int step) const;

  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
};

// Moment buffers and step counter, saved alongside checkpoints for resume.
struct OptimizerState {
  OptimizerRule rule = OptimizerRule::adamw;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean batch loss before each update
};

using StepCallback = std::function<void(int step, double loss)>;

// Mini-batches are drawn epoch by epoch from a seeded shuffle; a batch size at
// least the data size means full-batch steps. Deterministic for a given seed.
// When `state` is given it is used (and updated) instead of fresh moments, and
// training continues from state->step up to cfg.steps, so splitting a run with
// a saved state reproduces the uninterrupted run.
TrainResult train(Parameters& p, std::span<const Sequence> data, const OptimizerConfig& cfg,
                  const StepCallback& on_step = {}, OptimizerState* state = nullptr);

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// |a - n| / max(|a|, |n|, floor); pairs below the floor compare absolutely.
inline constexpr double kGradCheckFloor = 1e-7;

// Central differences (L(t+e) - L(t-e)) / 2e on `samples` parameters chosen
// with `seed`, compared against the analytic gradient.
GradCheckResult grad_check(const Parameters& p, const Sequence& s, double epsilon,
                           std::size_t samples = 256, std::uint64_t seed = 0);

// Same, against a caller-supplied analytic gradient (for harness self-tests).
GradCheckResult grad_check_against(const Parameters& p, const Sequence& s, double epsilon,
                                   std::span<const double> analytic, std::size_t samples = 256,
                                   std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Generation

enum class DecodeMode { greedy, temperature };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::optional<TokenId> eos;
};

// Incremental decoder with a key/value cache. Holds a reference to the
// parameters, which must outlive it and stay unchanged.
class InferenceSession {
 public:
  explicit InferenceSession(const Parameters& p);

  // Appends one token and returns the logits for the next position.
  std::span<const double> push(TokenId token);
  std::size_t length() const { return len_; }
  void reset() { len_ = 0; }

 private:
  const Parameters& p_;
  std::size_t len_ = 0;
  std::vector<std::vector<double>> k_, v_;  // per layer [max_seq_len, d]
  std::vector<double> x_, h_, qkv_, att_, tmp_, fc_, scores_, logits_;
};

// Return false from the callback to stop early.
using TokenCallback = std::function<bool(TokenId)>;

// Generates up to max_new tokens after the prompt, stopping after the EOS
// token (which is emitted). Throws if prompt + max_new exceeds max_seq_len.
TokenSeq generate(const Parameters& p, std::span<const TokenId> prompt, int max_new,
                  const DecodeOptions& decode = {}, const TokenCallback& on_token = {});

// ---------------------------------------------------------------------------
// Persistence
//
// Checkpoint layout: the 8 bytes "DSLMCKPT", a little-endian uint64 header
// length, a JSON header, then little-endian float64 data. The header lists
// every tensor as {name, shape, offset} with offsets in elements from the
// start of the data section, plus "config", "tokenizer", "metadata" and, when
// saved, "optimizer" {rule, step, m_offset, v_offset, size}.

struct Checkpoint {
  Parameters params;
  nlohmann::json tokenizer;
  nlohmann::json metadata;
  std::optional<OptimizerState> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const Parameters& p,
                     const nlohmann::json& tokenizer, const nlohmann::json& metadata,
                     const OptimizerState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// "step,loss" CSV.
void write_loss_csv(const std::filesystem::path& path, std::span<const double> losses,
                    int first_step = 1);

}  // namespace docslm::slm

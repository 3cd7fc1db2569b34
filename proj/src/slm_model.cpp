#include "docslm/slm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "docslm/random.hpp"
#include "slm_kernels.hpp"

namespace docslm::slm {

void ModelConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("n_layers must be >= 1");
  if (n_heads < 1) throw std::invalid_argument("n_heads must be >= 1");
  if (d_model < 1 || d_model % n_heads != 0) {
    throw std::invalid_argument("d_model must be a positive multiple of n_heads");
  }
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  if (max_seq_len < 1) throw std::invalid_argument("max_seq_len must be >= 1");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"n_layers", n_layers},         {"n_heads", n_heads},
          {"d_model", d_model},           {"vocab_size", vocab_size},
          {"max_seq_len", max_seq_len},   {"bias_enabled", bias_enabled},
          {"positional", "learned_absolute"}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.bias_enabled = j.value("bias_enabled", true);
  if (j.value("positional", std::string("learned_absolute")) != "learned_absolute") {
    throw std::invalid_argument("only learned_absolute positions are supported");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

nlohmann::json Preset::to_json() const {
  nlohmann::json j{{"name", name},
                   {"n_layers", n_layers},
                   {"n_heads", n_heads},
                   {"model_dimension", model_dimension},
                   {"pretrain_learning_rate", pretrain_learning_rate},
                   {"pretrain_global_batch", pretrain_global_batch},
                   {"pretrain_tokens", pretrain_tokens},
                   {"optimizer", optimizer},
                   {"finetune_learning_rate", finetune_learning_rate},
                   {"finetune_global_batch", finetune_global_batch},
                   {"finetune_epochs", finetune_epochs}};
  if (!warning.empty()) j["warning"] = warning;
  return j;
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = [] {
    const std::string warning =
        "model_dimension 2048 is recorded as published; it is inconsistent with the parameter "
        "count and is more plausibly the context length";
    struct Row {
      const char* name;
      int layers, heads;
      double lr;
    };
    const Row rows[] = {{"docslm-125m", 12, 12, 3e-4}, {"docslm-270m", 16, 64, 4e-4},
                        {"docslm-350m", 24, 16, 3e-4}, {"docslm-450m", 20, 64, 3e-4},
                        {"docslm-760m", 24, 12, 3e-4}, {"docslm-1b", 24, 16, 2e-4}};
    std::vector<Preset> out;
    for (const auto& r : rows) {
      Preset p;
      p.name = r.name;
      p.n_layers = r.layers;
      p.n_heads = r.heads;
      p.model_dimension = 2048;
      p.pretrain_learning_rate = r.lr;
      p.pretrain_global_batch = 2048;
      p.pretrain_tokens = "627B";
      p.optimizer = "lion";
      p.finetune_learning_rate = 5e-6;
      p.finetune_global_batch = 48;
      p.finetune_epochs = 2;
      p.warning = warning;
      out.push_back(std::move(p));
    }
    return out;
  }();
  return table;
}

const Preset& preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown preset: " + std::string(name));
}

// ---------------------------------------------------------------------------

ParamLayout make_layout(const ModelConfig& cfg) {
  cfg.validate();
  ParamLayout l;
  const int d = cfg.d_model;
  const int v = cfg.vocab_size;
  const auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    TensorInfo t{std::move(name), std::move(shape), l.total, n};
    l.total += n;
    l.tensors.push_back(t);
    return t.offset;
  };
  const auto add_bias = [&](std::string name, int n) {
    return cfg.bias_enabled ? add(std::move(name), {n}) : kAbsent;
  };

  l.wte = add("wte", {v, d});
  l.wpe = add("wpe", {cfg.max_seq_len, d});
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string pre = "h." + std::to_string(i) + ".";
    LayerOffsets o{};
    o.ln1_g = add(pre + "ln1.g", {d});
    o.ln1_b = add_bias(pre + "ln1.b", d);
    o.qkv_w = add(pre + "attn.qkv.w", {d, 3 * d});
    o.qkv_b = add_bias(pre + "attn.qkv.b", 3 * d);
    o.proj_w = add(pre + "attn.proj.w", {d, d});
    o.proj_b = add_bias(pre + "attn.proj.b", d);
    o.ln2_g = add(pre + "ln2.g", {d});
    o.ln2_b = add_bias(pre + "ln2.b", d);
    o.fc_w = add(pre + "mlp.fc.w", {d, 4 * d});
    o.fc_b = add_bias(pre + "mlp.fc.b", 4 * d);
    o.out_w = add(pre + "mlp.proj.w", {4 * d, d});
    o.out_b = add_bias(pre + "mlp.proj.b", d);
    l.layers.push_back(o);
  }
  l.lnf_g = add("lnf.g", {d});
  l.lnf_b = add_bias("lnf.b", d);
  l.head_w = add("head.w", {d, v});
  l.head_b = add_bias("head.b", v);
  return l;
}

Parameters::Parameters(ModelConfig cfg) : cfg_(cfg), layout_(make_layout(cfg)), values_(layout_.total, 0.0) {}

const TensorInfo& Parameters::tensor(std::string_view name) const {
  for (const auto& t : layout_.tensors) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("no tensor named " + std::string(name));
}

std::span<double> Parameters::view(std::string_view name) {
  const auto& t = tensor(name);
  return {values_.data() + t.offset, t.size};
}

std::span<const double> Parameters::view(std::string_view name) const {
  const auto& t = tensor(name);
  return {values_.data() + t.offset, t.size};
}

void Parameters::init_random(std::uint64_t seed, double scale, double embedding_scale) {
  Rng rng(seed);
  const double residual_scale = scale / std::sqrt(2.0 * cfg_.n_layers);
  for (const auto& t : layout_.tensors) {
    double* w = values_.data() + t.offset;
    const bool gain = t.name.ends_with(".g");
    const bool bias = t.name.ends_with(".b");
    const bool residual = t.name.ends_with("attn.proj.w") || t.name.ends_with("mlp.proj.w");
    const bool embedding = t.name == "wte" || t.name == "wpe";
    for (std::size_t i = 0; i < t.size; ++i) {
      if (gain) {
        w[i] = 1.0;
      } else if (bias) {
        w[i] = 0.0;
      } else {
        w[i] = rng.normal(0.0, embedding ? embedding_scale : (residual ? residual_scale : scale));
      }
    }
  }
}

void Parameters::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

// ---------------------------------------------------------------------------

Sequence pretrain_sequence(TokenSeq tokens, const ModelConfig& cfg) {
  if (tokens.size() < 2) throw std::invalid_argument("pre-training sequence needs at least 2 tokens");
  if (tokens.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw std::invalid_argument("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                                std::to_string(cfg.max_seq_len));
  }
  return Sequence{std::move(tokens), 1};
}

Sequence finetune_example(const TokenSeq& x, const TokenSeq& y, const ModelConfig& cfg) {
  if (y.empty()) throw std::invalid_argument("fine-tuning example has an empty target");
  if (x.empty()) throw std::invalid_argument("fine-tuning example has an empty prompt");
  if (x.size() + y.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw std::invalid_argument("example length " + std::to_string(x.size() + y.size()) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  Sequence s;
  s.tokens = x;
  s.tokens.insert(s.tokens.end(), y.begin(), y.end());
  s.first_target = x.size();
  return s;
}

namespace {

void check_tokens(const ModelConfig& cfg, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw std::invalid_argument("empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw std::invalid_argument("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                                std::to_string(cfg.max_seq_len));
  }
  for (TokenId t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary of " +
                              std::to_string(cfg.vocab_size));
    }
  }
}

void check_sequence(const ModelConfig& cfg, const Sequence& s) {
  check_tokens(cfg, s.tokens);
  if (s.first_target < 1 || s.first_target >= s.tokens.size()) {
    throw std::invalid_argument("sequence has no target positions");
  }
}

}  // namespace

Matrix forward(const Parameters& p, std::span<const TokenId> tokens) {
  check_tokens(p.config(), tokens);
  kernels::Activations act;
  kernels::forward_trunk(p, tokens, act);
  const auto& cfg = p.config();
  const std::size_t V = static_cast<std::size_t>(cfg.vocab_size);
  Matrix out{tokens.size(), V, std::vector<double>(tokens.size() * V)};
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    kernels::head_row(p, act.hf.data() + t * static_cast<std::size_t>(cfg.d_model), out.data.data() + t * V);
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits;
  for (std::size_t r = 0; r < out.rows; ++r) kernels::softmax_inplace(out.data.data() + r * out.cols, out.cols);
  return out;
}

double sequence_loss(const Parameters& p, const Sequence& s) {
  check_sequence(p.config(), s);
  kernels::Activations act;
  kernels::forward_trunk(p, s.tokens, act);
  const auto& cfg = p.config();
  const std::size_t V = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  std::vector<double> logits(V);
  double total = 0.0;
  for (std::size_t i = s.first_target; i < s.tokens.size(); ++i) {
    kernels::head_row(p, act.hf.data() + (i - 1) * d, logits.data());
    total -= kernels::log_softmax_at(logits.data(), V, static_cast<std::size_t>(s.tokens[i]));
  }
  return total / static_cast<double>(s.target_count());
}

double pretrain_loss(const Parameters& p, std::span<const TokenId> tokens) {
  return sequence_loss(p, pretrain_sequence(TokenSeq(tokens.begin(), tokens.end()), p.config()));
}

double finetune_loss(const Parameters& p, const TokenSeq& x, const TokenSeq& y) {
  return sequence_loss(p, finetune_example(x, y, p.config()));
}

double loss_and_grad(const Parameters& p, const Sequence& s, std::vector<double>& grad, double grad_scale) {
  check_sequence(p.config(), s);
  if (grad.size() != p.size()) throw std::invalid_argument("gradient buffer has the wrong size");
  kernels::Activations act;
  kernels::forward_trunk(p, s.tokens, act);
  return kernels::backward(p, s, act, grad, grad_scale);
}

// ---------------------------------------------------------------------------

InferenceSession::InferenceSession(const Parameters& p) : p_(p) {
  const auto& cfg = p.config();
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t T = static_cast<std::size_t>(cfg.max_seq_len);
  k_.assign(static_cast<std::size_t>(cfg.n_layers), std::vector<double>(T * d));
  v_.assign(static_cast<std::size_t>(cfg.n_layers), std::vector<double>(T * d));
  x_.resize(d);
  h_.resize(d);
  qkv_.resize(3 * d);
  att_.resize(d);
  tmp_.resize(d);
  fc_.resize(4 * d);
  scores_.resize(T);
  logits_.resize(static_cast<std::size_t>(cfg.vocab_size));
}

std::span<const double> InferenceSession::push(TokenId token) {
  const auto& cfg = p_.config();
  if (len_ >= static_cast<std::size_t>(cfg.max_seq_len)) {
    throw std::length_error("context overflow: max_seq_len " + std::to_string(cfg.max_seq_len) + " reached");
  }
  if (token < 0 || token >= cfg.vocab_size) {
    throw std::out_of_range("token id " + std::to_string(token) + " outside vocabulary");
  }
  const auto& L = p_.layout();
  const double* w = p_.values().data();
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t hd = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const std::size_t t = len_;

  for (std::size_t j = 0; j < d; ++j) {
    x_[j] = w[L.wte + static_cast<std::size_t>(token) * d + j] + w[L.wpe + t * d + j];
  }
  for (std::size_t l = 0; l < L.layers.size(); ++l) {
    const auto& o = L.layers[l];
    double mean, rstd;
    kernels::layernorm_row(x_.data(), d, w + o.ln1_g, kernels::opt(w, o.ln1_b), h_.data(), mean, rstd);
    kernels::linear(h_.data(), 1, d, w + o.qkv_w, kernels::opt(w, o.qkv_b), 3 * d, qkv_.data());
    std::copy_n(qkv_.data() + d, d, k_[l].data() + t * d);
    std::copy_n(qkv_.data() + 2 * d, d, v_[l].data() + t * d);
    for (std::size_t h = 0; h < H; ++h) {
      const double* q = qkv_.data() + h * hd;
      for (std::size_t j = 0; j <= t; ++j) {
        const double* k = k_[l].data() + j * d + h * hd;
        double s = 0.0;
        for (std::size_t e = 0; e < hd; ++e) s += q[e] * k[e];
        scores_[j] = s * scale;
      }
      kernels::softmax_inplace(scores_.data(), t + 1);
      double* out = att_.data() + h * hd;
      std::fill_n(out, hd, 0.0);
      for (std::size_t j = 0; j <= t; ++j) {
        const double* v = v_[l].data() + j * d + h * hd;
        const double pj = scores_[j];
        for (std::size_t e = 0; e < hd; ++e) out[e] += pj * v[e];
      }
    }
    kernels::linear(att_.data(), 1, d, w + o.proj_w, kernels::opt(w, o.proj_b), d, tmp_.data());
    for (std::size_t j = 0; j < d; ++j) x_[j] += tmp_[j];
    kernels::layernorm_row(x_.data(), d, w + o.ln2_g, kernels::opt(w, o.ln2_b), h_.data(), mean, rstd);
    kernels::linear(h_.data(), 1, d, w + o.fc_w, kernels::opt(w, o.fc_b), 4 * d, fc_.data());
    for (auto& z : fc_) z = kernels::gelu(z);
    kernels::linear(fc_.data(), 1, 4 * d, w + o.out_w, kernels::opt(w, o.out_b), d, tmp_.data());
    for (std::size_t j = 0; j < d; ++j) x_[j] += tmp_[j];
  }
  double mean, rstd;
  kernels::layernorm_row(x_.data(), d, w + L.lnf_g, kernels::opt(w, L.lnf_b), h_.data(), mean, rstd);
  kernels::head_row(p_, h_.data(), logits_.data());
  ++len_;
  return logits_;
}

TokenSeq generate(const Parameters& p, std::span<const TokenId> prompt, int max_new, const DecodeOptions& decode,
                  const TokenCallback& on_token) {
  if (max_new < 0) throw std::invalid_argument("max_new must be >= 0");
  const auto& cfg = p.config();
  if (prompt.size() + static_cast<std::size_t>(max_new) > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw std::length_error("context overflow: prompt of " + std::to_string(prompt.size()) + " tokens plus " +
                            std::to_string(max_new) + " new tokens exceeds max_seq_len " +
                            std::to_string(cfg.max_seq_len));
  }
  TokenSeq out;
  if (max_new == 0) return out;
  if (prompt.empty()) throw std::invalid_argument("generation needs a non-empty prompt");
  if (decode.mode == DecodeMode::temperature && !(decode.temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }

  InferenceSession session(p);
  std::span<const double> logits;
  for (TokenId t : prompt) logits = session.push(t);
  Rng rng(decode.seed);
  std::vector<double> probs(logits.size());
  for (int step = 0; step < max_new; ++step) {
    TokenId next = 0;
    if (decode.mode == DecodeMode::greedy) {
      next = static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    } else {
      for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = logits[i] / decode.temperature;
      kernels::softmax_inplace(probs.data(), probs.size());
      const double u = rng.uniform();
      double acc = 0.0;
      next = static_cast<TokenId>(probs.size() - 1);
      for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
          next = static_cast<TokenId>(i);
          break;
        }
      }
    }
    out.push_back(next);
    const bool keep_going = on_token ? on_token(next) : true;
    if (!keep_going || (decode.eos && next == *decode.eos) || step + 1 == max_new) break;
    logits = session.push(next);
  }
  return out;
}

}  // namespace docslm::slm

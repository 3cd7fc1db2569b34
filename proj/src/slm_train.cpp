#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "docslm/random.hpp"
#include "docslm/slm.hpp"

namespace docslm::slm {

std::string to_string(OptimizerRule rule) {
  switch (rule) {
    case OptimizerRule::adamw:
      return "adamw";
    case OptimizerRule::lion:
      return "lion";
    case OptimizerRule::sgd:
      return "sgd";
  }
  return "adamw";
}

OptimizerRule parse_optimizer_rule(std::string_view text) {
  if (text == "adamw") return OptimizerRule::adamw;
  if (text == "lion") return OptimizerRule::lion;
  if (text == "sgd") return OptimizerRule::sgd;
  throw std::invalid_argument("unknown optimizer rule: " + std::string(text));
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"rule", to_string(rule)},     {"learning_rate", learning_rate},
          {"batch_size", batch_size},    {"steps", steps},
          {"seed", seed},                {"beta1", beta1},
          {"beta2", beta2},              {"epsilon", epsilon},
          {"weight_decay", weight_decay}, {"grad_clip", grad_clip},
          {"warmup_steps", warmup_steps}, {"cosine_decay", cosine_decay},
          {"min_lr_ratio", min_lr_ratio}, {"stop_at", stop_at}};
}

double OptimizerConfig::learning_rate_at(int step) const {
  double lr = learning_rate;
  if (warmup_steps > 0 && step <= warmup_steps) {
    return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (cosine_decay && steps > warmup_steps) {
    const double progress = std::clamp(static_cast<double>(step - warmup_steps) / (steps - warmup_steps), 0.0, 1.0);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    lr *= min_lr_ratio + (1.0 - min_lr_ratio) * cosine;
  }
  return lr;
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  c.rule = parse_optimizer_rule(j.value("rule", to_string(c.rule)));
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.cosine_decay = j.value("cosine_decay", c.cosine_decay);
  c.min_lr_ratio = j.value("min_lr_ratio", c.min_lr_ratio);
  c.stop_at = j.value("stop_at", c.stop_at);
  return c;
}

namespace {

void apply_update(std::vector<double>& theta, const std::vector<double>& grad, OptimizerState& st,
                  const OptimizerConfig& cfg, double lr) {
  const std::size_t n = theta.size();
  const double wd = cfg.weight_decay;
  switch (st.rule) {
    case OptimizerRule::sgd:
      for (std::size_t i = 0; i < n; ++i) theta[i] -= lr * (grad[i] + wd * theta[i]);
      break;
    case OptimizerRule::lion:
      for (std::size_t i = 0; i < n; ++i) {
        const double c = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
        const double sign = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
        theta[i] -= lr * (sign + wd * theta[i]);
        st.m[i] = cfg.beta2 * st.m[i] + (1.0 - cfg.beta2) * grad[i];
      }
      break;
    case OptimizerRule::adamw: {
      const double t = static_cast<double>(st.step);
      const double c1 = 1.0 - std::pow(cfg.beta1, t);
      const double c2 = 1.0 - std::pow(cfg.beta2, t);
      for (std::size_t i = 0; i < n; ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / c1;
        const double vhat = st.v[i] / c2;
        theta[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.epsilon) + wd * theta[i]);
      }
      break;
    }
  }
}

}  // namespace

TrainResult train(Parameters& p, std::span<const Sequence> data, const OptimizerConfig& cfg,
                  const StepCallback& on_step, OptimizerState* state) {
  if (cfg.steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (data.empty()) throw std::invalid_argument("no training data");

  OptimizerState local;
  OptimizerState& st = state != nullptr ? *state : local;
  if (st.m.empty() && st.v.empty() && st.step == 0) st.rule = cfg.rule;
  if (st.rule != cfg.rule) {
    throw std::invalid_argument("optimizer state was saved with rule " + to_string(st.rule) + ", not " +
                                to_string(cfg.rule));
  }
  if (st.rule != OptimizerRule::sgd && st.m.size() != p.size()) st.m.assign(p.size(), 0.0);
  if (st.rule == OptimizerRule::adamw && st.v.size() != p.size()) st.v.assign(p.size(), 0.0);

  const std::size_t n = data.size();
  const std::size_t bs = std::min(static_cast<std::size_t>(cfg.batch_size), n);
  // Sample g of the run is position g % n of epoch g / n, and each epoch's
  // order depends only on (seed, epoch), so a resumed run sees the same stream.
  std::vector<std::size_t> order(n);
  std::uint64_t shuffled_epoch = UINT64_MAX;
  const auto sample_at = [&](std::uint64_t g) {
    const std::uint64_t epoch = g / n;
    if (epoch != shuffled_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
      rng.shuffle(order);
      shuffled_epoch = epoch;
    }
    return order[static_cast<std::size_t>(g % n)];
  };

  std::vector<double> grad(p.size());
  TrainResult result;
  result.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));
  const std::int64_t last = cfg.stop_at > 0 ? std::min(cfg.stop_at, cfg.steps) : cfg.steps;
  while (st.step < last) {
    const int step = static_cast<int>(st.step) + 1;
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < bs; ++b) {
      const std::uint64_t g = static_cast<std::uint64_t>(st.step) * bs + b;
      loss += loss_and_grad(p, data[sample_at(g)], grad, 1.0 / static_cast<double>(bs));
    }
    loss /= static_cast<double>(bs);
    if (!std::isfinite(loss)) {
      throw TrainingDivergence("training diverged: non-finite loss at step " + std::to_string(step), step);
    }

    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (!std::isfinite(norm)) {
      throw TrainingDivergence("training diverged: non-finite gradient at step " + std::to_string(step), step);
    }
    if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
      const double f = cfg.grad_clip / norm;
      for (double& g : grad) g *= f;
    }

    const double lr = cfg.learning_rate_at(step);
    ++st.step;
    apply_update(p.values(), grad, st, cfg, lr);

    result.loss_curve.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return result;
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const Parameters& p, const Sequence& s, double epsilon, std::size_t samples,
                           std::uint64_t seed) {
  std::vector<double> analytic(p.size(), 0.0);
  loss_and_grad(p, s, analytic, 1.0);
  return grad_check_against(p, s, epsilon, analytic, samples, seed);
}

GradCheckResult grad_check_against(const Parameters& p, const Sequence& s, double epsilon,
                                   std::span<const double> analytic, std::size_t samples, std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (analytic.size() != p.size()) throw std::invalid_argument("analytic gradient has the wrong size");

  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t n = std::min(samples, idx.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {  // partial Fisher-Yates
    const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }

  Parameters q = p;
  GradCheckResult r;
  r.checked = n;
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t i = idx[c];
    const double orig = q.values()[i];
    q.values()[i] = orig + epsilon;
    const double up = sequence_loss(q, s);
    q.values()[i] = orig - epsilon;
    const double down = sequence_loss(q, s);
    q.values()[i] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
    if (c == 0 || rel > r.max_relative_error) {
      r.max_relative_error = rel;
      r.worst_index = i;
      r.worst_analytic = a;
      r.worst_numeric = numeric;
    }
  }
  return r;
}

}  // namespace docslm::slm

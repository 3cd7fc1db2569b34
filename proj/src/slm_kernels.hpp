#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "docslm/slm.hpp"

// Dense kernels shared by the batch forward/backward pass and the incremental
// decoder. Matrices are row-major; weights are [in, out].
namespace docslm::slm::kernels {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInvSqrt2 = 0.70710678118654752440;

inline const double* opt(const double* base, std::size_t offset) {
  return offset == kAbsent ? nullptr : base + offset;
}
inline double* opt(double* base, std::size_t offset) { return offset == kAbsent ? nullptr : base + offset; }

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi * kInvSqrt2);
  return cdf + x * pdf;
}

// Y[T, out] = X[T, in] * W[in, out] + b.
void linear(const double* X, std::size_t T, std::size_t in, const double* W, const double* b, std::size_t out,
            double* Y);

// Given dY[T, out]: dX = dY * W^T (overwritten, skipped if null), dW += X^T dY,
// db += column sums of dY (skipped if null).
void linear_backward(const double* X, const double* dY, std::size_t T, std::size_t in, std::size_t out,
                     const double* W, double* dX, double* dW, double* db);

void layernorm_row(const double* x, std::size_t d, const double* g, const double* b, double* y, double& mean,
                   double& rstd);

// Accumulates into dx, dg and db (db may be null).
void layernorm_backward_row(const double* dy, const double* x, double mean, double rstd, std::size_t d,
                            const double* g, double* dx, double* dg, double* db);

void softmax_inplace(double* v, std::size_t n);
double log_softmax_at(const double* logits, std::size_t n, std::size_t index);

// logits[V] = h[d] * head.w + head.b
void head_row(const Parameters& p, const double* h, double* logits);

struct LayerActs {
  std::vector<double> x_in, h1, mean1, rstd1, qkv, probs, att, x_mid, h2, mean2, rstd2, fc, act;
};

struct Activations {
  std::size_t T = 0;
  std::vector<LayerActs> layers;
  std::vector<double> x_out, hf, meanf, rstdf;
};

// Runs every block and the final LayerNorm; act.hf holds the normalized final
// hidden states [T, d].
void forward_trunk(const Parameters& p, std::span<const TokenId> tokens, Activations& act);

// Loss over the sequence's target positions; adds grad_scale * dLoss/dTheta to grad.
double backward(const Parameters& p, const Sequence& s, const Activations& act, std::vector<double>& grad,
                double grad_scale);

}  // namespace docslm::slm::kernels

#include "slm_kernels.hpp"

#include <algorithm>
#include <limits>

namespace docslm::slm::kernels {

void linear(const double* X, std::size_t T, std::size_t in, const double* W, const double* b, std::size_t out,
            double* Y) {
  for (std::size_t t = 0; t < T; ++t) {
    double* y = Y + t * out;
    if (b != nullptr) {
      std::copy_n(b, out, y);
    } else {
      std::fill_n(y, out, 0.0);
    }
    const double* x = X + t * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = x[k];
      const double* w = W + k * out;
      for (std::size_t j = 0; j < out; ++j) y[j] += xk * w[j];
    }
  }
}

void linear_backward(const double* X, const double* dY, std::size_t T, std::size_t in, std::size_t out,
                     const double* W, double* dX, double* dW, double* db) {
  if (dX != nullptr) {
    std::vector<double> wt(in * out);
    for (std::size_t k = 0; k < in; ++k) {
      for (std::size_t j = 0; j < out; ++j) wt[j * in + k] = W[k * out + j];
    }
    for (std::size_t t = 0; t < T; ++t) {
      double* dx = dX + t * in;
      std::fill_n(dx, in, 0.0);
      const double* dy = dY + t * out;
      for (std::size_t j = 0; j < out; ++j) {
        const double g = dy[j];
        const double* w = wt.data() + j * in;
        for (std::size_t k = 0; k < in; ++k) dx[k] += g * w[k];
      }
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = X + t * in;
    const double* dy = dY + t * out;
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = x[k];
      if (xk == 0.0) continue;
      double* dw = dW + k * out;
      for (std::size_t j = 0; j < out; ++j) dw[j] += xk * dy[j];
    }
    if (db != nullptr) {
      for (std::size_t j = 0; j < out; ++j) db[j] += dy[j];
    }
  }
}

void layernorm_row(const double* x, std::size_t d, const double* g, const double* b, double* y, double& mean,
                   double& rstd) {
  double m = 0.0;
  for (std::size_t i = 0; i < d; ++i) m += x[i];
  m /= static_cast<double>(d);
  double var = 0.0;
  for (std::size_t i = 0; i < d; ++i) var += (x[i] - m) * (x[i] - m);
  var /= static_cast<double>(d);
  const double r = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < d; ++i) {
    y[i] = (x[i] - m) * r * g[i] + (b != nullptr ? b[i] : 0.0);
  }
  mean = m;
  rstd = r;
}

void layernorm_backward_row(const double* dy, const double* x, double mean, double rstd, std::size_t d,
                            const double* g, double* dx, double* dg, double* db) {
  double sum_dxhat = 0.0;
  double sum_dxhat_xhat = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double xhat = (x[i] - mean) * rstd;
    const double dxhat = dy[i] * g[i];
    sum_dxhat += dxhat;
    sum_dxhat_xhat += dxhat * xhat;
    dg[i] += dy[i] * xhat;
    if (db != nullptr) db[i] += dy[i];
  }
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double xhat = (x[i] - mean) * rstd;
    const double dxhat = dy[i] * g[i];
    dx[i] += rstd * (dxhat - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
  }
}

void softmax_inplace(double* v, std::size_t n) {
  const double mx = *std::max_element(v, v + n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    sum += v[i];
  }
  const double inv = 1.0 / sum;
  for (std::size_t i = 0; i < n; ++i) v[i] *= inv;
}

double log_softmax_at(const double* logits, std::size_t n, std::size_t index) {
  const double mx = *std::max_element(logits, logits + n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
  return logits[index] - mx - std::log(sum);
}

void head_row(const Parameters& p, const double* h, double* logits) {
  const auto& L = p.layout();
  const double* w = p.values().data();
  const std::size_t d = static_cast<std::size_t>(p.config().d_model);
  const std::size_t V = static_cast<std::size_t>(p.config().vocab_size);
  linear(h, 1, d, w + L.head_w, opt(w, L.head_b), V, logits);
}

void forward_trunk(const Parameters& p, std::span<const TokenId> tokens, Activations& act) {
  const auto& cfg = p.config();
  const auto& L = p.layout();
  const double* w = p.values().data();
  const std::size_t T = tokens.size();
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t hd = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  act.T = T;
  act.layers.resize(L.layers.size());
  std::vector<double> x(T * d);
  for (std::size_t t = 0; t < T; ++t) {
    const double* te = w + L.wte + static_cast<std::size_t>(tokens[t]) * d;
    const double* pe = w + L.wpe + t * d;
    for (std::size_t j = 0; j < d; ++j) x[t * d + j] = te[j] + pe[j];
  }
  std::vector<double> tmp(T * d);

  for (std::size_t l = 0; l < L.layers.size(); ++l) {
    const auto& o = L.layers[l];
    auto& a = act.layers[l];
    a.x_in = x;
    a.h1.resize(T * d);
    a.mean1.resize(T);
    a.rstd1.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      layernorm_row(x.data() + t * d, d, w + o.ln1_g, opt(w, o.ln1_b), a.h1.data() + t * d, a.mean1[t], a.rstd1[t]);
    }
    a.qkv.resize(T * 3 * d);
    linear(a.h1.data(), T, d, w + o.qkv_w, opt(w, o.qkv_b), 3 * d, a.qkv.data());

    a.probs.assign(H * T * T, 0.0);
    a.att.assign(T * d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        const double* q = a.qkv.data() + i * 3 * d + h * hd;
        double* pr = a.probs.data() + (h * T + i) * T;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* k = a.qkv.data() + j * 3 * d + d + h * hd;
          double s = 0.0;
          for (std::size_t e = 0; e < hd; ++e) s += q[e] * k[e];
          pr[j] = s * scale;
        }
        softmax_inplace(pr, i + 1);
        double* out = a.att.data() + i * d + h * hd;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* v = a.qkv.data() + j * 3 * d + 2 * d + h * hd;
          const double pj = pr[j];
          for (std::size_t e = 0; e < hd; ++e) out[e] += pj * v[e];
        }
      }
    }
    linear(a.att.data(), T, d, w + o.proj_w, opt(w, o.proj_b), d, tmp.data());
    for (std::size_t i = 0; i < T * d; ++i) x[i] += tmp[i];
    a.x_mid = x;

    a.h2.resize(T * d);
    a.mean2.resize(T);
    a.rstd2.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      layernorm_row(x.data() + t * d, d, w + o.ln2_g, opt(w, o.ln2_b), a.h2.data() + t * d, a.mean2[t], a.rstd2[t]);
    }
    a.fc.resize(T * 4 * d);
    linear(a.h2.data(), T, d, w + o.fc_w, opt(w, o.fc_b), 4 * d, a.fc.data());
    a.act.resize(T * 4 * d);
    for (std::size_t i = 0; i < a.fc.size(); ++i) a.act[i] = gelu(a.fc[i]);
    linear(a.act.data(), T, 4 * d, w + o.out_w, opt(w, o.out_b), d, tmp.data());
    for (std::size_t i = 0; i < T * d; ++i) x[i] += tmp[i];
  }

  act.x_out = std::move(x);
  act.hf.resize(T * d);
  act.meanf.resize(T);
  act.rstdf.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    layernorm_row(act.x_out.data() + t * d, d, w + L.lnf_g, opt(w, L.lnf_b), act.hf.data() + t * d, act.meanf[t],
                  act.rstdf[t]);
  }
}

double backward(const Parameters& p, const Sequence& s, const Activations& act, std::vector<double>& grad,
                double grad_scale) {
  const auto& cfg = p.config();
  const auto& L = p.layout();
  const double* w = p.values().data();
  double* g = grad.data();
  const std::size_t T = act.T;
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t V = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t hd = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // Output head, only at positions that predict a target.
  const std::size_t first = s.first_target - 1;
  const std::size_t n_pred = T - 1 - first;
  const double per_target = grad_scale / static_cast<double>(n_pred);
  std::vector<double> dlogits(n_pred * V);
  double loss = 0.0;
  for (std::size_t r = 0; r < n_pred; ++r) {
    const std::size_t pos = first + r;
    double* dl = dlogits.data() + r * V;
    head_row(p, act.hf.data() + pos * d, dl);
    const auto target = static_cast<std::size_t>(s.tokens[pos + 1]);
    loss -= log_softmax_at(dl, V, target);
    softmax_inplace(dl, V);
    dl[target] -= 1.0;
    for (std::size_t v = 0; v < V; ++v) dl[v] *= per_target;
  }
  loss /= static_cast<double>(n_pred);

  std::vector<double> dhf(T * d, 0.0);
  linear_backward(act.hf.data() + first * d, dlogits.data(), n_pred, d, V, w + L.head_w, dhf.data() + first * d,
                  g + L.head_w, opt(g, L.head_b));

  std::vector<double> dx(T * d, 0.0);
  for (std::size_t t = first; t < T; ++t) {
    layernorm_backward_row(dhf.data() + t * d, act.x_out.data() + t * d, act.meanf[t], act.rstdf[t], d,
                           w + L.lnf_g, dx.data() + t * d, g + L.lnf_g, opt(g, L.lnf_b));
  }

  std::vector<double> dact(T * 4 * d), dh(T * d), datt(T * d), dqkv(T * 3 * d);
  for (std::size_t l = L.layers.size(); l-- > 0;) {
    const auto& o = L.layers[l];
    const auto& a = act.layers[l];

    // MLP: x_out = x_mid + proj(gelu(fc(ln2(x_mid))))
    linear_backward(a.act.data(), dx.data(), T, 4 * d, d, w + o.out_w, dact.data(), g + o.out_w, opt(g, o.out_b));
    for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= gelu_grad(a.fc[i]);
    linear_backward(a.h2.data(), dact.data(), T, d, 4 * d, w + o.fc_w, dh.data(), g + o.fc_w, opt(g, o.fc_b));
    for (std::size_t t = 0; t < T; ++t) {
      layernorm_backward_row(dh.data() + t * d, a.x_mid.data() + t * d, a.mean2[t], a.rstd2[t], d, w + o.ln2_g,
                             dx.data() + t * d, g + o.ln2_g, opt(g, o.ln2_b));
    }

    // Attention: x_mid = x_in + proj(attn(ln1(x_in)))
    linear_backward(a.att.data(), dx.data(), T, d, d, w + o.proj_w, datt.data(), g + o.proj_w, opt(g, o.proj_b));
    std::fill(dqkv.begin(), dqkv.end(), 0.0);
    std::vector<double> dp(T);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        const double* pr = a.probs.data() + (h * T + i) * T;
        const double* dout = datt.data() + i * d + h * hd;
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* v = a.qkv.data() + j * 3 * d + 2 * d + h * hd;
          double* dv = dqkv.data() + j * 3 * d + 2 * d + h * hd;
          double s_dp = 0.0;
          for (std::size_t e = 0; e < hd; ++e) {
            s_dp += dout[e] * v[e];
            dv[e] += pr[j] * dout[e];
          }
          dp[j] = s_dp;
          dot += pr[j] * s_dp;
        }
        const double* q = a.qkv.data() + i * 3 * d + h * hd;
        double* dq = dqkv.data() + i * 3 * d + h * hd;
        for (std::size_t j = 0; j <= i; ++j) {
          const double ds = pr[j] * (dp[j] - dot) * scale;
          if (ds == 0.0) continue;
          const double* k = a.qkv.data() + j * 3 * d + d + h * hd;
          double* dk = dqkv.data() + j * 3 * d + d + h * hd;
          for (std::size_t e = 0; e < hd; ++e) {
            dq[e] += ds * k[e];
            dk[e] += ds * q[e];
          }
        }
      }
    }
    linear_backward(a.h1.data(), dqkv.data(), T, d, 3 * d, w + o.qkv_w, dh.data(), g + o.qkv_w, opt(g, o.qkv_b));
    for (std::size_t t = 0; t < T; ++t) {
      layernorm_backward_row(dh.data() + t * d, a.x_in.data() + t * d, a.mean1[t], a.rstd1[t], d, w + o.ln1_g,
                             dx.data() + t * d, g + o.ln1_g, opt(g, o.ln1_b));
    }
  }

  for (std::size_t t = 0; t < T; ++t) {
    double* te = g + L.wte + static_cast<std::size_t>(s.tokens[t]) * d;
    double* pe = g + L.wpe + t * d;
    for (std::size_t j = 0; j < d; ++j) {
      te[j] += dx[t * d + j];
      pe[j] += dx[t * d + j];
    }
  }
  return loss;
}

}  // namespace docslm::slm::kernels

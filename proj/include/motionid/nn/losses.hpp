#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "motionid/nn/layers.hpp"
#include "motionid/nn/tensor.hpp"

namespace motionid::nn {

struct LossConfig {
  double margin = 1.0;
  double p_norm = 2.0;
  double alpha_tm = 1.0;
  double tau = 0.1;

  void validate() const {
    if (!(margin > 0.0)) throw ShapeMismatch("triplet margin must be positive");
    if (!(p_norm >= 1.0)) throw ShapeMismatch("triplet norm order must be >= 1");
    if (!(alpha_tm >= 0.0)) throw ShapeMismatch("triplet weight must be non-negative");
    if (!(tau > 0.0)) throw ShapeMismatch("contrastive temperature must be positive");
  }
};

template <typename T>
struct LossValue {
  T loss = T(0);
  Tensor<T> grad;  // dL/d(input), same shape as the input
};

// Mean over the batch of -log softmax(logits)[target].
template <typename T>
LossValue<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || static_cast<int>(targets.size()) != logits.dim(0))
    throw ShapeMismatch("cross_entropy: one target per logit row required");
  const int b = logits.dim(0), k = logits.dim(1);
  for (int t : targets)
    if (t < 0 || t >= k) throw BadTarget("target " + std::to_string(t) + " outside " + std::to_string(k) + " classes");
  LossValue<T> out{T(0), softmax_rows(logits)};
  for (int i = 0; i < b; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * k;
    // log-sum-exp form stays finite for saturated logits
    T m = logits[o];
    for (int j = 1; j < k; ++j) m = std::max(m, logits[o + j]);
    T s = T(0);
    for (int j = 0; j < k; ++j) s += std::exp(logits[o + j] - m);
    out.loss += (m + std::log(s)) - logits[o + targets[i]];
    out.grad[o + targets[i]] -= T(1);
  }
  for (auto& g : out.grad.vec()) g /= static_cast<T>(b);
  out.loss /= static_cast<T>(b);
  return out;
}

namespace detail {
template <typename T>
T pnorm_distance(const T* a, const T* b, int d, double p) {
  if (p == 2.0) {
    T s = T(0);
    for (int j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
  }
  T s = T(0);
  for (int j = 0; j < d; ++j) s += std::pow(std::abs(a[j] - b[j]), static_cast<T>(p));
  return std::pow(s, static_cast<T>(1.0 / p));
}

// d(dist)/d(a) written into g (scaled by `scale`); d/db is the negation.
template <typename T>
void pnorm_distance_grad(const T* a, const T* b, int d, double p, T dist, T scale, T* g) {
  if (!(dist > T(0))) return;
  for (int j = 0; j < d; ++j) {
    const T x = a[j] - b[j];
    const T sgn = x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
    const T v = p == 2.0 ? x / dist
                         : sgn * std::pow(std::abs(x), static_cast<T>(p - 1)) /
                               std::pow(dist, static_cast<T>(p - 1));
    g[j] += scale * v;
  }
}
}  // namespace detail

template <typename T>
struct TripletValue {
  T loss = T(0);
  Tensor<T> grad_a, grad_p, grad_n;
};

// Batched mean of max(d(a,p) - d(a,n) + margin, 0).
template <typename T>
TripletValue<T> triplet_margin(const Tensor<T>& a, const Tensor<T>& p, const Tensor<T>& n,
                               const LossConfig& cfg) {
  if (a.rank() != 2 || !a.same_shape(p) || !a.same_shape(n))
    throw ShapeMismatch("triplet_margin: anchor, positive and negative must share shape");
  const int b = a.dim(0), d = a.dim(1);
  TripletValue<T> out{T(0), Tensor<T>(a.shape()), Tensor<T>(a.shape()), Tensor<T>(a.shape())};
  if (b == 0) return out;
  const T inv_b = T(1) / static_cast<T>(b);
  for (int i = 0; i < b; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * d;
    const T dap = detail::pnorm_distance(a.data() + o, p.data() + o, d, cfg.p_norm);
    const T dan = detail::pnorm_distance(a.data() + o, n.data() + o, d, cfg.p_norm);
    const T h = dap - dan + static_cast<T>(cfg.margin);
    if (!(h > T(0))) continue;
    out.loss += h;
    std::vector<T> gap(d, T(0)), gan(d, T(0));
    detail::pnorm_distance_grad(a.data() + o, p.data() + o, d, cfg.p_norm, dap, T(1), gap.data());
    detail::pnorm_distance_grad(a.data() + o, n.data() + o, d, cfg.p_norm, dan, T(1), gan.data());
    for (int j = 0; j < d; ++j) {
      out.grad_a[o + j] += (gap[j] - gan[j]) * inv_b;
      out.grad_p[o + j] -= gap[j] * inv_b;
      out.grad_n[o + j] += gan[j] * inv_b;
    }
  }
  out.loss *= inv_b;
  return out;
}

// For each anchor row i < half (first view), the positive is row i + half
// (its augmented twin) and the negative is the closest row of any other label.
// Returns the triplet loss and the gradient with respect to all rows; anchors
// without a negative are dropped. DegenerateBatch when none remain.
template <typename T>
LossValue<T> triplet_hardest_negative(const Tensor<T>& emb, std::span<const int> labels,
                                      const LossConfig& cfg) {
  if (emb.rank() != 2 || static_cast<int>(labels.size()) != emb.dim(0) || emb.dim(0) % 2 != 0)
    throw ShapeMismatch("triplet mining expects two views per sample");
  const int rows = emb.dim(0), d = emb.dim(1), half = rows / 2;
  std::vector<int> anchors, negatives;
  for (int i = 0; i < half; ++i) {
    int best = -1;
    T best_d = std::numeric_limits<T>::infinity();
    for (int j = 0; j < rows; ++j) {
      if (labels[j] == labels[i]) continue;
      const T dist = detail::pnorm_distance(emb.data() + static_cast<std::size_t>(i) * d,
                                            emb.data() + static_cast<std::size_t>(j) * d, d, cfg.p_norm);
      if (dist < best_d) {
        best_d = dist;
        best = j;
      }
    }
    if (best >= 0) {
      anchors.push_back(i);
      negatives.push_back(best);
    }
  }
  if (anchors.empty()) throw DegenerateBatch("no anchor has a negative of another label");
  const int m = static_cast<int>(anchors.size());
  Tensor<T> a({m, d}), p({m, d}), n({m, d});
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < d; ++j) {
      a[static_cast<std::size_t>(k) * d + j] = emb[static_cast<std::size_t>(anchors[k]) * d + j];
      p[static_cast<std::size_t>(k) * d + j] = emb[static_cast<std::size_t>(anchors[k] + half) * d + j];
      n[static_cast<std::size_t>(k) * d + j] = emb[static_cast<std::size_t>(negatives[k]) * d + j];
    }
  const auto tv = triplet_margin(a, p, n, cfg);
  LossValue<T> out{tv.loss, Tensor<T>(emb.shape())};
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < d; ++j) {
      const std::size_t s = static_cast<std::size_t>(k) * d + j;
      out.grad[static_cast<std::size_t>(anchors[k]) * d + j] += tv.grad_a[s];
      out.grad[static_cast<std::size_t>(anchors[k] + half) * d + j] += tv.grad_p[s];
      out.grad[static_cast<std::size_t>(negatives[k]) * d + j] += tv.grad_n[s];
    }
  return out;
}

// L = sum_i -1/|P(i)| sum_{p in P(i)} log[exp(z_i.z_p/tau) / sum_{a != i} exp(z_i.z_a/tau)]
template <typename T>
LossValue<T> supervised_contrastive(const Tensor<T>& z, std::span<const int> labels, double tau) {
  if (z.rank() != 2 || static_cast<int>(labels.size()) != z.dim(0))
    throw ShapeMismatch("supervised_contrastive: one label per embedding row required");
  if (!(tau > 0.0)) throw ShapeMismatch("contrastive temperature must be positive");
  const int n = z.dim(0), d = z.dim(1);
  std::vector<int> positives(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) ++positives[i];
  for (int i = 0; i < n; ++i)
    if (positives[i] == 0) throw DegenerateBatch("sample " + std::to_string(i) + " has no positive");

  const T inv_tau = static_cast<T>(1.0 / tau);
  std::vector<T> s(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      s[static_cast<std::size_t>(i) * n + j] =
          kernels::dot(z.data() + static_cast<std::size_t>(i) * d,
                       z.data() + static_cast<std::size_t>(j) * d, d) * inv_tau;

  LossValue<T> out{T(0), Tensor<T>(z.shape())};
  std::vector<T> q(n);
  for (int i = 0; i < n; ++i) {
    const T* si = s.data() + static_cast<std::size_t>(i) * n;
    T m = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) m = std::max(m, si[j]);
    T denom = T(0);
    for (int j = 0; j < n; ++j)
      if (j != i) denom += std::exp(si[j] - m);
    const T log_denom = m + std::log(denom);
    const T inv_p = T(1) / static_cast<T>(positives[i]);
    for (int j = 0; j < n; ++j) {
      if (j == i) {
        q[j] = T(0);
        continue;
      }
      const bool pos = labels[j] == labels[i];
      if (pos) out.loss -= inv_p * (si[j] - log_denom);
      q[j] = std::exp(si[j] - log_denom) - (pos ? inv_p : T(0));  // dL_i / ds_ij
    }
    for (int j = 0; j < n; ++j) {
      if (q[j] == T(0)) continue;
      const T c = q[j] * inv_tau;
      for (int k = 0; k < d; ++k) {
        out.grad[static_cast<std::size_t>(i) * d + k] += c * z[static_cast<std::size_t>(j) * d + k];
        out.grad[static_cast<std::size_t>(j) * d + k] += c * z[static_cast<std::size_t>(i) * d + k];
      }
    }
  }
  return out;
}

inline double total_loss(double ce, double tm, double sc, const LossConfig& cfg) {
  return ce + cfg.alpha_tm * tm + sc;
}

}  // namespace motionid::nn

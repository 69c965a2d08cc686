#pragma once

// Central finite-difference checks of every hand-written backward pass, in
// double. Each check draws `shapes` random configurations and reports the
// worst relative error of the full gradient over those shapes. Coordinates whose
// +/- eps perturbation flips a relu or hinge are skipped and counted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "motionid/nn/layers.hpp"
#include "motionid/nn/losses.hpp"
#include "motionid/nn/models.hpp"
#include "support.hpp"

namespace testing {

namespace mnn = motionid::nn;
using TD = mnn::Tensor<double>;
using Signature = std::vector<char>;

// Relative error of one shape: max |analytic - numeric| over every checked
// coordinate of its gradient, divided by the largest magnitude of either.
struct GradReport {
  std::string name;
  int shapes = 0;
  double worst = 0.0;
  long checked = 0;
  long skipped = 0;
  double diff = 0.0, scale = 0.0;  // running, current shape

  void end_shape() {
    worst = std::max(worst, diff / std::max(scale, 1e-6));
    diff = scale = 0.0;
    ++shapes;
  }
};

inline constexpr double kFdEps = 1e-3;
inline constexpr double kFdTol = 1e-4;

// f(sig) evaluates the loss at the current values and, when sig is non-null,
// records the activation pattern.
using LossFn = std::function<double(Signature*)>;

inline void fd_compare(GradReport& r, std::vector<double>& values, const std::vector<double>& analytic,
                       const LossFn& f, const std::vector<std::size_t>& coords) {
  Signature base, up_sig, down_sig;
  f(&base);
  for (std::size_t i : coords) {
    const double keep = values[i];
    up_sig.clear();
    down_sig.clear();
    values[i] = keep + kFdEps;
    const double up = f(&up_sig);
    values[i] = keep - kFdEps;
    const double down = f(&down_sig);
    values[i] = keep;
    if (up_sig != base || down_sig != base) {
      ++r.skipped;
      continue;
    }
    ++r.checked;
    const double numeric = (up - down) / (2 * kFdEps);
    r.diff = std::max(r.diff, std::abs(analytic[i] - numeric));
    r.scale = std::max({r.scale, std::abs(analytic[i]), std::abs(numeric)});
  }
}

inline std::vector<std::size_t> all_coords(std::size_t n) {
  std::vector<std::size_t> c(n);
  std::iota(c.begin(), c.end(), std::size_t{0});
  return c;
}

// At most `k` coordinates of n, drawn without replacement.
inline std::vector<std::size_t> some_coords(Gen& g, std::size_t n, std::size_t k) {
  auto c = all_coords(n);
  if (n <= k) return c;
  std::shuffle(c.begin(), c.end(), g);
  c.resize(k);
  std::sort(c.begin(), c.end());
  return c;
}

inline void fd_compare(GradReport& r, std::vector<double>& values, const std::vector<double>& analytic,
                       const LossFn& f) {
  fd_compare(r, values, analytic, f, all_coords(values.size()));
}

inline double weighted_sum(const TD& y, const TD& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += c[i] * y[i] + 0.5 * y[i] * y[i];
  return s;
}
// d(weighted_sum)/dy
inline TD weighted_sum_grad(const TD& y, const TD& c) {
  TD g(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) g[i] = c[i] + y[i];
  return g;
}

inline void sign_of(const TD& x, Signature* sig) {
  if (!sig) return;
  for (double v : x.vec()) sig->push_back(v > 0.0);
}

inline GradReport check_conv1d(std::uint64_t seed, int shapes) {
  GradReport r{"conv1d"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int b = uni_int(g, 1, 3), cin = uni_int(g, 1, 4), cout = uni_int(g, 1, 4), k = uni_int(g, 1, 5);
    const int len = uni_int(g, k, k + 6);
    mnn::Conv1d<double> conv("c", cin, cout, k);
    conv.weight.value = random_tensor<double>(g, {cout, cin, k});
    conv.bias.value = random_tensor<double>(g, {cout});
    TD x = random_tensor<double>(g, {b, cin, len});
    const TD c = random_tensor<double>(g, {b, cout, len - k + 1});
    const TD gx = conv.backward(x, weighted_sum_grad(conv.forward(x), c), true);
    const LossFn f = [&](Signature*) { return weighted_sum(conv.forward(x), c); };
    fd_compare(r, x.vec(), gx.vec(), f);
    fd_compare(r, conv.weight.value.vec(), conv.weight.grad.vec(), f);
    fd_compare(r, conv.bias.value.vec(), conv.bias.grad.vec(), f);
  }
  return r;
}

inline GradReport check_linear(std::uint64_t seed, int shapes) {
  GradReport r{"linear"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int b = uni_int(g, 1, 4), in = uni_int(g, 1, 12), out = uni_int(g, 1, 6);
    mnn::Linear<double> fc("fc", in, out);
    fc.weight.value = random_tensor<double>(g, {out, in});
    fc.bias.value = random_tensor<double>(g, {out});
    TD x = random_tensor<double>(g, {b, in});
    const TD c = random_tensor<double>(g, {b, out});
    const TD gx = fc.backward(x, weighted_sum_grad(fc.forward(x), c), true);
    const LossFn f = [&](Signature*) { return weighted_sum(fc.forward(x), c); };
    fd_compare(r, x.vec(), gx.vec(), f);
    fd_compare(r, fc.weight.value.vec(), fc.weight.grad.vec(), f);
    fd_compare(r, fc.bias.value.vec(), fc.bias.grad.vec(), f);
  }
  return r;
}

inline GradReport check_relu(std::uint64_t seed, int shapes) {
  GradReport r{"relu"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int b = uni_int(g, 1, 3), ch = uni_int(g, 1, 4), len = uni_int(g, 1, 8);
    TD x = random_tensor<double>(g, {b, ch, len});
    const TD c = random_tensor<double>(g, x.shape());
    const TD gx = mnn::relu_backward(x, weighted_sum_grad(mnn::relu(x), c));
    const LossFn f = [&](Signature* sig) {
      sign_of(x, sig);
      return weighted_sum(mnn::relu(x), c);
    };
    fd_compare(r, x.vec(), gx.vec(), f);
  }
  return r;
}

inline GradReport check_global_avg_pool(std::uint64_t seed, int shapes) {
  GradReport r{"global_avg_pool"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int b = uni_int(g, 1, 3), ch = uni_int(g, 1, 5), len = uni_int(g, 1, 9);
    TD x = random_tensor<double>(g, {b, ch, len});
    const TD c = random_tensor<double>(g, {b, ch});
    const TD gx = mnn::global_avg_pool_backward(weighted_sum_grad(mnn::global_avg_pool(x), c), len);
    const LossFn f = [&](Signature*) { return weighted_sum(mnn::global_avg_pool(x), c); };
    fd_compare(r, x.vec(), gx.vec(), f);
  }
  return r;
}

inline GradReport check_l2_normalize(std::uint64_t seed, int shapes) {
  GradReport r{"l2_normalize"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int b = uni_int(g, 1, 4), d = uni_int(g, 2, 8);
    TD x = random_tensor<double>(g, {b, d});
    const TD c = random_tensor<double>(g, {b, d});
    const TD y = mnn::l2_normalize(x);
    const TD gx = mnn::l2_normalize_backward(x, y, weighted_sum_grad(y, c));
    const LossFn f = [&](Signature*) { return weighted_sum(mnn::l2_normalize(x), c); };
    fd_compare(r, x.vec(), gx.vec(), f);
  }
  return r;
}

inline std::vector<int> random_labels(Gen& g, int n, int classes) {
  std::vector<int> t(n);
  for (auto& v : t) v = uni_int(g, 0, classes - 1);
  return t;
}

inline GradReport check_cross_entropy(std::uint64_t seed, int shapes) {
  GradReport r{"cross_entropy"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int b = uni_int(g, 1, 6), k = uni_int(g, 2, 7);
    TD x = random_tensor<double>(g, {b, k}, -3.0, 3.0);
    const auto t = random_labels(g, b, k);
    const auto lv = mnn::cross_entropy(x, std::span<const int>(t));
    const LossFn f = [&](Signature*) { return mnn::cross_entropy(x, std::span<const int>(t)).loss; };
    fd_compare(r, x.vec(), lv.grad.vec(), f);
  }
  return r;
}

inline void hinge_signs(const TD& a, const TD& p, const TD& n, const mnn::LossConfig& cfg, Signature* sig) {
  if (!sig) return;
  const int b = a.dim(0), d = a.dim(1);
  for (int i = 0; i < b; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * d;
    const double h = mnn::detail::pnorm_distance(a.data() + o, p.data() + o, d, cfg.p_norm) -
                     mnn::detail::pnorm_distance(a.data() + o, n.data() + o, d, cfg.p_norm) + cfg.margin;
    sig->push_back(h > 0.0);
  }
}

// Smallest Euclidean distance between any two rows of the given matrices.
// The p-norm distance is not smooth at zero, so fixtures keep rows apart.
inline double min_row_distance(std::initializer_list<const TD*> ms) {
  std::vector<const double*> rows;
  const int d = (*ms.begin())->dim(1);
  for (const TD* m : ms)
    for (int i = 0; i < m->dim(0); ++i) rows.push_back(m->data() + static_cast<std::size_t>(i) * d);
  double best = 1e300;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      best = std::min(best, mnn::detail::pnorm_distance(rows[i], rows[j], d, 2.0));
  return best;
}

inline double min_pair_distance(const TD& a, const TD& b) {
  const int d = a.dim(1);
  double best = 1e300;
  for (int i = 0; i < a.dim(0); ++i)
    best = std::min(best, mnn::detail::pnorm_distance(a.data() + static_cast<std::size_t>(i) * d,
                                                      b.data() + static_cast<std::size_t>(i) * d, d, 2.0));
  return best;
}

inline GradReport check_triplet(std::uint64_t seed, int shapes) {
  GradReport r{"triplet_margin"};
  Gen g(seed);
  const double norms[] = {2.0, 3.0, 4.0};
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int b = uni_int(g, 1, 5), d = uni_int(g, 1, 6);
    mnn::LossConfig cfg;
    cfg.p_norm = norms[s % 3];
    cfg.margin = uni(g, 0.2, 1.5);
    TD a, p, n;
    do {
      a = random_tensor<double>(g, {b, d});
      p = random_tensor<double>(g, {b, d});
      n = random_tensor<double>(g, {b, d});
    } while (std::min(min_pair_distance(a, p), min_pair_distance(a, n)) < 0.25);
    const auto tv = mnn::triplet_margin(a, p, n, cfg);
    const LossFn f = [&](Signature* sig) {
      hinge_signs(a, p, n, cfg, sig);
      return mnn::triplet_margin(a, p, n, cfg).loss;
    };
    fd_compare(r, a.vec(), tv.grad_a.vec(), f);
    fd_compare(r, p.vec(), tv.grad_p.vec(), f);
    fd_compare(r, n.vec(), tv.grad_n.vec(), f);
  }
  return r;
}

// Two-view labels: rows i and i + half share a label.
inline std::vector<int> twin_labels(Gen& g, int half, int classes) {
  auto t = random_labels(g, half, classes);
  t.insert(t.end(), t.begin(), t.end());
  return t;
}

// Mined negatives and hinge activity, recomputed independently.
inline void mining_signature(const TD& e, const std::vector<int>& y, const mnn::LossConfig& cfg, Signature* sig) {
  if (!sig) return;
  const int rows = e.dim(0), d = e.dim(1), half = rows / 2;
  auto dist = [&](int i, int j) {
    return mnn::detail::pnorm_distance(e.data() + static_cast<std::size_t>(i) * d,
                                       e.data() + static_cast<std::size_t>(j) * d, d, cfg.p_norm);
  };
  for (int i = 0; i < half; ++i) {
    int best = -1;
    for (int j = 0; j < rows; ++j)
      if (y[j] != y[i] && (best < 0 || dist(i, j) < dist(i, best))) best = j;
    sig->push_back(static_cast<char>(best + 1));
    if (best >= 0) sig->push_back(dist(i, i + half) - dist(i, best) + cfg.margin > 0.0);
  }
}

inline GradReport check_triplet_mined(std::uint64_t seed, int shapes) {
  GradReport r{"triplet_hardest_negative"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int half = uni_int(g, 2, 5), d = uni_int(g, 2, 5);
    auto y = twin_labels(g, half, 3);
    y[0] = 0;
    y[1] = 1;
    y[half] = 0;
    y[half + 1] = 1;
    mnn::LossConfig cfg;
    cfg.margin = 2.0;
    TD e;
    do {
      e = random_tensor<double>(g, {2 * half, d});
    } while (min_row_distance({&e}) < 0.25);
    const auto lv = mnn::triplet_hardest_negative(e, std::span<const int>(y), cfg);
    const LossFn f = [&](Signature* sig) {
      mining_signature(e, y, cfg, sig);
      return mnn::triplet_hardest_negative(e, std::span<const int>(y), cfg).loss;
    };
    fd_compare(r, e.vec(), lv.grad.vec(), f);
  }
  return r;
}

inline double min_row_norm(const TD& x) {
  const int d = x.dim(1);
  double best = 1e300;
  for (int i = 0; i < x.dim(0); ++i) {
    const double* row = x.data() + static_cast<std::size_t>(i) * d;
    best = std::min(best, std::sqrt(std::inner_product(row, row + d, row, 0.0)));
  }
  return best;
}

inline GradReport check_supcon(std::uint64_t seed, int shapes) {
  GradReport r{"supervised_contrastive"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int half = uni_int(g, 1, 5), d = uni_int(g, 2, 6);
    const auto y = twin_labels(g, half, 3);
    const double tau = uni(g, 0.2, 1.0);
    // unit rows, as produced by the projection head, then composed through
    // the normaliser to exercise both
    TD x;
    do {
      x = random_tensor<double>(g, {2 * half, d});
    } while (min_row_norm(x) < 0.5);
    const TD z = mnn::l2_normalize(x);
    const auto lv = mnn::supervised_contrastive(z, std::span<const int>(y), tau);
    const TD gx = mnn::l2_normalize_backward(x, z, lv.grad);
    const LossFn f = [&](Signature*) {
      return mnn::supervised_contrastive(mnn::l2_normalize(x), std::span<const int>(y), tau).loss;
    };
    fd_compare(r, x.vec(), gx.vec(), f);
    // raw embeddings
    TD w = random_tensor<double>(g, {2 * half, d}, -0.5, 0.5);
    const auto lw = mnn::supervised_contrastive(w, std::span<const int>(y), tau);
    const LossFn fw = [&](Signature*) { return mnn::supervised_contrastive(w, std::span<const int>(y), tau).loss; };
    fd_compare(r, w.vec(), lw.grad.vec(), fw);
  }
  return r;
}

inline GradReport check_conv_stack(std::uint64_t seed, int shapes) {
  GradReport r{"conv_stack"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const int layers = uni_int(g, 1, 3), cin = uni_int(g, 1, 3), b = uni_int(g, 1, 3);
    std::vector<int> ch, ks;
    for (int i = 0; i < layers; ++i) {
      ch.push_back(uni_int(g, 1, 4));
      ks.push_back(uni_int(g, 1, 3));
    }
    mnn::ConvStack<double> stack("s", cin, ch, ks);
    motionid::Rng rng(seed + s);
    stack.init(rng);
    stack.visit([&](mnn::Param<double>& p) {
      if (p.name.ends_with(".bias")) p.value = random_tensor<double>(g, p.value.shape(), -0.2, 0.2);
    });
    const int len = stack.min_length() + uni_int(g, 0, 4);
    TD x = random_tensor<double>(g, {b, cin, len});
    const TD c = random_tensor<double>(g, {b, ch.back()});
    typename mnn::ConvStack<double>::Trace tr;
    const TD y = stack.forward(x, &tr);
    const TD gx = stack.backward(tr, weighted_sum_grad(y, c), true);
    const LossFn f = [&](Signature* sig) {
      typename mnn::ConvStack<double>::Trace t2;
      const double l = weighted_sum(stack.forward(x, &t2), c);
      if (sig)
        for (const auto& p : t2.pre) sign_of(p, sig);
      return l;
    };
    fd_compare(r, x.vec(), gx.vec(), f);
    stack.visit([&](mnn::Param<double>& p) { fd_compare(r, p.value.vec(), p.grad.vec(), f); });
  }
  return r;
}

// Tiny-width 22-branch model under the full training objective.
inline mnn::VerificationModelConfig tiny_verification_config(Gen& g) {
  mnn::VerificationModelConfig cfg;
  cfg.channels = {uni_int(g, 1, 2), uni_int(g, 1, 3)};
  cfg.kernels = {uni_int(g, 1, 3), uni_int(g, 1, 2)};
  cfg.embedding_dim = uni_int(g, 2, 4);
  cfg.proj_hidden = uni_int(g, 2, 4);
  cfg.proj_dim = uni_int(g, 2, 3);
  cfg.classes = uni_int(g, 2, 3);
  return cfg;
}

inline GradReport check_verification_model(std::uint64_t seed, int shapes) {
  GradReport r{"verification_model"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    const auto cfg = tiny_verification_config(g);
    using Model = mnn::BasicVerificationModel<double>;
    Model model;
    TD x;
    const int half = 2, len = cfg.min_length() + uni_int(g, 0, 3);
    // Redraw until the fixture is smooth at the eps scale: tiny heads with
    // zero biases give dead units and near-zero projections (where the
    // normaliser blows up), and close embeddings sit near the distance kink.
    for (int attempt = 0;; ++attempt) {
      model = Model(cfg, seed + s + 1000 * attempt);
      model.visit([&](mnn::Param<double>& p) {
        if (p.name.ends_with(".bias")) p.value = random_tensor<double>(g, p.value.shape(), 0.1, 0.5);
      });
      x = random_tensor<double>(g, {2 * half, cfg.input_rows(), len}, -2.0, 2.0);
      model.fit_input_normalization(x);
      Model::Trace t0;
      const auto o = model.forward(x, t0);
      if ((min_row_norm(t0.proj_raw) >= 2.0 && min_row_distance({&o.embedding}) >= 1.0) || attempt == 200) break;
    }
    std::vector<int> y{0, 1, 0, 1};
    mnn::LossConfig lc;
    lc.margin = 3.0;
    lc.alpha_tm = uni(g, 0.5, 1.5);
    lc.tau = 1.0;

    auto objective = [&](const Model::Output& o, Model::OutputGrad* grad) {
      const auto ce = mnn::cross_entropy(o.logits, std::span<const int>(y));
      const auto tm = mnn::triplet_hardest_negative(o.embedding, std::span<const int>(y), lc);
      const auto sc = mnn::supervised_contrastive(o.projection, std::span<const int>(y), lc.tau);
      if (grad) {
        grad->logits = ce.grad;
        grad->embedding = tm.grad;
        for (auto& v : grad->embedding.vec()) v *= lc.alpha_tm;
        grad->projection = sc.grad;
      }
      return mnn::total_loss(ce.loss, tm.loss, sc.loss, lc);
    };
    Model::Trace tr;
    Model::OutputGrad og;
    objective(model.forward(x, tr), &og);
    model.zero_grad();
    model.backward(tr, og);
    const LossFn f = [&](Signature* sig) {
      Model::Trace t2;
      const auto o = model.forward(x, t2);
      if (sig) {
        for (const auto& br : t2.branches)
          for (const auto& p : br.pre) sign_of(p, sig);
        sign_of(t2.hidden_pre, sig);
        mining_signature(o.embedding, y, lc, sig);
      }
      return objective(o, nullptr);
    };
    model.visit([&](mnn::Param<double>& p) {
      if (!p.trainable) return;
      fd_compare(r, p.value.vec(), p.grad.vec(), f);
    });
  }
  return r;
}

inline GradReport check_pattern_model(std::uint64_t seed, int shapes) {
  GradReport r{"pattern_model"};
  Gen g(seed);
  for (int s = 0; s < shapes; ++s, r.end_shape()) {
    mnn::PatternModelConfig cfg;
    cfg.in_channels = uni_int(g, 1, 6);
    cfg.channels = {uni_int(g, 1, 4), uni_int(g, 1, 4)};
    mnn::BasicPatternModel<double> model(cfg, seed + s);
    model.visit([&](mnn::Param<double>& p) {
      if (p.name.ends_with(".bias")) p.value = random_tensor<double>(g, p.value.shape(), 0.1, 0.5);
    });
    const int b = uni_int(g, 1, 4), len = uni_int(g, 1, 6);
    TD x = random_tensor<double>(g, {b, cfg.in_channels, len});
    model.fit_input_normalization(x);
    const auto y = random_labels(g, b, 2);
    using Model = mnn::BasicPatternModel<double>;
    Model::Trace tr;
    const auto lv = mnn::cross_entropy(model.forward(x, tr), std::span<const int>(y));
    model.zero_grad();
    model.backward(tr, lv.grad);
    const LossFn f = [&](Signature* sig) {
      Model::Trace t2;
      const double l = mnn::cross_entropy(model.forward(x, t2), std::span<const int>(y)).loss;
      if (sig)
        for (const auto& p : t2.stack.pre) sign_of(p, sig);
      return l;
    };
    model.visit([&](mnn::Param<double>& p) {
      if (p.trainable) fd_compare(r, p.value.vec(), p.grad.vec(), f);
    });
  }
  return r;
}

inline std::vector<GradReport> run_all_gradchecks(std::uint64_t seed, int shapes) {
  return {check_conv1d(seed + 1, shapes),          check_linear(seed + 2, shapes),
          check_relu(seed + 3, shapes),            check_global_avg_pool(seed + 4, shapes),
          check_l2_normalize(seed + 5, shapes),    check_cross_entropy(seed + 6, shapes),
          check_triplet(seed + 7, shapes),         check_triplet_mined(seed + 8, shapes),
          check_supcon(seed + 9, shapes),          check_conv_stack(seed + 10, shapes),
          check_pattern_model(seed + 11, shapes),  check_verification_model(seed + 12, shapes)};
}

}  // namespace testing

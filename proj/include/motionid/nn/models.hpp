#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motionid/nn/layers.hpp"
#include "motionid/nn/tensor.hpp"
#include "motionid/rng.hpp"

namespace motionid::nn {

inline constexpr int kBranchCount = 22;

struct VerificationModelConfig {
  int branches = kBranchCount;
  int branch_rows = 3;
  std::vector<int> channels{16, 32, 32};
  std::vector<int> kernels{5, 5, 3};
  int embedding_dim = 64;
  int proj_hidden = 64;
  int proj_dim = 32;
  int classes = 2;

  int input_rows() const { return branches * branch_rows; }
  int branch_dim() const { return channels.back(); }
  int trunk_dim() const { return branches * branch_dim(); }
  int min_length() const;
  // Trainable scalars, closed form.
  long parameter_count() const;
  void validate() const;
  std::string to_json() const;
  static VerificationModelConfig from_json(const std::string& text);
  friend bool operator==(const VerificationModelConfig&, const VerificationModelConfig&) = default;
};

struct PatternModelConfig {
  int in_channels = 19;
  std::vector<int> channels{32, 32};
  int classes = 2;

  long parameter_count() const;
  void validate() const;
  std::string to_json() const;
  static PatternModelConfig from_json(const std::string& text);
  friend bool operator==(const PatternModelConfig&, const PatternModelConfig&) = default;
};

// Per-row input standardisation held as non-trainable buffers.
template <typename T>
struct InputNorm {
  Param<T> mean;
  Param<T> stddev;

  InputNorm() = default;
  explicit InputNorm(int rows) : mean("input.mean", {rows}), stddev("input.std", {rows}) {
    mean.trainable = stddev.trainable = false;
    stddev.value.fill(T(1));
  }

  void fit(const Tensor<T>& x) {
    const int b = x.dim(0), r = x.dim(1), l = x.dim(2);
    if (r != mean.value.dim(0)) throw ShapeMismatch("normalisation row count mismatch");
    for (int k = 0; k < r; ++k) {
      double s = 0.0, ss = 0.0;
      for (int i = 0; i < b; ++i)
        for (int t = 0; t < l; ++t) {
          const double v = x[(static_cast<std::size_t>(i) * r + k) * l + t];
          s += v;
          ss += v * v;
        }
      const double n = static_cast<double>(b) * l;
      const double m = n > 0 ? s / n : 0.0;
      const double var = n > 0 ? std::max(ss / n - m * m, 0.0) : 0.0;
      const double sd = std::sqrt(var);
      mean.value[k] = static_cast<T>(m);
      stddev.value[k] = static_cast<T>(sd > 1e-6 ? sd : 1.0);
    }
  }

  Tensor<T> apply(const Tensor<T>& x) const {
    const int b = x.dim(0), r = x.dim(1), l = x.dim(2);
    if (r != mean.value.dim(0)) throw ShapeMismatch("input has " + std::to_string(r) + " rows, model expects " + std::to_string(mean.value.dim(0)));
    Tensor<T> y(x.shape());
    for (int i = 0; i < b; ++i)
      for (int k = 0; k < r; ++k) {
        const std::size_t o = (static_cast<std::size_t>(i) * r + k) * l;
        const T m = mean.value[k], s = stddev.value[k];
        for (int t = 0; t < l; ++t) y[o + t] = (x[o + t] - m) / s;
      }
    return y;
  }
};

// 22 convolutional branches over 3-row slices, concatenated into a trunk that
// feeds a classifier head, a siamese embedding head and, after the siamese
// head, an MLP projection to a unit-norm contrastive embedding.
template <typename T>
class BasicVerificationModel {
 public:
  struct Output {
    Tensor<T> logits;      // B x classes
    Tensor<T> embedding;   // B x E
    Tensor<T> projection;  // B x proj_dim, unit rows
  };
  struct Trace {
    Tensor<T> input;  // normalised
    std::vector<typename ConvStack<T>::Trace> branches;
    Tensor<T> trunk, hidden_pre, hidden, proj_raw;
    Output out;
  };
  // Output gradients; an empty tensor contributes nothing.
  struct OutputGrad {
    Tensor<T> logits, embedding, projection;
  };

  BasicVerificationModel() = default;
  BasicVerificationModel(VerificationModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    norm_ = InputNorm<T>(cfg_.input_rows());
    for (int f = 0; f < cfg_.branches; ++f)
      branches_.emplace_back("branch" + std::to_string(f), cfg_.branch_rows, cfg_.channels, cfg_.kernels);
    classifier_ = Linear<T>("classifier", cfg_.trunk_dim(), cfg_.classes);
    siamese_ = Linear<T>("siamese", cfg_.trunk_dim(), cfg_.embedding_dim);
    proj1_ = Linear<T>("proj.fc0", cfg_.embedding_dim, cfg_.proj_hidden);
    proj2_ = Linear<T>("proj.fc1", cfg_.proj_hidden, cfg_.proj_dim);
    Rng rng = make_rng(seed, 0x6d6f64656cULL);
    for (auto& b : branches_) b.init(rng);
    classifier_.init(rng);
    siamese_.init(rng);
    proj1_.init(rng);
    proj2_.init(rng);
  }

  const VerificationModelConfig& config() const { return cfg_; }
  InputNorm<T>& input_norm() { return norm_; }
  const InputNorm<T>& input_norm() const { return norm_; }
  void fit_input_normalization(const Tensor<T>& x) { norm_.fit(x); }

  Output forward(const Tensor<T>& x) const { return run(x, nullptr); }
  Output forward(const Tensor<T>& x, Trace& trace) const { return run(x, &trace); }

  void backward(const Trace& tr, const OutputGrad& g) {
    const bool extractor = extractor_trainable();
    Tensor<T> g_trunk;
    auto add = [](Tensor<T>& acc, Tensor<T> v) {
      if (acc.empty()) {
        acc = std::move(v);
      } else {
        for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += v[i];
      }
    };
    if (!g.logits.empty()) add(g_trunk, classifier_.backward(tr.trunk, g.logits, extractor));
    Tensor<T> g_emb = g.embedding;
    if (!g.projection.empty()) {
      Tensor<T> gr = l2_normalize_backward(tr.proj_raw, tr.out.projection, g.projection);
      Tensor<T> gh = proj2_.backward(tr.hidden, gr, true);
      gh = relu_backward(tr.hidden_pre, std::move(gh));
      add(g_emb, proj1_.backward(tr.out.embedding, gh, true));
    }
    if (!g_emb.empty()) add(g_trunk, siamese_.backward(tr.trunk, g_emb, extractor));
    if (!extractor || g_trunk.empty()) return;

    const int b = tr.trunk.dim(0), bd = cfg_.branch_dim(), td = cfg_.trunk_dim();
#pragma omp parallel for schedule(static)
    for (int f = 0; f < cfg_.branches; ++f) {
      Tensor<T> gb({b, bd});
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < bd; ++j)
          gb[static_cast<std::size_t>(i) * bd + j] = g_trunk[static_cast<std::size_t>(i) * td + f * bd + j];
      branches_[f].backward(tr.branches[f], gb, false);
    }
  }

  // Softmax probability of class `cls` per row.
  std::vector<T> scores(const Tensor<T>& x, int cls) const {
    const auto p = softmax_rows(forward(x).logits);
    std::vector<T> s(static_cast<std::size_t>(p.dim(0)));
    for (int i = 0; i < p.dim(0); ++i) s[i] = p[static_cast<std::size_t>(i) * cfg_.classes + cls];
    return s;
  }

  void replace_classifier(int classes, std::uint64_t seed) {
    if (classes < 2) throw ShapeMismatch("classifier needs at least 2 classes");
    cfg_.classes = classes;
    classifier_ = Linear<T>("classifier", cfg_.trunk_dim(), classes);
    Rng rng = make_rng(seed, 0x68656164ULL);
    classifier_.init(rng);
  }

  // Freezes or unfreezes the branch extractors (the common feature extractor).
  void set_extractor_trainable(bool on) {
    for (auto& br : branches_) br.visit([&](Param<T>& p) { p.trainable = on; });
  }
  bool extractor_trainable() const { return branches_.front().layers.front().weight.trainable; }
  void set_embedding_heads_trainable(bool on) {
    for (auto* l : {&siamese_, &proj1_, &proj2_}) l->visit([&](Param<T>& p) { p.trainable = on; });
  }

  template <typename F>
  void visit(F&& f) {
    f(norm_.mean);
    f(norm_.stddev);
    for (auto& br : branches_) br.visit(f);
    classifier_.visit(f);
    siamese_.visit(f);
    proj1_.visit(f);
    proj2_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    f(norm_.mean);
    f(norm_.stddev);
    for (const auto& br : branches_) br.visit(f);
    classifier_.visit(f);
    siamese_.visit(f);
    proj1_.visit(f);
    proj2_.visit(f);
  }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    visit([&](Param<T>& p) { out.push_back(&p); });
    return out;
  }
  void zero_grad() {
    visit([](Param<T>& p) { p.zero_grad(); });
  }
  long trainable_count() const {
    long n = 0;
    visit([&](const Param<T>& p) {
      if (p.name.rfind("input.", 0) != 0) n += static_cast<long>(p.value.numel());
    });
    return n;
  }

 private:
  Output run(const Tensor<T>& x, Trace* tr) const {
    if (x.rank() != 3 || x.dim(1) != cfg_.input_rows())
      throw ShapeMismatch("verification input must be B x " + std::to_string(cfg_.input_rows()) + " x L");
    if (x.dim(2) < cfg_.min_length())
      throw ShapeMismatch("verification input shorter than " + std::to_string(cfg_.min_length()) + " steps");
    const int b = x.dim(0), l = x.dim(2), rows = cfg_.branch_rows, bd = cfg_.branch_dim(),
              td = cfg_.trunk_dim();
    Tensor<T> xn = norm_.apply(x);
    Tensor<T> trunk({b, td});
    if (tr) tr->branches.assign(cfg_.branches, {});
#pragma omp parallel for schedule(static)
    for (int f = 0; f < cfg_.branches; ++f) {
      Tensor<T> slice({b, rows, l});
      for (int i = 0; i < b; ++i)
        for (int r = 0; r < rows; ++r) {
          const T* src = xn.data() + (static_cast<std::size_t>(i) * cfg_.input_rows() + f * rows + r) * l;
          std::copy(src, src + l, slice.data() + (static_cast<std::size_t>(i) * rows + r) * l);
        }
      const Tensor<T> e = branches_[f].forward(slice, tr ? &tr->branches[f] : nullptr);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < bd; ++j)
          trunk[static_cast<std::size_t>(i) * td + f * bd + j] = e[static_cast<std::size_t>(i) * bd + j];
    }
    Output out;
    out.logits = classifier_.forward(trunk);
    out.embedding = siamese_.forward(trunk);
    Tensor<T> hidden_pre = proj1_.forward(out.embedding);
    Tensor<T> hidden = relu(hidden_pre);
    Tensor<T> proj_raw = proj2_.forward(hidden);
    out.projection = l2_normalize(proj_raw);
    if (tr) {
      tr->input = std::move(xn);
      tr->trunk = std::move(trunk);
      tr->hidden_pre = std::move(hidden_pre);
      tr->hidden = std::move(hidden);
      tr->proj_raw = std::move(proj_raw);
      tr->out = out;
    }
    return out;
  }

  VerificationModelConfig cfg_;
  InputNorm<T> norm_;
  std::vector<ConvStack<T>> branches_;
  Linear<T> classifier_, siamese_, proj1_, proj2_;
};

// Pointwise convolutions over the raw sensor channels, global average pool,
// 2-class output.
template <typename T>
class BasicPatternModel {
 public:
  struct Trace {
    typename ConvStack<T>::Trace stack;
    Tensor<T> pooled;
    Tensor<T> logits;
  };

  BasicPatternModel() = default;
  BasicPatternModel(PatternModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    norm_ = InputNorm<T>(cfg_.in_channels);
    stack_ = ConvStack<T>("pattern", cfg_.in_channels, cfg_.channels,
                          std::vector<int>(cfg_.channels.size(), 1));
    head_ = Linear<T>("pattern.head", cfg_.channels.back(), cfg_.classes);
    Rng rng = make_rng(seed, 0x7061747465726eULL);
    stack_.init(rng);
    head_.init(rng);
  }

  const PatternModelConfig& config() const { return cfg_; }
  void fit_input_normalization(const Tensor<T>& x) { norm_.fit(x); }

  Tensor<T> forward(const Tensor<T>& x) const { return run(x, nullptr); }
  Tensor<T> forward(const Tensor<T>& x, Trace& tr) const { return run(x, &tr); }

  void backward(const Trace& tr, const Tensor<T>& g_logits) {
    const Tensor<T> g = head_.backward(tr.pooled, g_logits, true);
    stack_.backward(tr.stack, g, false);
  }

  // Probability of the positive (unlock) class, index 1.
  std::vector<T> scores(const Tensor<T>& x) const {
    const auto p = softmax_rows(forward(x));
    std::vector<T> s(static_cast<std::size_t>(p.dim(0)));
    for (int i = 0; i < p.dim(0); ++i) s[i] = p[static_cast<std::size_t>(i) * cfg_.classes + 1];
    return s;
  }

  template <typename F>
  void visit(F&& f) {
    f(norm_.mean);
    f(norm_.stddev);
    stack_.visit(f);
    head_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    f(norm_.mean);
    f(norm_.stddev);
    stack_.visit(f);
    head_.visit(f);
  }
  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    visit([&](Param<T>& p) { out.push_back(&p); });
    return out;
  }
  void zero_grad() {
    visit([](Param<T>& p) { p.zero_grad(); });
  }
  long trainable_count() const {
    long n = 0;
    visit([&](const Param<T>& p) {
      if (p.name.rfind("input.", 0) != 0) n += static_cast<long>(p.value.numel());
    });
    return n;
  }

 private:
  Tensor<T> run(const Tensor<T>& x, Trace* tr) const {
    if (x.rank() != 3 || x.dim(1) != cfg_.in_channels)
      throw ShapeMismatch("pattern input must be B x " + std::to_string(cfg_.in_channels) + " x L");
    Tensor<T> pooled = stack_.forward(norm_.apply(x), tr ? &tr->stack : nullptr);
    Tensor<T> logits = head_.forward(pooled);
    if (tr) {
      tr->pooled = std::move(pooled);
      tr->logits = logits;
    }
    return logits;
  }

  PatternModelConfig cfg_;
  InputNorm<T> norm_;
  ConvStack<T> stack_;
  Linear<T> head_;
};

using VerificationModel = BasicVerificationModel<float>;
using PatternModel = BasicPatternModel<float>;

}  // namespace motionid::nn

#include "motionid/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "motionid/rng.hpp"

namespace motionid::pipeline {

namespace {

using nn::Tensor;

constexpr int kEvalChunk = 256;

struct Item {
  const features::FeatureTensor* tensor;
  int label;
};

// Pure per-sample augmentation; parallel over the batch.
Tensor<float> augmented_batch(const std::vector<Item>& items, int views, const features::AugmentConfig& base,
                              std::uint64_t seed) {
  const int b = static_cast<int>(items.size());
  const int rows = features::kFeatureRows, len = base.crop_out_len;
  Tensor<float> x({b * views, rows, len});
  const std::size_t per = static_cast<std::size_t>(rows) * len;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < b * views; ++k) {
    features::AugmentConfig cfg = base;
    cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(k));
    const auto t = features::augment(*items[k % b].tensor, cfg);
    std::copy(t.window.data().begin(), t.window.data().end(), x.data() + k * per);
  }
  return x;
}

Tensor<float> eval_batch(const std::vector<const features::FeatureTensor*>& tensors, std::size_t from,
                         std::size_t to, int crop_len) {
  std::vector<features::FeatureTensor> crops;
  crops.reserve(to - from);
  for (std::size_t i = from; i < to; ++i) crops.push_back(features::eval_crop(*tensors[i], crop_len));
  std::vector<const Window*> w;
  for (const auto& c : crops) w.push_back(&c.window);
  return stack_windows(w);
}

// Softmax rows of the classifier for the given attempts (eval crops).
std::vector<std::vector<double>> class_probabilities(const nn::VerificationModel& model,
                                                     const std::vector<const features::FeatureTensor*>& tensors,
                                                     int crop_len) {
  std::vector<std::vector<double>> out;
  out.reserve(tensors.size());
  for (std::size_t from = 0; from < tensors.size(); from += kEvalChunk) {
    const std::size_t to = std::min(tensors.size(), from + kEvalChunk);
    const auto p = nn::softmax_rows(model.forward(eval_batch(tensors, from, to, crop_len)).logits);
    const int k = p.dim(1);
    for (int i = 0; i < p.dim(0); ++i) {
      std::vector<double> row(k);
      for (int j = 0; j < k; ++j) row[j] = p[static_cast<std::size_t>(i) * k + j];
      out.push_back(std::move(row));
    }
  }
  return out;
}

const std::vector<features::FeatureTensor>& attempts_of(const AttemptSet& set, const std::string& user) {
  const auto it = set.find(user);
  if (it == set.end()) throw InsufficientData("no attempts for user " + user);
  return it->second;
}

const AttemptIndices& indices_of(const SplitPlan& plan, const std::string& user) {
  const auto it = plan.attempts.find(user);
  if (it == plan.attempts.end()) throw InsufficientData("plan has no attempt split for " + user);
  return it->second;
}

std::vector<const features::FeatureTensor*> pick(const std::vector<features::FeatureTensor>& all,
                                                 const std::vector<int>& idx) {
  std::vector<const features::FeatureTensor*> out;
  for (int i : idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= all.size()) throw InsufficientData("attempt index out of range");
    out.push_back(&all[static_cast<std::size_t>(i)]);
  }
  return out;
}

Tensor<float> stack_eval_crops(const std::vector<const features::FeatureTensor*>& tensors, int crop_len) {
  return eval_batch(tensors, 0, tensors.size(), crop_len);
}

template <typename Model>
std::vector<nn::Param<float>*> trainable(Model& m) {
  std::vector<nn::Param<float>*> out;
  for (auto* p : m.parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

}  // namespace

// ---- pattern model ---------------------------------------------------------

PatternResult train_pattern_model(const std::vector<preprocess::PatternWindowSet>& sets, const ExperimentConfig& cfg,
                                  std::uint64_t seed, bool shuffle_labels) {
  struct PItem {
    const Window* w;
    int label;
    std::size_t set;
  };
  std::vector<PItem> train, val, test;
  const std::vector<std::string>* channels = nullptr;
  int length = 0;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (int label = 0; label < 2; ++label) {
      const auto& list = label ? sets[s].positives : sets[s].negatives;
      if (list.empty()) continue;
      for (const auto& w : list) {
        if (!channels) {
          channels = &w.channels();
          length = w.timesteps();
        }
        if (w.channels() != *channels || w.timesteps() != length)
          throw InsufficientData("pattern windows differ in channels or length");
      }
      std::vector<int> idx(list.size());
      std::iota(idx.begin(), idx.end(), 0);
      Rng rng = make_rng(seed, 100 + 2 * s + static_cast<std::size_t>(label));
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto n = static_cast<double>(list.size());
      const auto n_train = static_cast<std::size_t>(std::floor(cfg.pattern_train_fraction * n + 1e-9));
      const auto n_val = static_cast<std::size_t>(std::floor(cfg.pattern_val_fraction * n + 1e-9));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        PItem it{&list[static_cast<std::size_t>(idx[k])], label, s};
        (k < n_train ? train : k < n_train + n_val ? val : test).push_back(it);
      }
    }
  }
  auto count = [](const std::vector<PItem>& v, int label) {
    return std::count_if(v.begin(), v.end(), [&](const PItem& i) { return i.label == label; });
  };
  if (count(train, 0) < 2 || count(train, 1) < 2 || count(val, 0) < 2 || count(val, 1) < 2)
    throw InsufficientData("pattern training needs >= 2 positives and >= 2 negatives in train and val");

  if (shuffle_labels) {
    Rng rng = make_rng(seed, 7);
    for (auto* part : {&train, &val}) {
      std::vector<int> labels;
      for (const auto& i : *part) labels.push_back(i.label);
      std::shuffle(labels.begin(), labels.end(), rng);
      for (std::size_t k = 0; k < part->size(); ++k) (*part)[k].label = labels[k];
    }
  }

  nn::PatternModelConfig mcfg;
  mcfg.in_channels = static_cast<int>(channels->size());
  mcfg.channels = cfg.pattern_channels;
  nn::PatternModel model(mcfg, derive_seed(seed, 1));
  auto stack = [](const std::vector<PItem>& items) {
    std::vector<const Window*> w;
    for (const auto& i : items) w.push_back(i.w);
    return stack_windows(w);
  };
  const Tensor<float> x_val = stack(val);
  model.fit_input_normalization(stack(train));

  nn::Adam<float> opt({cfg.pattern_lr});
  Rng rng = make_rng(seed, 2);
  PatternResult res;
  res.best_val_auc = -1.0;
  const auto params = trainable(model);
  for (int epoch = 1; epoch <= cfg.pattern_epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t from = 0; from < train.size(); from += static_cast<std::size_t>(cfg.pattern_batch_size)) {
      const std::size_t to = std::min(train.size(), from + static_cast<std::size_t>(cfg.pattern_batch_size));
      std::vector<PItem> batch(train.begin() + static_cast<long>(from), train.begin() + static_cast<long>(to));
      std::vector<int> labels;
      for (const auto& i : batch) labels.push_back(i.label);
      nn::BasicPatternModel<float>::Trace tr;
      model.zero_grad();
      const auto logits = model.forward(stack(batch), tr);
      const auto ce = nn::cross_entropy(logits, labels);
      model.backward(tr, ce.grad);
      opt.step(params);
      loss_sum += ce.loss * static_cast<double>(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k)
        correct += (logits[2 * k + 1] > logits[2 * k]) == (labels[k] == 1);
    }
    const auto scores = model.scores(x_val);
    eval::ScoreSet s;
    int val_correct = 0;
    for (std::size_t k = 0; k < val.size(); ++k) {
      (val[k].label ? s.genuine : s.impostor).push_back(scores[k]);
      val_correct += (scores[k] > 0.5) == (val[k].label == 1);
    }
    const double auc = eval::roc_auc(s);
    res.metrics.add(epoch, "train", "loss", loss_sum / static_cast<double>(train.size()));
    res.metrics.add(epoch, "train", "accuracy", static_cast<double>(correct) / static_cast<double>(train.size()));
    res.metrics.add(epoch, "val", "accuracy", static_cast<double>(val_correct) / static_cast<double>(val.size()));
    res.metrics.add(epoch, "val", "roc_auc", auc);
    if (auc > res.best_val_auc) {
      res.best_val_auc = auc;
      res.best_epoch = epoch;
      res.model = model;
    }
  }

  std::map<std::pair<std::string, std::string>, std::pair<int, int>> tally;
  if (!test.empty()) {
    const auto scores = res.model.scores(stack(test));
    for (std::size_t k = 0; k < test.size(); ++k) {
      auto& t = tally[{sets[test[k].set].device_id, sets[test[k].set].user_id}];
      t.first += (scores[k] > 0.5) == (test[k].label == 1);
      t.second += 1;
    }
  }
  for (const auto& [key, t] : tally) res.pair_accuracy[key] = static_cast<double>(t.first) / t.second;
  return res;
}

// ---- verification ----------------------------------------------------------

eval::ScoreSet cross_comparison_scores(const nn::VerificationModel& model, const SplitPlan& plan,
                                       const AttemptSet& set, bool test_part, int crop_len, double& accuracy) {
  std::vector<const features::FeatureTensor*> tensors;
  std::vector<int> owner;
  for (const auto& u : plan.subset_base) {
    const int cls = plan.class_of(u);
    const auto& idx = indices_of(plan, u);
    for (auto* t : pick(attempts_of(set, u), test_part ? idx.test : idx.val)) {
      tensors.push_back(t);
      owner.push_back(cls);
    }
  }
  if (tensors.empty()) throw InsufficientData(std::string("no ") + (test_part ? "test" : "val") + " attempts");
  const auto probs = class_probabilities(model, tensors, crop_len);
  eval::ScoreSet s;
  int correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& p = probs[i];
    const int arg = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    correct += arg == owner[i];
    for (int c = 0; c < static_cast<int>(p.size()); ++c) (c == owner[i] ? s.genuine : s.impostor).push_back(p[c]);
  }
  accuracy = static_cast<double>(correct) / static_cast<double>(probs.size());
  return s;
}

BaselineResult train_baseline(const AttemptSet& set, const SplitPlan& plan, const ExperimentConfig& cfg,
                              std::uint64_t seed) {
  plan.validate();
  const int n = static_cast<int>(plan.subset_base.size());
  if (n < 2) throw InsufficientData("baseline needs at least 2 users in subset_base");
  std::vector<Item> train;
  for (const auto& u : plan.subset_base) {
    const auto& idx = indices_of(plan, u);
    if (idx.train.empty() || idx.val.empty()) throw InsufficientData("user " + u + " lacks train or val attempts");
    for (auto* t : pick(attempts_of(set, u), idx.train)) train.push_back({t, plan.class_of(u)});
  }
  const int crop = cfg.augment.crop_out_len;

  nn::VerificationModelConfig mcfg = cfg.model;
  mcfg.classes = n;
  nn::VerificationModel model(mcfg, derive_seed(seed, 1));
  {
    std::vector<const features::FeatureTensor*> t;
    for (const auto& i : train) t.push_back(i.tensor);
    model.fit_input_normalization(stack_eval_crops(t, crop));
  }

  nn::Adam<float> opt({cfg.lr});
  const auto params = trainable(model);
  Rng rng = make_rng(seed, 2);
  BaselineResult res;
  double best_acc = -1.0, best_far = 2.0;
  long step = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double sum_ce = 0.0, sum_tm = 0.0, sum_sc = 0.0;
    int batches = 0;
    for (std::size_t from = 0; from < train.size(); from += bs) {
      const std::size_t to = std::min(train.size(), from + bs);
      std::vector<Item> batch(train.begin() + static_cast<long>(from), train.begin() + static_cast<long>(to));
      // Two augmented views per sample: rows [0, b) and [b, 2b).
      const int b = static_cast<int>(batch.size());
      const Tensor<float> x = augmented_batch(batch, 2, cfg.augment, derive_seed(seed, 1000000 + step++));
      std::vector<int> labels(2 * static_cast<std::size_t>(b));
      for (int k = 0; k < 2 * b; ++k) labels[k] = batch[k % b].label;
      const bool mixed = std::any_of(labels.begin(), labels.end(), [&](int l) { return l != labels[0]; });

      nn::VerificationModel::Trace tr;
      model.zero_grad();
      const auto out = model.forward(x, tr);
      const auto ce = nn::cross_entropy(out.logits, labels);
      const auto sc = nn::supervised_contrastive(out.projection, labels, cfg.loss.tau);
      nn::VerificationModel::OutputGrad g;
      g.logits = ce.grad;
      g.projection = sc.grad;
      double tm_loss = 0.0;
      if (mixed && cfg.loss.alpha_tm > 0.0) {
        const auto tm = nn::triplet_hardest_negative(out.embedding, labels, cfg.loss);
        tm_loss = tm.loss;
        g.embedding = tm.grad;
        for (auto& v : g.embedding.vec()) v *= static_cast<float>(cfg.loss.alpha_tm);
      }
      model.backward(tr, g);
      opt.step(params);
      sum_ce += ce.loss;
      sum_tm += tm_loss;
      sum_sc += sc.loss;
      ++batches;
    }
    double acc_val = 0.0, acc_test = 0.0;
    const auto s_val = cross_comparison_scores(model, plan, set, false, crop, acc_val);
    const double far_val = eval::far_at_tar(s_val, cfg.tar);
    double far_test = 0.0;
    bool have_test = true;
    for (const auto& u : plan.subset_base) have_test = have_test && !indices_of(plan, u).test.empty();
    if (have_test) far_test = eval::far_at_tar(cross_comparison_scores(model, plan, set, true, crop, acc_test), cfg.tar);

    const double nb = std::max(batches, 1);
    res.metrics.add(epoch, "train", "loss_ce", sum_ce / nb);
    res.metrics.add(epoch, "train", "loss_tm", sum_tm / nb);
    res.metrics.add(epoch, "train", "loss_sc", sum_sc / nb);
    res.metrics.add(epoch, "train", "loss_total", nn::total_loss(sum_ce / nb, sum_tm / nb, sum_sc / nb, cfg.loss));
    res.metrics.add(epoch, "val", "accuracy", acc_val);
    res.metrics.add(epoch, "val", "far_at_tar", far_val);
    if (have_test) {
      res.metrics.add(epoch, "test", "accuracy", acc_test);
      res.metrics.add(epoch, "test", "far_at_tar", far_test);
    }
    if (acc_val > best_acc || (acc_val == best_acc && far_val < best_far)) {
      best_acc = acc_val;
      best_far = far_val;
      res.best_epoch = epoch;
      res.model = model;
      res.acc_val = acc_val;
      res.acc_test = acc_test;
      res.far_val = far_val;
      res.far_test = far_test;
    }
  }
  return res;
}

void FineTuneConfig::validate() const {
  if (!frozen) throw UsageError("fine-tuning requires a frozen feature extractor");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw UsageError("fine-tune learning rate must be below the base rate");
  if (epochs < 1 || batch_size < 2) throw UsageError("fine-tune needs epochs >= 1 and batch size >= 2");
  if (!(base_lr > 0.0)) throw UsageError("base learning rate must be positive");
}

FineTuneConfig finetune_config(const ExperimentConfig& cfg) {
  FineTuneConfig ft;
  ft.lr_factor = cfg.finetune_lr_factor;
  ft.epochs = cfg.finetune_epochs;
  ft.batch_size = cfg.finetune_batch_size;
  ft.base_lr = cfg.lr;
  return ft;
}

FineTuneResult finetune_user(const nn::VerificationModel& base, const std::string& target_user, const SplitPlan& plan,
                             const AttemptSet& set, const FineTuneConfig& ft, const ExperimentConfig& cfg,
                             std::uint64_t seed, const EpochCallback& on_epoch) {
  plan.validate();
  ft.validate();
  if (std::find(plan.test_final.begin(), plan.test_final.end(), target_user) == plan.test_final.end())
    throw UserNotHeldOut(target_user + " is not in test_final");

  std::vector<Item> positives, negatives;
  for (auto* t : pick(attempts_of(set, target_user), indices_of(plan, target_user).train)) positives.push_back({t, 1});
  for (const auto& u : plan.subset_base)
    for (auto* t : pick(attempts_of(set, u), indices_of(plan, u).train)) negatives.push_back({t, 0});
  if (positives.empty() || negatives.empty()) throw InsufficientData("fine-tuning needs attempts of both classes");

  nn::VerificationModel model = base;
  model.replace_classifier(2, derive_seed(seed, 1));
  model.set_extractor_trainable(false);
  model.set_embedding_heads_trainable(false);
  const auto params = trainable(model);

  nn::Adam<float> opt({ft.lr()});
  Rng rng = make_rng(seed, 2);
  const std::size_t half = static_cast<std::size_t>(ft.batch_size / 2);
  // 1:1 batches: one epoch passes once over the larger class in shuffled
  // order while the smaller class is drawn cyclically, reshuffled on wrap.
  auto& big = positives.size() >= negatives.size() ? positives : negatives;
  auto& small = positives.size() >= negatives.size() ? negatives : positives;
  std::shuffle(small.begin(), small.end(), rng);
  std::size_t cursor = 0;
  FineTuneResult res;
  long step = 0;
  for (int epoch = 1; epoch <= ft.epochs; ++epoch) {
    std::shuffle(big.begin(), big.end(), rng);
    double loss_sum = 0.0;
    int correct = 0, seen = 0, batches = 0;
    for (std::size_t from = 0; from < big.size(); from += half) {
      const std::size_t to = std::min(big.size(), from + half);
      std::vector<Item> batch(big.begin() + static_cast<long>(from), big.begin() + static_cast<long>(to));
      const std::size_t count = batch.size();
      for (std::size_t k = 0; k < count; ++k) {
        if (cursor == small.size()) {
          std::shuffle(small.begin(), small.end(), rng);
          cursor = 0;
        }
        batch.push_back(small[cursor++]);
      }
      std::vector<int> labels;
      for (const auto& i : batch) labels.push_back(i.label);
      const Tensor<float> x = augmented_batch(batch, 1, cfg.augment, derive_seed(seed, 1000000 + step++));

      nn::VerificationModel::Trace tr;
      model.zero_grad();
      const auto out = model.forward(x, tr);
      const auto ce = nn::cross_entropy(out.logits, labels);
      nn::VerificationModel::OutputGrad g;
      g.logits = ce.grad;
      model.backward(tr, g);
      opt.step(params);
      loss_sum += ce.loss;
      ++batches;
      for (std::size_t k = 0; k < batch.size(); ++k)
        correct += (out.logits[2 * k + 1] > out.logits[2 * k]) == (labels[k] == 1);
      seen += static_cast<int>(batch.size());
    }
    res.metrics.add(epoch, "train", "loss_ce", loss_sum / std::max(batches, 1));
    res.metrics.add(epoch, "train", "accuracy", static_cast<double>(correct) / std::max(seen, 1));
    res.checkpoints.push_back(model);
    if (on_epoch) on_epoch(epoch, model);
  }
  return res;
}

std::vector<double> genuine_class_scores(const nn::VerificationModel& model,
                                         const std::vector<features::FeatureTensor>& attempts,
                                         const std::vector<int>& idx, int crop_len) {
  const auto probs = class_probabilities(model, pick(attempts, idx), crop_len);
  std::vector<double> s;
  s.reserve(probs.size());
  for (const auto& p : probs) {
    if (p.size() != 2) throw ShapeMismatch("genuine-class scores need a 2-class head");
    s.push_back(p[1]);
  }
  return s;
}

Selection select_epoch(const std::vector<eval::ScoreSet>& per_checkpoint, double tar) {
  if (per_checkpoint.empty()) throw EmptyValidation("no checkpoints to select from");
  Selection sel;
  for (const auto& s : per_checkpoint) {
    if (s.genuine.empty() || s.impostor.empty()) throw EmptyValidation("validation scores are empty");
    sel.far_per_epoch.push_back(eval::far_at_tar(s, tar));
  }
  sel.epoch = static_cast<int>(std::min_element(sel.far_per_epoch.begin(), sel.far_per_epoch.end()) -
                               sel.far_per_epoch.begin()) + 1;
  return sel;
}

Selection select_epoch(const std::vector<const nn::VerificationModel*>& checkpoints, const SplitPlan& plan,
                       const AttemptSet& set, const std::string& target_user, const ExperimentConfig& cfg) {
  if (plan.val_add.empty()) throw EmptyValidation("val_add is empty");
  const auto& target_idx = indices_of(plan, target_user).val;
  if (target_idx.empty()) throw EmptyValidation(target_user + " has no validation attempts");
  std::vector<eval::ScoreSet> sets;
  for (const auto* m : checkpoints) {
    eval::ScoreSet s;
    s.genuine = genuine_class_scores(*m, attempts_of(set, target_user), target_idx, cfg.augment.crop_out_len);
    for (const auto& u : plan.val_add) {
      const auto& all = attempts_of(set, u);
      std::vector<int> idx(all.size());
      std::iota(idx.begin(), idx.end(), 0);
      const auto sc = genuine_class_scores(*m, all, idx, cfg.augment.crop_out_len);
      s.impostor.insert(s.impostor.end(), sc.begin(), sc.end());
    }
    sets.push_back(std::move(s));
  }
  return select_epoch(sets, cfg.tar);
}

FinalTestResult final_test(std::span<const double> genuine, std::span<const double> impostor_pool,
                           const ExperimentConfig& cfg) {
  eval::BootstrapConfig b;
  b.iterations = cfg.iterations;
  b.genuine_count = cfg.final_genuine;
  b.impostor_count = cfg.final_impostor;
  b.tar = cfg.tar;
  b.seed = derive_seed(cfg.seed, 0xf1a1);
  FinalTestResult r;
  r.bootstrap = eval::bootstrap_far(genuine, impostor_pool, b);
  r.genuine = static_cast<std::size_t>(cfg.final_genuine);
  r.impostor_pool = impostor_pool.size();
  return r;
}

FinalTestResult final_test(const nn::VerificationModel& model, const SplitPlan& plan, const AttemptSet& set,
                           const std::string& target_user, const ExperimentConfig& cfg) {
  if (std::find(plan.test_final.begin(), plan.test_final.end(), target_user) == plan.test_final.end())
    throw UserNotHeldOut(target_user + " is not in test_final");
  if (plan.test_final.size() < 2) throw InsufficientAttempts("final test needs at least one other test_final user");
  for (const auto& u : plan.test_final)
    if (indices_of(plan, u).test.size() < static_cast<std::size_t>(cfg.final_genuine))
      throw InsufficientAttempts(u + " has " + std::to_string(indices_of(plan, u).test.size()) +
                                 " test attempts, need " + std::to_string(cfg.final_genuine));
  const int crop = cfg.augment.crop_out_len;
  const auto genuine = genuine_class_scores(model, attempts_of(set, target_user), indices_of(plan, target_user).test, crop);
  std::vector<double> pool;
  for (const auto& u : plan.test_final) {
    if (u == target_user) continue;
    const auto s = genuine_class_scores(model, attempts_of(set, u), indices_of(plan, u).test, crop);
    pool.insert(pool.end(), s.begin(), s.end());
  }
  return final_test(genuine, pool, cfg);
}

}  // namespace motionid::pipeline

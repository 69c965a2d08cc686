#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "motionid/eval.hpp"
#include "motionid/features.hpp"
#include "motionid/nn/adam.hpp"
#include "motionid/nn/losses.hpp"
#include "motionid/nn/models.hpp"
#include "motionid/preprocess.hpp"

namespace motionid::pipeline {

// ---- metrics log -----------------------------------------------------------

struct MetricRow {
  int epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct MetricsLog {
  std::vector<MetricRow> rows;

  void add(int epoch, std::string split, std::string metric, double value) {
    rows.push_back({epoch, std::move(split), std::move(metric), value});
  }
  // Value of the given metric at each epoch, in logging order.
  std::vector<double> series(const std::string& split, const std::string& metric) const;
  int epochs() const;
  std::string to_csv() const;
  static MetricsLog from_csv(const std::string& text);
  void save(const std::filesystem::path& path) const;
};

// ---- experiment configuration ---------------------------------------------

struct ExperimentConfig {
  std::uint64_t seed = 0;
  bool seed_given = false;

  // split plan
  int n_base = 8;
  int n_val_add = 2;
  int n_test_final = 2;
  double train_fraction = 0.5;
  double val_fraction = 0.2;  // remainder is test

  // baseline
  int epochs = 12;
  int batch_size = 32;
  double lr = 1e-3;
  int repeats = 1;
  nn::LossConfig loss;
  features::AugmentConfig augment;
  nn::VerificationModelConfig model;

  // fine-tune
  int finetune_epochs = 5;
  double finetune_lr_factor = 0.3;
  int finetune_batch_size = 32;

  // evaluation
  double tar = 0.9;
  int iterations = 5000;
  int final_genuine = 90;
  int final_impostor = 90;

  // pattern model
  int pattern_epochs = 20;
  int pattern_batch_size = 32;
  double pattern_lr = 3e-3;
  double pattern_train_fraction = 0.6;
  double pattern_val_fraction = 0.2;
  std::vector<int> pattern_channels{32, 32};

  void validate() const;
  // Applies "key = value" pairs; UsageError on unknown keys or bad values.
  void apply(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;
};

// Flat key = value file; '#' starts a comment.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::filesystem::path& path);

// ---- data sets -------------------------------------------------------------

// Feature tensors (66 x T) per user, ordered by attempt time.
using AttemptSet = std::map<std::string, std::vector<features::FeatureTensor>>;

features::FeatureTensor to_feature_tensor(Window w);
void save_attempt_set(const std::filesystem::path& dir, const AttemptSet& set);
AttemptSet load_attempt_set(const std::filesystem::path& dir);

// N x rows x L batch from windows sharing row count and length.
nn::Tensor<float> stack_windows(const std::vector<const Window*>& windows);

// ---- split plan ------------------------------------------------------------

struct AttemptIndices {
  std::vector<int> train, val, test;
  friend bool operator==(const AttemptIndices&, const AttemptIndices&) = default;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<std::string> subset_base;
  std::vector<std::string> val_add;
  std::vector<std::string> test_final;
  std::map<std::string, AttemptIndices> attempts;  // per user, indices into AttemptSet

  // UsageError unless the user sets are pairwise disjoint and every attempt
  // split is disjoint and in range.
  void validate() const;
  std::string to_json() const;
  static SplitPlan from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static SplitPlan load(const std::filesystem::path& path);
  int class_of(const std::string& base_user) const;  // index in subset_base
  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

// Users are shuffled with the seed; then n_base / n_val_add / n_test_final
// are taken in order. Each user's attempts are shuffled and cut by fraction.
SplitPlan make_split_plan(const AttemptSet& set, int n_base, int n_val_add, int n_test_final,
                          double train_fraction, double val_fraction, std::uint64_t seed);
// Same users, fresh attempt cuts for repeat r.
SplitPlan resample_attempts(const SplitPlan& plan, const AttemptSet& set, double train_fraction,
                            double val_fraction, int repeat);

// ---- pattern model ---------------------------------------------------------

struct PatternResult {
  nn::PatternModel model;
  int best_epoch = 0;
  double best_val_auc = 0.0;
  MetricsLog metrics;
  // test accuracy per (device, user) pair: key "device|user"
  std::map<std::pair<std::string, std::string>, double> pair_accuracy;
};

PatternResult train_pattern_model(const std::vector<preprocess::PatternWindowSet>& sets,
                                  const ExperimentConfig& cfg, std::uint64_t seed,
                                  bool shuffle_labels = false);

// ---- verification ----------------------------------------------------------

struct BaselineResult {
  nn::VerificationModel model;
  int best_epoch = 0;
  MetricsLog metrics;
  double acc_val = 0.0, acc_test = 0.0, far_val = 0.0, far_test = 0.0;
};

// Cross-comparison over the val (or test) attempts of every base user: for
// attempt x of user u and each claimed user c the score is p_c(x), genuine
// when c == u. `accuracy` receives the argmax accuracy.
eval::ScoreSet cross_comparison_scores(const nn::VerificationModel& model, const SplitPlan& plan,
                                       const AttemptSet& set, bool test_part, int crop_len, double& accuracy);

BaselineResult train_baseline(const AttemptSet& set, const SplitPlan& plan, const ExperimentConfig& cfg,
                              std::uint64_t seed);

struct FineTuneConfig {
  bool frozen = true;
  double lr_factor = 0.3;
  int epochs = 5;
  int batch_size = 32;
  double base_lr = 1e-3;

  void validate() const;
  double lr() const { return base_lr * lr_factor; }
};

FineTuneConfig finetune_config(const ExperimentConfig& cfg);

struct FineTuneResult {
  std::vector<nn::VerificationModel> checkpoints;  // one per epoch
  MetricsLog metrics;
};

// Called after each epoch with (epoch, model); used to write checkpoints.
using EpochCallback = std::function<void(int, const nn::VerificationModel&)>;

FineTuneResult finetune_user(const nn::VerificationModel& base, const std::string& target_user,
                             const SplitPlan& plan, const AttemptSet& set, const FineTuneConfig& ft,
                             const ExperimentConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch = {});

// Scores of attempts `idx` of `user` under the genuine (index 1) class.
std::vector<double> genuine_class_scores(const nn::VerificationModel& model,
                                         const std::vector<features::FeatureTensor>& attempts,
                                         const std::vector<int>& idx, int crop_len);

struct Selection {
  int epoch = 0;  // 1-based
  std::vector<double> far_per_epoch;
};

// FAR(@TAR) per checkpoint with the target's validation attempts as genuine
// and all val_add attempts as impostors; argmin, ties to the earliest.
Selection select_epoch(const std::vector<const nn::VerificationModel*>& checkpoints, const SplitPlan& plan,
                       const AttemptSet& set, const std::string& target_user, const ExperimentConfig& cfg);
// Same rule on precomputed per-checkpoint score sets.
Selection select_epoch(const std::vector<eval::ScoreSet>& per_checkpoint, double tar);

struct FinalTestResult {
  eval::BootstrapResult bootstrap;
  std::size_t genuine = 0;
  std::size_t impostor_pool = 0;
};

FinalTestResult final_test(const nn::VerificationModel& model, const SplitPlan& plan, const AttemptSet& set,
                           const std::string& target_user, const ExperimentConfig& cfg);
// Score-level entry point.
FinalTestResult final_test(std::span<const double> genuine, std::span<const double> impostor_pool,
                           const ExperimentConfig& cfg);

}  // namespace motionid::pipeline

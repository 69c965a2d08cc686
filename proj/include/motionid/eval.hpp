#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "motionid/error.hpp"

// Scores are oriented so that higher means more genuine.
namespace motionid::eval {

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

// Mann-Whitney AUC, ties count one half. EmptySide if either side is empty.
double roc_auc(const ScoreSet& s);

// Largest threshold that accepts at least `tar` of the genuine scores: the
// ceil(tar * N)-th largest genuine score.
double threshold_at_tar(std::span<const double> genuine, double tar);
// Fraction of impostor scores >= that threshold.
double far_at_tar(const ScoreSet& s, double tar);
// Fraction of genuine scores accepted by the strictest threshold admitting at
// most floor(far * N) impostors (accepting strictly above the next impostor).
double tar_at_far(const ScoreSet& s, double far);

// ceil(30 / rate)
std::int64_t rule_of_30(double error_rate);
// ceil(target / (n (n - 1)))
std::int64_t attempts_for_budget(int n, std::int64_t impostor_target);
// n (n - 1) m; the FAR is its reciprocal.
std::int64_t theoretical_far_denominator(int n, int m);
double theoretical_far(int n, int m);

struct ComparisonBudget {
  int n = 90;
  int m = 1;
  double target_far = 1.0 / 50000.0;
  double target_tar = 0.9;
  double confidence = 0.9;  // the rule of 30 gives 90% confidence of +-30%

  void validate() const;
  std::int64_t genuine_required() const { return rule_of_30(1.0 - target_tar); }
  std::int64_t impostor_required() const { return rule_of_30(target_far); }
  std::int64_t attempts_required() const { return attempts_for_budget(n, impostor_required()); }
  std::int64_t impostor_available() const { return static_cast<std::int64_t>(n) * (n - 1) * m; }
};

// Parses "0.01", "1e-4" or "1/50000".
double parse_rate(const std::string& text);
// "1/k" with k = round(1 / far); "0" for zero.
std::string one_over(double far);

struct BootstrapConfig {
  int iterations = 5000;
  int genuine_count = 90;   // first N genuine scores are kept fixed
  int impostor_count = 90;  // resampled without replacement each iteration
  double tar = 0.9;
  std::uint64_t seed = 0;
};

struct BootstrapResult {
  double mean = 0.0;
  double stddev = 0.0;  // population sd over iterations
  double threshold = 0.0;
  std::vector<double> fars;
};

// Iteration i draws from its own stream derived from (seed, i), so the
// parallel and serial versions agree exactly.
BootstrapResult bootstrap_far(std::span<const double> genuine, std::span<const double> impostor_pool,
                              const BootstrapConfig& cfg);
BootstrapResult bootstrap_far_serial(std::span<const double> genuine,
                                     std::span<const double> impostor_pool, const BootstrapConfig& cfg);

}  // namespace motionid::eval

#pragma once

#include <optional>
#include <string>
#include <vector>

// Result tables: pattern accuracy per device/user, baseline metrics per
// split, and fine-tuned FAR per held-out user and split. Values are stored as
// fractions; text output renders percentages.
namespace motionid::report {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  friend bool operator==(const MeanSd&, const MeanSd&) = default;
};

// Mean and population sd; throws on an empty list.
MeanSd mean_sd(const std::vector<double>& v);
// "97.9 ± 0.2" style: sd to one significant digit (two when it starts with 1),
// mean to the same decimal place. "0" when both are zero.
std::string format_mean_sd(double mean, double sd);

struct PatternTable {
  std::vector<std::string> devices;
  std::vector<std::string> users;
  std::vector<std::vector<std::optional<MeanSd>>> accuracy;  // [device][user]; nullopt = N/A
};

struct SplitRow {
  int split = 0;
  MeanSd acc_val, acc_test, far_val, far_test;
  double far_theor = 0.0;
  friend bool operator==(const SplitRow&, const SplitRow&) = default;
};

struct SplitTable {
  std::vector<SplitRow> rows;
};

struct UserTable {
  std::vector<int> splits;
  std::vector<std::string> users;
  std::vector<std::vector<std::optional<MeanSd>>> far;  // [user][split]
};

std::string to_csv(const PatternTable& t);
std::string to_csv(const SplitTable& t);
std::string to_csv(const UserTable& t);
std::string to_text(const PatternTable& t);
std::string to_text(const SplitTable& t);
std::string to_text(const UserTable& t);

PatternTable parse_pattern_csv(const std::string& text);
SplitTable parse_split_csv(const std::string& text);
UserTable parse_user_csv(const std::string& text);

}  // namespace motionid::report

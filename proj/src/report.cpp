#include "motionid/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "motionid/error.hpp"
#include "motionid/eval.hpp"

namespace motionid::report {

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s == "-0" || s.rfind("-0.", 0) == 0) {
    if (std::all_of(s.begin() + 1, s.end(), [](char c) { return c == '0' || c == '.'; })) s.erase(0, 1);
  }
  return s;
}

// Display width in code points (the ± sign is two bytes).
std::size_t width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

std::string render(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w;
  for (const auto& r : rows) {
    if (w.size() < r.size()) w.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], width(r[i]));
  }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) line += "  ";
      line += r[i];
      if (i + 1 < r.size()) line.append(w[i] - width(r[i]), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

std::vector<std::vector<std::string>> parse_rows(const std::string& text, const std::string& header) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header) throw SchemaError("expected table header '" + header + "'");
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  const auto cols = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',') + 1);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != cols) throw RowError(lineno, "expected " + std::to_string(cols) + " fields");
    rows.push_back(std::move(f));
  }
  return rows;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw SchemaError("bad number '" + s + "' in table");
  return v;
}

int to_int(const std::string& s) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw SchemaError("bad integer '" + s + "' in table");
  return v;
}

std::optional<MeanSd> opt_cell(const std::string& m, const std::string& s) {
  if (m.empty() && s.empty()) return std::nullopt;
  return MeanSd{to_double(m), to_double(s)};
}

int index_of(std::vector<std::string>& keys, const std::string& k) {
  auto it = std::find(keys.begin(), keys.end(), k);
  if (it != keys.end()) return static_cast<int>(it - keys.begin());
  keys.push_back(k);
  return static_cast<int>(keys.size() - 1);
}

std::string percent_cell(const std::optional<MeanSd>& c) {
  return c ? format_mean_sd(100.0 * c->mean, 100.0 * c->sd) : "N/A";
}

// FAR in percent as "(m ± s)*10^e".
std::string scaled_percent(double mean, double sd) {
  const double pm = 100.0 * mean, ps = 100.0 * sd;
  const double top = std::max(pm, ps);
  if (!(top > 0.0)) return "0";
  const int e = static_cast<int>(std::floor(std::log10(top)));
  const double scale = std::pow(10.0, e);
  const std::string body = ps > 0.0 ? format_mean_sd(pm / scale, ps / scale) : fixed(pm / scale, 2);
  return e == 0 ? "(" + body + ")" : "(" + body + ")*10^" + std::to_string(e);
}

}  // namespace

MeanSd mean_sd(const std::vector<double>& v) {
  if (v.empty()) throw EmptySide("mean of an empty list");
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

std::string format_mean_sd(double mean, double sd) {
  if (sd <= 0.0) {
    if (mean == 0.0) return "0";
    return fixed(mean, 1);
  }
  int e = static_cast<int>(std::floor(std::log10(sd)));
  const double lead = sd / std::pow(10.0, e);
  const int digits = lead < 2.0 ? 2 : 1;
  const int decimals = std::max(0, -e + digits - 1);
  return fixed(mean, decimals) + " ± " + fixed(sd, decimals);
}

std::string to_csv(const PatternTable& t) {
  std::string out = "device,user,accuracy_mean,accuracy_sd\n";
  for (std::size_t d = 0; d < t.devices.size(); ++d)
    for (std::size_t u = 0; u < t.users.size(); ++u) {
      const auto& c = t.accuracy.at(d).at(u);
      out += t.devices[d] + "," + t.users[u] + "," + (c ? num(c->mean) + "," + num(c->sd) : std::string(",")) + "\n";
    }
  return out;
}

std::string to_csv(const SplitTable& t) {
  std::string out =
      "split,acc_val_mean,acc_val_sd,acc_test_mean,acc_test_sd,far_val_mean,far_val_sd,far_test_mean,far_test_sd,"
      "far_theor\n";
  for (const auto& r : t.rows)
    out += std::to_string(r.split) + "," + num(r.acc_val.mean) + "," + num(r.acc_val.sd) + "," +
           num(r.acc_test.mean) + "," + num(r.acc_test.sd) + "," + num(r.far_val.mean) + "," + num(r.far_val.sd) +
           "," + num(r.far_test.mean) + "," + num(r.far_test.sd) + "," + num(r.far_theor) + "\n";
  return out;
}

std::string to_csv(const UserTable& t) {
  std::string out = "user,split,far_mean,far_sd\n";
  for (std::size_t u = 0; u < t.users.size(); ++u)
    for (std::size_t s = 0; s < t.splits.size(); ++s) {
      const auto& c = t.far.at(u).at(s);
      out += t.users[u] + "," + std::to_string(t.splits[s]) + "," +
             (c ? num(c->mean) + "," + num(c->sd) : std::string(",")) + "\n";
    }
  return out;
}

std::string to_text(const PatternTable& t) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"Device/User"};
  head.insert(head.end(), t.users.begin(), t.users.end());
  rows.push_back(head);
  for (std::size_t d = 0; d < t.devices.size(); ++d) {
    std::vector<std::string> r{t.devices[d]};
    for (std::size_t u = 0; u < t.users.size(); ++u) r.push_back(percent_cell(t.accuracy.at(d).at(u)));
    rows.push_back(std::move(r));
  }
  return "Pattern identification accuracy, %\n" + render(rows);
}

std::string to_text(const SplitTable& t) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"split", "Acc_val", "Acc_test", "FAR_val(@TAR=90%)", "FAR_test(@TAR=90%)", "FAR_theor"});
  for (const auto& r : t.rows) {
    rows.push_back({std::to_string(r.split), format_mean_sd(100 * r.acc_val.mean, 100 * r.acc_val.sd),
                    format_mean_sd(100 * r.acc_test.mean, 100 * r.acc_test.sd),
                    scaled_percent(r.far_val.mean, r.far_val.sd), scaled_percent(r.far_test.mean, r.far_test.sd),
                    scaled_percent(r.far_theor, 0.0)});
    rows.push_back({"", "", "", eval::one_over(r.far_val.mean), eval::one_over(r.far_test.mean),
                    eval::one_over(r.far_theor)});
  }
  return "Baseline metrics, %\n" + render(rows);
}

std::string to_text(const UserTable& t) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"user id"};
  for (int s : t.splits) head.push_back(std::to_string(s));
  rows.push_back(head);
  for (std::size_t u = 0; u < t.users.size(); ++u) {
    std::vector<std::string> r{t.users[u]};
    for (std::size_t s = 0; s < t.splits.size(); ++s) r.push_back(percent_cell(t.far.at(u).at(s)));
    rows.push_back(std::move(r));
  }
  return "FAR(@TAR=90%) per user and split, %\n" + render(rows);
}

PatternTable parse_pattern_csv(const std::string& text) {
  PatternTable t;
  std::map<std::pair<int, int>, std::optional<MeanSd>> cells;
  for (const auto& f : parse_rows(text, "device,user,accuracy_mean,accuracy_sd")) {
    const int d = index_of(t.devices, f[0]), u = index_of(t.users, f[1]);
    cells[{d, u}] = opt_cell(f[2], f[3]);
  }
  t.accuracy.assign(t.devices.size(), std::vector<std::optional<MeanSd>>(t.users.size()));
  for (const auto& [k, v] : cells) t.accuracy[k.first][k.second] = v;
  return t;
}

SplitTable parse_split_csv(const std::string& text) {
  SplitTable t;
  for (const auto& f : parse_rows(text,
                                  "split,acc_val_mean,acc_val_sd,acc_test_mean,acc_test_sd,far_val_mean,far_val_sd,"
                                  "far_test_mean,far_test_sd,far_theor")) {
    SplitRow r;
    r.split = to_int(f[0]);
    r.acc_val = {to_double(f[1]), to_double(f[2])};
    r.acc_test = {to_double(f[3]), to_double(f[4])};
    r.far_val = {to_double(f[5]), to_double(f[6])};
    r.far_test = {to_double(f[7]), to_double(f[8])};
    r.far_theor = to_double(f[9]);
    t.rows.push_back(r);
  }
  return t;
}

UserTable parse_user_csv(const std::string& text) {
  UserTable t;
  std::vector<std::string> split_keys;
  std::map<std::pair<int, int>, std::optional<MeanSd>> cells;
  for (const auto& f : parse_rows(text, "user,split,far_mean,far_sd")) {
    const int u = index_of(t.users, f[0]);
    to_int(f[1]);
    const int s = index_of(split_keys, f[1]);
    cells[{u, s}] = opt_cell(f[2], f[3]);
  }
  for (const auto& k : split_keys) t.splits.push_back(to_int(k));
  t.far.assign(t.users.size(), std::vector<std::optional<MeanSd>>(t.splits.size()));
  for (const auto& [k, v] : cells) t.far[k.first][k.second] = v;
  return t;
}

}  // namespace motionid::report

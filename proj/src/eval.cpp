#include "motionid/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "motionid/rng.hpp"

namespace motionid::eval {

namespace {

void require_finite(std::span<const double> v, const char* side) {
  for (double x : v)
    if (!std::isfinite(x)) throw EmptySide(std::string("non-finite ") + side + " score");
}

void require_rate(double r, const char* what, bool allow_one) {
  if (!(r > 0.0) || r > 1.0 || (!allow_one && r == 1.0))
    throw UsageError(std::string(what) + " must lie in (0, 1" + (allow_one ? "]" : ")"));
}

std::vector<double> sorted_desc(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

std::size_t count_at_least(std::span<const double> v, double t) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [t](double x) { return x >= t; }));
}

double one_far(std::span<const double> impostor, double threshold) {
  return static_cast<double>(count_at_least(impostor, threshold)) / static_cast<double>(impostor.size());
}

struct Prepared {
  double threshold;
  std::vector<double> pool;
};

Prepared prepare(std::span<const double> genuine, std::span<const double> pool, const BootstrapConfig& cfg) {
  if (cfg.iterations < 1) throw UsageError("bootstrap needs at least one iteration");
  if (cfg.genuine_count < 1 || cfg.impostor_count < 1) throw UsageError("bootstrap sample sizes must be positive");
  if (genuine.size() < static_cast<std::size_t>(cfg.genuine_count))
    throw InsufficientAttempts("need " + std::to_string(cfg.genuine_count) + " genuine attempts, have " +
                               std::to_string(genuine.size()));
  if (pool.size() < static_cast<std::size_t>(cfg.impostor_count))
    throw InsufficientAttempts("need " + std::to_string(cfg.impostor_count) + " impostor attempts, have " +
                               std::to_string(pool.size()));
  require_finite(genuine, "genuine");
  require_finite(pool, "impostor");
  return {threshold_at_tar(genuine.first(static_cast<std::size_t>(cfg.genuine_count)), cfg.tar),
          std::vector<double>(pool.begin(), pool.end())};
}

double iteration_far(const Prepared& p, const BootstrapConfig& cfg, int it, std::vector<std::size_t>& idx) {
  Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(it));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::size_t hits = 0;
  // Partial Fisher-Yates: the first impostor_count slots form the sample.
  for (int k = 0; k < cfg.impostor_count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), idx.size() - 1);
    std::swap(idx[k], idx[pick(rng)]);
    if (p.pool[idx[k]] >= p.threshold) ++hits;
  }
  return static_cast<double>(hits) / cfg.impostor_count;
}

BootstrapResult summarize(std::vector<double> fars, double threshold) {
  BootstrapResult r;
  r.threshold = threshold;
  double s = 0.0;
  for (double f : fars) s += f;
  r.mean = s / static_cast<double>(fars.size());
  double ss = 0.0;
  for (double f : fars) ss += (f - r.mean) * (f - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(fars.size()));
  r.fars = std::move(fars);
  return r;
}

}  // namespace

double roc_auc(const ScoreSet& s) {
  if (s.genuine.empty() || s.impostor.empty()) throw EmptySide("ROC-AUC needs genuine and impostor scores");
  require_finite(s.genuine, "genuine");
  require_finite(s.impostor, "impostor");
  struct Item {
    double v;
    bool genuine;
  };
  std::vector<Item> all;
  all.reserve(s.genuine.size() + s.impostor.size());
  for (double v : s.genuine) all.push_back({v, true});
  for (double v : s.impostor) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (all[k].genuine) rank_sum += avg;
    i = j;
  }
  const double ng = static_cast<double>(s.genuine.size()), ni = static_cast<double>(s.impostor.size());
  return (rank_sum - ng * (ng + 1.0) / 2.0) / (ng * ni);
}

double threshold_at_tar(std::span<const double> genuine, double tar) {
  if (genuine.empty()) throw EmptySide("threshold needs genuine scores");
  require_rate(tar, "TAR", true);
  const auto g = sorted_desc(genuine);
  auto k = static_cast<std::size_t>(std::ceil(tar * static_cast<double>(g.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, g.size());
  return g[k - 1];
}

double far_at_tar(const ScoreSet& s, double tar) {
  if (s.impostor.empty()) throw EmptySide("FAR needs impostor scores");
  require_finite(s.impostor, "impostor");
  return one_far(s.impostor, threshold_at_tar(s.genuine, tar));
}

double tar_at_far(const ScoreSet& s, double far) {
  if (s.genuine.empty() || s.impostor.empty()) throw EmptySide("TAR needs genuine and impostor scores");
  require_rate(far, "FAR", true);
  require_finite(s.genuine, "genuine");
  const auto imp = sorted_desc(s.impostor);
  const auto allowed = static_cast<std::size_t>(std::floor(far * static_cast<double>(imp.size()) + 1e-9));
  if (allowed >= imp.size()) return 1.0;
  const double bar = imp[allowed];
  const auto accepted = std::count_if(s.genuine.begin(), s.genuine.end(), [bar](double g) { return g > bar; });
  return static_cast<double>(accepted) / static_cast<double>(s.genuine.size());
}

std::int64_t rule_of_30(double error_rate) {
  require_rate(error_rate, "error rate", false);
  const double q = 30.0 / error_rate;
  return static_cast<std::int64_t>(std::ceil(q * (1.0 - 1e-12)));
}

std::int64_t attempts_for_budget(int n, std::int64_t impostor_target) {
  if (n < 2) throw UsageError("comparison budget needs at least 2 users");
  if (impostor_target < 1) throw UsageError("impostor target must be positive");
  const std::int64_t pairs = static_cast<std::int64_t>(n) * (n - 1);
  return (impostor_target + pairs - 1) / pairs;
}

std::int64_t theoretical_far_denominator(int n, int m) {
  if (n < 2) throw UsageError("theoretical FAR needs at least 2 users");
  if (m < 1) throw UsageError("theoretical FAR needs at least 1 attempt per user");
  return static_cast<std::int64_t>(n) * (n - 1) * m;
}

double theoretical_far(int n, int m) { return 1.0 / static_cast<double>(theoretical_far_denominator(n, m)); }

void ComparisonBudget::validate() const {
  if (n < 2) throw UsageError("budget needs n >= 2 users");
  if (m < 1) throw UsageError("budget needs m >= 1 attempts");
  require_rate(target_far, "target FAR", false);
  require_rate(target_tar, "target TAR", false);
  require_rate(confidence, "confidence", false);
}

double parse_rate(const std::string& text) {
  auto num = [&](std::string_view s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
      throw UsageError("not a rate: '" + text + "'");
    return v;
  };
  const auto slash = text.find('/');
  const double v = slash == std::string::npos
                       ? num(text)
                       : num(std::string_view(text).substr(0, slash)) / num(std::string_view(text).substr(slash + 1));
  if (!std::isfinite(v) || v < 0.0) throw UsageError("not a rate: '" + text + "'");
  return v;
}

std::string one_over(double far) {
  if (!(far > 0.0)) return "0";
  return "1/" + std::to_string(std::llround(1.0 / far));
}

BootstrapResult bootstrap_far_serial(std::span<const double> genuine, std::span<const double> impostor_pool,
                                     const BootstrapConfig& cfg) {
  const Prepared p = prepare(genuine, impostor_pool, cfg);
  std::vector<double> fars(static_cast<std::size_t>(cfg.iterations));
  std::vector<std::size_t> idx(p.pool.size());
  for (int it = 0; it < cfg.iterations; ++it) fars[it] = iteration_far(p, cfg, it, idx);
  return summarize(std::move(fars), p.threshold);
}

BootstrapResult bootstrap_far(std::span<const double> genuine, std::span<const double> impostor_pool,
                              const BootstrapConfig& cfg) {
  const Prepared p = prepare(genuine, impostor_pool, cfg);
  std::vector<double> fars(static_cast<std::size_t>(cfg.iterations));
#pragma omp parallel
  {
    std::vector<std::size_t> idx(p.pool.size());
#pragma omp for schedule(static)
    for (int it = 0; it < cfg.iterations; ++it) fars[it] = iteration_far(p, cfg, it, idx);
  }
  return summarize(std::move(fars), p.threshold);
}

}  // namespace motionid::eval

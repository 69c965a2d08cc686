#include "motionid/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "motionid/binio.hpp"

namespace motionid::preprocess {

namespace {

std::int64_t seconds_to_ns(double s) {
  return static_cast<std::int64_t>(std::llround(s * kNanosPerSecond));
}

// Number of samples with timestamp in (lo, hi].
std::size_t count_in(const std::vector<SensorSample>& stream, std::int64_t lo, std::int64_t hi) {
  auto by_ts = [](const SensorSample& s, std::int64_t t) { return s.timestamp_ns <= t; };
  const auto a = std::lower_bound(stream.begin(), stream.end(), lo, by_ts);
  const auto b = std::lower_bound(stream.begin(), stream.end(), hi, by_ts);
  return static_cast<std::size_t>(b - a);
}

bool enough_readings(const SensorRecording& rec, const std::vector<SensorKind>& kinds,
                     std::int64_t lo, std::int64_t hi, std::size_t min_count) {
  for (auto k : kinds)
    if (count_in(rec.stream(k), lo, hi) < min_count) return false;
  return true;
}

std::vector<std::string> channels_of(const std::vector<SensorKind>& kinds) {
  std::vector<std::string> names;
  for (auto k : kinds)
    for (int c = 0; c < component_count(k); ++c) names.push_back(channel_name(k, c));
  return names;
}

Window regrid(const SensorRecording& rec, const std::vector<SensorKind>& kinds,
              const std::vector<std::string>& channels, std::int64_t end_ns, double rate,
              int timesteps, WindowLabel label) {
  const GridSpan span = grid_ending_at(end_ns, rate, timesteps);
  std::vector<float> data;
  data.reserve(channels.size() * timesteps);
  for (auto k : kinds) {
    const auto& stream = rec.stream(k);
    const auto grid = resample_to_grid(stream, rate, span);
    for (const auto& row : grid)
      for (double v : row) data.push_back(static_cast<float>(v));
  }
  return Window(rec.user_id(), label, end_ns, rate, timesteps, channels, std::move(data));
}

bool linear_is_zero(const SensorRecording& rec, const Window& w, std::int64_t lo, std::int64_t hi,
                    double threshold) {
  const auto& lin = rec.stream(SensorKind::LinearAcceleration);
  if (!lin.empty()) {
    auto by_ts = [](const SensorSample& s, std::int64_t t) { return s.timestamp_ns <= t; };
    auto it = std::lower_bound(lin.begin(), lin.end(), lo, by_ts);
    const auto end = std::lower_bound(lin.begin(), lin.end(), hi, by_ts);
    for (; it != end; ++it)
      for (int c = 0; c < 3; ++c)
        if (std::abs(it->values[c]) >= threshold) return false;
    return true;
  }
  // No linear-acceleration stream: derive it from accelerometer minus gravity.
  const int acc = w.find_row(channel_name(SensorKind::Accelerometer, 0));
  const int grav = w.find_row(channel_name(SensorKind::Gravity, 0));
  if (acc < 0 || grav < 0) return false;
  for (int c = 0; c < 3; ++c) {
    const auto a = w.row(acc + c);
    const auto g = w.row(grav + c);
    for (std::size_t t = 0; t < a.size(); ++t)
      if (std::abs(static_cast<double>(a[t]) - g[t]) >= threshold) return false;
  }
  return true;
}

}  // namespace

PatternWindowSet extract_pattern_windows(const SensorRecording& rec, const PatternConfig& cfg) {
  if (rec.events().empty()) throw NoEvents("recording " + rec.user_id() + " has no events");
  PatternWindowSet out;
  out.user_id = rec.user_id();
  out.device_id = rec.device_id();

  const auto kinds = rec.present_kinds();
  if (kinds.empty()) return out;
  const auto channels = channels_of(kinds);
  const int timesteps = static_cast<int>(std::llround(cfg.rate * cfg.window_s));
  const std::int64_t width = seconds_to_ns(cfg.window_s);
  const auto min_count = static_cast<std::size_t>(cfg.min_readings);
  const auto& events = rec.events();

  for (const auto& e : events) {
    if (e.kind != EventKind::UserPresent) continue;
    if (!enough_readings(rec, kinds, e.timestamp_ns - width, e.timestamp_ns, min_count)) continue;
    out.positives.push_back(regrid(rec, kinds, channels, e.timestamp_ns, cfg.rate, timesteps,
                                   WindowLabel::positive()));
  }

  bool screen_off = false;
  std::int64_t off_at = 0;
  for (const auto& e : events) {
    if (e.kind == EventKind::ScreenOff) {
      if (!screen_off) off_at = e.timestamp_ns;
      screen_off = true;
      continue;
    }
    if (!screen_off) continue;
    screen_off = false;
    // Drop the last window-length: it leads into the unlock.
    const std::int64_t usable_end = e.timestamp_ns - width;
    for (std::int64_t lo = off_at; lo + width <= usable_end; lo += width) {
      const std::int64_t hi = lo + width;
      if (!enough_readings(rec, kinds, lo, hi, min_count)) continue;
      Window w = regrid(rec, kinds, channels, hi, cfg.rate, timesteps, WindowLabel::negative());
      if (linear_is_zero(rec, w, lo, hi, cfg.motionless_threshold)) continue;
      out.negatives.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<VerificationAttempt> extract_verification_attempts(const SensorRecording& rec,
                                                               const VerificationConfig& cfg) {
  std::vector<VerificationAttempt> out;
  const auto kinds = rec.present_kinds();
  if (kinds.empty()) return out;
  const auto channels = channels_of(kinds);
  const int timesteps = static_cast<int>(std::llround(cfg.rate * cfg.segment_s));
  const std::int64_t width = seconds_to_ns(cfg.segment_s);
  const auto min_count = static_cast<std::size_t>(
      std::ceil(cfg.min_fraction * cfg.segment_s * cfg.expected_rate - 1e-9));

  for (const auto& e : rec.events()) {
    if (e.kind != EventKind::UserPresent) continue;
    if (!enough_readings(rec, kinds, e.timestamp_ns - width, e.timestamp_ns,
                         std::max<std::size_t>(min_count, 1)))
      continue;
    out.push_back({regrid(rec, kinds, channels, e.timestamp_ns, cfg.rate, timesteps,
                          WindowLabel::in_cluster(0))});
  }
  return out;
}

std::vector<VerificationAttempt> cluster_attempts(std::vector<VerificationAttempt> attempts,
                                                  std::span<const DeviceEvent> events,
                                                  double gap_s) {
  const std::size_t n = attempts.size();
  if (n < static_cast<std::size_t>(kClusterCount))
    throw TooFewAttempts("need at least 6 attempts to form clusters, got " + std::to_string(n));

  std::vector<std::int64_t> unlocks;
  for (const auto& e : events)
    if (e.kind == EventKind::UserPresent) unlocks.push_back(e.timestamp_ns);
  if (unlocks.empty())
    for (const auto& a : attempts) unlocks.push_back(a.unlock_ns());

  const std::int64_t gap = seconds_to_ns(gap_s);
  std::vector<int> event_cluster(unlocks.size(), 1);
  int clusters = unlocks.empty() ? 0 : 1;
  for (std::size_t i = 1; i < unlocks.size(); ++i) {
    if (unlocks[i] - unlocks[i - 1] > gap) ++clusters;
    event_cluster[i] = clusters;
  }

  // Every cluster must also be represented among the retained attempts.
  std::vector<int> assigned(n, 0);
  bool gap_rule = clusters == kClusterCount;
  if (gap_rule) {
    std::vector<int> seen(kClusterCount + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = std::upper_bound(unlocks.begin(), unlocks.end(), attempts[i].unlock_ns());
      const std::size_t idx = it == unlocks.begin() ? 0 : static_cast<std::size_t>(it - unlocks.begin()) - 1;
      assigned[i] = event_cluster[idx];
      seen[assigned[i]] = 1;
    }
    for (int c = 1; c <= kClusterCount; ++c) gap_rule = gap_rule && seen[c];
  }
  if (!gap_rule)
    for (std::size_t i = 0; i < n; ++i)
      assigned[i] = static_cast<int>(i * kClusterCount / n) + 1;

  for (std::size_t i = 0; i < n; ++i)
    attempts[i].segment.set_label(WindowLabel::in_cluster(assigned[i]));
  return attempts;
}

namespace {
constexpr char kWindowMagic[5] = "MIDW";
constexpr std::uint32_t kWindowVersion = 1;
}  // namespace

WindowFile make_window_file(std::string user_id, std::vector<Window> windows) {
  WindowFile f;
  f.user_id = std::move(user_id);
  if (!windows.empty()) {
    f.rate = windows.front().rate();
    f.timesteps = windows.front().timesteps();
    f.channels = windows.front().channels();
  }
  f.windows = std::move(windows);
  return f;
}

void write_window_file(const std::filesystem::path& path, const WindowFile& file) {
  for (const auto& w : file.windows)
    if (w.channels() != file.channels || w.timesteps() != file.timesteps)
      throw GridMismatch("all windows in a container must share channels and timesteps");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  using namespace binio;
  put_magic(out, kWindowMagic);
  put<std::uint32_t>(out, kWindowVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.channels.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.timesteps));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.windows.size()));
  put<double>(out, file.rate);
  put_string(out, file.user_id);
  for (const auto& c : file.channels) put_string(out, c);
  for (const auto& w : file.windows) {
    put<std::int32_t>(out, static_cast<std::int32_t>(w.label().kind));
    put<std::int32_t>(out, w.label().cluster);
    put<std::int64_t>(out, w.end_ns());
  }
  for (const auto& w : file.windows) put_floats(out, w.data());
  if (!out) throw IoError("failed writing " + path.string());
}

WindowFile read_window_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  using namespace binio;
  expect_magic(in, kWindowMagic);
  if (get<std::uint32_t>(in) != kWindowVersion) throw IoError("unsupported window container version");
  WindowFile f;
  const auto channels = get<std::uint32_t>(in);
  f.timesteps = static_cast<int>(get<std::uint32_t>(in));
  const auto count = get<std::uint32_t>(in);
  f.rate = get<double>(in);
  f.user_id = get_string(in);
  for (std::uint32_t c = 0; c < channels; ++c) f.channels.push_back(get_string(in));
  struct Entry {
    WindowLabel label;
    std::int64_t end_ns;
  };
  std::vector<Entry> labels(count);
  for (auto& e : labels) {
    const auto kind = get<std::int32_t>(in);
    if (kind < 0 || kind > 2) throw IoError("bad label kind in window container");
    e.label.kind = static_cast<LabelKind>(kind);
    e.label.cluster = get<std::int32_t>(in);
    e.end_ns = get<std::int64_t>(in);
  }
  const std::size_t per = static_cast<std::size_t>(channels) * f.timesteps;
  for (const auto& e : labels) {
    std::vector<float> data(per);
    get_floats(in, data);
    f.windows.emplace_back(f.user_id, e.label, e.end_ns, f.rate, f.timesteps, f.channels,
                           std::move(data));
  }
  return f;
}

}  // namespace motionid::preprocess

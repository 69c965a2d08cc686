#include "motionid/features.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "motionid/rng.hpp"

namespace motionid::features {

namespace {

using T = Transform;

std::vector<FeatureSpec> make_roster() {
  using K = SensorKind;
  const std::array<std::pair<const char*, K>, 3> base = {
      std::pair{"acc", K::Accelerometer}, std::pair{"gyro", K::Gyroscope},
      std::pair{"mag", K::Magnetometer}};
  std::vector<FeatureSpec> r;
  for (const auto& [n, k] : base) r.push_back({n, k, {}});
  r.push_back({"rotvec", K::RotationVector, {}});
  for (const auto& [n, k] : base) r.push_back({std::string(n) + "_earth", k, {T::Rotate}});
  r.push_back({"linacc", K::Accelerometer, {T::Linear}});
  r.push_back({"linacc_earth", K::Accelerometer, {T::Linear, T::Rotate}});
  for (const auto& [n, k] : base) r.push_back({std::string(n) + "_diff", k, {T::Diff}});
  for (const auto& [n, k] : base)
    r.push_back({std::string(n) + "_earth_diff", k, {T::Rotate, T::Diff}});
  for (const auto& [n, k] : base) r.push_back({std::string(n) + "_int", k, {T::Integral}});
  for (const auto& [n, k] : base)
    r.push_back({std::string(n) + "_earth_int", k, {T::Rotate, T::Integral}});
  r.push_back({"linacc_diff", K::Accelerometer, {T::Linear, T::Diff}});
  return r;
}

Series3 read_rows(const Window& w, SensorKind kind) {
  const int r = w.find_row(channel_name(kind, 0));
  if (r < 0)
    throw GridMismatch("attempt lacks " + std::string(to_string(kind)) + " channels");
  Series3 s;
  for (int c = 0; c < 3; ++c) {
    const auto row = w.row(r + c);
    s[c].assign(row.begin(), row.end());
  }
  return s;
}

Series3 rotate_series(const Series3& v, std::span<const Quaternion> rotation) {
  const std::size_t n = v[0].size();
  if (rotation.size() != n) throw GridMismatch("rotation series length differs from grid");
  Series3 out;
  for (auto& c : out) c.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Vec3 r = quat_rotate(rotation[t], {v[0][t], v[1][t], v[2][t]});
    for (int c = 0; c < 3; ++c) out[c][t] = r[c];
  }
  return out;
}

void check_same_grid(const Series3& a, const Series3& b) {
  for (int c = 0; c < 3; ++c)
    if (a[c].size() != b[c].size() || a[c].size() != a[0].size())
      throw GridMismatch("series are not on the same grid");
}

}  // namespace

std::string_view to_string(Transform t) {
  switch (t) {
    case T::Rotate: return "rotate";
    case T::Linear: return "linear";
    case T::Diff: return "diff";
    case T::Integral: return "integral";
  }
  return "?";
}

const std::vector<FeatureSpec>& feature_roster() {
  static const std::vector<FeatureSpec> roster = make_roster();
  return roster;
}

std::string roster_json() {
  nlohmann::ordered_json j;
  j["version"] = kRosterVersion;
  j["components"] = kComponents;
  auto& list = j["features"] = nlohmann::ordered_json::array();
  const auto& roster = feature_roster();
  for (std::size_t i = 0; i < roster.size(); ++i) {
    nlohmann::ordered_json f;
    f["index"] = i;
    f["name"] = roster[i].name;
    f["source"] = std::string(to_string(roster[i].source));
    auto& chain = f["transforms"] = nlohmann::ordered_json::array();
    for (auto t : roster[i].chain) chain.push_back(std::string(to_string(t)));
    list.push_back(std::move(f));
  }
  return j.dump(2);
}

std::vector<std::string> feature_channel_names() {
  static const char* axes[] = {"x", "y", "z"};
  std::vector<std::string> names;
  for (const auto& f : feature_roster())
    for (int c = 0; c < kComponents; ++c) names.push_back(f.name + "." + axes[c]);
  return names;
}

Series3 derive_linear_acceleration(const Series3& acc, const Series3& gravity) {
  check_same_grid(acc, gravity);
  Series3 out;
  for (int c = 0; c < 3; ++c) {
    out[c].resize(acc[c].size());
    for (std::size_t t = 0; t < acc[c].size(); ++t) out[c][t] = acc[c][t] - gravity[c][t];
  }
  return out;
}

Series3 derive_linear_acceleration(const Series3& acc, double alpha) {
  check_same_grid(acc, acc);
  Series3 gravity;
  for (int c = 0; c < 3; ++c) {
    gravity[c].resize(acc[c].size());
    double g = acc[c].empty() ? 0.0 : acc[c][0];
    for (std::size_t t = 0; t < acc[c].size(); ++t) {
      g = alpha * g + (1.0 - alpha) * acc[c][t];
      gravity[c][t] = g;
    }
  }
  return derive_linear_acceleration(acc, gravity);
}

std::vector<double> diff_feature(std::span<const double> x) {
  if (x.size() < 2) throw TooShort("difference feature needs at least 2 samples");
  std::vector<double> d(x.size());
  for (std::size_t t = 0; t + 1 < x.size(); ++t) d[t] = x[t + 1] - x[t];
  d.back() = d[x.size() - 2];
  return d;
}

std::vector<double> integral_feature(std::span<const double> x, double dt) {
  if (!(dt > 0.0)) throw GridMismatch("integration step must be positive");
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t t = 1; t < x.size(); ++t) out[t] = out[t - 1] + dt * (x[t - 1] + x[t]) / 2.0;
  return out;
}

FeatureTensor build_feature_tensor(const preprocess::VerificationAttempt& attempt) {
  const Window& w = attempt.segment;
  const int r = w.find_row(channel_name(SensorKind::RotationVector, 0));
  if (r < 0) throw GridMismatch("attempt lacks ROTATION_VECTOR channels");
  std::vector<Quaternion> rotation(w.timesteps());
  for (int t = 0; t < w.timesteps(); ++t)
    rotation[t] = Quaternion{w.row(r)[t], w.row(r + 1)[t], w.row(r + 2)[t], w.row(r + 3)[t]}
                      .normalized();
  return build_feature_tensor(attempt, rotation);
}

FeatureTensor build_feature_tensor(const preprocess::VerificationAttempt& attempt,
                                   std::span<const Quaternion> rotation) {
  const Window& w = attempt.segment;
  const int steps = w.timesteps();
  if (static_cast<int>(rotation.size()) != steps)
    throw GridMismatch("rotation series length differs from the attempt grid");
  const double dt = 1.0 / w.rate();

  const Series3 acc = read_rows(w, SensorKind::Accelerometer);
  const Series3 gyro = read_rows(w, SensorKind::Gyroscope);
  const Series3 mag = read_rows(w, SensorKind::Magnetometer);
  const bool has_gravity = w.find_row(channel_name(SensorKind::Gravity, 0)) >= 0;
  const Series3 linear = has_gravity
                             ? derive_linear_acceleration(acc, read_rows(w, SensorKind::Gravity))
                             : derive_linear_acceleration(acc);
  Series3 rotvec;
  for (int c = 0; c < 3; ++c) {
    rotvec[c].resize(steps);
    for (int t = 0; t < steps; ++t)
      rotvec[c][t] = c == 0 ? rotation[t].x : c == 1 ? rotation[t].y : rotation[t].z;
  }

  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(kFeatureRows) * steps);
  for (const auto& spec : feature_roster()) {
    Series3 s;
    switch (spec.source) {
      case SensorKind::Accelerometer: s = acc; break;
      case SensorKind::Gyroscope: s = gyro; break;
      case SensorKind::Magnetometer: s = mag; break;
      case SensorKind::RotationVector: s = rotvec; break;
      default: throw GridMismatch("unsupported feature source");
    }
    for (auto t : spec.chain) {
      switch (t) {
        case T::Rotate: s = rotate_series(s, rotation); break;
        case T::Linear: s = linear; break;
        case T::Diff:
          for (auto& c : s) c = diff_feature(c);
          break;
        case T::Integral:
          for (auto& c : s) c = integral_feature(c, dt);
          break;
      }
    }
    for (const auto& c : s)
      for (double v : c) data.push_back(static_cast<float>(v));
  }
  for (float v : data)
    if (!std::isfinite(v)) throw GridMismatch("non-finite feature value");
  return {Window(w.user_id(), w.label(), w.end_ns(), w.rate(), steps, feature_channel_names(),
                 std::move(data))};
}

FeatureTensor augment_at(const FeatureTensor& t, const AugmentConfig& cfg, int offset) {
  const Window& w = t.window;
  const int in_len = w.timesteps();
  const int out_len = cfg.crop_out_len;
  if (out_len < 1 || out_len > in_len)
    throw CropTooLong("crop of " + std::to_string(out_len) + " exceeds input length " +
                      std::to_string(in_len));
  Rng rng(cfg.seed);
  if (offset < 0) offset = std::uniform_int_distribution<int>(0, in_len - out_len)(rng);
  if (offset > in_len - out_len) throw CropTooLong("crop offset past the end of the input");

  std::vector<float> data(static_cast<std::size_t>(w.rows()) * out_len);
  for (int r = 0; r < w.rows(); ++r) {
    const auto src = w.row(r).subspan(offset, out_len);
    float* dst = data.data() + static_cast<std::size_t>(r) * out_len;
    std::copy(src.begin(), src.end(), dst);
    if (cfg.noise_fraction > 0.0) {
      double mean = 0.0;
      for (float v : src) mean += v;
      mean /= out_len;
      double var = 0.0;
      for (float v : src) var += (v - mean) * (v - mean);
      const double sigma = cfg.noise_fraction * std::sqrt(var / out_len);
      if (sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, sigma);
        for (int i = 0; i < out_len; ++i) dst[i] = static_cast<float>(dst[i] + noise(rng));
      }
    }
  }
  const std::int64_t end_ns =
      w.end_ns() - static_cast<std::int64_t>(std::llround(
                       static_cast<double>(in_len - out_len - offset) * kNanosPerSecond / w.rate()));
  return {Window(w.user_id(), w.label(), end_ns, w.rate(), out_len, w.channels(), std::move(data))};
}

FeatureTensor augment(const FeatureTensor& t, const AugmentConfig& cfg) {
  return augment_at(t, cfg, -1);
}

FeatureTensor eval_crop(const FeatureTensor& t, int crop_out_len) {
  AugmentConfig cfg;
  cfg.crop_out_len = crop_out_len;
  cfg.noise_fraction = 0.0;
  return augment_at(t, cfg, t.timesteps() - crop_out_len);
}

}  // namespace motionid::features

#include "motionid/core.hpp"

#include <algorithm>
#include <cmath>

namespace motionid {

namespace {

constexpr std::array<std::string_view, kSensorKindCount> kSensorNames = {
    "ACCELEROMETER", "LINEAR_ACCELERATION", "GRAVITY",
    "GYROSCOPE",     "MAGNETOMETER",        "ROTATION_VECTOR"};

constexpr std::array<std::string_view, 3> kEventNames = {"USER_PRESENT", "SCREEN_ON",
                                                         "SCREEN_OFF"};

constexpr std::array<char, 4> kAxisNames = {'x', 'y', 'z', 'w'};

}  // namespace

std::string_view to_string(SensorKind kind) { return kSensorNames[static_cast<int>(kind)]; }

std::optional<SensorKind> sensor_kind_from_string(std::string_view name) {
  for (int i = 0; i < kSensorKindCount; ++i)
    if (kSensorNames[i] == name) return static_cast<SensorKind>(i);
  return std::nullopt;
}

std::string_view to_string(EventKind kind) { return kEventNames[static_cast<int>(kind)]; }

std::optional<EventKind> event_kind_from_string(std::string_view name) {
  for (int i = 0; i < 3; ++i)
    if (kEventNames[i] == name) return static_cast<EventKind>(i);
  return std::nullopt;
}

void validate(const SensorSample& sample) {
  for (int c = 0; c < sample.size(); ++c)
    if (!std::isfinite(sample.values[c]))
      throw InvalidSample("non-finite component in " + std::string(to_string(sample.kind)) +
                          " sample at " + std::to_string(sample.timestamp_ns));
  for (int c = sample.size(); c < 4; ++c)
    if (sample.values[c] != 0.0)
      throw InvalidSample("unexpected 4th component for 3-component sensor");
}

SensorRecording::SensorRecording(std::string user_id, std::string device_id,
                                 std::vector<SensorSample> samples,
                                 std::vector<DeviceEvent> events)
    : user_id_(std::move(user_id)), device_id_(std::move(device_id)), events_(std::move(events)) {
  for (auto& s : samples) {
    validate(s);
    streams_[static_cast<int>(s.kind)].push_back(s);
  }
  for (auto& stream : streams_)
    std::stable_sort(stream.begin(), stream.end(),
                     [](const SensorSample& a, const SensorSample& b) {
                       return a.timestamp_ns < b.timestamp_ns;
                     });
  for (std::size_t i = 1; i < events_.size(); ++i)
    if (events_[i].timestamp_ns <= events_[i - 1].timestamp_ns)
      throw OrderError("event timestamps not strictly increasing at event " +
                       std::to_string(i));

  std::int64_t lo = INT64_MAX;
  std::int64_t hi = INT64_MIN;
  for (const auto& stream : streams_) {
    if (stream.empty()) continue;
    lo = std::min(lo, stream.front().timestamp_ns);
    hi = std::max(hi, stream.back().timestamp_ns);
  }
  for (const auto& e : events_)
    if (e.timestamp_ns < lo || e.timestamp_ns > hi) partial_ = true;
}

std::vector<SensorKind> SensorRecording::present_kinds() const {
  std::vector<SensorKind> kinds;
  for (auto k : kAllSensorKinds)
    if (has(k)) kinds.push_back(k);
  return kinds;
}

std::size_t SensorRecording::sample_count() const {
  std::size_t n = 0;
  for (const auto& s : streams_) n += s.size();
  return n;
}

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  if (n < 1e-12) return identity();
  const double s = std::sin(angle / 2) / n;
  return {axis[0] * s, axis[1] * s, axis[2] * s, std::cos(angle / 2)};
}

double Quaternion::norm() const { return std::sqrt(x * x + y * y + z * z + w * w); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (n < 1e-9) throw ZeroQuaternion("quaternion norm below 1e-9");
  return {x / n, y / n, z / n, w / n};
}

Quaternion Quaternion::inverse() const {
  const double n2 = x * x + y * y + z * z + w * w;
  if (n2 < 1e-18) throw ZeroQuaternion("quaternion norm below 1e-9");
  return {-x / n2, -y / n2, -z / n2, w / n2};
}

Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
          a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z};
}

Vec3 quat_rotate(const Quaternion& q, const Vec3& v) {
  const Quaternion u = q.normalized();
  // v' = v + 2w (u x v) + 2 u x (u x v), u = vector part
  const double tx = 2.0 * (u.y * v[2] - u.z * v[1]);
  const double ty = 2.0 * (u.z * v[0] - u.x * v[2]);
  const double tz = 2.0 * (u.x * v[1] - u.y * v[0]);
  return {v[0] + u.w * tx + (u.y * tz - u.z * ty),
          v[1] + u.w * ty + (u.z * tx - u.x * tz),
          v[2] + u.w * tz + (u.x * ty - u.y * tx)};
}

std::array<double, 9> rotation_matrix(const Quaternion& q) {
  const Quaternion u = q.normalized();
  const double xx = u.x * u.x, yy = u.y * u.y, zz = u.z * u.z;
  const double xy = u.x * u.y, xz = u.x * u.z, yz = u.y * u.z;
  const double wx = u.w * u.x, wy = u.w * u.y, wz = u.w * u.z;
  return {1 - 2 * (yy + zz), 2 * (xy - wz),     2 * (xz + wy),
          2 * (xy + wz),     1 - 2 * (xx + zz), 2 * (yz - wx),
          2 * (xz - wy),     2 * (yz + wx),     1 - 2 * (xx + yy)};
}

Window::Window(std::string user_id, WindowLabel label, std::int64_t end_ns, double rate,
               int timesteps, std::vector<std::string> channels, std::vector<float> data)
    : user_id_(std::move(user_id)),
      label_(label),
      end_ns_(end_ns),
      rate_(rate),
      timesteps_(timesteps),
      channels_(std::move(channels)),
      data_(std::move(data)) {
  if (timesteps_ < 1 || rate_ <= 0.0)
    throw GridMismatch("window needs a positive rate and at least one timestep");
  if (data_.size() != channels_.size() * static_cast<std::size_t>(timesteps_))
    throw GridMismatch("window data does not match channels x timesteps");
}

std::int64_t Window::start_ns() const { return grid_ending_at(end_ns_, rate_, timesteps_).t0_ns; }

std::span<const float> Window::row(int r) const {
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(r) * timesteps_,
                                               timesteps_);
}

int Window::find_row(std::string_view name) const {
  for (int i = 0; i < rows(); ++i)
    if (channels_[i] == name) return i;
  return -1;
}

std::string channel_name(SensorKind kind, int component) {
  std::string name(to_string(kind));
  name += '.';
  name += kAxisNames[component];
  return name;
}

int grid_length(GridSpan span, double rate) {
  const double seconds = static_cast<double>(span.t1_ns - span.t0_ns) / kNanosPerSecond;
  return static_cast<int>(std::llround(seconds * rate)) + 1;
}

GridSpan grid_ending_at(std::int64_t end_ns, double rate, int timesteps) {
  const auto width = static_cast<std::int64_t>(
      std::llround(static_cast<double>(timesteps - 1) * kNanosPerSecond / rate));
  return {end_ns - width, end_ns};
}

std::vector<std::vector<double>> resample_to_grid(std::span<const SensorSample> samples,
                                                  double rate, GridSpan span) {
  if (rate <= 0.0) throw GridMismatch("grid rate must be positive");
  if (span.t1_ns <= span.t0_ns) throw EmptySpan("grid span is empty");
  if (samples.empty() || samples.back().timestamp_ns < span.t0_ns ||
      samples.front().timestamp_ns > span.t1_ns)
    throw EmptySpan("no sample overlaps the span");

  const int comps = samples.front().size();
  const int length = grid_length(span, rate);
  const double step = kNanosPerSecond / rate;
  std::vector<std::vector<double>> out(comps, std::vector<double>(length));

  // Advance a segment cursor monotonically along the grid.
  std::size_t k = 0;
  for (int i = 0; i < length; ++i) {
    const double t = i * step;  // relative to t0
    auto rel = [&](std::size_t j) {
      return static_cast<double>(samples[j].timestamp_ns - span.t0_ns);
    };
    while (k + 1 < samples.size() && rel(k + 1) <= t) ++k;
    if (t <= rel(0)) {
      for (int c = 0; c < comps; ++c) out[c][i] = samples[0].values[c];
    } else if (k + 1 >= samples.size()) {
      for (int c = 0; c < comps; ++c) out[c][i] = samples.back().values[c];
    } else {
      const double ta = rel(k);
      const double tb = rel(k + 1);
      const double f = tb > ta ? (t - ta) / (tb - ta) : 0.0;
      for (int c = 0; c < comps; ++c) {
        const double a = samples[k].values[c];
        out[c][i] = a + f * (samples[k + 1].values[c] - a);
      }
    }
  }
  return out;
}

}  // namespace motionid

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "motionid/error.hpp"

namespace motionid {

using Vec3 = std::array<double, 3>;

constexpr std::int64_t kNanosPerSecond = 1'000'000'000;
constexpr double kDefaultRateHz = 50.0;

enum class SensorKind : int {
  Accelerometer = 0,  // gravity-inclusive
  LinearAcceleration = 1,
  Gravity = 2,
  Gyroscope = 3,
  Magnetometer = 4,
  RotationVector = 5,  // unit quaternion (x, y, z, w), device -> Earth
};

constexpr int kSensorKindCount = 6;

constexpr std::array<SensorKind, kSensorKindCount> kAllSensorKinds = {
    SensorKind::Accelerometer, SensorKind::LinearAcceleration, SensorKind::Gravity,
    SensorKind::Gyroscope,     SensorKind::Magnetometer,       SensorKind::RotationVector};

constexpr int component_count(SensorKind kind) {
  return kind == SensorKind::RotationVector ? 4 : 3;
}

std::string_view to_string(SensorKind kind);
std::optional<SensorKind> sensor_kind_from_string(std::string_view name);

struct SensorSample {
  std::int64_t timestamp_ns = 0;
  SensorKind kind = SensorKind::Accelerometer;
  // Unused trailing components are zero.
  std::array<double, 4> values{};

  int size() const { return component_count(kind); }
  friend bool operator==(const SensorSample&, const SensorSample&) = default;
};

// Throws InvalidSample when a component is not finite.
void validate(const SensorSample& sample);

enum class EventKind : int { UserPresent = 0, ScreenOn = 1, ScreenOff = 2 };

std::string_view to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(std::string_view name);

struct DeviceEvent {
  std::int64_t timestamp_ns = 0;
  EventKind kind = EventKind::UserPresent;
  friend bool operator==(const DeviceEvent&, const DeviceEvent&) = default;
};

// Multi-sensor recording of one user on one device. Immutable after
// construction: samples are grouped per sensor and stably sorted by
// timestamp; events must be strictly increasing (OrderError otherwise).
class SensorRecording {
 public:
  SensorRecording() = default;
  SensorRecording(std::string user_id, std::string device_id,
                  std::vector<SensorSample> samples, std::vector<DeviceEvent> events);

  const std::string& user_id() const { return user_id_; }
  const std::string& device_id() const { return device_id_; }
  const std::vector<SensorSample>& stream(SensorKind kind) const {
    return streams_[static_cast<int>(kind)];
  }
  bool has(SensorKind kind) const { return !stream(kind).empty(); }
  std::vector<SensorKind> present_kinds() const;
  const std::vector<DeviceEvent>& events() const { return events_; }
  std::size_t sample_count() const;
  // True when some event lies outside the sampled time range.
  bool partial() const { return partial_; }

  friend bool operator==(const SensorRecording&, const SensorRecording&) = default;

 private:
  std::string user_id_;
  std::string device_id_;
  std::array<std::vector<SensorSample>, kSensorKindCount> streams_;
  std::vector<DeviceEvent> events_;
  bool partial_ = false;
};

struct Quaternion {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 1.0;

  static Quaternion identity() { return {}; }
  static Quaternion from_axis_angle(const Vec3& axis, double angle);

  double norm() const;
  Quaternion normalized() const;  // ZeroQuaternion if norm < 1e-9
  Quaternion conjugate() const { return {-x, -y, -z, w}; }
  Quaternion inverse() const;

  friend Quaternion operator*(const Quaternion& a, const Quaternion& b);
  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

// Returns q v q^-1. The rotation-vector quaternion maps device-frame vectors
// to the Earth frame.
Vec3 quat_rotate(const Quaternion& q, const Vec3& v);

// 3x3 row-major rotation matrix of a (normalized) quaternion.
std::array<double, 9> rotation_matrix(const Quaternion& q);

enum class LabelKind : int { UnlockPositive = 0, UnlockNegative = 1, Cluster = 2 };

struct WindowLabel {
  LabelKind kind = LabelKind::UnlockPositive;
  int cluster = 0;  // 1..6 when kind == Cluster, 0 = not yet assigned

  static WindowLabel positive() { return {LabelKind::UnlockPositive, 0}; }
  static WindowLabel negative() { return {LabelKind::UnlockNegative, 0}; }
  static WindowLabel in_cluster(int c) { return {LabelKind::Cluster, c}; }
  friend bool operator==(const WindowLabel&, const WindowLabel&) = default;
};

// Fixed-grid multi-channel signal: rows x timesteps, row-major, all rows on
// one uniform grid whose last point sits at end_ns.
class Window {
 public:
  Window() = default;
  Window(std::string user_id, WindowLabel label, std::int64_t end_ns, double rate,
         int timesteps, std::vector<std::string> channels, std::vector<float> data);

  const std::string& user_id() const { return user_id_; }
  WindowLabel label() const { return label_; }
  void set_label(WindowLabel label) { label_ = label; }
  std::int64_t end_ns() const { return end_ns_; }
  std::int64_t start_ns() const;
  double rate() const { return rate_; }
  int timesteps() const { return timesteps_; }
  int rows() const { return static_cast<int>(channels_.size()); }
  const std::vector<std::string>& channels() const { return channels_; }
  const std::vector<float>& data() const { return data_; }

  std::span<const float> row(int r) const;
  // Row index of a named channel, or -1.
  int find_row(std::string_view name) const;

  friend bool operator==(const Window&, const Window&) = default;

 private:
  std::string user_id_;
  WindowLabel label_;
  std::int64_t end_ns_ = 0;
  double rate_ = kDefaultRateHz;
  int timesteps_ = 0;
  std::vector<std::string> channels_;
  std::vector<float> data_;
};

// Channel name of one sensor component, e.g. "ACCELEROMETER.x".
std::string channel_name(SensorKind kind, int component);

struct GridSpan {
  std::int64_t t0_ns;
  std::int64_t t1_ns;
};

// Closed uniform grid t0, t0 + 1/rate, ... covering [t0, t1]:
// round((t1 - t0) * rate) + 1 points.
int grid_length(GridSpan span, double rate);

// Span of the grid with `timesteps` points at `rate` whose last point is end_ns.
GridSpan grid_ending_at(std::int64_t end_ns, double rate, int timesteps);

// Linear interpolation of one sensor stream onto the closed grid over span.
// Values outside the sampled range are clamped to the nearest sample.
// Result is components x grid_length. EmptySpan when the sampled time range
// [first, last] does not intersect the span.
std::vector<std::vector<double>> resample_to_grid(std::span<const SensorSample> samples,
                                                  double rate, GridSpan span);

}  // namespace motionid

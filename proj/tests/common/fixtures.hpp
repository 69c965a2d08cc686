#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "motionid/core.hpp"

// Hand-counted pattern-window fixtures. Times are in seconds; sensors are
// sampled on exact nanosecond grids so window membership is unambiguous.
namespace testing {

using motionid::DeviceEvent;
using motionid::EventKind;
using motionid::SensorKind;
using motionid::SensorRecording;
using motionid::SensorSample;
using motionid::Vec3;

inline std::int64_t ns(double s) { return static_cast<std::int64_t>(std::llround(s * 1e9)); }

using Signal = std::function<Vec3(double)>;

inline Vec3 motion(double t) { return {0.5 * std::sin(3 * t) + 0.7, 0.3, -0.2}; }

// Samples every `step_ns` over [t0, t1]; `keep` filters sample times.
inline void add_stream(std::vector<SensorSample>& out, SensorKind kind, double t0, double t1, std::int64_t step_ns,
                       const Signal& f, const std::function<bool(double)>& keep = {}) {
  for (std::int64_t t = ns(t0); t <= ns(t1); t += step_ns) {
    const double ts = static_cast<double>(t) / 1e9;
    if (keep && !keep(ts)) continue;
    const Vec3 v = f(ts);
    out.push_back({t, kind, {v[0], v[1], v[2], 0.0}});
  }
}

constexpr std::int64_t k50Hz = 20'000'000;

// accelerometer, gyroscope and linear acceleration at 50 Hz over [t0, t1]
inline std::vector<SensorSample> dense(double t0, double t1, const Signal& linear = motion) {
  std::vector<SensorSample> s;
  add_stream(s, SensorKind::Accelerometer, t0, t1, k50Hz, [](double t) { return Vec3{0.1 * t, 0.2, 9.81}; });
  add_stream(s, SensorKind::Gyroscope, t0, t1, k50Hz, [](double t) { return Vec3{0.01, std::cos(t), 0.0}; });
  add_stream(s, SensorKind::LinearAcceleration, t0, t1, k50Hz, linear);
  return s;
}

inline std::vector<DeviceEvent> events(std::initializer_list<std::pair<double, EventKind>> list) {
  std::vector<DeviceEvent> e;
  for (const auto& [t, k] : list) e.push_back({ns(t), k});
  return e;
}

struct PatternFixture {
  std::string name;
  SensorRecording rec;
  std::size_t positives;
  std::size_t negatives;
};

inline std::vector<PatternFixture> pattern_fixtures() {
  constexpr auto UP = EventKind::UserPresent;
  constexpr auto ON = EventKind::ScreenOn;
  constexpr auto OFF = EventKind::ScreenOff;
  std::vector<PatternFixture> f;
  auto rec = [](std::vector<SensorSample> s, std::vector<DeviceEvent> e) {
    return SensorRecording("fx", "dev", std::move(s), std::move(e));
  };

  {
    std::vector<DeviceEvent> e;
    for (int i = 1; i <= 10; ++i) e.push_back({ns(5.0 * i), UP});
    f.push_back({"ten unlocks, dense sampling", rec(dense(0, 60), e), 10, 0});
  }
  {
    // gyro only over (8.4, 10] before the unlock at 10: 80 readings
    std::vector<SensorSample> s;
    add_stream(s, SensorKind::Accelerometer, 0, 30, k50Hz, motion);
    add_stream(s, SensorKind::LinearAcceleration, 0, 30, k50Hz, motion);
    add_stream(s, SensorKind::Gyroscope, 0, 30, k50Hz, motion, [](double t) { return t < 6.0 || t > 8.41; });
    f.push_back({"80 gyro readings drop a positive", rec(s, events({{10, UP}, {20, UP}})), 1, 0});
  }
  {
    // gyro every 30 ms: 100 readings in (0, 3] and (3, 6]; 99 in (9, 12]
    std::vector<SensorSample> s;
    add_stream(s, SensorKind::Accelerometer, 0, 30, k50Hz, motion);
    add_stream(s, SensorKind::Gyroscope, 0, 30, 30'000'000, motion,
               [](double t) { return std::abs(t - 10.5) > 1e-6; });
    f.push_back({"exactly 100 readings kept, 99 dropped", rec(s, events({{3, UP}, {6, UP}, {12, UP}})), 2, 0});
  }
  f.push_back({"screen-off interval of exactly 3 s", rec(dense(0, 30), events({{10, OFF}, {13, ON}, {14, UP}})), 1, 0});
  f.push_back({"9.5 s interval gives 2 tiles", rec(dense(0, 30), events({{5, OFF}, {14.5, ON}, {15, UP}})), 1, 2});
  f.push_back({"12 s interval, last tile ends on the discard", rec(dense(0, 30), events({{2, OFF}, {14, ON}, {16, UP}})),
               1, 3});
  {
    // zero over [4.9, 11.1] except one reading at 9.5
    auto lin = [](double t) {
      if (t >= 4.9 && t <= 11.1 && std::abs(t - 9.5) > 1e-6) return Vec3{0, 0, 0};
      return motion(t);
    };
    f.push_back({"motionless tile dropped, single reading keeps a tile",
                 rec(dense(0, 30, lin), events({{2, OFF}, {14, ON}, {16, UP}})), 1, 2});
  }
  {
    auto lin = [](double t) { return t < 18 ? Vec3{5e-4, -5e-4, 5e-4} : Vec3{2e-3, 0, 0}; };
    f.push_back({"dither below threshold counts as motionless",
                 rec(dense(0, 30, lin), events({{2, OFF}, {14, ON}, {16, UP}, {20, OFF}, {26, ON}, {27, UP}})), 2, 1});
  }
  f.push_back({"interval closed by an unlock", rec(dense(0, 30), events({{3, OFF}, {12.5, UP}})), 1, 2});
  f.push_back({"repeated screen-off keeps the first", rec(dense(0, 30), events({{2, OFF}, {6, OFF}, {14, ON}, {16, UP}})),
               1, 3});
  {
    auto s = dense(0, 30);
    add_stream(s, SensorKind::Magnetometer, 0, 30, k50Hz, [](double) { return Vec3{20, -5, 40}; },
               [](double t) { return t < 5.5 || t > 7.5; });
    f.push_back({"magnetometer dropout inside a tile", rec(s, events({{2, OFF}, {14, ON}, {16, UP}})), 1, 2});
  }
  {
    // no linear stream: acc equals gravity until 8.05
    std::vector<SensorSample> s;
    add_stream(s, SensorKind::Gravity, 0, 30, k50Hz, [](double) { return Vec3{0, 0, 9.81}; });
    add_stream(s, SensorKind::Accelerometer, 0, 30, k50Hz,
               [](double t) { return t <= 8.05 ? Vec3{0, 0, 9.81} : Vec3{0.5, 0, 9.81}; });
    f.push_back({"derived linear acceleration", rec(s, events({{2, OFF}, {14, ON}, {16, UP}})), 1, 1});
  }
  f.push_back({"unclosed trailing screen-off", rec(dense(0, 30), events({{3, ON}, {5, UP}, {10, OFF}})), 1, 0});
  f.push_back({"sensors outside every window", rec(dense(0, 1), events({{2, OFF}, {14, ON}, {16, UP}})), 0, 0});
  return f;
}

}  // namespace testing

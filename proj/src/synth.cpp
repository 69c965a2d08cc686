#include "motionid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

#include "motionid/rng.hpp"

namespace motionid::ingest {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGravity = 9.80665;
constexpr Vec3 kEarthField{0.0, 22.0, -40.0};  // uT, north + down component
constexpr std::int64_t kOriginNs = 1'000 * kNanosPerSecond;

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::int64_t to_ns(double seconds) {
  return static_cast<std::int64_t>(std::llround(seconds * kNanosPerSecond));
}

// Quintic minimum-jerk profile and its first two derivatives on tau in [0, 1].
double quintic(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }
double quintic_d1(double t) { return 30.0 * t * t * (1.0 - t) * (1.0 - t); }
double quintic_d2(double t) { return 60.0 * t * (1.0 + t * (-3.0 + 2.0 * t)); }

// Euler angles (yaw about z, pitch about x, roll about y); device -> Earth
// orientation q = qz(yaw) * qx(pitch) * qy(roll).
Quaternion orientation(const Vec3& a) {
  return Quaternion::from_axis_angle({0, 0, 1}, a[0]) *
         Quaternion::from_axis_angle({1, 0, 0}, a[1]) *
         Quaternion::from_axis_angle({0, 1, 0}, a[2]);
}

// Body-frame angular velocity of the z-x-y Euler parameterisation.
Vec3 body_rate(const Vec3& a, const Vec3& rate) {
  const double sp = std::sin(a[1]), cp = std::cos(a[1]);
  const double sr = std::sin(a[2]), cr = std::cos(a[2]);
  const Vec3 u{rate[1], rate[0] * sp, rate[0] * cp};
  return {cr * u[0] - sr * u[2], u[1] + rate[2], sr * u[0] + cr * u[2]};
}

Vec3 rotate_transpose(const std::array<double, 9>& r, const Vec3& v) {
  return {r[0] * v[0] + r[3] * v[1] + r[6] * v[2], r[1] * v[0] + r[4] * v[1] + r[7] * v[2],
          r[2] * v[0] + r[5] * v[1] + r[8] * v[2]};
}

Vec3 rotate_z(const Vec3& v, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]};
}

enum class SegmentType { Rest, Hold, Transition, Carry };

struct Segment {
  SegmentType type = SegmentType::Rest;
  std::int64_t t0 = 0;
  std::int64_t t1 = 0;
  Vec3 from{};
  Vec3 to{};
  Vec3 displacement{};  // Transition, Earth frame, m
  double gain0 = 0.0;   // tremor gain at segment start / end
  double gain1 = 0.0;
  double step_freq = 0.0;  // Carry
  Vec3 sway{};
  Vec3 bounce{};
  double phase = 0.0;          // Carry gait phase
  double tremor_phase = 0.0;   // per-episode tremor phase
  Vec3 mag_offset{};           // Earth-frame local field perturbation
};

struct Kinematics {
  Vec3 angles{};
  Vec3 rates{};
  Vec3 lin_earth{};
  double tremor_gain = 0.0;
  bool moving = false;
};

Kinematics evaluate(const Segment& s, std::int64_t t) {
  Kinematics k;
  const double span = static_cast<double>(s.t1 - s.t0) / kNanosPerSecond;
  const double local = static_cast<double>(t - s.t0) / kNanosPerSecond;
  switch (s.type) {
    case SegmentType::Rest:
      k.angles = s.from;
      break;
    case SegmentType::Hold:
      k.angles = s.from;
      k.tremor_gain = s.gain0;
      k.moving = true;
      break;
    case SegmentType::Transition: {
      const double tau = std::clamp(local / span, 0.0, 1.0);
      const double p = quintic(tau), v = quintic_d1(tau) / span, a = quintic_d2(tau) / (span * span);
      for (int i = 0; i < 3; ++i) {
        const double delta = s.to[i] - s.from[i];
        k.angles[i] = s.from[i] + delta * p;
        k.rates[i] = delta * v;
        k.lin_earth[i] = s.displacement[i] * a;
      }
      k.tremor_gain = s.gain0 + (s.gain1 - s.gain0) * p;
      k.moving = true;
      break;
    }
    case SegmentType::Carry: {
      const double w = 2.0 * kPi * s.step_freq;
      const double sn = std::sin(w * local + s.phase), cs = std::cos(w * local + s.phase);
      const double sn2 = std::sin(2.0 * (w * local + s.phase));
      for (int i = 0; i < 3; ++i) {
        k.angles[i] = s.from[i] + s.sway[i] * sn;
        k.rates[i] = s.sway[i] * w * cs;
      }
      k.lin_earth = {s.bounce[0] * sn, s.bounce[1] * sn, s.bounce[2] * sn2};
      k.tremor_gain = s.gain0;
      k.moving = true;
      break;
    }
  }
  return k;
}

class Timeline {
 public:
  explicit Timeline(std::int64_t start) : cursor_(start) {}

  std::int64_t now() const { return cursor_; }

  Segment& push(SegmentType type, double seconds) {
    Segment s;
    s.type = type;
    s.t0 = cursor_;
    s.t1 = cursor_ + std::max<std::int64_t>(1, to_ns(seconds));
    cursor_ = s.t1;
    segments_.push_back(s);
    return segments_.back();
  }

  const Segment& at(std::int64_t t) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](std::int64_t v, const Segment& s) { return v < s.t1; });
    if (it == segments_.end()) return segments_.back();
    return *it;
  }

 private:
  std::int64_t cursor_;
  std::vector<Segment> segments_;
};

struct SensorSuite {
  bool linear = false;        // emit LINEAR_ACCELERATION
  Vec3 accel_bias{};          // device-specific accelerometer bias
};

struct Interval {
  std::int64_t t0;
  std::int64_t t1;
};

// Samples every sensor on its own jittered ~rate clock over each interval.
std::vector<SensorSample> sample_timeline(const Timeline& tl, const SynthUserProfile& p,
                                          const std::vector<Interval>& intervals,
                                          const SensorSuite& suite, const NoiseConfig& noise,
                                          double rate, std::uint64_t seed) {
  std::vector<SensorKind> kinds = {SensorKind::Accelerometer, SensorKind::Gravity,
                                   SensorKind::Gyroscope, SensorKind::Magnetometer,
                                   SensorKind::RotationVector};
  if (suite.linear) kinds.insert(kinds.begin() + 1, SensorKind::LinearAcceleration);

  const double step_ns = kNanosPerSecond / rate;
  std::vector<SensorSample> out;
  for (auto kind : kinds) {
    Rng clock = make_rng(seed, 100 + static_cast<int>(kind));
    Rng noise_rng = make_rng(seed, 200 + static_cast<int>(kind));
    for (const auto& iv : intervals) {
      auto t = iv.t0 + static_cast<std::int64_t>(uniform(clock, 0.0, step_ns));
      for (; t <= iv.t1;
           t += static_cast<std::int64_t>(std::llround(step_ns * uniform(clock, 0.9, 1.1)))) {
        const Segment& seg = tl.at(t);
        const Kinematics k = evaluate(seg, t);
        const Quaternion q = orientation(k.angles);
        const auto r = rotation_matrix(q);
        const double ts = static_cast<double>(t - kOriginNs) / kNanosPerSecond;

        Vec3 tremor{};
        Vec3 tremor_rate{};
        if (k.tremor_gain > 0.0) {
          for (int axis = 0; axis < 3; ++axis) {
            for (int h = 0; h < 3; ++h) {
              const double arg = 2.0 * kPi * p.tremor_freqs[h] * ts + p.phase_offsets[axis] +
                                 1.3 * h + seg.tremor_phase;
              tremor[axis] += k.tremor_gain * p.tremor_weights[h] * std::sin(arg);
              tremor_rate[axis] += k.tremor_gain * 0.4 * p.tremor_weights[h] * std::cos(arg);
            }
          }
        }

        SensorSample s;
        s.timestamp_ns = t;
        s.kind = kind;
        Vec3 v{};
        switch (kind) {
          case SensorKind::Accelerometer: {
            const Vec3 lin = rotate_transpose(r, k.lin_earth);
            const Vec3 g = rotate_transpose(r, {0.0, 0.0, kGravity});
            for (int i = 0; i < 3; ++i)
              v[i] = lin[i] + g[i] + tremor[i] + suite.accel_bias[i] +
                     gaussian(noise_rng, 0.0, noise.accel);
            break;
          }
          case SensorKind::LinearAcceleration: {
            const Vec3 lin = rotate_transpose(r, k.lin_earth);
            for (int i = 0; i < 3; ++i)
              v[i] = k.moving ? lin[i] + tremor[i] + gaussian(noise_rng, 0.0, noise.accel) : 0.0;
            break;
          }
          case SensorKind::Gravity:
            v = rotate_transpose(r, {0.0, 0.0, kGravity});
            break;
          case SensorKind::Gyroscope: {
            const Vec3 w = body_rate(k.angles, k.rates);
            for (int i = 0; i < 3; ++i)
              v[i] = w[i] + tremor_rate[i] + gaussian(noise_rng, 0.0, noise.gyro);
            break;
          }
          case SensorKind::Magnetometer: {
            Vec3 field = kEarthField;
            for (int i = 0; i < 3; ++i) field[i] += seg.mag_offset[i];
            const Vec3 m = rotate_transpose(r, field);
            for (int i = 0; i < 3; ++i) v[i] = m[i] + gaussian(noise_rng, 0.0, noise.mag);
            break;
          }
          case SensorKind::RotationVector:
            break;
        }
        if (kind == SensorKind::RotationVector) {
          s.values = {quantize(q.x), quantize(q.y), quantize(q.z), quantize(q.w)};
        } else {
          s.values = {quantize(v[0]), quantize(v[1]), quantize(v[2]), 0.0};
        }
        out.push_back(s);
      }
    }
  }
  return out;
}

// Lift from `from` to the user's lifted pose; returns the target angles.
Vec3 lifted_pose(const SynthUserProfile& p, double base_yaw, Rng& rng) {
  return {base_yaw + p.yaw_twist + gaussian(rng, 0.0, p.angle_sigma),
          p.final_pitch + gaussian(rng, 0.0, p.angle_sigma),
          p.final_roll + gaussian(rng, 0.0, p.angle_sigma)};
}

double lift_duration(const SynthUserProfile& p, Rng& rng) {
  return std::clamp(gaussian(rng, p.lift_duration_mean, p.lift_duration_sigma), 0.5, 3.0);
}

Vec3 lift_displacement(const SynthUserProfile& p, double yaw, Rng& rng) {
  const double amp = p.lift_amplitude * uniform(rng, 0.95, 1.05);
  Vec3 d = p.lift_vector;
  for (auto& c : d) c *= amp;
  return rotate_z(d, yaw);
}

}  // namespace

SynthUserProfile SynthUserProfile::from_seed(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  SynthUserProfile p;
  p.seed = seed;
  p.lift_amplitude = uniform(rng, 0.7, 1.3);
  p.lift_vector = {uniform(rng, -0.12, 0.12), uniform(rng, 0.05, 0.25), uniform(rng, 0.2, 0.4)};
  p.lift_duration_mean = uniform(rng, 0.9, 1.8);
  p.lift_duration_sigma = uniform(rng, 0.03, 0.08);
  for (auto& ph : p.phase_offsets) ph = uniform(rng, 0.0, 2.0 * kPi);
  for (auto& f : p.tremor_freqs) f = uniform(rng, 2.0, 8.0);
  for (auto& w : p.tremor_weights) w = uniform(rng, 0.05, 0.3);
  p.final_pitch = uniform(rng, 25.0, 65.0) * kPi / 180.0;
  p.final_roll = uniform(rng, -25.0, 25.0) * kPi / 180.0;
  p.yaw_twist = uniform(rng, -20.0, 20.0) * kPi / 180.0;
  p.angle_sigma = 2.0 * kPi / 180.0;
  p.hold_delay = uniform(rng, 0.15, 0.45);
  return p;
}

void SynthUserProfile::validate() const {
  if (lift_duration_mean < 0.5 || lift_duration_mean > 3.0)
    throw InvalidSample("lift duration mean must lie in [0.5, 3.0] s");
  if (lift_duration_sigma < 0.0 || angle_sigma < 0.0)
    throw InvalidSample("profile sigmas must be non-negative");
  for (double f : tremor_freqs)
    if (f <= 0.0) throw InvalidSample("tremor frequencies must be positive");
  if (hold_delay < 0.0) throw InvalidSample("hold delay must be non-negative");
}

std::vector<SynthUserProfile> make_profiles(int users, std::uint64_t seed) {
  std::vector<SynthUserProfile> profiles;
  for (int i = 0; i < users; ++i)
    profiles.push_back(SynthUserProfile::from_seed(derive_seed(seed, static_cast<unsigned>(i))));
  return profiles;
}

std::string synth_user_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "user_%02d", index);
  return buf;
}

SensorRecording synth_specific_motion_recording(const SynthUserProfile& p,
                                                const SpecificMotionConfig& cfg,
                                                std::string user_id, std::string device_id) {
  p.validate();
  if (cfg.lifts_per_location < 1 || cfg.locations < 1)
    throw InvalidSample("need at least one location and one lift per location");
  Rng rng = make_rng(p.seed, 1);
  Timeline tl(kOriginNs);
  std::vector<Interval> active;
  std::vector<DeviceEvent> events;

  for (int loc = 0; loc < cfg.locations; ++loc) {
    const double yaw = uniform(rng, -kPi, kPi);
    const Vec3 mag_offset{uniform(rng, -6.0, 6.0), uniform(rng, -6.0, 6.0),
                          uniform(rng, -6.0, 6.0)};
    const Vec3 table{yaw, 0.0, 0.0};
    for (int lift = 0; lift < cfg.lifts_per_location; ++lift) {
      const double duration = lift_duration(p, rng);
      const double hold = p.hold_delay * uniform(rng, 0.8, 1.2);
      const double lead = std::max(0.3, 2.6 - duration - hold);
      const Vec3 pose = lifted_pose(p, yaw, rng);
      const Vec3 disp = lift_displacement(p, yaw, rng);
      const double tremor_phase = uniform(rng, 0.0, 2.0 * kPi);

      const std::int64_t start = tl.now();
      {
        auto& s = tl.push(SegmentType::Rest, lead);
        s.from = table;
        s.mag_offset = mag_offset;
      }
      {
        auto& s = tl.push(SegmentType::Transition, duration);
        s.from = table;
        s.to = pose;
        s.displacement = disp;
        s.gain0 = 0.0;
        s.gain1 = 1.0;
        s.tremor_phase = tremor_phase;
        s.mag_offset = mag_offset;
      }
      {
        auto& s = tl.push(SegmentType::Hold, hold);
        s.from = pose;
        s.gain0 = 1.0;
        s.tremor_phase = tremor_phase;
        s.mag_offset = mag_offset;
      }
      const std::int64_t unlock = tl.now();
      {
        auto& s = tl.push(SegmentType::Hold, 0.4);
        s.from = pose;
        s.gain0 = 1.0;
        s.tremor_phase = tremor_phase;
        s.mag_offset = mag_offset;
      }
      active.push_back({start, tl.now()});
      {
        auto& s = tl.push(SegmentType::Transition, 1.0);
        s.from = pose;
        s.to = table;
        for (int i = 0; i < 3; ++i) s.displacement[i] = -disp[i];
        s.gain0 = 1.0;
        s.tremor_phase = tremor_phase;
        s.mag_offset = mag_offset;
      }
      events.push_back({unlock - to_ns(0.05), EventKind::ScreenOn});
      events.push_back({unlock, EventKind::UserPresent});
      events.push_back({unlock + to_ns(0.3), EventKind::ScreenOff});

      double pause = uniform(rng, 1.5, 3.0);
      if (lift + 1 == cfg.lifts_per_location && loc + 1 < cfg.locations)
        pause += uniform(rng, cfg.rest_min_s, cfg.rest_max_s);
      auto& rest = tl.push(SegmentType::Rest, pause);
      rest.from = table;
      rest.mag_offset = mag_offset;
    }
  }

  SensorSuite suite;
  auto samples = sample_timeline(tl, p, active, suite, cfg.noise, cfg.rate, derive_seed(p.seed, 2));
  return SensorRecording(std::move(user_id), std::move(device_id), std::move(samples),
                         std::move(events));
}

SensorRecording synth_all_motions_recording(const SynthUserProfile& p,
                                            const AllMotionsConfig& cfg, std::string user_id,
                                            std::string device_id) {
  p.validate();
  if (cfg.days < 1 || cfg.unlocks_per_day < 1)
    throw InvalidSample("need at least one day and one unlock per day");
  const std::uint64_t stream = derive_seed(p.seed, fnv1a(device_id));
  Rng rng = make_rng(stream, 3);
  SensorSuite suite;
  suite.linear = true;
  suite.accel_bias = {uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05),
                      uniform(rng, -0.05, 0.05)};

  Timeline tl(kOriginNs);
  std::vector<DeviceEvent> events;
  const int cycles = cfg.days * cfg.unlocks_per_day;
  for (int c = 0; c < cycles; ++c) {
    events.push_back({tl.now(), EventKind::ScreenOff});
    const double yaw = uniform(rng, -kPi, kPi);
    const Vec3 table{yaw, 0.0, 0.0};
    const Vec3 carry{uniform(rng, -kPi, kPi), uniform(rng, 1.2, 1.6), uniform(rng, -0.3, 0.3)};

    tl.push(SegmentType::Rest, uniform(rng, 4.0, 10.0)).from = table;
    {
      auto& s = tl.push(SegmentType::Transition, 1.0);
      s.from = table;
      s.to = carry;
      s.displacement = {0.0, 0.0, 0.8};
      s.gain1 = 0.5;
    }
    {
      auto& s = tl.push(SegmentType::Carry, uniform(rng, 8.0, 20.0));
      s.from = carry;
      s.step_freq = uniform(rng, 1.6, 2.2);
      s.sway = {0.15, 0.1, 0.1};
      s.bounce = {uniform(rng, 0.5, 1.0), uniform(rng, 0.5, 1.0), uniform(rng, 1.5, 3.0)};
      s.phase = uniform(rng, 0.0, 2.0 * kPi);
      s.gain0 = 0.5;
      s.tremor_phase = uniform(rng, 0.0, 2.0 * kPi);
    }
    {
      auto& s = tl.push(SegmentType::Transition, 1.0);
      s.from = carry;
      s.to = table;
      s.displacement = {0.0, 0.0, -0.8};
      s.gain0 = 0.5;
    }
    tl.push(SegmentType::Rest, uniform(rng, 3.0, 6.0)).from = table;

    const double tremor_phase = uniform(rng, 0.0, 2.0 * kPi);
    const Vec3 reach{yaw, 0.15, 0.0};
    {
      auto& s = tl.push(SegmentType::Transition, 2.0);
      s.from = table;
      s.to = reach;
      s.displacement = {0.05, 0.05, 0.03};
      s.gain1 = 0.3;
      s.tremor_phase = tremor_phase;
    }
    const Vec3 pose = lifted_pose(p, yaw, rng);
    {
      auto& s = tl.push(SegmentType::Transition, lift_duration(p, rng));
      s.from = reach;
      s.to = pose;
      s.displacement = lift_displacement(p, yaw, rng);
      s.gain0 = 0.3;
      s.gain1 = 1.0;
      s.tremor_phase = tremor_phase;
    }
    {
      auto& s = tl.push(SegmentType::Hold, p.hold_delay * uniform(rng, 0.8, 1.2));
      s.from = pose;
      s.gain0 = 1.0;
      s.tremor_phase = tremor_phase;
    }
    const std::int64_t unlock = tl.now();
    events.push_back({unlock - to_ns(0.1), EventKind::ScreenOn});
    events.push_back({unlock, EventKind::UserPresent});
    {
      auto& s = tl.push(SegmentType::Hold, uniform(rng, 4.0, 8.0));
      s.from = pose;
      s.gain0 = 1.0;
      s.tremor_phase = tremor_phase;
    }
    {
      auto& s = tl.push(SegmentType::Transition, 1.0);
      s.from = pose;
      s.to = table;
      s.displacement = {0.0, 0.0, -0.2};
      s.gain0 = 1.0;
      s.tremor_phase = tremor_phase;
    }
  }
  events.push_back({tl.now(), EventKind::ScreenOff});
  tl.push(SegmentType::Rest, 5.0).from = {0.0, 0.0, 0.0};

  const std::vector<Interval> active{{kOriginNs, tl.now()}};
  auto samples = sample_timeline(tl, p, active, suite, cfg.noise, cfg.rate, derive_seed(stream, 4));
  return SensorRecording(std::move(user_id), std::move(device_id), std::move(samples),
                         std::move(events));
}

namespace {

DatasetManifest write_dataset(DatasetKind kind, double rate,
                              const std::vector<std::pair<std::string, std::string>>& ids,
                              const std::function<SensorRecording(std::size_t)>& make,
                              const fs::path& out_dir) {
  DatasetManifest m;
  m.kind = kind;
  m.rate_hint = rate;
  m.root = out_dir;
  for (const auto& [user, device] : ids) {
    const fs::path rel = fs::path(user) / device;
    m.entries.push_back({user, device, rel / "samples.csv", rel / "events.csv"});
  }
  fs::create_directories(out_dir);
  const auto n = static_cast<std::ptrdiff_t>(ids.size());
  std::vector<std::string> errors(ids.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& e = m.entries[i];
      save_recording(make(static_cast<std::size_t>(i)), out_dir / e.samples, out_dir / e.events);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (const auto& err : errors)
    if (!err.empty()) throw IoError(err);
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace

DatasetManifest synth_specific_motion(const std::vector<SynthUserProfile>& profiles,
                                      const SpecificMotionConfig& cfg, const fs::path& out_dir) {
  std::vector<std::pair<std::string, std::string>> ids;
  for (std::size_t i = 0; i < profiles.size(); ++i)
    ids.emplace_back(synth_user_id(static_cast<int>(i)), "device_0");
  return write_dataset(
      DatasetKind::SpecificMotion, cfg.rate, ids,
      [&](std::size_t i) {
        return synth_specific_motion_recording(profiles[i], cfg, ids[i].first, ids[i].second);
      },
      out_dir);
}

DatasetManifest synth_all_motions(const std::vector<SynthUserProfile>& profiles,
                                  const AllMotionsConfig& cfg, int devices,
                                  const fs::path& out_dir) {
  std::vector<std::pair<std::string, std::string>> ids;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < profiles.size(); ++i)
    for (int d = 0; d < devices; ++d) {
      ids.emplace_back(synth_user_id(static_cast<int>(i)), "device_" + std::to_string(d));
      owner.push_back(i);
    }
  return write_dataset(
      DatasetKind::AllMotions, cfg.rate, ids,
      [&](std::size_t i) {
        return synth_all_motions_recording(profiles[owner[i]], cfg, ids[i].first, ids[i].second);
      },
      out_dir);
}

}  // namespace motionid::ingest

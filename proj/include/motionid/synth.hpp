#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "motionid/core.hpp"
#include "motionid/ingest.hpp"

namespace motionid::ingest {

// Per-user motion traits of the synthetic lift model. Everything downstream
// of a profile is a pure function of its fields.
struct SynthUserProfile {
  std::uint64_t seed = 0;
  double lift_amplitude = 1.0;       // scale on lift_vector
  Vec3 lift_vector{0.0, 0.15, 0.3};  // Earth-frame displacement of a lift, m
  double lift_duration_mean = 1.2;   // s, in [0.5, 3.0]
  double lift_duration_sigma = 0.05;
  Vec3 phase_offsets{};              // per-axis tremor phase, rad
  std::array<double, 3> tremor_freqs{3.0, 5.0, 7.0};     // Hz, 2..8
  std::array<double, 3> tremor_weights{0.1, 0.1, 0.1};   // m/s^2
  // Orientation trajectory: final pitch/roll/yaw twist of the lifted pose, rad.
  double final_pitch = 0.7;
  double final_roll = 0.0;
  double yaw_twist = 0.0;
  double angle_sigma = 0.035;
  double hold_delay = 0.3;  // s between end of lift and unlock

  // Draws a profile with traits spread across plausible human ranges.
  static SynthUserProfile from_seed(std::uint64_t seed);
  // Throws InvalidSample when an invariant is violated.
  void validate() const;
};

std::vector<SynthUserProfile> make_profiles(int users, std::uint64_t seed);

struct NoiseConfig {
  double accel = 0.05;  // m/s^2
  double gyro = 0.01;   // rad/s
  double mag = 0.5;     // uT
};

struct SpecificMotionConfig {
  int locations = 6;
  int lifts_per_location = 50;
  double rate = kDefaultRateHz;
  double rest_min_s = 30.0;
  double rest_max_s = 120.0;
  NoiseConfig noise;
};

struct AllMotionsConfig {
  int days = 14;
  int unlocks_per_day = 10;
  double rate = kDefaultRateHz;
  NoiseConfig noise;
};

// One user lifting the phone from a table lifts_per_location times at each
// location; every lift ends in SCREEN_ON / USER_PRESENT / SCREEN_OFF. Sensors:
// accelerometer, gravity, gyroscope, magnetometer, rotation vector. Streams
// are sampled around each lift only.
SensorRecording synth_specific_motion_recording(const SynthUserProfile& profile,
                                                const SpecificMotionConfig& cfg,
                                                std::string user_id, std::string device_id);

// Continuous everyday stream (compressed days): idle on a table, carried
// without unlock, then reach-and-lift ending in an unlock, then usage.
// All six sensors, linear acceleration exactly zero while idle.
SensorRecording synth_all_motions_recording(const SynthUserProfile& profile,
                                            const AllMotionsConfig& cfg, std::string user_id,
                                            std::string device_id);

// Generate recordings for every profile and write them under out_dir as
// <user>/<device>/{samples,events}.csv plus manifest.json.
DatasetManifest synth_specific_motion(const std::vector<SynthUserProfile>& profiles,
                                      const SpecificMotionConfig& cfg,
                                      const std::filesystem::path& out_dir);
DatasetManifest synth_all_motions(const std::vector<SynthUserProfile>& profiles,
                                  const AllMotionsConfig& cfg, int devices,
                                  const std::filesystem::path& out_dir);

std::string synth_user_id(int index);

}  // namespace motionid::ingest

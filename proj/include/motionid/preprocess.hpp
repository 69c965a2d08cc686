#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "motionid/core.hpp"

namespace motionid::preprocess {

struct PatternConfig {
  double window_s = 3.0;
  double rate = kDefaultRateHz;
  int min_readings = 100;               // raw readings per sensor per window
  double motionless_threshold = 1e-3;   // m/s^2, |linear acc| below counts as zero
};

struct PatternWindowSet {
  std::string user_id;
  std::string device_id;
  std::vector<Window> positives;  // each ends at a USER_PRESENT timestamp
  std::vector<Window> negatives;
};

// Windows leading (positives) and not leading (negatives) to an unlock.
// Positives: [T - 3 s, T] for each USER_PRESENT T. Negatives: non-overlapping
// 3 s tiles of each [SCREEN_OFF, next SCREEN_ON or USER_PRESENT] interval
// minus its last 3 s, dropping tiles whose linear acceleration stays zero.
// Every kept window has >= min_readings raw readings per present sensor.
// NoEvents when the recording has no events.
PatternWindowSet extract_pattern_windows(const SensorRecording& rec,
                                         const PatternConfig& cfg = {});

struct VerificationConfig {
  double segment_s = 1.5;
  double rate = kDefaultRateHz;
  double expected_rate = kDefaultRateHz;  // raw rate the 2/3 rule is measured against
  double min_fraction = 2.0 / 3.0;
};

// Trailing segment before one unlock, regridded. The window label carries
// the cluster index (0 until cluster_attempts runs).
struct VerificationAttempt {
  Window segment;

  const std::string& user_id() const { return segment.user_id(); }
  int cluster() const { return segment.label().cluster; }
  std::int64_t unlock_ns() const { return segment.end_ns(); }
};

std::vector<VerificationAttempt> extract_verification_attempts(
    const SensorRecording& rec, const VerificationConfig& cfg = {});

inline constexpr int kClusterCount = 6;

// Splits chronologically ordered attempts into six clusters: a gap > gap_s
// between consecutive USER_PRESENT events opens a new cluster; when that
// does not give exactly six, attempts fall back to six balanced consecutive
// blocks. TooFewAttempts when fewer than six attempts.
std::vector<VerificationAttempt> cluster_attempts(std::vector<VerificationAttempt> attempts,
                                                  std::span<const DeviceEvent> events,
                                                  double gap_s = 30.0);

// Binary window container: one file holds windows of one user sharing
// channels and timesteps. Layout (little-endian): "MIDW", u32 version,
// u32 channels, u32 timesteps, u32 count, f64 rate, user id, channel names,
// label table (i32 kind, i32 cluster, i64 end_ns) x count, f32 data.
struct WindowFile {
  std::string user_id;
  double rate = kDefaultRateHz;
  int timesteps = 0;
  std::vector<std::string> channels;
  std::vector<Window> windows;
};

void write_window_file(const std::filesystem::path& path, const WindowFile& file);
WindowFile read_window_file(const std::filesystem::path& path);

// Convenience: container metadata taken from the first window.
WindowFile make_window_file(std::string user_id, std::vector<Window> windows);

}  // namespace motionid::preprocess

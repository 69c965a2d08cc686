#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "motionid/core.hpp"
#include "motionid/preprocess.hpp"

namespace motionid::features {

inline constexpr int kRosterVersion = 1;
inline constexpr int kFeatureCount = 22;
inline constexpr int kComponents = 3;
inline constexpr int kFeatureRows = kFeatureCount * kComponents;

enum class Transform { Rotate, Linear, Diff, Integral };

std::string_view to_string(Transform t);

// One named 3-component feature: a source sensor and the transforms applied
// to it in order (empty chain = raw readings).
struct FeatureSpec {
  std::string name;
  SensorKind source;
  std::vector<Transform> chain;
};

// Versioned 22-entry roster; index i occupies tensor rows 3i .. 3i+2.
const std::vector<FeatureSpec>& feature_roster();
std::string roster_json();

using Series3 = std::array<std::vector<double>, 3>;

// linear acc = acc - gravity, elementwise. GridMismatch on length mismatch.
Series3 derive_linear_acceleration(const Series3& acc, const Series3& gravity);
// Fallback when no gravity stream exists: gravity from an exponential moving
// average of acc, g_t = alpha g_{t-1} + (1 - alpha) acc_t.
Series3 derive_linear_acceleration(const Series3& acc, double alpha = 0.8);

// d_t = x_{t+1} - x_t, last element repeated. TooShort below length 2.
std::vector<double> diff_feature(std::span<const double> x);
// Cumulative trapezoid with I_0 = 0.
std::vector<double> integral_feature(std::span<const double> x, double dt);

// 66 x T feature grid for one attempt; the window label and timestamps are
// carried over from the attempt.
struct FeatureTensor {
  Window window;

  int timesteps() const { return window.timesteps(); }
  const std::string& user_id() const { return window.user_id(); }
  int cluster() const { return window.label().cluster; }
  std::span<const float> row(int feature, int component) const {
    return window.row(feature * kComponents + component);
  }
};

std::vector<std::string> feature_channel_names();

// Features from the attempt's own rotation-vector rows.
FeatureTensor build_feature_tensor(const preprocess::VerificationAttempt& attempt);
// Features with an explicit per-timestep device -> Earth rotation series.
FeatureTensor build_feature_tensor(const preprocess::VerificationAttempt& attempt,
                                   std::span<const Quaternion> rotation);

struct AugmentConfig {
  int crop_out_len = 50;        // 1 s at 50 Hz
  double noise_fraction = 0.05; // sigma = fraction * per-row std
  std::uint64_t seed = 0;
};

// Random contiguous crop plus per-row Gaussian noise. CropTooLong when the
// crop exceeds the input.
FeatureTensor augment(const FeatureTensor& t, const AugmentConfig& cfg);
// Crop at an explicit offset with the same noise model (offset < 0: random).
FeatureTensor augment_at(const FeatureTensor& t, const AugmentConfig& cfg, int offset);
// Deterministic trailing crop, no noise.
FeatureTensor eval_crop(const FeatureTensor& t, int crop_out_len = 50);

}  // namespace motionid::features

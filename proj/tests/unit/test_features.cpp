#include <doctest.h>

#include <cmath>
#include <set>

#include "json.hpp"
#include "motionid/features.hpp"
#include "motionid/synth.hpp"
#include "generators.hpp"
#include "support.hpp"

using namespace motionid;
using namespace motionid::features;
using testing::Gen;
using testing::uni;
using testing::make_attempt;
using testing::random_attempt;

namespace {

int feature_index(const std::string& name) {
  const auto& r = feature_roster();
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r[i].name == name) return static_cast<int>(i);
  return -1;
}

double row_norm(const FeatureTensor& f, int feature, int t) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) s += static_cast<double>(f.row(feature, c)[t]) * f.row(feature, c)[t];
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("roster has 22 named three-component features") {
  const auto& r = feature_roster();
  CHECK(r.size() == 22);
  std::set<std::string> names;
  for (const auto& f : r) names.insert(f.name);
  CHECK(names.size() == 22);
  CHECK(feature_channel_names().size() == 66);
  const auto j = nlohmann::json::parse(roster_json());
  CHECK(j["version"] == kRosterVersion);
  CHECK(j["features"].size() == 22);
  CHECK(j["features"][4]["name"] == "acc_earth");
  CHECK(j["features"][4]["transforms"][0] == "rotate");
}

TEST_CASE("linear acceleration examples") {
  Series3 g{{{0, 0}, {0, 0}, {9.81, 9.81}}};
  const auto zero = derive_linear_acceleration(g, g);
  for (const auto& c : zero)
    for (double v : c) CHECK(v == 0.0);
  Series3 a{{{0}, {0}, {9.81 + 2}}};
  Series3 g1{{{0}, {0}, {9.81}}};
  CHECK(derive_linear_acceleration(a, g1)[2][0] == doctest::Approx(2.0).epsilon(1e-12));
  Gen gen(3);
  Series3 acc, grav;
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 40; ++t) {
      acc[c].push_back(uni(gen, -10, 10));
      grav[c].push_back(uni(gen, -10, 10));
    }
  const auto lin = derive_linear_acceleration(acc, grav);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 40; ++t) CHECK(lin[c][t] + grav[c][t] == doctest::Approx(acc[c][t]).epsilon(1e-14));
  Series3 shorter = grav;
  shorter[1].pop_back();
  CHECK_THROWS_AS(derive_linear_acceleration(acc, shorter), GridMismatch);
}

TEST_CASE("gravity fallback is an exponential moving average") {
  Series3 acc{{{1, 2, 4}, {0, 0, 0}, {9, 9, 9}}};
  const auto lin = derive_linear_acceleration(acc, 0.8);
  double g = 1;
  for (int t = 0; t < 3; ++t) {
    g = 0.8 * g + 0.2 * acc[0][t];
    CHECK(lin[0][t] == doctest::Approx(acc[0][t] - g).epsilon(1e-14));
    CHECK(lin[2][t] == doctest::Approx(0.0));
  }
}

TEST_CASE("difference feature") {
  const std::vector<double> x{1, 3, 6};
  CHECK(diff_feature(x) == std::vector<double>{2, 3, 3});
  const std::vector<double> c(5, 2.5);
  CHECK(diff_feature(c) == std::vector<double>(5, 0.0));
  const std::vector<double> one{1};
  CHECK_THROWS_AS(diff_feature(one), TooShort);
}

TEST_CASE("integral feature") {
  const std::vector<double> x{0, 1, 2};
  CHECK(integral_feature(x, 1.0) == std::vector<double>{0, 0.5, 2.0});
  CHECK(integral_feature(std::vector<double>(4, 0.0), 0.1) == std::vector<double>(4, 0.0));
  const std::vector<double> c(30, 1.5);
  CHECK(integral_feature(c, 0.02).back() == doctest::Approx(1.5 * 0.02 * 29).epsilon(1e-12));
}

TEST_CASE("diff and integral are discrete inverses to O(dt)") {
  const double dt = 0.02;
  std::vector<double> x;
  for (int t = 0; t < 75; ++t) x.push_back(std::sin(2.0 * t * dt) + 0.5 * t * dt);
  // integral of the derivative estimate recovers x - x0
  std::vector<double> deriv = diff_feature(x);
  for (auto& v : deriv) v /= dt;
  const auto back = integral_feature(deriv, dt);
  for (int t = 0; t < 75; ++t) CHECK(std::abs(back[t] + x[0] - x[t]) < 5 * dt);
  // difference of the integral recovers dt * x
  const auto integ = integral_feature(x, dt);
  const auto d = diff_feature(integ);
  for (int t = 0; t + 1 < 75; ++t) CHECK(std::abs(d[t] / dt - x[t]) < 5 * dt);
}

TEST_CASE("feature tensor shape and label") {
  Gen g(21);
  const auto a = random_attempt(g);
  const auto f = build_feature_tensor(a);
  CHECK(f.window.rows() == kFeatureCount * kComponents);
  CHECK(f.timesteps() == 75);
  CHECK(f.cluster() == 2);
  CHECK(f.window.end_ns() == a.segment.end_ns());
  CHECK(f.window.channels() == feature_channel_names());
  for (float v : f.window.data()) CHECK(std::isfinite(v));
}

TEST_CASE("identity rotation leaves rotated channels equal to raw channels") {
  Gen g(22);
  const auto a = random_attempt(g);
  const auto f = build_feature_tensor(a, std::vector<Quaternion>(75));
  for (const std::string base : {"acc", "gyro", "mag", "linacc", "acc_diff", "gyro_int"}) {
    const std::string rotated = base.find('_') == std::string::npos
                                    ? base + "_earth"
                                    : base.substr(0, base.find('_')) + "_earth" + base.substr(base.find('_'));
    const int i = feature_index(base), j = feature_index(rotated);
    REQUIRE(i >= 0);
    REQUIRE(j >= 0);
    for (int c = 0; c < 3; ++c) {
      const auto r = f.row(i, c), e = f.row(j, c);
      CHECK(std::equal(r.begin(), r.end(), e.begin()));
    }
  }
}

TEST_CASE("all-zero sensors give all-zero features") {
  const auto a = make_attempt(
      75, [](int) { return Vec3{}; }, [](int) { return Vec3{}; }, [](int) { return Vec3{}; },
      [](int) { return Quaternion::identity(); });
  const auto f = build_feature_tensor(a);
  const int rotvec = feature_index("rotvec");
  for (int k = 0; k < kFeatureCount; ++k) {
    if (k == rotvec) continue;
    for (int c = 0; c < 3; ++c)
      for (float v : f.row(k, c)) CHECK(v == 0.0f);
  }
}

TEST_CASE("rotated channels preserve per-timestep norms and match the matrix oracle") {
  Gen g(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_attempt(g);
    const auto f = build_feature_tensor(a);
    const int q0 = a.segment.find_row(channel_name(SensorKind::RotationVector, 0));
    for (const std::string base : {"acc", "gyro", "mag", "linacc"}) {
      const int i = feature_index(base), j = feature_index(base + "_earth");
      for (int t = 0; t < f.timesteps(); ++t) {
        const double n = row_norm(f, i, t);
        CHECK(std::abs(row_norm(f, j, t) - n) <= 1e-6 * std::max(n, 1.0));
      }
      if (base == "linacc") continue;
      for (int t = 0; t < f.timesteps(); t += 7) {
        const Quaternion q{a.segment.row(q0)[t], a.segment.row(q0 + 1)[t], a.segment.row(q0 + 2)[t],
                           a.segment.row(q0 + 3)[t]};
        const auto m = rotation_matrix(q);
        for (int r = 0; r < 3; ++r) {
          double oracle = 0.0;
          for (int c = 0; c < 3; ++c) oracle += m[3 * r + c] * f.row(i, c)[t];
          CHECK(f.row(j, r)[t] == doctest::Approx(oracle).epsilon(1e-5));
        }
      }
    }
  }
}

TEST_CASE("features from a synthetic user") {
  ingest::SpecificMotionConfig cfg;
  cfg.lifts_per_location = 2;
  const auto r = ingest::synth_specific_motion_recording(ingest::SynthUserProfile::from_seed(9), cfg, "u", "d");
  const auto attempts = preprocess::extract_verification_attempts(r);
  REQUIRE(attempts.size() == 12);
  for (const auto& a : attempts) {
    const auto f = build_feature_tensor(a);
    CHECK(f.window.rows() == 66);
    CHECK(f.timesteps() == 75);
    // gravity stream present: linear acc = acc - gravity
    const int lin = feature_index("linacc");
    const int gr = a.segment.find_row(channel_name(SensorKind::Gravity, 0));
    const int ac = a.segment.find_row(channel_name(SensorKind::Accelerometer, 0));
    REQUIRE(gr >= 0);
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < 75; t += 5)
        CHECK(f.row(lin, c)[t] == doctest::Approx(a.segment.row(ac + c)[t] - a.segment.row(gr + c)[t]).epsilon(1e-5));
  }
}

TEST_CASE("augment with zero noise is an exact slice") {
  Gen g(24);
  const auto f = build_feature_tensor(random_attempt(g));
  std::set<int> offsets;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    AugmentConfig cfg;
    cfg.noise_fraction = 0.0;
    cfg.seed = seed;
    const auto out = augment(f, cfg);
    REQUIRE(out.timesteps() == 50);
    const int offset = 25 - static_cast<int>((f.window.end_ns() - out.window.end_ns()) / 20'000'000);
    REQUIRE(offset >= 0);
    REQUIRE(offset <= 25);
    offsets.insert(offset);
    for (int r = 0; r < 66; ++r) {
      const auto src = f.window.row(r).subspan(offset, 50);
      const auto dst = out.window.row(r);
      CHECK(std::equal(src.begin(), src.end(), dst.begin()));
    }
  }
  CHECK(offsets.size() > 15);
}

TEST_CASE("augment determinism and noise scale") {
  Gen g(25);
  const auto f = build_feature_tensor(random_attempt(g));
  AugmentConfig cfg;
  cfg.seed = 5;
  CHECK(augment(f, cfg).window == augment(f, cfg).window);
  AugmentConfig other = cfg;
  other.seed = 6;
  const auto a = augment(f, cfg), b = augment(f, other);
  CHECK(a.timesteps() == b.timesteps());
  CHECK(a.window.data() != b.window.data());

  // residual against the clean slice has sd ~ fraction * row sd
  std::vector<float> row(4000);
  for (auto& v : row) v = static_cast<float>(uni(g, -3, 3));
  const Window w("u", WindowLabel::in_cluster(1), 0, 50.0, 4000, {"r"}, row);
  AugmentConfig big;
  big.crop_out_len = 4000;
  big.noise_fraction = 0.1;
  big.seed = 1;
  const auto noisy = augment(FeatureTensor{w}, big);
  double ss = 0.0;
  for (int t = 0; t < 4000; ++t) ss += std::pow(noisy.window.data()[t] - row[t], 2);
  const double expected = 0.1 * 6 / std::sqrt(12.0);
  CHECK(std::sqrt(ss / 4000) == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("eval crop is the trailing second") {
  Gen g(26);
  const auto f = build_feature_tensor(random_attempt(g));
  const auto e = eval_crop(f);
  AugmentConfig cfg;
  cfg.noise_fraction = 0.0;
  CHECK(e.window == augment_at(f, cfg, 25).window);
  CHECK(e.timesteps() == 50);
  CHECK(e.window.end_ns() == f.window.end_ns());
  CHECK(eval_crop(e).window == e.window);
  cfg.crop_out_len = 80;
  CHECK_THROWS_AS(augment(f, cfg), CropTooLong);
  cfg.crop_out_len = 50;
  CHECK_THROWS_AS(augment_at(f, cfg, 26), CropTooLong);
}

}  // TEST_SUITE

#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <cstring>

#include "gradcheck.hpp"
#include "motionid/nn/adam.hpp"
#include "motionid/nn/checkpoint.hpp"
#include "motionid/nn/kernels.hpp"

using namespace motionid;
using namespace motionid::nn;
using testing::Gen;

TEST_SUITE("nn") {

TEST_CASE("identity conv leaves input unchanged") {
  Conv1d<float> c("id", 1, 1, 1);
  c.weight.value.fill(1.0f);
  Tensor<float> x({2, 1, 5}, std::vector<float>{1, 2, 3, 4, 5, -1, -2, -3, -4, -5});
  CHECK(c.forward(x) == x);
}

TEST_CASE("conv and linear reject bad shapes") {
  Conv1d<float> c("c", 3, 4, 5);
  CHECK_THROWS_AS(c.forward(Tensor<float>({1, 2, 10})), ShapeMismatch);
  CHECK_THROWS_AS(c.forward(Tensor<float>({1, 3, 4})), ShapeMismatch);
  Linear<float> l("l", 4, 2);
  CHECK_THROWS_AS(l.forward(Tensor<float>({1, 5})), ShapeMismatch);
}

TEST_CASE("softmax of zeros is uniform") {
  const auto p = softmax_rows(Tensor<double>({1, 2}));
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));
}

TEST_CASE("cross entropy examples") {
  const std::vector<int> t0{0};
  CHECK(cross_entropy(Tensor<double>({1, 2}), std::span<const int>(t0)).loss ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const auto sat = cross_entropy(Tensor<double>({1, 2}, std::vector<double>{50, -50}), std::span<const int>(t0));
  CHECK(sat.loss < 1e-40);
  CHECK(std::isfinite(sat.loss));
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(cross_entropy(Tensor<double>({1, 2}), std::span<const int>(bad)), BadTarget);
  // batched mean
  const std::vector<int> t2{0, 1};
  const auto two = cross_entropy(Tensor<double>({2, 2}, std::vector<double>{0, 0, 50, -50}), std::span<const int>(t2));
  CHECK(two.loss == doctest::Approx((std::log(2.0) + 100.0) / 2).epsilon(1e-12));
}

TEST_CASE("triplet margin examples") {
  LossConfig cfg;
  auto t = [](std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor<double>({1, n}, std::move(v));
  };
  CHECK(triplet_margin(t({0, 0}), t({0, 0}), t({2, 0}), cfg).loss == 0.0);
  cfg.margin = 0.5;
  CHECK(triplet_margin(t({1, 2}), t({1, 2}), t({1, 2}), cfg).loss == doctest::Approx(0.5));
  cfg.margin = 1.0;
  CHECK(triplet_margin(t({0, 0}), t({3, 4}), t({6, 8}), cfg).loss == 0.0);
  // the same triple with the roles of p and n swapped: 10 - 5 + 1
  CHECK(triplet_margin(t({0, 0}), t({6, 8}), t({3, 4}), cfg).loss == doctest::Approx(6.0));
  cfg.p_norm = 1.0;
  CHECK(triplet_margin(t({0, 0}), t({6, 8}), t({3, 4}), cfg).loss == doctest::Approx(14.0 - 7.0 + 1.0));
  CHECK_THROWS_AS(triplet_margin(t({0, 0}), t({0, 0, 0}), t({0, 0}), cfg), ShapeMismatch);
}

TEST_CASE("hardest negative mining picks the closest other-label row") {
  LossConfig cfg;
  // anchors 0,1; twins 2,3
  Tensor<double> e({4, 1}, std::vector<double>{0.0, 5.0, 0.5, 4.0});
  const std::vector<int> y{0, 1, 0, 1};
  // anchor 0: pos 0.5, nearest other label is 4.0 -> max(0.5 - 4 + 1, 0) = 0
  // anchor 1: pos 4.0 (d=1), nearest other label is 0.5 (d=4.5) -> 0
  CHECK(triplet_hardest_negative(e, std::span<const int>(y), cfg).loss == 0.0);
  Tensor<double> close({4, 1}, std::vector<double>{0.0, 0.2, 0.1, 0.3});
  // anchor 0: d(0,0.1)=0.1, hardest neg 0.2 -> 0.1-0.2+1 = 0.9
  // anchor 1: d(0.2,0.3)=0.1, hardest neg 0.1 -> 0.1-0.1+1 = 1.0
  CHECK(triplet_hardest_negative(close, std::span<const int>(y), cfg).loss == doctest::Approx(0.95));
  const std::vector<int> same{0, 0, 0, 0};
  CHECK_THROWS_AS(triplet_hardest_negative(e, std::span<const int>(same), cfg), DegenerateBatch);
}

TEST_CASE("supervised contrastive examples") {
  Tensor<double> z({2, 2}, std::vector<double>{1, 0, 1, 0});
  const std::vector<int> y{3, 3};
  CHECK(supervised_contrastive(z, std::span<const int>(y), 1.0).loss == doctest::Approx(0.0));

  // two classes, positives orthogonal, negatives antipodal
  Tensor<double> good({4, 2}, std::vector<double>{1, 0, 0, 1, -1, 0, 0, -1});
  const std::vector<int> yl{0, 0, 1, 1};
  const std::vector<int> shuffled{0, 1, 0, 1};
  const double lg = supervised_contrastive(good, std::span<const int>(yl), 0.1).loss;
  const double ls = supervised_contrastive(good, std::span<const int>(shuffled), 0.1).loss;
  CHECK(lg < ls);
  // hand value for one anchor at tau = 1: row 0 = (1,0), others dot 0, -1, 0
  const double l1 = supervised_contrastive(good, std::span<const int>(yl), 1.0).loss;
  const double per_anchor = -std::log(1.0 / (1.0 + std::exp(-1.0) + 1.0));
  CHECK(l1 == doctest::Approx(4 * per_anchor));

  const std::vector<int> lonely{0, 0, 1, 2};
  CHECK_THROWS_AS(supervised_contrastive(good, std::span<const int>(lonely), 0.1), DegenerateBatch);
}

TEST_CASE("total loss") {
  LossConfig cfg;
  cfg.alpha_tm = 0.0;
  CHECK(total_loss(1.0, 2.0, 3.0, cfg) == 4.0);
  cfg.alpha_tm = 0.5;
  CHECK(total_loss(1.0, 2.0, 3.0, cfg) == 5.0);
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.margin = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.tau = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.p_norm = 0.5;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("finite differences: layers and losses") {
  for (const auto& r : testing::run_all_gradchecks(2024, 20)) {
    CAPTURE(r.name);
    CAPTURE(r.checked);
    CAPTURE(r.skipped);
    CHECK(r.shapes >= 20);
    CHECK(r.checked > 0);
    CHECK(r.skipped * 10 <= r.checked);
    CHECK(r.worst < testing::kFdTol);
  }
}

TEST_CASE("serial and omp kernels agree bitwise") {
  Gen g(7);
  for (int s = 0; s < 30; ++s) {
    // the larger half crosses the parallel threshold
    const bool big = s >= 15;
    kernels::ConvShape cs{testing::uni_int(g, 1, big ? 16 : 3), testing::uni_int(g, 1, big ? 16 : 4),
                          0, testing::uni_int(g, 1, big ? 32 : 4), testing::uni_int(g, 1, 5)};
    cs.length = cs.kernel + testing::uni_int(g, 0, big ? 60 : 8);
    const auto x = testing::random_tensor<float>(g, {cs.batch, cs.in_channels, cs.length});
    const auto w = testing::random_tensor<float>(g, {cs.out_channels, cs.in_channels, cs.kernel});
    const auto b = testing::random_tensor<float>(g, {cs.out_channels});
    const auto go = testing::random_tensor<float>(g, {cs.batch, cs.out_channels, cs.out_length()});
    Tensor<float> y1({cs.batch, cs.out_channels, cs.out_length()}), y2 = y1;
    kernels::serial::conv1d_forward(cs, x.data(), w.data(), b.data(), y1.data());
    kernels::omp::conv1d_forward(cs, x.data(), w.data(), b.data(), y2.data());
    CHECK(y1 == y2);
    Tensor<float> gx1(x.shape()), gx2(x.shape()), gw1(w.shape()), gw2(w.shape()), gb1(b.shape()), gb2(b.shape());
    kernels::serial::conv1d_backward(cs, x.data(), w.data(), go.data(), gx1.data(), gw1.data(), gb1.data());
    kernels::omp::conv1d_backward(cs, x.data(), w.data(), go.data(), gx2.data(), gw2.data(), gb2.data());
    CHECK(gx1 == gx2);
    CHECK(gw1 == gw2);
    CHECK(gb1 == gb2);

    kernels::LinearShape ls{testing::uni_int(g, 1, big ? 64 : 4), testing::uni_int(g, 1, big ? 700 : 9),
                            testing::uni_int(g, 1, big ? 64 : 5)};
    const auto lx = testing::random_tensor<float>(g, {ls.batch, ls.in_features});
    const auto lw = testing::random_tensor<float>(g, {ls.out_features, ls.in_features});
    const auto lb = testing::random_tensor<float>(g, {ls.out_features});
    const auto lg = testing::random_tensor<float>(g, {ls.batch, ls.out_features});
    Tensor<float> o1({ls.batch, ls.out_features}), o2 = o1;
    kernels::serial::linear_forward(ls, lx.data(), lw.data(), lb.data(), o1.data());
    kernels::omp::linear_forward(ls, lx.data(), lw.data(), lb.data(), o2.data());
    CHECK(o1 == o2);
    Tensor<float> a1(lx.shape()), a2(lx.shape()), w1(lw.shape()), w2(lw.shape()), c1(lb.shape()), c2(lb.shape());
    kernels::serial::linear_backward(ls, lx.data(), lw.data(), lg.data(), a1.data(), w1.data(), c1.data());
    kernels::omp::linear_backward(ls, lx.data(), lw.data(), lg.data(), a2.data(), w2.data(), c2.data());
    CHECK(a1 == a2);
    CHECK(w1 == w2);
    CHECK(c1 == c2);
  }
}

TEST_CASE("linear kernel against a naive oracle") {
  Gen g(11);
  for (int s = 0; s < 10; ++s) {
    kernels::LinearShape ls{testing::uni_int(g, 1, 4), testing::uni_int(g, 1, 20), testing::uni_int(g, 1, 5)};
    const auto x = testing::random_tensor<double>(g, {ls.batch, ls.in_features});
    const auto w = testing::random_tensor<double>(g, {ls.out_features, ls.in_features});
    const auto b = testing::random_tensor<double>(g, {ls.out_features});
    Tensor<double> y({ls.batch, ls.out_features});
    kernels::serial::linear_forward(ls, x.data(), w.data(), b.data(), y.data());
    for (int i = 0; i < ls.batch; ++i)
      for (int o = 0; o < ls.out_features; ++o) {
        double ref = b[o];
        for (int k = 0; k < ls.in_features; ++k) ref += x[i * ls.in_features + k] * w[o * ls.in_features + k];
        CHECK(y[i * ls.out_features + o] == doctest::Approx(ref).epsilon(1e-12));
      }
  }
}

TEST_CASE("verification forward is independent of the thread count") {
  VerificationModelConfig cfg;
  cfg.classes = 4;
  VerificationModel m(cfg, 3);
  Gen g(5);
  const auto x = testing::random_tensor<float>(g, {3, cfg.input_rows(), 50});
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = m.forward(x);
  omp_set_num_threads(4);
  const auto b = m.forward(x);
  omp_set_num_threads(before);
  CHECK(a.logits == b.logits);
  CHECK(a.embedding == b.embedding);
  CHECK(a.projection == b.projection);
  for (int i = 0; i < 3; ++i) {
    double n = 0;
    for (int j = 0; j < cfg.proj_dim; ++j) n += double(a.projection[i * cfg.proj_dim + j]) * a.projection[i * cfg.proj_dim + j];
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Param<double> p("p", {3});
    p.value = Tensor<double>({3}, std::vector<double>{1, -2, 3});
    const auto before = p.value;
    Adam<double> opt({0.1});
    for (int i = 0; i < 5; ++i) opt.step({&p});
    CHECK(p.value == before);
  }
  SUBCASE("first step moves by about lr") {
    Param<double> p("p", {1});
    p.grad.fill(1.0);
    Adam<double> opt({0.1});
    opt.step({&p});
    // m_hat = 1, v_hat = 1
    CHECK(p.value[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  }
  SUBCASE("matches a hand-rolled recurrence") {
    Param<double> p("p", {1});
    p.value[0] = 0.3;
    Adam<double> opt({0.01});
    double x = 0.3, m = 0, v = 0;
    for (int t = 1; t <= 25; ++t) {
      const double gr = std::sin(3.0 * t) + x;
      p.grad[0] = gr;
      opt.step({&p});
      m = 0.9 * m + 0.1 * gr;
      v = 0.999 * v + 0.001 * gr * gr;
      x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      CHECK(p.value[0] == doctest::Approx(x).epsilon(1e-13));
    }
  }
  SUBCASE("quadratic bowl converges within 500 steps") {
    Param<double> p("p", {2});
    p.value = Tensor<double>({2}, std::vector<double>{1.5, -0.8});
    Adam<double> opt({0.05});
    for (int t = 0; t < 500; ++t) {
      for (int i = 0; i < 2; ++i) p.grad[i] = 2.0 * p.value[i];
      opt.step({&p});
    }
    CHECK(std::abs(p.value[0]) < 1e-3);
    CHECK(std::abs(p.value[1]) < 1e-3);
  }
  SUBCASE("frozen parameters are skipped") {
    Param<double> p("p", {1});
    p.trainable = false;
    p.grad.fill(1.0);
    Adam<double> opt({0.1});
    opt.step({&p});
    CHECK(p.value[0] == 0.0);
  }
}

TEST_CASE("parameter counts against closed form") {
  VerificationModelConfig cfg;
  cfg.classes = 8;
  // branch: 3*16*5+16 + 16*32*5+32 + 32*32*3+32 = 5952; 22 branches
  // heads: 704*8+8, 704*64+64, 64*64+64, 64*32+32
  const long expect = 22L * 5952 + (704 * 8 + 8) + (704 * 64 + 64) + (64 * 64 + 64) + (64 * 32 + 32);
  CHECK(expect == 187944);
  CHECK(cfg.parameter_count() == expect);
  CHECK(VerificationModel(cfg, 1).trainable_count() == expect);

  PatternModelConfig pc;
  CHECK(pc.parameter_count() == (19 * 32 + 32) + (32 * 32 + 32) + (32 * 2 + 2));
  CHECK(PatternModel(pc, 1).trainable_count() == 1762);

  Gen g(3);
  for (int s = 0; s < 10; ++s) {
    const auto c = testing::tiny_verification_config(g);
    CHECK(BasicVerificationModel<double>(c, 0).trainable_count() == c.parameter_count());
  }
}

TEST_CASE("model config validation") {
  VerificationModelConfig cfg;
  cfg.branches = 21;
  CHECK_THROWS_AS(cfg.validate(), ShapeMismatch);
  cfg = {};
  cfg.kernels = {5, 5};
  CHECK_THROWS_AS(cfg.validate(), ShapeMismatch);
  cfg = {};
  CHECK(VerificationModelConfig::from_json(cfg.to_json()) == cfg);
  CHECK(cfg.min_length() == 11);
  PatternModelConfig pc;
  CHECK(PatternModelConfig::from_json(pc.to_json()) == pc);
}

TEST_CASE("forward is deterministic and rejects short inputs") {
  VerificationModelConfig cfg;
  VerificationModel m(cfg, 9);
  Gen g(1);
  const auto x = testing::random_tensor<float>(g, {2, cfg.input_rows(), 50});
  CHECK(m.forward(x).logits == m.forward(x).logits);
  CHECK_THROWS_AS(m.forward(Tensor<float>({1, cfg.input_rows(), 10})), ShapeMismatch);
  CHECK_THROWS_AS(m.forward(Tensor<float>({1, 65, 50})), ShapeMismatch);
}

TEST_CASE("freezing the extractor stops its gradients") {
  VerificationModelConfig cfg;
  cfg.channels = {2, 2, 2};
  cfg.classes = 2;
  VerificationModel m(cfg, 4);
  m.set_extractor_trainable(false);
  Gen g(2);
  const auto x = testing::random_tensor<float>(g, {2, cfg.input_rows(), 20});
  VerificationModel::Trace tr;
  const auto out = m.forward(x, tr);
  const std::vector<int> y{0, 1};
  m.zero_grad();
  m.backward(tr, {cross_entropy(out.logits, std::span<const int>(y)).grad, {}, {}});
  bool classifier_moved = false;
  m.visit([&](const Param<float>& p) {
    bool nz = false;
    for (float v : p.grad.vec()) nz = nz || v != 0.0f;
    if (p.name.rfind("branch", 0) == 0) CHECK_FALSE(nz);
    if (p.name.rfind("classifier", 0) == 0) classifier_moved = classifier_moved || nz;
  });
  CHECK(classifier_moved);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  const auto dir = testing::scratch_dir("ckpt");
  VerificationModelConfig cfg;
  cfg.classes = 5;
  VerificationModel m(cfg, 21);
  Gen g(8);
  m.fit_input_normalization(testing::random_tensor<float>(g, {4, cfg.input_rows(), 50}, -3, 3));
  save_model(dir / "v.midm", m);
  const auto back = load_verification_model(dir / "v.midm");
  CHECK(back.config() == m.config());
  std::vector<const Param<float>*> a, b;
  m.visit([&](const Param<float>& p) { a.push_back(&p); });
  back.visit([&](const Param<float>& p) { b.push_back(&p); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value.shape() == b[i]->value.shape());
    CHECK(std::memcmp(a[i]->value.data(), b[i]->value.data(), a[i]->value.numel() * sizeof(float)) == 0);
    CHECK(a[i]->trainable == b[i]->trainable);
  }
  const auto x = testing::random_tensor<float>(g, {2, cfg.input_rows(), 50});
  CHECK(m.forward(x).logits == back.forward(x).logits);

  PatternModel pm(PatternModelConfig{}, 3);
  save_model(dir / "p.midm", pm);
  const auto pb = load_pattern_model(dir / "p.midm");
  const auto px = testing::random_tensor<float>(g, {2, 19, 150});
  CHECK(pm.forward(px) == pb.forward(px));

  CHECK_THROWS_AS(load_pattern_model(dir / "v.midm"), IoError);
  CHECK_THROWS_AS(load_verification_model(dir / "missing.midm"), IoError);
}

TEST_CASE("projection stays unit norm through training steps") {
  VerificationModelConfig cfg;
  cfg.channels = {4, 4, 4};
  cfg.classes = 2;
  VerificationModel m(cfg, 6);
  Adam<float> opt({1e-2});
  Gen g(12);
  const auto x = testing::random_tensor<float>(g, {4, cfg.input_rows(), 30});
  const std::vector<int> y{0, 1, 0, 1};
  for (int step = 0; step < 5; ++step) {
    VerificationModel::Trace tr;
    const auto out = m.forward(x, tr);
    m.zero_grad();
    m.backward(tr, {cross_entropy(out.logits, std::span<const int>(y)).grad, {},
                    supervised_contrastive(out.projection, std::span<const int>(y), 0.1).grad});
    opt.step(m.parameters());
    const auto o2 = m.forward(x);
    for (int i = 0; i < 4; ++i) {
      double n = 0;
      for (int j = 0; j < cfg.proj_dim; ++j) n += double(o2.projection[i * cfg.proj_dim + j]) * o2.projection[i * cfg.proj_dim + j];
      CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

}  // TEST_SUITE

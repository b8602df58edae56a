#include <cmath>

#include "doctest.h"
#include "json.hpp"

#include "cortical/losses/losses.hpp"
#include "cortical/numcore/grad_check.hpp"
#include "support.hpp"

using namespace cortical;
using namespace cortical::losses;

namespace {

std::vector<Vec3> random_positions(Rng& rng, std::size_t m) {
  std::vector<Vec3> p;
  for (std::size_t i = 0; i < m; ++i) p.emplace_back(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0, 0.3));
  return p;
}

using Rows = std::vector<std::vector<double>>;

Rows rows_of(const Tensor& t) {
  Rows r(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t c = 0; c < t.dim(1); ++c) r[i][c] = t.get(i * t.dim(1) + c);
  return r;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void normalize(Rows& rows) {
  for (auto& r : rows) {
    const double n = std::sqrt(dot(r, r));
    for (double& x : r) x /= n;
  }
}

// Scalar transcription of the ranking objective, independent of the tape.
double oracle_ap(const Rows& fp, const Rows& fq, const std::vector<Vec3>& pos, double tau, double zeta) {
  const std::size_t m = fp.size();
  auto g = [&](double x) { return 1.0 / (1.0 + std::exp(-x / tau)); };
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double anchor = dot(fq[i], fp[i]);
    const double num = 1.0 + g(dot(fq[i], fp[i]) - anchor);
    double den = num;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i && (pos[i] - pos[j]).norm() > zeta) den += g(dot(fq[j], fp[i]) - anchor);
    }
    total += num / den;
  }
  return total / double(m);
}

// Binary ranking count: the positive ranks at 0.5, each negative with D > 0
// ranks above it with weight 1.
double discrete_ap(const Rows& fp, const Rows& fq, const std::vector<Vec3>& pos, double zeta) {
  const std::size_t m = fp.size();
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double anchor = dot(fq[i], fp[i]);
    double above = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i && (pos[i] - pos[j]).norm() > zeta && dot(fq[j], fp[i]) - anchor > 0) above += 1;
    }
    total += 1.5 / (1.5 + above);
  }
  return total / double(m);
}

}  // namespace

TEST_CASE("bilinear sampling examples") {
  Tape tape;
  Var fm = tape.constant(Tensor::from({1, 2, 2}, {0, 0, 4, 4}));
  CHECK(bilinear_sample(fm, Vec2(0.5, 0.5)).value().item() == 2.0);
  Var g = tape.constant(Tensor::from({2, 2, 3}, {0, 1, 2, 3, 4, 5, 10, 11, 12, 13, 14, 15}));
  CHECK(bilinear_sample(g, Vec2(2, 1)).value().values() == std::vector<double>{5, 15});
  CHECK_THROWS_AS(bilinear_sample(g, Vec2(2.01, 0)), SampleError);

  Rng rng(1);
  const Tensor x = testsupport::random_tensor(rng, {3, 4, 5});
  const auto report = grad_check(
      [](Tape&, std::span<const Var> in) {
        return ops::sum(ops::mul(bilinear_sample(in[0], Vec2(1.3, 2.7)), bilinear_sample(in[0], Vec2(3.9, 0.2))));
      },
      std::span<const Tensor>(&x, 1), 1e-5, 1e-6);
  CHECK(report.worst < 1e-6);
}

TEST_CASE("negative set examples and brute force") {
  const std::vector<Vec3> pos{Vec3(0, 0, 0), Vec3(0.05, 0, 0), Vec3(0.5, 0, 0)};
  CHECK(negative_set(0, pos, 0.0) == std::vector<std::size_t>{1, 2});
  CHECK(negative_set(0, pos, 0.1) == std::vector<std::size_t>{2});
  CHECK(negative_set(1, pos, 10.0).empty());
  Rng rng(2);
  const auto rp = random_positions(rng, 40);
  const Tensor mask = negative_mask(rp, 0.2);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 40; ++j) {
      const double dx = rp[i].x() - rp[j].x(), dy = rp[i].y() - rp[j].y(), dz = rp[i].z() - rp[j].z();
      const bool expect = i != j && dx * dx + dy * dy + dz * dz > 0.04;
      CHECK((mask.get(i * 40 + j) == 1.0) == expect);
    }
  }
}

TEST_CASE("smooth_ap closed-form examples") {
  Tape tape;
  LossConfig cfg;
  cfg.tau = 1.0;
  cfg.normalize_features = false;
  const std::vector<Vec3> pos{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  // Query 0 sees one negative at D = -1; query 1 sees one at D = 0.
  auto kf = make_keypoint_features({tape.constant(Tensor::from({2, 1}, {1, 0})), tape.constant(Tensor::from({2, 1}, {1, 0}))},
                                   pos, false);
  const double q0 = 1.5 / (1.5 + 1.0 / (1.0 + std::exp(1.0)));
  CHECK(q0 == doctest::Approx(0.84796).epsilon(1e-5));
  CHECK(smooth_ap(kf, 0, 1, cfg).value().item() == doctest::Approx((q0 + 0.75) / 2).epsilon(1e-12));

  // No negatives: every query scores exactly 1.
  cfg.zeta = 5.0;
  CHECK(smooth_ap(kf, 0, 1, cfg).value().item() == 1.0);

  const KeypointFeatures empty;
  CHECK_THROWS_AS(smooth_ap(empty, 0, 1, cfg), FormatError);
  CHECK_THROWS_AS(smooth_ap(kf, 0, 2, cfg), FormatError);
}

TEST_CASE("smooth_ap matches the scalar oracle on random instances") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng.below(10);
    const auto pos = random_positions(rng, m);
    const Tensor a = testsupport::random_tensor(rng, {m, 16});
    const Tensor b = testsupport::random_tensor(rng, {m, 16});
    LossConfig cfg;
    cfg.tau = trial % 2 ? 0.01 : 0.5;
    Tape tape;
    const auto kf = make_keypoint_features({tape.constant(a), tape.constant(b)}, pos, true);
    Rows fa = rows_of(a), fb = rows_of(b);
    normalize(fa);
    normalize(fb);
    CHECK(smooth_ap(kf, 0, 1, cfg).value().item() == doctest::Approx(oracle_ap(fa, fb, pos, cfg.tau, cfg.zeta)).epsilon(1e-10));
    CHECK(smooth_ap(kf, 1, 0, cfg).value().item() == doctest::Approx(oracle_ap(fb, fa, pos, cfg.tau, cfg.zeta)).epsilon(1e-10));
  }
}

TEST_CASE("smooth_ap approaches discrete AP as tau shrinks") {
  Rng rng(4);
  int tested = 0;
  while (tested < 100) {
    const std::size_t m = 3 + rng.below(6);
    const auto pos = random_positions(rng, m);
    const Tensor a = testsupport::random_tensor(rng, {m, 16});
    const Tensor b = testsupport::random_tensor(rng, {m, 16});
    Rows fa = rows_of(a), fb = rows_of(b);
    normalize(fa);
    normalize(fb);
    bool margin = true;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (j != i && std::abs(dot(fb[j], fa[i]) - dot(fb[i], fa[i])) < 0.05) margin = false;
    if (!margin) continue;
    ++tested;
    LossConfig cfg;
    cfg.tau = 1e-4;
    Tape tape;
    const auto kf = make_keypoint_features({tape.constant(a), tape.constant(b)}, pos, true);
    CHECK(std::abs(smooth_ap(kf, 0, 1, cfg).value().item() - discrete_ap(fa, fb, pos, cfg.zeta)) < 1e-3);
  }
}

TEST_CASE("cgc loss examples") {
  LossConfig cfg;
  Rng rng(5);
  const auto pos = random_positions(rng, 6);
  Tape tape;
  // Identical one-hot features in all views: every negative has D = -1.
  Tensor eye = Tensor::zeros({6, 8});
  for (std::size_t i = 0; i < 6; ++i) eye.set(i * 8 + i, 1.0);
  auto kf = make_keypoint_features({tape.constant(eye), tape.constant(eye), tape.constant(eye)}, pos, true);
  CHECK(cgc_loss(kf, cfg).value().item() < 1e-3);

  const Tensor a = testsupport::random_tensor(rng, {6, 8});
  const Tensor b = testsupport::random_tensor(rng, {6, 8});
  auto two = make_keypoint_features({tape.constant(a), tape.constant(b)}, pos, true);
  const double expect = 1.0 - 0.5 * (smooth_ap(two, 0, 1, cfg).value().item() + smooth_ap(two, 1, 0, cfg).value().item());
  CHECK(cgc_loss(two, cfg).value().item() == doctest::Approx(expect).epsilon(1e-14));

  auto one = make_keypoint_features({tape.constant(a)}, pos, true);
  CHECK_THROWS_AS(cgc_loss(one, cfg), FormatError);
}

TEST_CASE("cgc loss range and monotonicity under negative-similarity decrease") {
  Rng rng(6);
  LossConfig cfg;
  cfg.tau = 0.1;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 3 + rng.below(5);
    const auto pos = random_positions(rng, m);
    // Coordinate 4 is zero everywhere except the two entries set below, so
    // moving it changes only s_ij = f_i^0 . f_j^1.
    std::vector<Tensor> f;
    for (int v = 0; v < 3; ++v) {
      Tensor t = testsupport::random_tensor(rng, {m, 5});
      for (std::size_t r = 0; r < m; ++r) t.set(r * 5 + 4, 0.0);
      f.push_back(t);
    }
    auto loss_of = [&](const std::vector<Tensor>& feats) {
      Tape tape;
      std::vector<Var> raw;
      for (const auto& t : feats) raw.push_back(tape.constant(t));
      return cgc_loss(make_keypoint_features(raw, pos, false), cfg).value().item();
    };
    const std::size_t i = rng.below(m);
    const auto negs = negative_set(i, pos, cfg.zeta);
    if (negs.empty()) continue;
    const std::size_t j = negs[rng.below(negs.size())];
    f[0].set(i * 5 + 4, 1.0);
    double prev = loss_of(f);
    CHECK(prev >= 0.0);
    CHECK(prev < 1.0);
    for (double delta : {0.05, 0.2, 0.5, 1.0}) {
      f[1].set(j * 5 + 4, -delta);
      const double next = loss_of(f);
      CHECK(next <= prev);
      prev = next;
    }
  }
}

TEST_CASE("gradients of the ranking losses match finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + rng.below(7);
    const auto pos = random_positions(rng, m);
    std::vector<Tensor> in;
    for (int v = 0; v < 3; ++v) in.push_back(testsupport::random_tensor(rng, {m, 16}));
    LossConfig cfg;
    cfg.tau = 0.1;
    const auto report = grad_check(
        [&](Tape&, std::span<const Var> x) {
          return cgc_loss(make_keypoint_features({x[0], x[1], x[2]}, pos, true), cfg);
        },
        in);
    CHECK(report.worst < 1e-4);
    const auto ap = grad_check(
        [&](Tape&, std::span<const Var> x) {
          return smooth_ap(make_keypoint_features({x[0], x[1]}, pos, false), 0, 1, cfg);
        },
        std::span<const Tensor>(in.data(), 2));
    CHECK(ap.worst < 1e-4);
  }
}

TEST_CASE("keypoint features sampled from maps at a different resolution") {
  Tape tape;
  supervise::ConsistentKeypointBundle b;
  b.view_count = 2;
  b.world_points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  b.tracks = {Vec2(0, 0), Vec2(3, 1), Vec2(7, 7), Vec2(5, 2)};
  b.confidences = {1, 1};
  Rng rng(8);
  const Tensor map = testsupport::random_tensor(rng, {3, 4, 4});
  std::vector<Var> maps{tape.constant(map), tape.constant(map)};
  const auto kf = sample_keypoint_features(maps, b, 8, 8, false);
  REQUIRE(kf.views() == 2);
  CHECK(kf.per_view[0].shape() == Shape{2, 3});
  // Image pixel 7 of 8 lands on map pixel 3.25, clamped to 3.
  for (std::size_t c = 0; c < 3; ++c) CHECK(kf.per_view[0].value().get(3 + c) == map.get(c * 16 + 3 * 4 + 3));
  // Image pixel (3, 1) -> map (1.25, 0.25).
  const Var expect = bilinear_sample(tape.constant(map), Vec2(1.25, 0.25));
  for (std::size_t c = 0; c < 3; ++c) CHECK(kf.per_view[1].value().get(c) == doctest::Approx(expect.value().get(c)));
  const auto norm = sample_keypoint_features(maps, b, 8, 8, true);
  for (std::size_t i = 0; i < 2; ++i) {
    double n = 0;
    for (std::size_t c = 0; c < 3; ++c) n += std::pow(norm.per_view[1].value().get(i * 3 + c), 2);
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
  }
}

TEST_CASE("action loss") {
  Tape tape;
  ActionLogits uniform{{tape.constant(Tensor::zeros({4, 4})), tape.constant(Tensor::zeros({4, 4}))},
                      tape.constant(Tensor::zeros({3, 72})),
                      tape.constant(Tensor::zeros({2})),
                      tape.constant(Tensor::zeros({2}))};
  ActionTargets target{{5, 15}, {0, 71, 3}, true, false};
  const double expect = 2 * std::log(16.0) + 3 * std::log(72.0) + 2 * std::log(2.0);
  CHECK(action_loss(uniform, target).value().item() == doctest::Approx(expect).epsilon(1e-12));

  ActionLogits peaked = uniform;
  Tensor rot = Tensor::zeros({3, 72});
  rot.set(0, 60);
  rot.set(72 + 71, 60);
  rot.set(144 + 3, 60);
  peaked.rotation = tape.constant(rot);
  peaked.gripper = tape.constant(Tensor::from({2}, {-60, 60}));
  peaked.collision = tape.constant(Tensor::from({2}, {60, -60}));
  Tensor t0 = Tensor::zeros({4, 4}), t1 = Tensor::zeros({4, 4});
  t0.set(5, 60);
  t1.set(15, 60);
  peaked.translation = {tape.constant(t0), tape.constant(t1)};
  CHECK(action_loss(peaked, target).value().item() < 1e-20);

  ActionTargets bad = target;
  bad.rotation_bins[1] = 72;
  CHECK_THROWS_AS(action_loss(uniform, bad), FormatError);
  bad = target;
  bad.translation_pixels[0] = 16;
  CHECK_THROWS_AS(action_loss(uniform, bad), FormatError);
  bad.translation_pixels = {1};
  CHECK_THROWS_AS(action_loss(uniform, bad), FormatError);

  Rng rng(9);
  std::vector<Tensor> in{testsupport::random_tensor(rng, {4, 4}), testsupport::random_tensor(rng, {3, 72}),
                         testsupport::random_tensor(rng, {2}), testsupport::random_tensor(rng, {2})};
  const auto report = grad_check(
      [&](Tape&, std::span<const Var> x) { return action_loss({{x[0]}, x[1], x[2], x[3]}, {{7}, {1, 2, 3}, false, true}); },
      in, 1e-5, 1e-6);
  CHECK(report.worst < 1e-6);
}

TEST_CASE("kl saliency") {
  Rng rng(10);
  auto random_dist = [&](std::size_t n) {
    Tensor t = testsupport::random_tensor(rng, {4, n / 4}, 0.01, 1.0);
    double s = 0;
    for (double x : t.values()) s += x;
    for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, t.get(i) / s);
    return t;
  };
  Tape tape;
  const Tensor p = random_dist(16);
  CHECK(std::abs(kl_saliency(tape.constant(p), p).value().item()) < 1e-15);

  // Uniform target against a prediction with mass 0.85 on one cell.
  Tensor pred = Tensor::full({4, 4}, 0.01);
  pred.set(0, 0.85);
  Tensor uniform = Tensor::full({4, 4}, 1.0 / 16);
  double expect = 0;
  for (std::size_t i = 0; i < 16; ++i) expect += (1.0 / 16) * std::log((1.0 / 16) / pred.get(i));
  CHECK(kl_saliency(tape.constant(pred), uniform).value().item() == doctest::Approx(expect).epsilon(1e-12));

  for (int i = 0; i < 50; ++i) {
    const Tensor a = random_dist(16), b = random_dist(16);
    CHECK(kl_saliency(tape.constant(a), b).value().item() > 0.0);
  }

  // Zero-mass target cells contribute nothing; zero prediction mass is floored.
  Tensor onehot = Tensor::zeros({4, 4});
  onehot.set(3, 1.0);
  Tensor zero_at_3 = Tensor::full({4, 4}, 1.0 / 15);
  zero_at_3.set(3, 0.0);
  CHECK(kl_saliency(tape.constant(zero_at_3), onehot).value().item() == doctest::Approx(-std::log(1e-12)));

  CHECK_THROWS_AS(kl_saliency(tape.constant(Tensor::full({4, 4}, 0.1)), uniform), FormatError);
  CHECK_THROWS_AS(kl_saliency(tape.constant(uniform), Tensor::full({4, 4}, 0.1)), FormatError);

  const Tensor target = random_dist(16);
  const Tensor logits = testsupport::random_tensor(rng, {16});
  const auto report = grad_check(
      [&](Tape&, std::span<const Var> x) { return kl_saliency(ops::reshape(ops::softmax(x[0]), {4, 4}), target); },
      std::span<const Tensor>(&logits, 1), 1e-5, 1e-6);
  CHECK(report.worst < 1e-6);
}

TEST_CASE("total loss") {
  Tape tape;
  LossConfig cfg;
  Var a = tape.leaf(Tensor::scalar(2.0).set_requires_grad(true));
  Var c = tape.leaf(Tensor::scalar(0.5).set_requires_grad(true));
  Var t = total_loss(a, c, cfg);
  CHECK(t.value().item() == 2.5);
  tape.backward(t);
  CHECK(tape.grad(a).item() == 1.0);
  CHECK(tape.grad(c).item() == 1.0);
  cfg.lambda = 0.0;
  CHECK(total_loss(a, c, cfg).value().item() == 2.0);
  CHECK(total_loss(a, Var{}, cfg).value().item() == 2.0);
  cfg.lambda = 1.0;
  CHECK_THROWS_AS(total_loss(tape.constant(Tensor::scalar(NAN)), c, cfg), NumericalError);

  LossConfig bad;
  bad.tau = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const auto j = nlohmann::json::parse(loss_report_json("cgc", 0.25, 1.5));
  CHECK(j["name"] == "cgc");
  CHECK(j["value"] == 0.25);
  CHECK(j["grad_norm"] == 1.5);
}

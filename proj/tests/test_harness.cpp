#include "mcg/harness.hpp"
#include "mcg/layers.hpp"
#include "mcg/rng.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <numbers>

using namespace mcg;

namespace {

constexpr double kPi = std::numbers::pi;

Tensor4 random_image(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor4 t(1, c, h, w);
  for (double& v : t.values())
    v = rng.normal();
  return t;
}

// Plus-shaped cross of half-width 1 and arm length 3 about the center of a 9x9 image,
// with one longer arm so a quarter turn is visible.
Tensor4 cross_image() {
  Tensor4 t(1, 1, 9, 9);
  for (int i = 1; i <= 7; ++i) {
    t(0, 0, 4, i) = 1.0;
    t(0, 0, i, 4) = 1.0;
  }
  t(0, 0, 4, 8) = 1.0;
  return t;
}

} // namespace

TEST_CASE("warping by the identity leaves the image unchanged") {
  const Tensor4 img = random_image(2, 7, 6, 1);
  const Tensor4 out = warp_image(img, GroupElement::identity());
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(std::abs(out.storage()[i] - img.storage()[i]) <= 1e-12);
}

TEST_CASE("integer translation with circular boundary is an exact shift") {
  const Tensor4 img = random_image(1, 6, 7, 2);
  const Tensor4 out = warp_image(img, {{2.0, -1.0}, {}}, WarpBoundary::Circular);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x)
      CHECK(out(0, 0, (y - 1 + 6) % 6, (x + 2) % 7) == img(0, 0, y, x));
}

TEST_CASE("quarter turn permutes grid pixels") {
  const Tensor4 img = cross_image();
  const Tensor4 out = warp_image(img, {{}, {0.0, kPi / 2, 0.0}});
  // out(p) = in(R^-1 (p - c) + c); R^-1 maps (u, v) to (-v, u) for this rotation.
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      const int u = x - 4, v = y - 4;
      CHECK(std::abs(out(0, 0, y, x) - img(0, 0, u + 4, -v + 4)) < 1e-10);
    }
}

TEST_CASE("zero boundary reads zero outside") {
  Tensor4 img(1, 1, 3, 3, 1.0);
  const Tensor4 out = warp_image(img, {{1.0, 0.0}, {}});
  CHECK(out(0, 0, 1, 0) == 0.0);
  CHECK(out(0, 0, 1, 1) == 1.0);
}

TEST_CASE("mGE vanishes for identity transforms") {
  auto basis = std::make_shared<const FilterBasis>(BasisSpec{BasisKind::FourierBessel, 5, 9});
  LayerInit init;
  init.geometry = {1, 2, Padding::Zero};
  init.ranges = {0.0, 1.0, 2 * kPi, 0.25 * kPi};
  const WmcgLayer layer(make_layer_params(basis, 1, 3, init, 3));
  Tensor4 images(4, 1, 12, 12);
  Rng rng(4);
  for (double& v : images.values())
    v = rng.normal();
  MgeConfig cfg;
  cfg.shear_max = cfg.theta_max = 0.0;
  cfg.scale_lo = cfg.scale_hi = 1.0;
  const MgeResult r = mge([&](const Tensor4& x) { return layer.forward(x); }, images, cfg);
  CHECK(r.mean_raw <= 1e-10);
  CHECK(r.records.size() == 4);
}

TEST_CASE("circular convolution is translation equivariant") {
  auto basis = std::make_shared<const FilterBasis>(BasisSpec{BasisKind::FourierBessel, 5, 9});
  LayerInit init;
  init.geometry = {1, 2, Padding::Circular};
  init.ranges = {0.0, 1.0, 2 * kPi, 0.25 * kPi};
  const WmcgLayer layer(make_layer_params(basis, 1, 3, init, 5));
  Tensor4 images(3, 1, 10, 10);
  Rng rng(6);
  for (double& v : images.values())
    v = rng.normal();
  MgeConfig cfg;
  cfg.shear_max = cfg.theta_max = 0.0;
  cfg.scale_lo = cfg.scale_hi = 1.0;
  cfg.max_shift = 3;
  cfg.num_samples = 4;
  cfg.boundary = WarpBoundary::Circular;
  const MgeResult r = mge([&](const Tensor4& x) { return layer.forward(x); }, images, cfg);
  CHECK(r.mean_raw < 1e-8);
}

TEST_CASE("mGE is reproducible and positive for affine probes") {
  auto basis = std::make_shared<const FilterBasis>(BasisSpec{BasisKind::FourierBessel, 5, 9});
  LayerInit init;
  init.geometry = {1, 2, Padding::Zero};
  const WmcgLayer layer(make_layer_params(basis, 1, 2, init, 7));
  const Tensor4 images = random_image(1, 16, 16, 8);
  MgeConfig cfg;
  cfg.crop = 5;
  cfg.seed = 9;
  auto f = [&](const Tensor4& x) { return layer.forward(x); };
  const MgeResult a = mge(f, images, cfg), b = mge(f, images, cfg);
  CHECK(a.mean_raw == b.mean_raw);
  CHECK(a.mean_normalized == b.mean_normalized);
  CHECK(a.mean_raw > 0.0);
  cfg.crop = 8;
  CHECK_THROWS_AS(mge(f, images, cfg), std::invalid_argument);
}

TEST_CASE("PSNR") {
  const Tensor4 a(1, 1, 2, 2, {0.1, 0.2, 0.3, 0.4});
  CHECK(psnr(a, a, 1.0) == kPsnrCap);
  CHECK(psnr_from_mse(1.0, 1.0) == doctest::Approx(0.0));
  CHECK(psnr_from_mse(25.0, 255.0) == doctest::Approx(10.0 * std::log10(2601.0)));
  CHECK(psnr_from_mse(25.0, 255.0) == doctest::Approx(34.15).epsilon(1e-3));
  CHECK(psnr_from_mse(0.01, 1.0) > psnr_from_mse(0.02, 1.0));
  Tensor4 b = a, c = a;
  for (double& v : b.values())
    v += 0.05;
  for (double& v : c.values())
    v += 3.0;
  Tensor4 bc = b;
  for (double& v : bc.values())
    v += 3.0;
  CHECK(psnr(b, a, 1.0) == doctest::Approx(psnr(bc, c, 1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(a, Tensor4(1, 1, 1, 4), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(psnr_from_mse(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("classification error") {
  const Tensor4 logits(3, 3, 1, 1, {5, 1, 0, 0, 1, 5, 1, 0, 5});
  const std::vector<int> one_right{0, 0, 0};
  CHECK(classification_error(logits, one_right) == doctest::Approx(66.67).epsilon(1e-4));
  const std::vector<int> all_right{0, 2, 2};
  CHECK(classification_error(logits, all_right) == 0.0);
  const std::vector<int> all_wrong{1, 0, 1};
  CHECK(classification_error(logits, all_wrong) == 100.0);
  CHECK(classification_error(logits, all_wrong, 2) == doctest::Approx(200.0 / 3));
}

TEST_CASE("median and log-log slope") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS(median({}));
  const std::vector<double> n{16, 64, 256, 1024};
  std::vector<double> e;
  for (double v : n)
    e.push_back(3.0 / std::sqrt(v));
  CHECK(log_log_slope(n, e) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("constant integrand has zero error for every N") {
  ConvergenceSpec spec;
  spec.kind = IntegrandKind::Constant;
  spec.seeds = 4;
  const ConvergenceResult r = mc_convergence_study(spec);
  CHECK(r.degenerate);
  CHECK_FALSE(r.slope.has_value());
  for (const auto& row : r.rows)
    CHECK(row.abs_err == 0.0);
}

TEST_CASE("rotation integrand reference is exact on a periodic grid") {
  const SmoothIntegrand f(IntegrandKind::Rotation);
  double coarse = 0.0, fine = 0.0;
  const auto g1 = trapezoid_grid(f.ranges(), 64), g2 = trapezoid_grid(f.ranges(), 129);
  for (std::size_t i = 0; i < g1.points.size(); ++i)
    coarse += g1.weights[i] * f(g1.points[i]);
  for (std::size_t i = 0; i < g2.points.size(); ++i)
    fine += g2.weights[i] * f(g2.points[i]);
  CHECK(std::abs(coarse - fine) < 1e-12);
}

TEST_CASE("Monte Carlo errors shrink with N") {
  ConvergenceSpec spec;
  spec.kind = IntegrandKind::Rotation;
  spec.sample_counts = {8, 512};
  spec.seeds = 16;
  const ConvergenceResult r = mc_convergence_study(spec);
  REQUIRE(r.median_errors.size() == 2);
  CHECK(r.median_errors[1] < r.median_errors[0]);
  CHECK(r.rows.size() == 32);
  CHECK(r.slope.has_value());
}

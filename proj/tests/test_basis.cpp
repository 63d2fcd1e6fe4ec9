#include "mcg/basis.hpp"
#include "mcg/rng.hpp"
#include "mcg/tensor.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <numbers>

using namespace mcg;

namespace {

// Power series J_m(x) = sum_k (-1)^k / (k! (k + m)!) (x / 2)^(2k + m).
double bessel_series(int m, double x) {
  double term = std::pow(x / 2.0, m) / std::tgamma(m + 1.0);
  double sum = term;
  for (int k = 1; k < 80; ++k) {
    term *= -(x * x / 4.0) / (k * static_cast<double>(k + m));
    sum += term;
  }
  return sum;
}

// Largest least-squares residual when projecting random vectors onto the
// span of the reference rasters (modified Gram-Schmidt).
double span_residual(const FilterBasis& basis, int trials) {
  const auto cells = static_cast<std::size_t>(basis.cells());
  std::vector<std::vector<double>> q;
  for (int j = 0; j < basis.size(); ++j) {
    std::vector<double> v(basis.reference(j).begin(), basis.reference(j).end());
    for (const auto& u : q) {
      const double d = dot(u, v);
      for (std::size_t c = 0; c < cells; ++c)
        v[c] -= d * u[c];
    }
    const double n = l2_norm(v);
    if (n < 1e-10)
      return 1.0;
    for (double& x : v)
      x /= n;
    q.push_back(v);
  }
  Rng rng(3);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> v(cells);
    for (double& x : v)
      x = rng.normal();
    const double norm = l2_norm(v);
    for (const auto& u : q) {
      const double d = dot(u, v);
      for (std::size_t c = 0; c < cells; ++c)
        v[c] -= d * u[c];
    }
    worst = std::max(worst, l2_norm(v) / norm);
  }
  return worst;
}

} // namespace

TEST_CASE("Bessel functions agree with the power series") {
  for (int m = 0; m <= 6; ++m)
    for (double x = 0.0; x <= 12.0; x += 0.37)
      REQUIRE(std::abs(bessel_j(m, x) - bessel_series(m, x)) < 1e-10);
  CHECK_THROWS_AS(bessel_j(0, -1.0), std::domain_error);
}

TEST_CASE("Bessel zeros match tabulated values") {
  const auto z0 = bessel_zeros(0, 3);
  CHECK(z0[0] == doctest::Approx(2.404825557695773).epsilon(1e-12));
  CHECK(z0[1] == doctest::Approx(5.520078110286311).epsilon(1e-12));
  CHECK(z0[2] == doctest::Approx(8.653727912911013).epsilon(1e-12));
  CHECK(bessel_zeros(1, 1)[0] == doctest::Approx(3.831705970207512).epsilon(1e-12));
  CHECK(bessel_zeros(2, 1)[0] == doctest::Approx(5.135622301840683).epsilon(1e-12));
  for (int m = 0; m < 5; ++m)
    for (double z : bessel_zeros(m, 4))
      CHECK(std::abs(bessel_j(m, z)) < 1e-11);
}

TEST_CASE("basis parameter validation") {
  CHECK_THROWS_AS(FilterBasis({BasisKind::FourierBessel, 4, 9}), std::invalid_argument);
  CHECK_THROWS_AS(FilterBasis({BasisKind::FourierBessel, 3, 10}), std::invalid_argument);
  CHECK_THROWS_AS(FilterBasis({BasisKind::FourierBessel, 5, 0}), std::invalid_argument);
  CHECK_THROWS_AS(FilterBasis({BasisKind::Dirac, 3, 4}), std::invalid_argument);
  const FilterBasis b({BasisKind::FourierBessel, 5, 9});
  CHECK_THROWS_AS(b.mode(9), std::out_of_range);
}

TEST_CASE("Fourier-Bessel modes come in ascending frequency, cosine first") {
  const FilterBasis b({BasisKind::FourierBessel, 9, 12});
  CHECK(b.mode(0).order == 0);
  CHECK(b.mode(0).lambda == doctest::Approx(2.404825557695773));
  CHECK(b.mode(1).order == 1);
  CHECK_FALSE(b.mode(1).sine);
  CHECK(b.mode(2).order == 1);
  CHECK(b.mode(2).sine);
  for (int j = 1; j < b.size(); ++j)
    CHECK(b.mode(j).lambda >= b.mode(j - 1).lambda);
}

TEST_CASE("analytic values") {
  const FilterBasis b({BasisKind::FourierBessel, 5, 3});
  const double l01 = 2.404825557695773, l11 = 3.831705970207512;
  CHECK(b.evaluate(0, 0.5, 1.0) == doctest::Approx(bessel_j(0, 0.5 * l01)));
  CHECK(b.evaluate(1, 0.5, 0.3) == doctest::Approx(bessel_j(1, 0.5 * l11) * std::cos(0.3)));
  CHECK(b.evaluate(2, 0.5, 0.3) == doctest::Approx(bessel_j(1, 0.5 * l11) * std::sin(0.3)));
  CHECK(b.evaluate(0, 1.2, 0.0) == 0.0);
}

TEST_CASE("reference rasters have unit norm") {
  for (int k : {3, 5, 7, 9})
    for (int nb : {1, 3, 6, 9}) {
      const FilterBasis b({BasisKind::FourierBessel, k, nb});
      for (int j = 0; j < nb; ++j)
        REQUIRE(std::abs(l2_norm(b.reference(j)) - 1.0) < 1e-12);
    }
}

TEST_CASE("rasterize at the identity reproduces the reference exactly") {
  const FilterBasis b({BasisKind::FourierBessel, 5, 9});
  for (int j = 0; j < 9; ++j) {
    const auto r = b.rasterize(j, TransformParams{});
    const auto ref = b.reference(j);
    CHECK(std::equal(r.begin(), r.end(), ref.begin()));
  }
}

TEST_CASE("radial modes are rotation invariant") {
  const FilterBasis b({BasisKind::FourierBessel, 7, 12});
  for (int j = 0; j < b.size(); ++j) {
    if (b.mode(j).order != 0 || b.mode(j).constant)
      continue;
    for (double phi = 0.0; phi < 6.3; phi += 0.7)
      CHECK(std::abs(b.evaluate(j, 0.4, phi) - b.evaluate(j, 0.4, 0.0)) < 1e-10);
    for (double theta : {0.3, 1.1, 2.9}) {
      const auto r = b.rasterize(j, {0.0, theta, 0.0});
      const auto ref = b.reference(j);
      for (std::size_t c = 0; c < r.size(); ++c)
        REQUIRE(std::abs(r[c] - ref[c]) < 1e-10);
    }
  }
}

TEST_CASE("rotating a cosine mode by its half period flips the sign") {
  const FilterBasis b({BasisKind::FourierBessel, 5, 3});
  const auto r = b.rasterize(1, {0.0, std::numbers::pi, 0.0});
  const auto ref = b.reference(1);
  for (std::size_t c = 0; c < r.size(); ++c)
    CHECK(r[c] == doctest::Approx(-ref[c]).epsilon(1e-12));
}

TEST_CASE("scaling applies the Jacobian factor at the center") {
  const FilterBasis b({BasisKind::FourierBessel, 5, 1});
  const auto r = b.rasterize(0, {1.0, 0.0, 0.0});
  // Center cell: f(0) is unchanged by the map, so only 2^(-2 alpha) remains.
  CHECK(r[12] == doctest::Approx(0.25 * b.reference(0)[12]).epsilon(1e-14));
}

TEST_CASE("a full basis on the 3x3 grid spans every kernel") {
  const FilterBasis b({BasisKind::FourierBessel, 3, 9});
  CHECK(b.mode(8).constant);
  CHECK(span_residual(b, 50) <= 1e-8);
}

TEST_CASE("truncated bases are nearly orthogonal on fine grids") {
  const FilterBasis b({BasisKind::FourierBessel, 15, 9});
  const auto g = gram_matrix(b);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j)
      CHECK(std::abs(g[static_cast<std::size_t>(i * 9 + j)] - (i == j ? 1.0 : 0.0)) < 1e-3);
}

TEST_CASE("Dirac basis is one-hot at the identity") {
  const FilterBasis b = dirac_basis(3);
  CHECK(b.size() == 9);
  for (int j = 0; j < 9; ++j) {
    const auto r = b.reference(j);
    for (int c = 0; c < 9; ++c)
      CHECK(r[static_cast<std::size_t>(c)] == (c == j ? 1.0 : 0.0));
  }
  const auto g = gram_matrix(b);
  for (int i = 0; i < 9; ++i)
    CHECK(g[static_cast<std::size_t>(i * 9 + i)] == 1.0);
}

TEST_CASE("Dirac tents interpolate under a half-pixel scaling") {
  const FilterBasis b = dirac_basis(3);
  // alpha = 1 doubles the grid, so offset (1, 0) samples the tent at 0.5.
  const auto r = b.rasterize(4, {1.0, 0.0, 0.0});
  CHECK(r[4] == doctest::Approx(0.25));
  CHECK(r[5] == doctest::Approx(0.25 * 0.5));
  CHECK(r[8] == doctest::Approx(0.25 * 0.25));
}

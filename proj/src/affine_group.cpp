#include "mcg/affine_group.hpp"

#include "mcg/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mcg {

Mat2 Mat2::inverse() const {
  const double det_value = det();
  if (det_value == 0.0)
    throw std::domain_error("Mat2::inverse: singular matrix");
  const double inv = 1.0 / det_value;
  return {d * inv, -b * inv, -c * inv, a * inv};
}

bool TransformParams::is_finite() const {
  return std::isfinite(alpha) && std::isfinite(theta) && std::isfinite(shear);
}

void SampleRanges::validate() const {
  auto check_finite = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string(name) + " must be finite");
  };
  check_finite(alpha_lo, "alpha_lo");
  check_finite(alpha_hi, "alpha_hi");
  check_finite(theta_max, "theta_max");
  check_finite(shear_max, "shear_max");
  if (alpha_lo > alpha_hi)
    throw std::invalid_argument("alpha_lo must not exceed alpha_hi");
  if (theta_max < 0.0)
    throw std::invalid_argument("theta_max must be non-negative");
  if (shear_max < 0.0 || shear_max >= std::numbers::pi / 2)
    throw std::invalid_argument("shear_max must lie in [0, pi/2)");
}

Mat2 shear_matrix(double s) { return {1.0, s, 0.0, 1.0}; }

Mat2 scale_matrix(double alpha) {
  const double f = std::exp2(alpha);
  return {f, 0.0, 0.0, f};
}

Mat2 rotation_matrix(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c, s, -s, c};
}

Mat2 transform_matrix(const TransformParams& a) {
  return rotation_matrix(a.theta) * scale_matrix(a.alpha) * shear_matrix(a.shear);
}

GroupElement group_product(const GroupElement& g1, const GroupElement& g2) {
  return {g1.x + transform_matrix(g1.a) * g2.x, g1.a + g2.a};
}

GroupElement group_inverse(const GroupElement& g) {
  return {-(transform_matrix(g.a).inverse() * g.x), -g.a};
}

Vec2 act_on_point(const GroupElement& g, Vec2 p) { return transform_matrix(g.a) * p + g.x; }

std::vector<TransformParams> sample_transforms(const SampleRanges& ranges, std::size_t n,
                                               std::uint64_t seed) {
  ranges.validate();
  if (n == 0)
    throw std::invalid_argument("sample_transforms: n must be at least 1");
  Rng rng(seed);
  std::vector<TransformParams> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TransformParams t;
    t.alpha = rng.uniform(ranges.alpha_lo, ranges.alpha_hi);
    t.theta = rng.uniform(-ranges.theta_max, ranges.theta_max);
    t.shear = std::tan(rng.uniform(-ranges.shear_max, ranges.shear_max));
    out.push_back(t);
  }
  return out;
}

namespace {

struct Axis {
  std::vector<double> nodes;
  std::vector<double> weights;
};

Axis make_axis(double lo, double hi, std::size_t n, bool periodic) {
  Axis axis;
  if (hi <= lo || n < 2) {
    axis.nodes = {lo};
    axis.weights = {1.0};
    return axis;
  }
  if (periodic) {
    const double step = (hi - lo) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      axis.nodes.push_back(lo + step * static_cast<double>(i));
      axis.weights.push_back(1.0 / static_cast<double>(n));
    }
    return axis;
  }
  const double step = (hi - lo) / static_cast<double>(n - 1);
  const double total = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    axis.nodes.push_back(lo + step * static_cast<double>(i));
    const bool end = (i == 0 || i + 1 == n);
    axis.weights.push_back((end ? 0.5 : 1.0) / total);
  }
  return axis;
}

bool whole_turns(double width) {
  const double turns = width / (2.0 * std::numbers::pi);
  return width > 0.0 && std::abs(turns - std::round(turns)) < 1e-12;
}

} // namespace

TransformGrid trapezoid_grid(const SampleRanges& ranges, std::size_t per_axis) {
  ranges.validate();
  if (per_axis == 0)
    throw std::invalid_argument("trapezoid_grid: per_axis must be at least 1");
  const Axis alpha = make_axis(ranges.alpha_lo, ranges.alpha_hi, per_axis, false);
  const Axis theta = make_axis(-ranges.theta_max, ranges.theta_max, per_axis,
                               whole_turns(2.0 * ranges.theta_max));
  const Axis shear = make_axis(-ranges.shear_max, ranges.shear_max, per_axis, false);
  TransformGrid grid;
  for (std::size_t i = 0; i < alpha.nodes.size(); ++i)
    for (std::size_t j = 0; j < theta.nodes.size(); ++j)
      for (std::size_t k = 0; k < shear.nodes.size(); ++k) {
        grid.points.push_back({alpha.nodes[i], theta.nodes[j], std::tan(shear.nodes[k])});
        grid.weights.push_back(alpha.weights[i] * theta.weights[j] * shear.weights[k]);
      }
  return grid;
}

} // namespace mcg

#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace mcg {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

/// Row-major 2x2 matrix [[a, b], [c, d]].
struct Mat2 {
  double a = 1.0, b = 0.0;
  double c = 0.0, d = 1.0;

  static Mat2 identity() { return {}; }
  double det() const { return a * d - b * c; }
  Mat2 inverse() const;

  friend Mat2 operator*(const Mat2& l, const Mat2& r) {
    return {l.a * r.a + l.b * r.c, l.a * r.b + l.b * r.d,
            l.c * r.a + l.d * r.c, l.c * r.b + l.d * r.d};
  }
  friend Vec2 operator*(const Mat2& m, Vec2 v) {
    return {m.a * v.x + m.b * v.y, m.c * v.x + m.d * v.y};
  }
  friend bool operator==(const Mat2&, const Mat2&) = default;
};

/// Transform parameters a = (alpha, theta, s): log2 scale, rotation angle
/// (radians) and shear coefficient.
struct TransformParams {
  double alpha = 0.0;
  double theta = 0.0;
  double shear = 0.0;

  bool is_finite() const;
  friend TransformParams operator+(TransformParams l, TransformParams r) {
    return {l.alpha + r.alpha, l.theta + r.theta, l.shear + r.shear};
  }
  friend TransformParams operator-(TransformParams t) {
    return {-t.alpha, -t.theta, -t.shear};
  }
  friend bool operator==(TransformParams, TransformParams) = default;
};

/// Element (x, a) of the semidirect product R^2 x| A.
struct GroupElement {
  Vec2 x;
  TransformParams a;

  static GroupElement identity() { return {}; }
  friend bool operator==(const GroupElement&, const GroupElement&) = default;
};

/// Half-open sampling ranges. shear_max is an angle; the sampled shear
/// coefficient is tan(xi) with xi ~ U[-shear_max, shear_max).
struct SampleRanges {
  double alpha_lo = 0.0;
  double alpha_hi = 0.0;
  double theta_max = 0.0;
  double shear_max = 0.0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

Mat2 shear_matrix(double s);
Mat2 scale_matrix(double alpha);
Mat2 rotation_matrix(double theta);

/// M(a) = R(theta) A(alpha) S(s).
Mat2 transform_matrix(const TransformParams& a);

/// (x1 + M(a1) x2, a1 + a2).
GroupElement group_product(const GroupElement& g1, const GroupElement& g2);

/// (-M(a)^-1 x, -a). Exact two-sided inverse whenever M(-a) = M(a)^-1,
/// i.e. for single-factor and rotation/scale transforms.
GroupElement group_inverse(const GroupElement& g);

/// M(a) p + x.
Vec2 act_on_point(const GroupElement& g, Vec2 p);

/// n i.i.d. draws; deterministic in seed. Validates ranges first.
std::vector<TransformParams> sample_transforms(const SampleRanges& ranges, std::size_t n,
                                               std::uint64_t seed);

/// Evenly spaced grid with `per_axis` points along every axis whose range is
/// non-degenerate, with trapezoid quadrature weights normalized to sum 1.
/// A rotation axis spanning a whole number of turns is treated as periodic
/// (end point dropped, equal weights).
struct TransformGrid {
  std::vector<TransformParams> points;
  std::vector<double> weights;
};
TransformGrid trapezoid_grid(const SampleRanges& ranges, std::size_t per_axis);

} // namespace mcg

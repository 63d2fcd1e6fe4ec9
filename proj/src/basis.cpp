#include "mcg/basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mcg {

double bessel_j(int m, double x) {
  if (m < 0)
    throw std::domain_error("bessel_j: order must be non-negative");
  if (!(x >= 0.0))
    throw std::domain_error("bessel_j: argument must be non-negative");
  return std::cyl_bessel_j(static_cast<double>(m), x);
}

std::vector<double> bessel_zeros(int m, int count) {
  std::vector<double> zeros;
  zeros.reserve(static_cast<std::size_t>(count));
  // Zeros of J_m are separated by more than 2, and the first exceeds m.
  constexpr double step = 0.25;
  double lo = std::max(static_cast<double>(m), step);
  double f_lo = bessel_j(m, lo);
  while (static_cast<int>(zeros.size()) < count) {
    const double hi = lo + step;
    const double f_hi = bessel_j(m, hi);
    if (f_lo == 0.0) {
      zeros.push_back(lo);
    } else if ((f_lo < 0.0) != (f_hi < 0.0)) {
      double a = lo, b = hi, fa = f_lo;
      while (b - a > 1e-12) {
        const double mid = 0.5 * (a + b);
        const double fm = bessel_j(m, mid);
        if ((fm < 0.0) == (fa < 0.0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
      zeros.push_back(0.5 * (a + b));
    }
    lo = hi;
    f_lo = f_hi;
  }
  return zeros;
}

void BasisSpec::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw std::invalid_argument("basis.kernel_size must be a positive odd integer");
  const int cells = kernel_size * kernel_size;
  if (num_basis < 1 || num_basis > cells)
    throw std::invalid_argument("basis.num_basis must lie in [1, kernel_size^2]");
  if (kind == BasisKind::Dirac && num_basis != cells)
    throw std::invalid_argument("Dirac basis requires num_basis = kernel_size^2");
}

namespace {

double tent(double v) { return std::max(0.0, 1.0 - std::abs(v)); }

std::vector<BasisMode> candidate_modes(int kernel_size) {
  // Enough angular orders and radial roots to cover k^2 modes even after
  // grid-degenerate ones are dropped.
  const int max_order = 2 * kernel_size + 8;
  const int max_roots = kernel_size + 4;
  std::vector<BasisMode> modes;
  for (int m = 0; m <= max_order; ++m) {
    const auto zeros = bessel_zeros(m, max_roots);
    for (int q = 0; q < max_roots; ++q) {
      modes.push_back({m, q + 1, zeros[q], false, false});
      if (m > 0)
        modes.push_back({m, q + 1, zeros[q], true, false});
    }
  }
  std::stable_sort(modes.begin(), modes.end(), [](const BasisMode& l, const BasisMode& r) {
    if (l.lambda != r.lambda)
      return l.lambda < r.lambda;
    return !l.sine && r.sine;
  });
  return modes;
}

double mode_value(const BasisMode& mode, double r, double phi) {
  if (r > 1.0)
    return 0.0;
  if (mode.constant)
    return 1.0;
  const double radial = bessel_j(mode.order, mode.lambda * r);
  if (mode.order == 0)
    return radial;
  return radial * (mode.sine ? std::sin(mode.order * phi) : std::cos(mode.order * phi));
}

} // namespace

FilterBasis::FilterBasis(const BasisSpec& spec) : spec_(spec) {
  spec_.validate();
  const int k = spec_.kernel_size;
  const int cells = k * k;
  const int count = spec_.num_basis;
  rasters_.assign(static_cast<std::size_t>(count * cells), 0.0);
  norm_.assign(static_cast<std::size_t>(count), 1.0);

  if (spec_.kind == BasisKind::Dirac) {
    for (int j = 0; j < count; ++j) {
      modes_.push_back({0, 0, 0.0, false, false});
      rasters_[static_cast<std::size_t>(j * cells + j)] = 1.0;
    }
    return;
  }

  const bool full = (count == cells);
  const int wanted = full ? count - 1 : count;
  std::vector<double> raw(static_cast<std::size_t>(cells));
  auto raw_raster = [&](const BasisMode& mode) {
    const int half = (k - 1) / 2;
    const double rho = half + 0.5;
    double sq = 0.0;
    for (int iy = 0; iy < k; ++iy)
      for (int ix = 0; ix < k; ++ix) {
        const double x = (ix - half) / rho;
        const double y = (iy - half) / rho;
        const double v = mode_value(mode, std::hypot(x, y), std::atan2(y, x));
        raw[static_cast<std::size_t>(iy * k + ix)] = v;
        sq += v * v;
      }
    return std::sqrt(sq);
  };
  auto accept = [&](const BasisMode& mode) {
    const double norm = raw_raster(mode);
    if (norm < 1e-9)
      return false;
    const std::size_t j = modes_.size();
    modes_.push_back(mode);
    norm_[j] = 1.0 / norm;
    // Same arithmetic as rasterize_mapped at the identity, so the two agree bit-for-bit.
    for (int c = 0; c < cells; ++c)
      rasters_[j * static_cast<std::size_t>(cells) + static_cast<std::size_t>(c)] =
          norm_[j] * raw[static_cast<std::size_t>(c)];
    return true;
  };

  for (const BasisMode& mode : candidate_modes(k)) {
    if (static_cast<int>(modes_.size()) == wanted)
      break;
    accept(mode);
  }
  if (static_cast<int>(modes_.size()) != wanted)
    throw std::runtime_error("FilterBasis: not enough non-degenerate Fourier-Bessel modes");
  if (full)
    accept({0, 0, 0.0, false, true});
}

const BasisMode& FilterBasis::mode(int j) const {
  if (j < 0 || j >= size())
    throw std::out_of_range("basis index " + std::to_string(j) + " out of range");
  return modes_[static_cast<std::size_t>(j)];
}

double FilterBasis::evaluate(int j, double r, double phi) const {
  if (r < 0.0)
    throw std::domain_error("FilterBasis::evaluate: negative radius");
  return mode_value(mode(j), r, phi);
}

std::span<const double> FilterBasis::reference(int j) const {
  mode(j);
  return {rasters_.data() + static_cast<std::size_t>(j * cells()),
          static_cast<std::size_t>(cells())};
}

double FilterBasis::sample(int j, Vec2 q) const {
  const BasisMode& m = modes_[static_cast<std::size_t>(j)];
  if (spec_.kind == BasisKind::Dirac) {
    const int k = spec_.kernel_size;
    const int half = (k - 1) / 2;
    const double cx = (j % k) - half;
    const double cy = (j / k) - half;
    return tent(q.x - cx) * tent(q.y - cy);
  }
  const double rho = (spec_.kernel_size - 1) / 2 + 0.5;
  const double x = q.x / rho;
  const double y = q.y / rho;
  return mode_value(m, std::hypot(x, y), std::atan2(y, x));
}

void FilterBasis::rasterize_mapped(int j, const Mat2& inverse_map, double factor,
                                   std::span<double> out) const {
  mode(j);
  if (static_cast<int>(out.size()) != cells())
    throw std::invalid_argument("rasterize_mapped: output span has wrong size");
  const int k = spec_.kernel_size;
  const int half = (k - 1) / 2;
  const double scale = norm_[static_cast<std::size_t>(j)] * factor;
  for (int iy = 0; iy < k; ++iy)
    for (int ix = 0; ix < k; ++ix) {
      const Vec2 p{static_cast<double>(ix - half), static_cast<double>(iy - half)};
      out[static_cast<std::size_t>(iy * k + ix)] = scale * sample(j, inverse_map * p);
    }
}

std::vector<double> FilterBasis::rasterize(int j, const TransformParams& t) const {
  std::vector<double> out(static_cast<std::size_t>(cells()));
  rasterize_mapped(j, transform_matrix(t).inverse(), std::exp2(-2.0 * t.alpha), out);
  return out;
}

FilterBasis dirac_basis(int kernel_size) {
  return FilterBasis({BasisKind::Dirac, kernel_size, kernel_size * kernel_size});
}

std::vector<double> gram_matrix(const FilterBasis& basis) {
  const int count = basis.size();
  std::vector<double> gram(static_cast<std::size_t>(count * count));
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < count; ++j) {
      const auto ri = basis.reference(i);
      const auto rj = basis.reference(j);
      double dot = 0.0;
      for (std::size_t c = 0; c < ri.size(); ++c)
        dot += ri[c] * rj[c];
      gram[static_cast<std::size_t>(i * count + j)] = dot;
    }
  return gram;
}

} // namespace mcg

#pragma once

#include "mcg/affine_group.hpp"

#include <span>
#include <vector>

namespace mcg {

/// Bessel function of the first kind J_m(x). Throws std::domain_error for
/// negative m or x.
double bessel_j(int m, double x);

/// First `count` positive zeros of J_m, ascending, bisected to 1e-12.
std::vector<double> bessel_zeros(int m, int count);

enum class BasisKind { FourierBessel, Dirac };

struct BasisSpec {
  BasisKind kind = BasisKind::FourierBessel;
  int kernel_size = 5;
  int num_basis = 9;

  /// Throws std::invalid_argument when the combination is not constructible.
  void validate() const;
};

/// One analytic basis function on the unit disk.
///
/// Fourier-Bessel modes are J_m(lambda r) cos(m phi) or J_m(lambda r) sin(m phi)
/// with lambda the q-th zero of J_m. The constant mode (lambda = 0) only
/// appears as the final function of a full basis (K = k^2).
struct BasisMode {
  int order = 0;        // m (angular frequency)
  int root_index = 0;   // q, 1-based; 0 for the constant mode
  double lambda = 0.0;  // zero of J_m, 0 for the constant mode
  bool sine = false;
  bool constant = false;
};

/// K analytic basis functions together with their unit-norm rasterizations on
/// a k x k grid.
///
/// FB grid offsets p in [-(k-1)/2, (k-1)/2]^2 are mapped to the unit disk by
/// dividing by rho = (k-1)/2 + 0.5. Dirac functions are bilinear tents in grid
/// units, which are one-hot at the identity transform.
class FilterBasis {
public:
  explicit FilterBasis(const BasisSpec& spec);

  const BasisSpec& spec() const { return spec_; }
  int size() const { return spec_.num_basis; }
  int kernel_size() const { return spec_.kernel_size; }
  int cells() const { return spec_.kernel_size * spec_.kernel_size; }
  const BasisMode& mode(int j) const;

  /// Un-normalized analytic value of function j at polar point (r, phi) on the
  /// unit disk; zero for r > 1. Only meaningful for Fourier-Bessel bases.
  double evaluate(int j, double r, double phi) const;

  /// Reference raster of function j (identity transform, unit l2 norm).
  std::span<const double> reference(int j) const;

  /// Raster of function j under transform t: value at offset p is
  /// c_j * 2^(-2 alpha) * f_j(M(t)^-1 p), with c_j the reference normalization.
  std::vector<double> rasterize(int j, const TransformParams& t) const;

  /// Raster of function j sampled at inverse_map * p and multiplied by
  /// c_j * factor. Writes cells() values into `out`.
  void rasterize_mapped(int j, const Mat2& inverse_map, double factor,
                        std::span<double> out) const;

private:
  double sample(int j, Vec2 grid_point) const;

  BasisSpec spec_;
  std::vector<BasisMode> modes_;
  std::vector<double> norm_;      // c_j
  std::vector<double> rasters_;   // K x k x k
};

/// Dirac basis with K = k^2 one-hot grids in row-major cell order.
FilterBasis dirac_basis(int kernel_size);

/// K x K row-major matrix of raster inner products at the identity transform.
std::vector<double> gram_matrix(const FilterBasis& basis);

} // namespace mcg

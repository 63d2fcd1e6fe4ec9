#pragma once

#include "mcg/affine_group.hpp"
#include "mcg/basis.hpp"
#include "mcg/tensor.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace mcg {

enum class WarpBoundary { Zero, Circular };

/// Inverse-mapped bilinear resampling about the image center c:
/// out(p) = in(M(a)^-1 (p - c - x) + c). Applied to every (sample, channel)
/// plane; points outside read zero (or wrap, in circular mode).
Tensor4 warp_image(const Tensor4& image, const GroupElement& g,
                   WarpBoundary boundary = WarpBoundary::Zero);

/// Ranges for the random transform g drawn per image. Scales are factors
/// (alpha = log2 factor); shear_max is an angle. max_shift adds an integer
/// translation in [-max_shift, max_shift]^2.
struct MgeConfig {
  double shear_max = 0.0625 * 3.141592653589793;
  double scale_lo = 1.0;
  double scale_hi = 1.1;
  double theta_max = 0.125 * 3.141592653589793;
  int max_shift = 0;
  std::size_t num_samples = 1; // transforms per image
  int crop = 0;                // border removed before taking norms
  WarpBoundary boundary = WarpBoundary::Zero;
  std::uint64_t seed = 0;

  SampleRanges ranges() const;
};

struct MgeRecord {
  int image_idx = 0;
  double raw = 0.0;
  double normalized = 0.0;
};

struct MgeResult {
  double mean_raw = 0.0;
  double mean_normalized = 0.0;
  std::vector<MgeRecord> records;
};

using FeatureMap = std::function<Tensor4(const Tensor4&)>;

/// Mean over images of ||phi(T_g f) - T_g phi(f)||_2 after cropping, plus the
/// same norm divided by ||phi(f)||_2. The layer must preserve spatial size.
MgeResult mge(const FeatureMap& layer, const Tensor4& images, const MgeConfig& config);

/// 10 log10(peak^2 / mse), capped at kPsnrCap (also returned for mse = 0).
inline constexpr double kPsnrCap = 99.0;
double psnr_from_mse(double mse, double peak);
double psnr(const Tensor4& pred, const Tensor4& target, double peak);

/// 100 * (1 - top-k accuracy) over (n, classes, ...) logits.
double classification_error(const Tensor4& logits, std::span<const int> labels, int top_k = 1);

enum class IntegrandKind { Constant, Rotation, Affine };

/// Group-convolution integrand F(a) = sum_d psi_a(d) f(x0 + d) of a fixed
/// smooth image against a fixed Fourier-Bessel filter, with psi_a the filter
/// rasterized under transform a. Rotation varies theta only; Affine varies
/// scale, rotation and shear.
class SmoothIntegrand {
public:
  explicit SmoothIntegrand(IntegrandKind kind);
  IntegrandKind kind() const { return kind_; }
  double operator()(const TransformParams& a) const;
  /// Ranges the integral is taken over.
  SampleRanges ranges() const;

private:
  IntegrandKind kind_;
  FilterBasis basis_;
  std::vector<double> weights_;
  std::vector<double> patch_; // k x k image window around x0
};

struct ConvergenceSpec {
  IntegrandKind kind = IntegrandKind::Rotation;
  std::vector<int> sample_counts{16, 64, 256, 1024};
  int seeds = 32;
  std::uint64_t base_seed = 0;
  int reference_points = 0; // 0: 129 (1-D) or 33 per axis (3-D)
};

struct ConvergenceRow {
  int n = 0;
  std::uint64_t seed = 0;
  double abs_err = 0.0;
};

struct ConvergenceResult {
  double reference = 0.0;
  std::vector<ConvergenceRow> rows;
  std::vector<double> median_errors; // per sample count
  std::optional<double> slope;       // log-log least-squares fit; empty if degenerate
  bool degenerate = false;           // zero-variance integrand
};

/// Monte Carlo estimates Q_N against a trapezoid reference for every (N, seed).
ConvergenceResult mc_convergence_study(const ConvergenceSpec& spec);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);

} // namespace mcg

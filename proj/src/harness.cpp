#include "mcg/harness.hpp"

#include "mcg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mcg {

namespace {

double sample_plane(const double* plane, int h, int w, int y, int x, WarpBoundary boundary) {
  if (boundary == WarpBoundary::Circular) {
    y %= h;
    x %= w;
    if (y < 0)
      y += h;
    if (x < 0)
      x += w;
  } else if (y < 0 || y >= h || x < 0 || x >= w) {
    return 0.0;
  }
  return plane[static_cast<std::size_t>(y) * w + x];
}

Tensor4 crop(const Tensor4& t, int border) {
  if (border == 0)
    return t;
  const int h = t.h() - 2 * border, w = t.w() - 2 * border;
  if (h < 1 || w < 1)
    throw std::invalid_argument("mge: crop removes the whole feature map");
  Tensor4 out(t.n(), t.c(), h, w);
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          out(n, c, y, x) = t(n, c, y + border, x + border);
  return out;
}

} // namespace

Tensor4 warp_image(const Tensor4& image, const GroupElement& g, WarpBoundary boundary) {
  const Mat2 inv = transform_matrix(g.a).inverse();
  const int h = image.h(), w = image.w();
  const Vec2 center{(w - 1) / 2.0, (h - 1) / 2.0};
  Tensor4 out(image.n(), image.c(), h, w);
  for (int n = 0; n < image.n(); ++n)
    for (int c = 0; c < image.c(); ++c) {
      const double* src = image.plane_ptr(n, c);
      double* dst = out.plane_ptr(n, c);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
          const Vec2 q = inv * (p - center - g.x) + center;
          const double fx = std::floor(q.x), fy = std::floor(q.y);
          const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
          const double tx = q.x - fx, ty = q.y - fy;
          const double v00 = sample_plane(src, h, w, y0, x0, boundary);
          double v = (1.0 - tx) * (1.0 - ty) * v00;
          if (tx != 0.0)
            v += tx * (1.0 - ty) * sample_plane(src, h, w, y0, x0 + 1, boundary);
          if (ty != 0.0)
            v += (1.0 - tx) * ty * sample_plane(src, h, w, y0 + 1, x0, boundary);
          if (tx != 0.0 && ty != 0.0)
            v += tx * ty * sample_plane(src, h, w, y0 + 1, x0 + 1, boundary);
          dst[static_cast<std::size_t>(y) * w + x] = v;
        }
    }
  return out;
}

SampleRanges MgeConfig::ranges() const {
  if (!(scale_lo > 0.0) || !(scale_hi > 0.0))
    throw std::invalid_argument("mge: scale range must be positive");
  SampleRanges r{std::log2(scale_lo), std::log2(scale_hi), theta_max, shear_max};
  r.validate();
  return r;
}

MgeResult mge(const FeatureMap& layer, const Tensor4& images, const MgeConfig& config) {
  const SampleRanges ranges = config.ranges();
  if (config.num_samples < 1)
    throw std::invalid_argument("mge: num_samples must be at least 1");
  MgeResult result;
  const Tensor4 base_out = layer(images);
  if (base_out.h() != images.h() || base_out.w() != images.w())
    throw std::invalid_argument("mge: layer must preserve the spatial size");
  const Tensor4 base_crop = crop(base_out, config.crop);

  for (std::size_t s = 0; s < config.num_samples; ++s) {
    std::vector<GroupElement> gs;
    Tensor4 warped(images.n(), images.c(), images.h(), images.w());
    for (int i = 0; i < images.n(); ++i) {
      const std::uint64_t stream = static_cast<std::uint64_t>(i) * config.num_samples + s;
      Rng rng = Rng::derived(config.seed, stream);
      GroupElement g;
      g.a = sample_transforms(ranges, 1, rng.next_u64()).front();
      if (config.max_shift > 0) {
        const auto span = static_cast<std::uint64_t>(2 * config.max_shift + 1);
        g.x.x = static_cast<double>(static_cast<int>(rng.below(span)) - config.max_shift);
        g.x.y = static_cast<double>(static_cast<int>(rng.below(span)) - config.max_shift);
      }
      gs.push_back(g);
      Tensor4 w = warp_image(images.slice_batch(i, 1), g, config.boundary);
      std::copy(w.storage().begin(), w.storage().end(),
                warped.storage().begin() + static_cast<std::ptrdiff_t>(images.offset(i, 0, 0, 0)));
    }
    const Tensor4 transformed_then_mapped = crop(layer(warped), config.crop);
    for (int i = 0; i < images.n(); ++i) {
      const Tensor4 mapped_then_transformed =
          crop(warp_image(base_out.slice_batch(i, 1), gs[static_cast<std::size_t>(i)], config.boundary),
               config.crop);
      const Tensor4 lhs = transformed_then_mapped.slice_batch(i, 1);
      double sq = 0.0;
      for (std::size_t k = 0; k < lhs.size(); ++k) {
        const double d = lhs.storage()[k] - mapped_then_transformed.storage()[k];
        sq += d * d;
      }
      MgeRecord rec;
      rec.image_idx = i;
      rec.raw = std::sqrt(sq);
      const double ref = l2_norm(base_crop.slice_batch(i, 1).values());
      rec.normalized = ref > 0.0 ? rec.raw / ref : 0.0;
      result.records.push_back(rec);
    }
  }
  for (const auto& r : result.records) {
    result.mean_raw += r.raw;
    result.mean_normalized += r.normalized;
  }
  if (!result.records.empty()) {
    result.mean_raw /= static_cast<double>(result.records.size());
    result.mean_normalized /= static_cast<double>(result.records.size());
  }
  return result;
}

double psnr_from_mse(double mse, double peak) {
  if (!(peak > 0.0))
    throw std::invalid_argument("psnr: peak must be positive");
  if (mse <= 0.0)
    return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr(const Tensor4& pred, const Tensor4& target, double peak) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("psnr: shape mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.storage()[i] - target.storage()[i];
    sq += d * d;
  }
  return psnr_from_mse(sq / static_cast<double>(pred.size()), peak);
}

double classification_error(const Tensor4& logits, std::span<const int> labels, int top_k) {
  const int n = logits.n();
  if (static_cast<std::size_t>(n) != labels.size())
    throw std::invalid_argument("classification_error: one label per sample required");
  if (n == 0)
    return 0.0;
  const std::size_t classes = logits.size() / static_cast<std::size_t>(n);
  int wrong = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits.storage().data() + static_cast<std::size_t>(i) * classes;
    const double target = row[labels[static_cast<std::size_t>(i)]];
    int above = 0;
    for (std::size_t c = 0; c < classes; ++c)
      if (row[c] > target)
        ++above;
    if (above >= top_k)
      ++wrong;
  }
  return 100.0 * wrong / n;
}

SmoothIntegrand::SmoothIntegrand(IntegrandKind kind)
    : kind_(kind), basis_(BasisSpec{BasisKind::FourierBessel, 9, 6}),
      weights_{0.3, 1.0, -0.6, 0.8, 0.5, -0.4} {
  const int k = basis_.kernel_size();
  const int half = k / 2;
  patch_.resize(static_cast<std::size_t>(k * k));
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double u = x - half, v = y - half;
      patch_[static_cast<std::size_t>(y * k + x)] =
          std::exp(-((u - 1.3) * (u - 1.3) + (v + 0.7) * (v + 0.7)) / 8.0) +
          0.5 * std::sin(0.7 * u + 0.3 * v) + 0.3 * std::cos(0.5 * v);
    }
}

SampleRanges SmoothIntegrand::ranges() const {
  switch (kind_) {
  case IntegrandKind::Constant:
  case IntegrandKind::Rotation:
    return {0.0, 0.0, 2.0 * std::numbers::pi, 0.0};
  case IntegrandKind::Affine:
    return {0.0, 1.0, 2.0 * std::numbers::pi, 0.25 * std::numbers::pi};
  }
  return {};
}

double SmoothIntegrand::operator()(const TransformParams& a) const {
  if (kind_ == IntegrandKind::Constant)
    return 1.0;
  double total = 0.0;
  for (int j = 0; j < basis_.size(); ++j) {
    const auto raster = basis_.rasterize(j, a);
    total += weights_[static_cast<std::size_t>(j)] * dot(raster, patch_);
  }
  return total;
}

double median(std::vector<double> values) {
  if (values.empty())
    throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("log_log_slope: need at least two matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ConvergenceResult mc_convergence_study(const ConvergenceSpec& spec) {
  if (spec.sample_counts.empty() || spec.seeds < 1)
    throw std::invalid_argument("mc_convergence_study: need sample counts and seeds");
  const SmoothIntegrand integrand(spec.kind);
  const SampleRanges ranges = integrand.ranges();

  ConvergenceResult result;
  if (spec.kind == IntegrandKind::Constant) {
    result.reference = integrand(TransformParams{});
  } else {
    const int per_axis = spec.reference_points > 0 ? spec.reference_points
                         : spec.kind == IntegrandKind::Rotation ? 129
                                                                : 33;
    const TransformGrid grid = trapezoid_grid(ranges, static_cast<std::size_t>(per_axis));
    for (std::size_t i = 0; i < grid.points.size(); ++i)
      result.reference += grid.weights[i] * integrand(grid.points[i]);
  }

  for (int n : spec.sample_counts) {
    if (n < 1)
      throw std::invalid_argument("mc_convergence_study: sample counts must be positive");
    std::vector<double> errors;
    for (int s = 0; s < spec.seeds; ++s) {
      const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(s);
      const auto draws = sample_transforms(ranges, static_cast<std::size_t>(n),
                                           Rng::derived(seed, static_cast<std::uint64_t>(n)).next_u64());
      double sum = 0.0;
      for (const auto& a : draws)
        sum += integrand(a);
      const double err = std::abs(sum / n - result.reference);
      result.rows.push_back({n, seed, err});
      errors.push_back(err);
    }
    result.median_errors.push_back(median(errors));
  }

  result.degenerate = std::all_of(result.median_errors.begin(), result.median_errors.end(),
                                  [](double e) { return e == 0.0; });
  if (!result.degenerate && result.median_errors.size() >= 2 &&
      std::all_of(result.median_errors.begin(), result.median_errors.end(),
                  [](double e) { return e > 0.0; })) {
    std::vector<double> ns(spec.sample_counts.begin(), spec.sample_counts.end());
    result.slope = log_log_slope(ns, result.median_errors);
  }
  return result;
}

} // namespace mcg

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mcg {

/// Dense (batch, channel, height, width) array of doubles, row-major.
class Tensor4 {
public:
  Tensor4() = default;
  Tensor4(int n, int c, int h, int w, double fill = 0.0);
  Tensor4(int n, int c, int h, int w, std::vector<double> data);

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h_) * static_cast<std::size_t>(w_); }
  bool same_shape(const Tensor4& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::size_t offset(int in, int ic, int iy, int ix) const {
    return ((static_cast<std::size_t>(in) * c_ + ic) * h_ + iy) * w_ + ix;
  }
  double& operator()(int in, int ic, int iy, int ix) { return data_[offset(in, ic, iy, ix)]; }
  double operator()(int in, int ic, int iy, int ix) const { return data_[offset(in, ic, iy, ix)]; }

  double* plane_ptr(int in, int ic) { return data_.data() + offset(in, ic, 0, 0); }
  const double* plane_ptr(int in, int ic) const { return data_.data() + offset(in, ic, 0, 0); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  /// Same data with a different (n, c, h, w) split. Sizes must agree.
  Tensor4 reshaped(int n, int c, int h, int w) const&;
  Tensor4 reshaped(int n, int c, int h, int w) &&;

  /// Copy of samples [first, first + count).
  Tensor4 slice_batch(int first, int count) const;
  /// Gather samples by index.
  Tensor4 gather_batch(std::span<const std::size_t> indices) const;

  bool all_finite() const;
  friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

/// Feature maps over (batch, channel, transform sample, height, width).
/// Memory layout coincides with a Tensor4 of shape (n, c * t, h, w).
class GroupTensor {
public:
  GroupTensor() = default;
  GroupTensor(int n, int c, int t, int h, int w, double fill = 0.0);
  /// Lift a plain feature map to t = 1.
  explicit GroupTensor(Tensor4 plain);
  GroupTensor(Tensor4 flat, int t);

  int n() const { return flat_.n(); }
  int c() const { return flat_.c() / t_; }
  int t() const { return t_; }
  int h() const { return flat_.h(); }
  int w() const { return flat_.w(); }

  double& operator()(int in, int ic, int it, int iy, int ix) { return flat_(in, ic * t_ + it, iy, ix); }
  double operator()(int in, int ic, int it, int iy, int ix) const { return flat_(in, ic * t_ + it, iy, ix); }

  const Tensor4& flat() const { return flat_; }
  Tensor4& flat() { return flat_; }

  friend bool operator==(const GroupTensor&, const GroupTensor&) = default;

private:
  Tensor4 flat_;
  int t_ = 1;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

} // namespace mcg

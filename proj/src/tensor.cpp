#include "mcg/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace mcg {

namespace {
std::size_t count_of(int n, int c, int h, int w) {
  if (n < 0 || c < 0 || h < 0 || w < 0)
    throw std::invalid_argument("Tensor4: negative dimension");
  return static_cast<std::size_t>(n) * c * h * w;
}
} // namespace

Tensor4::Tensor4(int n, int c, int h, int w, double fill)
    : n_(n), c_(c), h_(h), w_(w), data_(count_of(n, c, h, w), fill) {}

Tensor4::Tensor4(int n, int c, int h, int w, std::vector<double> data)
    : n_(n), c_(c), h_(h), w_(w), data_(std::move(data)) {
  if (data_.size() != count_of(n, c, h, w))
    throw std::invalid_argument("Tensor4: data length does not match dimensions");
}

Tensor4 Tensor4::reshaped(int n, int c, int h, int w) const& {
  return Tensor4(n, c, h, w, data_);
}

Tensor4 Tensor4::reshaped(int n, int c, int h, int w) && {
  return Tensor4(n, c, h, w, std::move(data_));
}

Tensor4 Tensor4::slice_batch(int first, int count) const {
  if (first < 0 || count < 0 || first + count > n_)
    throw std::out_of_range("Tensor4::slice_batch: range outside batch");
  const std::size_t per = static_cast<std::size_t>(c_) * plane();
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(first * per),
                          data_.begin() + static_cast<std::ptrdiff_t>((first + count) * per));
  return Tensor4(count, c_, h_, w_, std::move(out));
}

Tensor4 Tensor4::gather_batch(std::span<const std::size_t> indices) const {
  const std::size_t per = static_cast<std::size_t>(c_) * plane();
  std::vector<double> out;
  out.reserve(per * indices.size());
  for (std::size_t idx : indices) {
    if (idx >= static_cast<std::size_t>(n_))
      throw std::out_of_range("Tensor4::gather_batch: index outside batch");
    out.insert(out.end(), data_.begin() + static_cast<std::ptrdiff_t>(idx * per),
               data_.begin() + static_cast<std::ptrdiff_t>((idx + 1) * per));
  }
  return Tensor4(static_cast<int>(indices.size()), c_, h_, w_, std::move(out));
}

bool Tensor4::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v))
      return false;
  return true;
}

GroupTensor::GroupTensor(int n, int c, int t, int h, int w, double fill)
    : flat_(n, c * t, h, w, fill), t_(t) {
  if (t < 1)
    throw std::invalid_argument("GroupTensor: transform axis must be at least 1");
}

GroupTensor::GroupTensor(Tensor4 plain) : flat_(std::move(plain)), t_(1) {}

GroupTensor::GroupTensor(Tensor4 flat, int t) : flat_(std::move(flat)), t_(t) {
  if (t < 1 || flat_.c() % t != 0)
    throw std::invalid_argument("GroupTensor: channel axis not divisible by transform count");
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

} // namespace mcg

#include "mcg/conv.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mcg {

int conv_output_extent(int extent, int kernel, const ConvGeometry& geometry) {
  if (geometry.stride < 1 || geometry.padding < 0)
    throw std::invalid_argument("conv: stride must be >= 1 and padding >= 0");
  const int span = extent + 2 * geometry.padding - kernel;
  if (span < 0)
    throw std::invalid_argument("conv: kernel larger than padded input");
  return span / geometry.stride + 1;
}

namespace {

void check_forward_shapes(const Tensor4& input, const Tensor4& kernels) {
  if (input.c() != kernels.c())
    throw std::invalid_argument("conv: input has " + std::to_string(input.c()) +
                                " channels, kernels expect " + std::to_string(kernels.c()));
}

int wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

// Output columns ox in [lo, hi) whose tap ox * stride + shift lands in [0, width).
void valid_columns(int shift, int stride, int width, int out_width, int& lo, int& hi) {
  // smallest ox with ox*stride + shift >= 0
  lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
  // largest ox with ox*stride + shift <= width - 1
  const int last = width - 1 - shift;
  hi = last < 0 ? 0 : last / stride + 1;
  lo = std::min(lo, out_width);
  hi = std::clamp(hi, lo, out_width);
}

} // namespace

Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernels, const ConvGeometry& geometry) {
  check_forward_shapes(input, kernels);
  const int kh = kernels.h(), kw = kernels.w();
  const int oh = conv_output_extent(input.h(), kh, geometry);
  const int ow = conv_output_extent(input.w(), kw, geometry);
  const int batch = input.n(), c_in = input.c(), c_out = kernels.n();
  const int height = input.h(), width = input.w();
  const int stride = geometry.stride, pad = geometry.padding;
  const bool circular = geometry.mode == Padding::Circular;
  Tensor4 out(batch, c_out, oh, ow);

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < batch; ++n)
    for (int co = 0; co < c_out; ++co) {
      double* dst = out.plane_ptr(n, co);
      for (int ci = 0; ci < c_in; ++ci) {
        const double* src = input.plane_ptr(n, ci);
        const double* ker = kernels.plane_ptr(co, ci);
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const double wv = ker[ky * kw + kx];
            const int shift = kx - pad;
            if (circular) {
              for (int oy = 0; oy < oh; ++oy) {
                const double* row = src + static_cast<std::size_t>(wrap(oy * stride - pad + ky, height)) * width;
                double* orow = dst + static_cast<std::size_t>(oy) * ow;
                for (int ox = 0; ox < ow; ++ox)
                  orow[ox] += wv * row[wrap(ox * stride + shift, width)];
              }
              continue;
            }
            int lo = 0, hi = 0;
            valid_columns(shift, stride, width, ow, lo, hi);
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= height)
                continue;
              const double* row = src + static_cast<std::size_t>(iy) * width;
              double* orow = dst + static_cast<std::size_t>(oy) * ow;
              if (stride == 1) {
                for (int ox = lo; ox < hi; ++ox)
                  orow[ox] += wv * row[ox + shift];
              } else {
                for (int ox = lo; ox < hi; ++ox)
                  orow[ox] += wv * row[ox * stride + shift];
              }
            }
          }
      }
    }
  return out;
}

ConvGradients conv2d_backward(const Tensor4& grad_out, const Tensor4& input, const Tensor4& kernels,
                              const ConvGeometry& geometry) {
  check_forward_shapes(input, kernels);
  const int kh = kernels.h(), kw = kernels.w();
  const int oh = conv_output_extent(input.h(), kh, geometry);
  const int ow = conv_output_extent(input.w(), kw, geometry);
  const int batch = input.n(), c_in = input.c(), c_out = kernels.n();
  const int height = input.h(), width = input.w();
  const int stride = geometry.stride, pad = geometry.padding;
  const bool circular = geometry.mode == Padding::Circular;
  if (grad_out.n() != batch || grad_out.c() != c_out || grad_out.h() != oh || grad_out.w() != ow)
    throw std::invalid_argument("conv2d_backward: grad_out shape does not match forward output");

  ConvGradients grads{Tensor4(batch, c_in, height, width), Tensor4(c_out, c_in, kh, kw)};

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < batch; ++n)
    for (int ci = 0; ci < c_in; ++ci) {
      double* dst = grads.input.plane_ptr(n, ci);
      for (int co = 0; co < c_out; ++co) {
        const double* g = grad_out.plane_ptr(n, co);
        const double* ker = kernels.plane_ptr(co, ci);
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const double wv = ker[ky * kw + kx];
            const int shift = kx - pad;
            if (circular) {
              for (int oy = 0; oy < oh; ++oy) {
                double* row = dst + static_cast<std::size_t>(wrap(oy * stride - pad + ky, height)) * width;
                const double* grow = g + static_cast<std::size_t>(oy) * ow;
                for (int ox = 0; ox < ow; ++ox)
                  row[wrap(ox * stride + shift, width)] += wv * grow[ox];
              }
              continue;
            }
            int lo = 0, hi = 0;
            valid_columns(shift, stride, width, ow, lo, hi);
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= height)
                continue;
              double* row = dst + static_cast<std::size_t>(iy) * width;
              const double* grow = g + static_cast<std::size_t>(oy) * ow;
              if (stride == 1) {
                for (int ox = lo; ox < hi; ++ox)
                  row[ox + shift] += wv * grow[ox];
              } else {
                for (int ox = lo; ox < hi; ++ox)
                  row[ox * stride + shift] += wv * grow[ox];
              }
            }
          }
      }
    }

#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < c_out; ++co)
    for (int ci = 0; ci < c_in; ++ci) {
      double* gk = grads.kernels.plane_ptr(co, ci);
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          const int shift = kx - pad;
          double acc = 0.0;
          int lo = 0, hi = 0;
          if (!circular)
            valid_columns(shift, stride, width, ow, lo, hi);
          for (int n = 0; n < batch; ++n) {
            const double* src = input.plane_ptr(n, ci);
            const double* g = grad_out.plane_ptr(n, co);
            for (int oy = 0; oy < oh; ++oy) {
              const double* grow = g + static_cast<std::size_t>(oy) * ow;
              if (circular) {
                const double* row = src + static_cast<std::size_t>(wrap(oy * stride - pad + ky, height)) * width;
                for (int ox = 0; ox < ow; ++ox)
                  acc += grow[ox] * row[wrap(ox * stride + shift, width)];
                continue;
              }
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= height)
                continue;
              const double* row = src + static_cast<std::size_t>(iy) * width;
              for (int ox = lo; ox < hi; ++ox)
                acc += grow[ox] * row[ox * stride + shift];
            }
          }
          gk[ky * kw + kx] = acc;
        }
    }
  return grads;
}

} // namespace mcg

#include "mcg/conv.hpp"

#include <stdexcept>

namespace mcg::reference {

namespace {

// Source index for an output tap, or -1 when it falls into zero padding.
int tap(int o, int k, int extent, const ConvGeometry& g) {
  int i = o * g.stride - g.padding + k;
  if (g.mode == Padding::Circular) {
    i %= extent;
    return i < 0 ? i + extent : i;
  }
  return (i < 0 || i >= extent) ? -1 : i;
}

} // namespace

Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernels, const ConvGeometry& geometry) {
  if (input.c() != kernels.c())
    throw std::invalid_argument("reference::conv2d_forward: channel mismatch");
  const int oh = conv_output_extent(input.h(), kernels.h(), geometry);
  const int ow = conv_output_extent(input.w(), kernels.w(), geometry);
  Tensor4 out(input.n(), kernels.n(), oh, ow);
  for (int n = 0; n < input.n(); ++n)
    for (int co = 0; co < kernels.n(); ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < input.c(); ++ci)
            for (int ky = 0; ky < kernels.h(); ++ky)
              for (int kx = 0; kx < kernels.w(); ++kx) {
                const int iy = tap(oy, ky, input.h(), geometry);
                const int ix = tap(ox, kx, input.w(), geometry);
                if (iy < 0 || ix < 0)
                  continue;
                acc += kernels(co, ci, ky, kx) * input(n, ci, iy, ix);
              }
          out(n, co, oy, ox) = acc;
        }
  return out;
}

ConvGradients conv2d_backward(const Tensor4& grad_out, const Tensor4& input, const Tensor4& kernels,
                              const ConvGeometry& geometry) {
  if (input.c() != kernels.c())
    throw std::invalid_argument("reference::conv2d_backward: channel mismatch");
  const int oh = conv_output_extent(input.h(), kernels.h(), geometry);
  const int ow = conv_output_extent(input.w(), kernels.w(), geometry);
  if (grad_out.n() != input.n() || grad_out.c() != kernels.n() || grad_out.h() != oh ||
      grad_out.w() != ow)
    throw std::invalid_argument("reference::conv2d_backward: grad_out shape mismatch");
  ConvGradients grads{Tensor4(input.n(), input.c(), input.h(), input.w()),
                      Tensor4(kernels.n(), kernels.c(), kernels.h(), kernels.w())};
  for (int n = 0; n < input.n(); ++n)
    for (int co = 0; co < kernels.n(); ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const double g = grad_out(n, co, oy, ox);
          for (int ci = 0; ci < input.c(); ++ci)
            for (int ky = 0; ky < kernels.h(); ++ky)
              for (int kx = 0; kx < kernels.w(); ++kx) {
                const int iy = tap(oy, ky, input.h(), geometry);
                const int ix = tap(ox, kx, input.w(), geometry);
                if (iy < 0 || ix < 0)
                  continue;
                grads.input(n, ci, iy, ix) += g * kernels(co, ci, ky, kx);
                grads.kernels(co, ci, ky, kx) += g * input(n, ci, iy, ix);
              }
        }
  return grads;
}

} // namespace mcg::reference

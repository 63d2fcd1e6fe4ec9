#pragma once

#include "mcg/tensor.hpp"

namespace mcg {

enum class Padding { Zero, Circular };

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
  Padding mode = Padding::Zero;
};

/// floor((extent + 2 padding - kernel) / stride) + 1; throws when the kernel
/// does not fit.
int conv_output_extent(int extent, int kernel, const ConvGeometry& geometry);

struct ConvGradients {
  Tensor4 input;
  Tensor4 kernels;
};

/// Cross-correlation of (n, C_in, H, W) input with (C_out, C_in, kh, kw)
/// kernels. Parallel over (sample, output channel) planes; every output value
/// is accumulated by one thread in channel, row, column tap order, so results
/// do not depend on the thread count.
Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernels, const ConvGeometry& geometry);

/// Gradients of sum(grad_out * conv2d_forward(input, kernels)).
ConvGradients conv2d_backward(const Tensor4& grad_out, const Tensor4& input, const Tensor4& kernels,
                              const ConvGeometry& geometry);

namespace reference {

/// Serial direct loops; kept as the oracle for the parallel kernels.
Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernels, const ConvGeometry& geometry);
ConvGradients conv2d_backward(const Tensor4& grad_out, const Tensor4& input, const Tensor4& kernels,
                              const ConvGeometry& geometry);

} // namespace reference

} // namespace mcg

#pragma once

#include "mcg/affine_group.hpp"
#include "mcg/basis.hpp"
#include "mcg/conv.hpp"
#include "mcg/tensor.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace mcg {

/// Trainable basis weights plus the frozen transforms of one decomposed-filter
/// layer.
///
/// `out_transforms[co]` is a_{co} and `in_transforms[co * C_in + ci]` is
/// b_{co,ci}. Transforms are fixed at construction; only `weights` train.
/// With groups > 1 the (co, ci) pairs outside a channel group are masked to
/// zero kernels.
struct LayerParams {
  int in_channels = 0;
  int out_channels = 0;
  std::shared_ptr<const FilterBasis> basis;
  std::vector<double> weights;                 // C_out x C_in x K
  std::vector<TransformParams> out_transforms; // C_out
  std::vector<TransformParams> in_transforms;  // C_out x C_in
  ConvGeometry geometry;
  int groups = 1;

  int basis_size() const { return basis->size(); }
  int kernel_size() const { return basis->kernel_size(); }
  std::size_t weight_index(int co, int ci, int j) const {
    return (static_cast<std::size_t>(co) * in_channels + ci) * basis_size() + j;
  }
  bool connected(int co, int ci) const;
  void validate() const;
};

/// Zero-mean normal draws with variance 2 / fan_in, deterministic per seed.
std::vector<double> init_weights(std::size_t count, std::size_t fan_in, std::uint64_t seed);

struct LayerInit {
  ConvGeometry geometry;
  int groups = 1;
  SampleRanges ranges;            // for b_{co,ci} (and a_{co} when sampled)
  bool sample_out_transforms = false;
};

/// Layer with He-initialized weights (fan_in = C_in/groups * K) and transforms
/// drawn from `init.ranges`. Each piece uses its own stream derived from seed.
LayerParams make_layer_params(std::shared_ptr<const FilterBasis> basis, int in_channels,
                              int out_channels, const LayerInit& init, std::uint64_t seed);

/// Layer with identity transforms and zero weights.
LayerParams make_identity_params(std::shared_ptr<const FilterBasis> basis, int in_channels,
                                 int out_channels, const ConvGeometry& geometry, int groups = 1);

/// Raster of basis function j for output transform a and input transform b:
/// value at offset d is 2^(-2 alpha_a) * psi_j(M(-a) d; -a + b), where
/// psi_j(y; c) is FilterBasis::rasterize's value for transform c at y.
/// Reduces to basis.rasterize(j, b) when a is the identity.
void relative_raster(const FilterBasis& basis, int j, const TransformParams& a,
                     const TransformParams& b, std::span<double> out);

/// (C_out, C_in, k, k) kernels: sum_j w_j * relative_raster(j, a_co, b_co_ci).
Tensor4 synthesize_kernels(const LayerParams& params);

/// conv2d_forward(input, synthesize_kernels(params)).
Tensor4 wmcg_forward(const Tensor4& input, const LayerParams& params);

/// Filter-wise sampled layer with the per-(co, ci, j) rasters cached.
class WmcgLayer {
public:
  explicit WmcgLayer(LayerParams params);

  const LayerParams& params() const { return params_; }
  std::vector<double>& weights() { return params_.weights; }
  const std::vector<double>& weights() const { return params_.weights; }

  Tensor4 kernels() const;
  Tensor4 forward(const Tensor4& input) const;

  struct Gradients {
    Tensor4 input;
    std::vector<double> weights;
  };
  Gradients backward(const Tensor4& grad_out, const Tensor4& input) const;

private:
  LayerParams params_;
  std::vector<double> rasters_; // C_out x C_in x K x k x k
};

/// Group convolution over explicit input / output transform sets.
///
/// Output slice (co, a) = sum_ci sum_b weight_b * conv(f_{ci,b}, K_{co,ci,a,b}),
/// K built from relative_raster(a, b). The input weights are quadrature
/// weights (trapezoid for grids, 1/N for Monte Carlo). A t = 1 input is lifted:
/// the plain feature map is treated as constant along the transform axis.
/// The a / b arrays stored in LayerParams are ignored here.
class GroupConvLayer {
public:
  GroupConvLayer(LayerParams params, std::vector<TransformParams> in_transforms,
                 std::vector<double> in_weights, std::vector<TransformParams> out_transforms);

  const LayerParams& params() const { return params_; }
  std::vector<double>& weights() { return params_.weights; }
  int in_count() const { return static_cast<int>(in_.size()); }
  int out_count() const { return static_cast<int>(out_.size()); }
  const std::vector<TransformParams>& in_transforms() const { return in_; }
  const std::vector<TransformParams>& out_transforms() const { return out_; }
  const std::vector<double>& in_weights() const { return in_weights_; }

  /// (C_out * T_out, C_in * T_in, k, k) kernels for an input with `input_t`
  /// transform slices (1 or in_count()).
  Tensor4 expanded_kernels(int input_t) const;

  GroupTensor forward(const GroupTensor& input) const;

  struct Gradients {
    GroupTensor input;
    std::vector<double> weights;
  };
  Gradients backward(const GroupTensor& grad_out, const GroupTensor& input) const;

private:
  void check_input(const GroupTensor& input) const;
  const double* raster(int a, int b, int j) const;

  LayerParams params_;
  std::vector<TransformParams> in_;
  std::vector<double> in_weights_;
  std::vector<TransformParams> out_;
  std::vector<double> rasters_; // T_out x T_in x K x k x k
};

/// Grid G-CNN: input and output transforms are the grid points, input
/// weighted by the grid's trapezoid weights.
GroupTensor gcnn_forward(const GroupTensor& input, const LayerParams& params,
                         const TransformGrid& grid);

/// Monte Carlo G-CNN: input transforms are `samples` with weight 1/N and the
/// output transforms are an independent draw `out_samples`.
GroupTensor mcg_forward(const GroupTensor& input, const LayerParams& params,
                        std::span<const TransformParams> samples,
                        std::span<const TransformParams> out_samples);

enum class Activation { Identity, Relu };

void apply_activation(Activation act, Tensor4& x);
/// Multiplies grad in place by act'(pre), given the activation's output.
void activation_backward(Activation act, const Tensor4& output, Tensor4& grad);

/// pointwise -> (channel-grouped) WMCG k x k -> pointwise, with `activation`
/// between stages and optional identity shortcut.
struct BottleneckBlock {
  WmcgLayer pre;
  WmcgLayer core;
  WmcgLayer post;
  bool residual = false;
  Activation activation = Activation::Identity;

  void validate() const;
};

struct BottleneckInit {
  int in_channels = 0;
  int mid_channels = 0;
  int out_channels = 0;
  int groups = 1;
  bool residual = false;
  Activation activation = Activation::Relu;
  SampleRanges ranges;
};

/// Core padding keeps the spatial size ((k - 1) / 2, stride 1).
BottleneckBlock make_bottleneck(std::shared_ptr<const FilterBasis> core_basis,
                                const BottleneckInit& init, std::uint64_t seed);

Tensor4 bottleneck_forward(const Tensor4& input, const BottleneckBlock& block);

} // namespace mcg

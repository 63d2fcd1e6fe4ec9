#include "mcg/layers.hpp"

#include "mcg/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace mcg {

bool LayerParams::connected(int co, int ci) const {
  const int out_per_group = out_channels / groups;
  const int in_per_group = in_channels / groups;
  return co / out_per_group == ci / in_per_group;
}

void LayerParams::validate() const {
  if (!basis)
    throw std::invalid_argument("LayerParams: missing basis");
  if (in_channels < 1 || out_channels < 1)
    throw std::invalid_argument("LayerParams: channel counts must be positive");
  if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0)
    throw std::invalid_argument("LayerParams: groups must divide both channel counts");
  const auto pairs = static_cast<std::size_t>(in_channels) * out_channels;
  if (weights.size() != pairs * static_cast<std::size_t>(basis_size()))
    throw std::invalid_argument("LayerParams: weight array has wrong length");
  if (out_transforms.size() != static_cast<std::size_t>(out_channels))
    throw std::invalid_argument("LayerParams: out_transforms must have C_out entries");
  if (in_transforms.size() != pairs)
    throw std::invalid_argument("LayerParams: in_transforms must have C_out x C_in entries");
  for (double w : weights)
    if (!std::isfinite(w))
      throw std::invalid_argument("LayerParams: non-finite weight");
}

std::vector<double> init_weights(std::size_t count, std::size_t fan_in, std::uint64_t seed) {
  if (fan_in < 1)
    throw std::invalid_argument("init_weights: fan_in must be at least 1");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Rng rng(seed);
  std::vector<double> out(count);
  for (double& v : out)
    v = stddev * rng.normal();
  return out;
}

LayerParams make_layer_params(std::shared_ptr<const FilterBasis> basis, int in_channels,
                              int out_channels, const LayerInit& init, std::uint64_t seed) {
  init.ranges.validate();
  LayerParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.basis = std::move(basis);
  p.geometry = init.geometry;
  p.groups = init.groups;
  const auto pairs = static_cast<std::size_t>(in_channels) * static_cast<std::size_t>(out_channels);
  const auto fan_in = static_cast<std::size_t>(in_channels / std::max(init.groups, 1)) *
                      static_cast<std::size_t>(p.basis_size());
  p.weights = init_weights(pairs * static_cast<std::size_t>(p.basis_size()), std::max<std::size_t>(fan_in, 1),
                           Rng::derived(seed, 0).next_u64());
  p.in_transforms = sample_transforms(init.ranges, pairs, Rng::derived(seed, 1).next_u64());
  if (init.sample_out_transforms)
    p.out_transforms = sample_transforms(init.ranges, static_cast<std::size_t>(out_channels),
                                         Rng::derived(seed, 2).next_u64());
  else
    p.out_transforms.assign(static_cast<std::size_t>(out_channels), TransformParams{});
  p.validate();
  return p;
}

LayerParams make_identity_params(std::shared_ptr<const FilterBasis> basis, int in_channels,
                                 int out_channels, const ConvGeometry& geometry, int groups) {
  LayerParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.basis = std::move(basis);
  p.geometry = geometry;
  p.groups = groups;
  const auto pairs = static_cast<std::size_t>(in_channels) * static_cast<std::size_t>(out_channels);
  p.weights.assign(pairs * static_cast<std::size_t>(p.basis_size()), 0.0);
  p.in_transforms.assign(pairs, TransformParams{});
  p.out_transforms.assign(static_cast<std::size_t>(out_channels), TransformParams{});
  p.validate();
  return p;
}

void relative_raster(const FilterBasis& basis, int j, const TransformParams& a,
                     const TransformParams& b, std::span<double> out) {
  const TransformParams relative = -a + b;
  const Mat2 inverse_map = transform_matrix(relative).inverse() * transform_matrix(-a);
  const double factor = std::exp2(-2.0 * relative.alpha) * std::exp2(-2.0 * a.alpha);
  basis.rasterize_mapped(j, inverse_map, factor, out);
}

namespace {

std::vector<double> layer_rasters(const LayerParams& p) {
  const int k_count = p.basis_size();
  const auto cells = static_cast<std::size_t>(p.basis->cells());
  std::vector<double> rasters(static_cast<std::size_t>(p.out_channels) * p.in_channels * k_count * cells);
  for (int co = 0; co < p.out_channels; ++co)
    for (int ci = 0; ci < p.in_channels; ++ci)
      for (int j = 0; j < k_count; ++j) {
        std::span<double> dst(rasters.data() + p.weight_index(co, ci, j) * cells, cells);
        relative_raster(*p.basis, j, p.out_transforms[static_cast<std::size_t>(co)],
                        p.in_transforms[static_cast<std::size_t>(co) * p.in_channels + ci], dst);
      }
  return rasters;
}

Tensor4 combine(const LayerParams& p, const std::vector<double>& rasters) {
  const int k = p.kernel_size();
  const int k_count = p.basis_size();
  const auto cells = static_cast<std::size_t>(k) * k;
  Tensor4 kernels(p.out_channels, p.in_channels, k, k);
  for (int co = 0; co < p.out_channels; ++co)
    for (int ci = 0; ci < p.in_channels; ++ci) {
      if (!p.connected(co, ci))
        continue;
      double* dst = kernels.plane_ptr(co, ci);
      for (int j = 0; j < k_count; ++j) {
        const std::size_t idx = p.weight_index(co, ci, j);
        const double w = p.weights[idx];
        const double* src = rasters.data() + idx * cells;
        for (std::size_t c = 0; c < cells; ++c)
          dst[c] += w * src[c];
      }
    }
  return kernels;
}

} // namespace

Tensor4 synthesize_kernels(const LayerParams& params) {
  params.validate();
  return combine(params, layer_rasters(params));
}

Tensor4 wmcg_forward(const Tensor4& input, const LayerParams& params) {
  return conv2d_forward(input, synthesize_kernels(params), params.geometry);
}

WmcgLayer::WmcgLayer(LayerParams params) : params_(std::move(params)) {
  params_.validate();
  rasters_ = layer_rasters(params_);
}

Tensor4 WmcgLayer::kernels() const { return combine(params_, rasters_); }

Tensor4 WmcgLayer::forward(const Tensor4& input) const {
  if (input.c() != params_.in_channels)
    throw std::invalid_argument("WmcgLayer: expected " + std::to_string(params_.in_channels) +
                                " input channels, got " + std::to_string(input.c()));
  return conv2d_forward(input, kernels(), params_.geometry);
}

WmcgLayer::Gradients WmcgLayer::backward(const Tensor4& grad_out, const Tensor4& input) const {
  ConvGradients g = conv2d_backward(grad_out, input, kernels(), params_.geometry);
  const auto cells = static_cast<std::size_t>(params_.basis->cells());
  std::vector<double> grad_w(params_.weights.size(), 0.0);
  for (int co = 0; co < params_.out_channels; ++co)
    for (int ci = 0; ci < params_.in_channels; ++ci) {
      if (!params_.connected(co, ci))
        continue;
      std::span<const double> gk(g.kernels.plane_ptr(co, ci), cells);
      for (int j = 0; j < params_.basis_size(); ++j) {
        const std::size_t idx = params_.weight_index(co, ci, j);
        grad_w[idx] = dot(gk, std::span<const double>(rasters_.data() + idx * cells, cells));
      }
    }
  return {std::move(g.input), std::move(grad_w)};
}

GroupConvLayer::GroupConvLayer(LayerParams params, std::vector<TransformParams> in_transforms,
                               std::vector<double> in_weights,
                               std::vector<TransformParams> out_transforms)
    : params_(std::move(params)), in_(std::move(in_transforms)), in_weights_(std::move(in_weights)),
      out_(std::move(out_transforms)) {
  params_.validate();
  if (in_.empty() || out_.empty())
    throw std::invalid_argument("GroupConvLayer: transform sets must be non-empty");
  if (in_weights_.size() != in_.size())
    throw std::invalid_argument("GroupConvLayer: one quadrature weight per input transform");
  const int k_count = params_.basis_size();
  const auto cells = static_cast<std::size_t>(params_.basis->cells());
  rasters_.resize(out_.size() * in_.size() * static_cast<std::size_t>(k_count) * cells);
  for (std::size_t a = 0; a < out_.size(); ++a)
    for (std::size_t b = 0; b < in_.size(); ++b)
      for (int j = 0; j < k_count; ++j) {
        const std::size_t slot = (a * in_.size() + b) * k_count + static_cast<std::size_t>(j);
        relative_raster(*params_.basis, j, out_[a], in_[b],
                        std::span<double>(rasters_.data() + slot * cells, cells));
      }
}

const double* GroupConvLayer::raster(int a, int b, int j) const {
  const auto cells = static_cast<std::size_t>(params_.basis->cells());
  const std::size_t slot = (static_cast<std::size_t>(a) * in_.size() + static_cast<std::size_t>(b)) *
                               params_.basis_size() + static_cast<std::size_t>(j);
  return rasters_.data() + slot * cells;
}

void GroupConvLayer::check_input(const GroupTensor& input) const {
  if (input.c() != params_.in_channels)
    throw std::invalid_argument("GroupConvLayer: input channel mismatch");
  if (input.t() != 1 && input.t() != in_count())
    throw std::invalid_argument("GroupConvLayer: input transform axis has " +
                                std::to_string(input.t()) + " slices, expected 1 or " +
                                std::to_string(in_count()));
}

Tensor4 GroupConvLayer::expanded_kernels(int input_t) const {
  const int k = params_.kernel_size();
  const auto cells = static_cast<std::size_t>(k) * k;
  const int t_out = out_count();
  const int t_in = in_count();
  const bool lifting = input_t == 1;
  const int c_in_flat = params_.in_channels * input_t;
  Tensor4 kernels(params_.out_channels * t_out, c_in_flat, k, k);
  for (int co = 0; co < params_.out_channels; ++co)
    for (int ci = 0; ci < params_.in_channels; ++ci) {
      if (!params_.connected(co, ci))
        continue;
      for (int a = 0; a < t_out; ++a)
        for (int b = 0; b < t_in; ++b) {
          double* dst = kernels.plane_ptr(co * t_out + a, lifting ? ci : ci * t_in + b);
          const double qw = in_weights_[static_cast<std::size_t>(b)];
          for (int j = 0; j < params_.basis_size(); ++j) {
            const double w = qw * params_.weights[params_.weight_index(co, ci, j)];
            const double* src = raster(a, b, j);
            for (std::size_t c = 0; c < cells; ++c)
              dst[c] += w * src[c];
          }
        }
    }
  return kernels;
}

GroupTensor GroupConvLayer::forward(const GroupTensor& input) const {
  check_input(input);
  return GroupTensor(conv2d_forward(input.flat(), expanded_kernels(input.t()), params_.geometry),
                     out_count());
}

GroupConvLayer::Gradients GroupConvLayer::backward(const GroupTensor& grad_out,
                                                   const GroupTensor& input) const {
  check_input(input);
  const int input_t = input.t();
  const bool lifting = input_t == 1;
  ConvGradients g = conv2d_backward(grad_out.flat(), input.flat(), expanded_kernels(input_t),
                                    params_.geometry);
  const auto cells = static_cast<std::size_t>(params_.basis->cells());
  const int t_out = out_count();
  const int t_in = in_count();
  std::vector<double> grad_w(params_.weights.size(), 0.0);
  for (int co = 0; co < params_.out_channels; ++co)
    for (int ci = 0; ci < params_.in_channels; ++ci) {
      if (!params_.connected(co, ci))
        continue;
      for (int a = 0; a < t_out; ++a)
        for (int b = 0; b < t_in; ++b) {
          std::span<const double> gk(
              g.kernels.plane_ptr(co * t_out + a, lifting ? ci : ci * t_in + b), cells);
          const double qw = in_weights_[static_cast<std::size_t>(b)];
          for (int j = 0; j < params_.basis_size(); ++j)
            grad_w[params_.weight_index(co, ci, j)] +=
                qw * dot(gk, std::span<const double>(raster(a, b, j), cells));
        }
    }
  return {GroupTensor(std::move(g.input), input_t), std::move(grad_w)};
}

GroupTensor gcnn_forward(const GroupTensor& input, const LayerParams& params,
                         const TransformGrid& grid) {
  if (grid.points.empty())
    throw std::invalid_argument("gcnn_forward: empty transform grid");
  GroupConvLayer layer(params, grid.points, grid.weights, grid.points);
  return layer.forward(input);
}

GroupTensor mcg_forward(const GroupTensor& input, const LayerParams& params,
                        std::span<const TransformParams> samples,
                        std::span<const TransformParams> out_samples) {
  if (samples.empty() || out_samples.empty())
    throw std::invalid_argument("mcg_forward: empty sample set");
  std::vector<double> weights(samples.size(), 1.0 / static_cast<double>(samples.size()));
  GroupConvLayer layer(params, {samples.begin(), samples.end()}, std::move(weights),
                       {out_samples.begin(), out_samples.end()});
  return layer.forward(input);
}

void apply_activation(Activation act, Tensor4& x) {
  if (act == Activation::Identity)
    return;
  for (double& v : x.values())
    v = v > 0.0 ? v : 0.0;
}

void activation_backward(Activation act, const Tensor4& output, Tensor4& grad) {
  if (act == Activation::Identity)
    return;
  auto out = output.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(out[i] > 0.0))
      g[i] = 0.0;
}

void BottleneckBlock::validate() const {
  if (pre.params().out_channels != core.params().in_channels ||
      core.params().out_channels != post.params().in_channels)
    throw std::invalid_argument("bottleneck: channel widths do not chain");
  if (pre.params().kernel_size() != 1 || post.params().kernel_size() != 1)
    throw std::invalid_argument("bottleneck: outer stages must be pointwise");
  if (residual && pre.params().in_channels != post.params().out_channels)
    throw std::invalid_argument("bottleneck: residual needs equal input and output widths");
}

BottleneckBlock make_bottleneck(std::shared_ptr<const FilterBasis> core_basis,
                                const BottleneckInit& init, std::uint64_t seed) {
  auto pointwise = std::make_shared<const FilterBasis>(dirac_basis(1));
  const int k = core_basis->kernel_size();
  LayerInit outer;
  LayerInit core;
  core.geometry = {1, (k - 1) / 2, Padding::Zero};
  core.groups = init.groups;
  core.ranges = init.ranges;
  BottleneckBlock block{
      WmcgLayer(make_layer_params(pointwise, init.in_channels, init.mid_channels, outer,
                                  Rng::derived(seed, 10).next_u64())),
      WmcgLayer(make_layer_params(std::move(core_basis), init.mid_channels, init.mid_channels,
                                  core, Rng::derived(seed, 11).next_u64())),
      WmcgLayer(make_layer_params(pointwise, init.mid_channels, init.out_channels, outer,
                                  Rng::derived(seed, 12).next_u64())),
      init.residual, init.activation};
  // Residual blocks start near the identity map.
  if (init.residual)
    for (double& w : block.post.weights())
      w *= 0.1;
  block.validate();
  return block;
}

Tensor4 bottleneck_forward(const Tensor4& input, const BottleneckBlock& block) {
  block.validate();
  Tensor4 x = block.pre.forward(input);
  apply_activation(block.activation, x);
  x = block.core.forward(x);
  apply_activation(block.activation, x);
  x = block.post.forward(x);
  if (block.residual) {
    if (!x.same_shape(input))
      throw std::invalid_argument("bottleneck: residual shape mismatch");
    auto out = x.values();
    auto in = input.values();
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += in[i];
  }
  return x;
}

} // namespace mcg

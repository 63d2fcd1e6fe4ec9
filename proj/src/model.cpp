#include "mcg/model.hpp"

#include "mcg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace mcg {

std::vector<double> flatten_transforms(std::span<const TransformParams> transforms) {
  std::vector<double> out;
  out.reserve(transforms.size() * 3);
  for (const auto& t : transforms) {
    out.push_back(t.alpha);
    out.push_back(t.theta);
    out.push_back(t.shear);
  }
  return out;
}

ConvLayer::ConvLayer(WmcgLayer layer, std::string kind)
    : layer_(std::move(layer)), kind_(std::move(kind)), grad_(layer_.weights().size(), 0.0) {}

Tensor4 ConvLayer::forward(const Tensor4& x) {
  input_ = x;
  return layer_.forward(x);
}

Tensor4 ConvLayer::backward(const Tensor4& grad_out) {
  auto g = layer_.backward(grad_out, input_);
  std::copy(g.weights.begin(), g.weights.end(), grad_.begin());
  return std::move(g.input);
}

std::vector<ParamRef> ConvLayer::parameters() { return {{"weights", layer_.weights(), grad_}}; }

std::vector<NamedArray> ConvLayer::frozen_state() const {
  return {{"out_transforms", flatten_transforms(layer_.params().out_transforms)},
          {"in_transforms", flatten_transforms(layer_.params().in_transforms)}};
}

GroupConvModelLayer::GroupConvModelLayer(GroupConvLayer layer, std::string kind)
    : layer_(std::move(layer)), kind_(std::move(kind)), grad_(layer_.params().weights.size(), 0.0) {}

Tensor4 GroupConvModelLayer::forward(const Tensor4& x) {
  input_ = GroupTensor(x);
  return layer_.forward(input_).flat();
}

Tensor4 GroupConvModelLayer::backward(const Tensor4& grad_out) {
  auto g = layer_.backward(GroupTensor(grad_out, layer_.out_count()), input_);
  std::copy(g.weights.begin(), g.weights.end(), grad_.begin());
  return std::move(g.input.flat());
}

std::vector<ParamRef> GroupConvModelLayer::parameters() {
  return {{"weights", layer_.weights(), grad_}};
}

std::vector<NamedArray> GroupConvModelLayer::frozen_state() const {
  return {{"out_transforms", flatten_transforms(layer_.out_transforms())},
          {"in_transforms", flatten_transforms(layer_.in_transforms())},
          {"in_weights", layer_.in_weights()}};
}

BottleneckLayer::BottleneckLayer(BottleneckBlock block)
    : block_(std::move(block)), grad_pre_(block_.pre.weights().size(), 0.0),
      grad_core_(block_.core.weights().size(), 0.0), grad_post_(block_.post.weights().size(), 0.0) {}

Tensor4 BottleneckLayer::forward(const Tensor4& x) {
  input_ = x;
  pre_out_ = block_.pre.forward(x);
  apply_activation(block_.activation, pre_out_);
  core_out_ = block_.core.forward(pre_out_);
  apply_activation(block_.activation, core_out_);
  Tensor4 y = block_.post.forward(core_out_);
  if (block_.residual) {
    auto out = y.values();
    auto in = x.values();
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += in[i];
  }
  return y;
}

Tensor4 BottleneckLayer::backward(const Tensor4& grad_out) {
  auto post = block_.post.backward(grad_out, core_out_);
  std::copy(post.weights.begin(), post.weights.end(), grad_post_.begin());
  activation_backward(block_.activation, core_out_, post.input);
  auto core = block_.core.backward(post.input, pre_out_);
  std::copy(core.weights.begin(), core.weights.end(), grad_core_.begin());
  activation_backward(block_.activation, pre_out_, core.input);
  auto pre = block_.pre.backward(core.input, input_);
  std::copy(pre.weights.begin(), pre.weights.end(), grad_pre_.begin());
  Tensor4 grad_in = std::move(pre.input);
  if (block_.residual) {
    auto gi = grad_in.values();
    auto go = grad_out.values();
    for (std::size_t i = 0; i < gi.size(); ++i)
      gi[i] += go[i];
  }
  return grad_in;
}

std::vector<ParamRef> BottleneckLayer::parameters() {
  return {{"pre.weights", block_.pre.weights(), grad_pre_},
          {"core.weights", block_.core.weights(), grad_core_},
          {"post.weights", block_.post.weights(), grad_post_}};
}

std::vector<NamedArray> BottleneckLayer::frozen_state() const {
  return {{"core.out_transforms", flatten_transforms(block_.core.params().out_transforms)},
          {"core.in_transforms", flatten_transforms(block_.core.params().in_transforms)}};
}

Tensor4 ReluLayer::forward(const Tensor4& x) {
  output_ = x;
  apply_activation(Activation::Relu, output_);
  return output_;
}

Tensor4 ReluLayer::backward(const Tensor4& grad_out) {
  Tensor4 g = grad_out;
  activation_backward(Activation::Relu, output_, g);
  return g;
}

BatchNormLayer::BatchNormLayer(int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps),
      gamma_(static_cast<std::size_t>(channels), 1.0), beta_(static_cast<std::size_t>(channels), 0.0),
      grad_gamma_(static_cast<std::size_t>(channels), 0.0), grad_beta_(static_cast<std::size_t>(channels), 0.0),
      running_mean_(static_cast<std::size_t>(channels), 0.0), running_var_(static_cast<std::size_t>(channels), 1.0),
      inv_std_(static_cast<std::size_t>(channels), 1.0) {
  if (channels < 1)
    throw std::invalid_argument("BatchNormLayer: channels must be positive");
}

Tensor4 BatchNormLayer::forward(const Tensor4& x) {
  if (x.c() != channels_)
    throw std::invalid_argument("BatchNormLayer: channel count mismatch");
  const double count = static_cast<double>(x.n()) * static_cast<double>(x.plane());
  normalized_ = Tensor4(x.n(), x.c(), x.h(), x.w());
  Tensor4 y(x.n(), x.c(), x.h(), x.w());
  for (int c = 0; c < channels_; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double mean = running_mean_[ci], var = running_var_[ci];
    if (training_) {
      double s = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < x.plane(); ++i)
          s += p[i];
      }
      mean = s / count;
      double sq = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < x.plane(); ++i)
          sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / count;
      running_mean_[ci] = (1.0 - momentum_) * running_mean_[ci] + momentum_ * mean;
      running_var_[ci] = (1.0 - momentum_) * running_var_[ci] + momentum_ * var;
    }
    inv_std_[ci] = 1.0 / std::sqrt(var + eps_);
    for (int n = 0; n < x.n(); ++n) {
      const double* p = x.plane_ptr(n, c);
      double* h = normalized_.plane_ptr(n, c);
      double* o = y.plane_ptr(n, c);
      for (std::size_t i = 0; i < x.plane(); ++i) {
        h[i] = (p[i] - mean) * inv_std_[ci];
        o[i] = gamma_[ci] * h[i] + beta_[ci];
      }
    }
  }
  return y;
}

Tensor4 BatchNormLayer::backward(const Tensor4& grad_out) {
  const Tensor4& h = normalized_;
  const double count = static_cast<double>(h.n()) * static_cast<double>(h.plane());
  Tensor4 g(h.n(), h.c(), h.h(), h.w());
  for (int c = 0; c < channels_; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double sum_dy = 0.0, sum_dy_h = 0.0;
    for (int n = 0; n < h.n(); ++n) {
      const double* dy = grad_out.plane_ptr(n, c);
      const double* hp = h.plane_ptr(n, c);
      for (std::size_t i = 0; i < h.plane(); ++i) {
        sum_dy += dy[i];
        sum_dy_h += dy[i] * hp[i];
      }
    }
    grad_beta_[ci] = sum_dy;
    grad_gamma_[ci] = sum_dy_h;
    const double scale = gamma_[ci] * inv_std_[ci];
    for (int n = 0; n < h.n(); ++n) {
      const double* dy = grad_out.plane_ptr(n, c);
      const double* hp = h.plane_ptr(n, c);
      double* dx = g.plane_ptr(n, c);
      for (std::size_t i = 0; i < h.plane(); ++i)
        dx[i] = training_ ? scale * (dy[i] - sum_dy / count - hp[i] * sum_dy_h / count) : scale * dy[i];
    }
  }
  return g;
}

std::vector<ParamRef> BatchNormLayer::parameters() {
  return {{"gamma", gamma_, grad_gamma_, false}, {"beta", beta_, grad_beta_, false}};
}

std::vector<ParamRef> BatchNormLayer::buffers() {
  return {{"running_mean", running_mean_, {}, false}, {"running_var", running_var_, {}, false}};
}

Tensor4 AvgPoolLayer::forward(const Tensor4& x) {
  in_h_ = x.h();
  in_w_ = x.w();
  const int oh = x.h() / window_, ow = x.w() / window_;
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("AvgPoolLayer: window larger than input");
  const double scale = 1.0 / (window_ * window_);
  Tensor4 out(x.n(), x.c(), oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double s = 0.0;
          for (int dy = 0; dy < window_; ++dy)
            for (int dx = 0; dx < window_; ++dx)
              s += x(n, c, oy * window_ + dy, ox * window_ + dx);
          out(n, c, oy, ox) = s * scale;
        }
  return out;
}

Tensor4 AvgPoolLayer::backward(const Tensor4& grad_out) {
  const double scale = 1.0 / (window_ * window_);
  Tensor4 g(grad_out.n(), grad_out.c(), in_h_, in_w_);
  for (int n = 0; n < grad_out.n(); ++n)
    for (int c = 0; c < grad_out.c(); ++c)
      for (int oy = 0; oy < grad_out.h(); ++oy)
        for (int ox = 0; ox < grad_out.w(); ++ox)
          for (int dy = 0; dy < window_; ++dy)
            for (int dx = 0; dx < window_; ++dx)
              g(n, c, oy * window_ + dy, ox * window_ + dx) = grad_out(n, c, oy, ox) * scale;
  return g;
}

Tensor4 GlobalAvgPoolLayer::forward(const Tensor4& x) {
  in_h_ = x.h();
  in_w_ = x.w();
  Tensor4 out(x.n(), x.c(), 1, 1);
  const double scale = 1.0 / static_cast<double>(x.plane());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const double* p = x.plane_ptr(n, c);
      double s = 0.0;
      for (std::size_t i = 0; i < x.plane(); ++i)
        s += p[i];
      out(n, c, 0, 0) = s * scale;
    }
  return out;
}

Tensor4 GlobalAvgPoolLayer::backward(const Tensor4& grad_out) {
  Tensor4 g(grad_out.n(), grad_out.c(), in_h_, in_w_);
  const double scale = 1.0 / static_cast<double>(g.plane());
  for (int n = 0; n < g.n(); ++n)
    for (int c = 0; c < g.c(); ++c) {
      double* p = g.plane_ptr(n, c);
      const double v = grad_out(n, c, 0, 0) * scale;
      for (std::size_t i = 0; i < g.plane(); ++i)
        p[i] = v;
    }
  return g;
}

Tensor4 Network::forward(const Tensor4& x) {
  Tensor4 y = x;
  for (auto& layer : layers_)
    y = layer->forward(y);
  if (residual_output_) {
    if (!y.same_shape(x))
      throw std::invalid_argument("Network: residual output needs matching shapes");
    auto out = y.values();
    auto in = x.values();
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = in[i] - out[i];
  }
  return y;
}

Tensor4 Network::backward(const Tensor4& grad_out) {
  Tensor4 g = grad_out;
  if (residual_output_)
    for (double& v : g.values())
      v = -v;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = (*it)->backward(g);
  if (residual_output_) {
    auto gi = g.values();
    auto go = grad_out.values();
    for (std::size_t i = 0; i < gi.size(); ++i)
      gi[i] += go[i];
  }
  return g;
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto& p : layers_[i]->parameters()) {
      p.name = "layer" + std::to_string(i) + "." + p.name;
      out.push_back(std::move(p));
    }
  return out;
}

std::vector<ParamRef> Network::buffers() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto& b : layers_[i]->buffers()) {
      b.name = "layer" + std::to_string(i) + "." + b.name;
      out.push_back(std::move(b));
    }
  return out;
}

void Network::set_training(bool on) {
  for (auto& layer : layers_)
    layer->set_training(on);
}

std::vector<NamedArray> Network::frozen_state() const {
  std::vector<NamedArray> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto& a : layers_[i]->frozen_state()) {
      a.name = "layer" + std::to_string(i) + "." + a.name;
      out.push_back(std::move(a));
    }
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t total = 0;
  for (const auto& p : parameters())
    total += p.value.size();
  return total;
}

namespace {

int same_padding(const LayerSpec& s, int k) { return s.padding >= 0 ? s.padding : (k - 1) / 2; }

} // namespace

Network build_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.ranges.validate();
  auto basis = std::make_shared<const FilterBasis>(spec.basis);
  auto pointwise = std::make_shared<const FilterBasis>(dirac_basis(1));
  Network net;
  int channels = spec.in_channels;
  std::uint64_t stream = 100;
  for (const LayerSpec& ls : spec.layers) {
    const std::uint64_t layer_seed = Rng::derived(seed, stream++).next_u64();
    if (ls.kind == "conv" || ls.kind == "wmcg") {
      const bool plain = ls.kind == "conv";
      auto layer_basis = plain ? std::make_shared<const FilterBasis>(dirac_basis(ls.kernel)) : basis;
      const int k = layer_basis->kernel_size();
      LayerInit init;
      init.geometry = {ls.stride, same_padding(ls, k), Padding::Zero};
      init.groups = ls.groups;
      init.ranges = plain ? SampleRanges{} : spec.ranges;
      init.sample_out_transforms = !plain && spec.sample_out_transforms;
      net.add(std::make_unique<ConvLayer>(
          WmcgLayer(make_layer_params(layer_basis, channels, ls.out, init, layer_seed)), ls.kind));
      channels = ls.out;
    } else if (ls.kind == "mcg" || ls.kind == "gcnn") {
      const int k = basis->kernel_size();
      LayerInit init;
      init.geometry = {ls.stride, same_padding(ls, k), Padding::Zero};
      init.groups = ls.groups;
      LayerParams params = make_layer_params(basis, channels, ls.out, init, layer_seed);
      std::vector<TransformParams> in, out;
      std::vector<double> weights;
      if (ls.kind == "mcg") {
        in = sample_transforms(spec.ranges, static_cast<std::size_t>(ls.samples),
                               Rng::derived(layer_seed, 1).next_u64());
        out = sample_transforms(spec.ranges, static_cast<std::size_t>(ls.out_samples),
                                Rng::derived(layer_seed, 2).next_u64());
        weights.assign(in.size(), 1.0 / static_cast<double>(in.size()));
      } else {
        TransformGrid grid = trapezoid_grid(spec.ranges, static_cast<std::size_t>(ls.samples));
        in = grid.points;
        out = grid.points;
        weights = grid.weights;
      }
      const int t_out = static_cast<int>(out.size());
      net.add(std::make_unique<GroupConvModelLayer>(
          GroupConvLayer(std::move(params), std::move(in), std::move(weights), std::move(out)),
          ls.kind));
      channels = ls.out * t_out;
    } else if (ls.kind == "bottleneck") {
      BottleneckInit init;
      init.in_channels = channels;
      init.mid_channels = ls.mid > 0 ? ls.mid : std::max(1, ls.out / 2);
      init.out_channels = ls.out;
      init.groups = ls.groups;
      init.residual = ls.residual && channels == ls.out;
      init.activation = Activation::Relu;
      init.ranges = spec.ranges;
      net.add(std::make_unique<BottleneckLayer>(make_bottleneck(basis, init, layer_seed)));
      channels = ls.out;
    } else {
      throw std::invalid_argument("unknown layer kind '" + ls.kind + "'");
    }
    if (ls.norm)
      net.add(std::make_unique<BatchNormLayer>(channels));
    if (ls.relu)
      net.add(std::make_unique<ReluLayer>());
    if (ls.pool > 1)
      net.add(std::make_unique<AvgPoolLayer>(ls.pool));
  }

  const std::uint64_t head_seed = Rng::derived(seed, stream).next_u64();
  if (spec.task == Task::Classify) {
    net.add(std::make_unique<GlobalAvgPoolLayer>());
    LayerInit init;
    net.add(std::make_unique<ConvLayer>(
        WmcgLayer(make_layer_params(pointwise, channels, spec.num_classes, init, head_seed)), "linear"));
  } else {
    LayerInit init;
    init.geometry = {1, 1, Padding::Zero};
    auto head_basis = std::make_shared<const FilterBasis>(dirac_basis(3));
    LayerParams head = make_layer_params(head_basis, channels, spec.in_channels, init, head_seed);
    // Scaled-down head: the untrained residual denoiser starts close to the identity map.
    if (spec.residual_output)
      for (double& w : head.weights)
        w *= 0.1;
    net.add(std::make_unique<ConvLayer>(WmcgLayer(std::move(head)), "conv"));
    net.set_residual_output(spec.residual_output);
  }
  return net;
}

} // namespace mcg

#pragma once

#include "mcg/layers.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mcg {

/// A trainable array and its gradient buffer.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  bool decay = true; // weight decay applies
};

struct NamedArray {
  std::string name;
  std::vector<double> values;
  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

/// Network stage. forward() keeps what backward() needs; backward() overwrites
/// the parameter gradients and returns the input gradient.
class Layer {
public:
  virtual ~Layer() = default;
  virtual Tensor4 forward(const Tensor4& x) = 0;
  virtual Tensor4 backward(const Tensor4& grad_out) = 0;
  virtual std::vector<ParamRef> parameters() { return {}; }
  /// Non-trainable arrays updated by forward passes (grad is empty).
  virtual std::vector<ParamRef> buffers() { return {}; }
  virtual void set_training(bool) {}
  /// Non-trainable state saved alongside the weights (sampled transforms).
  virtual std::vector<NamedArray> frozen_state() const { return {}; }
  virtual std::string kind() const = 0;
};

/// Flattened (alpha, theta, shear) triples.
std::vector<double> flatten_transforms(std::span<const TransformParams> transforms);

/// Plain or WMCG convolution (plain = Dirac basis with identity transforms).
class ConvLayer final : public Layer {
public:
  ConvLayer(WmcgLayer layer, std::string kind);
  Tensor4 forward(const Tensor4& x) override;
  Tensor4 backward(const Tensor4& grad_out) override;
  std::vector<ParamRef> parameters() override;
  std::vector<NamedArray> frozen_state() const override;
  std::string kind() const override { return kind_; }
  const WmcgLayer& layer() const { return layer_; }

private:
  WmcgLayer layer_;
  std::string kind_;
  Tensor4 input_;
  std::vector<double> grad_;
};

/// Lifting G-CNN / MCG layer: plain (n, C_in, H, W) input, output flattened to
/// (n, C_out * T_out, H', W').
class GroupConvModelLayer final : public Layer {
public:
  GroupConvModelLayer(GroupConvLayer layer, std::string kind);
  Tensor4 forward(const Tensor4& x) override;
  Tensor4 backward(const Tensor4& grad_out) override;
  std::vector<ParamRef> parameters() override;
  std::vector<NamedArray> frozen_state() const override;
  std::string kind() const override { return kind_; }
  const GroupConvLayer& layer() const { return layer_; }

private:
  GroupConvLayer layer_;
  std::string kind_;
  GroupTensor input_;
  std::vector<double> grad_;
};

class BottleneckLayer final : public Layer {
public:
  explicit BottleneckLayer(BottleneckBlock block);
  Tensor4 forward(const Tensor4& x) override;
  Tensor4 backward(const Tensor4& grad_out) override;
  std::vector<ParamRef> parameters() override;
  std::vector<NamedArray> frozen_state() const override;
  std::string kind() const override { return "bottleneck"; }
  const BottleneckBlock& block() const { return block_; }

private:
  BottleneckBlock block_;
  Tensor4 input_, pre_out_, core_out_;
  std::vector<double> grad_pre_, grad_core_, grad_post_;
};

class ReluLayer final : public Layer {
public:
  Tensor4 forward(const Tensor4& x) override;
  Tensor4 backward(const Tensor4& grad_out) override;
  std::string kind() const override { return "relu"; }

private:
  Tensor4 output_;
};

/// Per-channel batch normalization with affine scale / shift. Training mode
/// normalizes with batch statistics (biased variance) and updates running
/// averages; evaluation mode uses the running averages.
class BatchNormLayer final : public Layer {
public:
  explicit BatchNormLayer(int channels, double momentum = 0.1, double eps = 1e-5);
  Tensor4 forward(const Tensor4& x) override;
  Tensor4 backward(const Tensor4& grad_out) override;
  std::vector<ParamRef> parameters() override;
  std::vector<ParamRef> buffers() override;
  void set_training(bool on) override { training_ = on; }
  std::string kind() const override { return "batchnorm"; }

private:
  int channels_;
  double momentum_, eps_;
  bool training_ = true;
  std::vector<double> gamma_, beta_, grad_gamma_, grad_beta_;
  std::vector<double> running_mean_, running_var_;
  std::vector<double> inv_std_;
  Tensor4 normalized_;
};

/// Non-overlapping average pooling; trailing rows/columns that do not fill a
/// window are dropped.
class AvgPoolLayer final : public Layer {
public:
  explicit AvgPoolLayer(int window) : window_(window) {}
  Tensor4 forward(const Tensor4& x) override;
  Tensor4 backward(const Tensor4& grad_out) override;
  std::string kind() const override { return "avgpool"; }

private:
  int window_;
  int in_h_ = 0, in_w_ = 0;
};

/// (n, C, H, W) -> (n, C, 1, 1) spatial mean.
class GlobalAvgPoolLayer final : public Layer {
public:
  Tensor4 forward(const Tensor4& x) override;
  Tensor4 backward(const Tensor4& grad_out) override;
  std::string kind() const override { return "gap"; }

private:
  int in_h_ = 0, in_w_ = 0;
};

/// Sequential stack. With `residual_output` the network returns
/// input - body(input) (noise-predicting denoiser).
class Network {
public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  void set_residual_output(bool on) { residual_output_ = on; }
  bool residual_output() const { return residual_output_; }

  Tensor4 forward(const Tensor4& x);
  /// Backpropagates d loss / d output; returns d loss / d input.
  Tensor4 backward(const Tensor4& grad_out);

  std::vector<ParamRef> parameters();
  std::vector<ParamRef> buffers();
  std::vector<NamedArray> frozen_state() const;
  void set_training(bool on);
  std::size_t parameter_count();
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }

private:
  std::vector<std::unique_ptr<Layer>> layers_;
  bool residual_output_ = false;
};

enum class Task { Classify, Denoise };

/// One entry of a model description. `kind` is conv, wmcg, mcg, gcnn or
/// bottleneck. padding < 0 means "same" padding for stride 1.
struct LayerSpec {
  std::string kind = "wmcg";
  int out = 8;
  int mid = 0;            // bottleneck inner width (0: out / 2)
  int kernel = 3;         // conv only; other kinds use the basis size
  int stride = 1;
  int padding = -1;
  int groups = 1;
  bool residual = true;   // bottleneck only
  bool norm = true;       // append batch normalization
  bool relu = true;       // append a rectifier
  int pool = 1;           // append average pooling with this window when > 1
  int samples = 4;        // mcg: input samples; gcnn: grid points per axis
  int out_samples = 1;    // mcg: output samples

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  Task task = Task::Classify;
  int in_channels = 1;
  int num_classes = 4;
  BasisSpec basis;
  SampleRanges ranges;
  bool sample_out_transforms = false;
  bool residual_output = true; // denoising: output = input - predicted noise
  std::vector<LayerSpec> layers;
};

/// Classification: hidden layers, global average pool, pointwise classifier
/// producing (n, classes, 1, 1) logits. Denoising: hidden layers, a 3x3 plain
/// convolution back to the input width, optionally subtracted from the input.
Network build_network(const NetworkSpec& spec, std::uint64_t seed);

} // namespace mcg

#pragma once

#include "mcg/dataset.hpp"
#include "mcg/model.hpp"
#include "mcg/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mcg {

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::vector<std::vector<double>> velocity; // one buffer per parameter array

  void validate() const;
};

/// Nesterov step with L2 weight decay on one array:
///   d = g + wd * w;  v <- mu * v - lr * d;  w <- w + mu * v - lr * d.
/// Throws on length mismatch or non-finite gradients.
void sgd_step(std::span<double> weights, std::span<const double> grads, std::span<double> velocity,
              double learning_rate, double momentum, double weight_decay);

/// Applies sgd_step to every parameter, allocating zeroed velocities on first
/// use. Parameters with decay == false get no weight decay.
void sgd_step(std::vector<ParamRef>& params, OptimizerState& state);

enum class ScheduleKind { Constant, Cosine, Exponential };

struct Schedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double initial_lr = 0.01;
  double final_lr = 0.01;
  std::size_t total_steps = 1;

  void validate() const;
};

/// Cosine: final + (initial - final) (1 + cos(pi step / total)) / 2.
/// Exponential: initial * (final / initial)^(step / (total - 1)).
double schedule_lr(const Schedule& schedule, std::size_t step);

struct LossResult {
  double loss = 0.0;
  Tensor4 grad;
};

/// Mean softmax cross-entropy over (n, classes, 1, 1) logits.
LossResult cross_entropy(const Tensor4& logits, std::span<const int> labels);

/// Mean squared error; gradient 2 (pred - target) / count.
LossResult mse_loss(const Tensor4& pred, const Tensor4& target);

struct TrainConfig {
  int epochs = 1;
  int batch_size = 32;
  ScheduleKind schedule = ScheduleKind::Cosine;
  double learning_rate = 0.01;
  double final_learning_rate = 0.0;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

/// One row of the metrics CSV. `loss` is the mean minibatch loss of the
/// epoch and `lr` the rate of its last step; `metric` is the test error (%)
/// for classification or the denoised PSNR (dB) for denoising, measured on
/// the evaluation set after the epoch.
struct EpochMetrics {
  int epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double metric = 0.0;
};

/// Minibatch SGD over `train` with a seeded permutation per epoch.
/// Bit-reproducible for a fixed config.
std::vector<EpochMetrics> train_loop(Network& net, const Dataset& train, const Dataset& eval,
                                     const TrainConfig& config);

/// Mean loss over a dataset with the current weights (no update). Both
/// evaluators switch the network to evaluation mode.
double evaluate_loss(Network& net, const Dataset& data, int batch_size);
/// Test error (%) or denoised PSNR (dB, peak 1) depending on the task.
double evaluate_metric(Network& net, const Dataset& data, int batch_size);

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> rows);

} // namespace mcg

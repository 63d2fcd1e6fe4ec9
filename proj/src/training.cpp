#include "mcg/training.hpp"

#include "mcg/harness.hpp"
#include "mcg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mcg {

void OptimizerState::validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0))
    throw std::invalid_argument("weight_decay must be non-negative");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0)
    throw std::invalid_argument("learning_rate must be finite and non-negative");
}

void sgd_step(std::span<double> weights, std::span<const double> grads, std::span<double> velocity,
              double learning_rate, double momentum, double weight_decay) {
  if (weights.size() != grads.size() || weights.size() != velocity.size())
    throw std::invalid_argument("sgd_step: weights, gradients and velocity differ in length");
  for (double g : grads)
    if (!std::isfinite(g))
      throw std::domain_error("sgd_step: non-finite gradient");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double d = grads[i] + weight_decay * weights[i];
    velocity[i] = momentum * velocity[i] - learning_rate * d;
    weights[i] += momentum * velocity[i] - learning_rate * d;
  }
}

void sgd_step(std::vector<ParamRef>& params, OptimizerState& state) {
  state.validate();
  if (state.velocity.empty())
    for (const auto& p : params)
      state.velocity.emplace_back(p.value.size(), 0.0);
  if (state.velocity.size() != params.size())
    throw std::invalid_argument("sgd_step: optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i)
    sgd_step(params[i].value, params[i].grad, state.velocity[i], state.learning_rate,
             state.momentum, params[i].decay ? state.weight_decay : 0.0);
}

void Schedule::validate() const {
  if (total_steps < 1)
    throw std::invalid_argument("schedule: total_steps must be at least 1");
  if (!(initial_lr > 0.0))
    throw std::invalid_argument("schedule: initial rate must be positive");
  if (kind == ScheduleKind::Exponential && !(final_lr > 0.0))
    throw std::invalid_argument("schedule: exponential decay needs a positive final rate");
  if (!(final_lr >= 0.0))
    throw std::invalid_argument("schedule: final rate must be non-negative");
}

double schedule_lr(const Schedule& schedule, std::size_t step) {
  schedule.validate();
  if (step >= schedule.total_steps)
    throw std::out_of_range("schedule_lr: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(schedule.total_steps) + ")");
  const double t = static_cast<double>(step);
  const double total = static_cast<double>(schedule.total_steps);
  switch (schedule.kind) {
  case ScheduleKind::Constant:
    return schedule.initial_lr;
  case ScheduleKind::Cosine:
    return schedule.final_lr + (schedule.initial_lr - schedule.final_lr) *
                                   (1.0 + std::cos(std::numbers::pi * t / total)) / 2.0;
  case ScheduleKind::Exponential:
    if (schedule.total_steps == 1)
      return schedule.initial_lr;
    return schedule.initial_lr *
           std::pow(schedule.final_lr / schedule.initial_lr, t / (total - 1.0));
  }
  return schedule.initial_lr;
}

LossResult cross_entropy(const Tensor4& logits, std::span<const int> labels) {
  const int n = logits.n();
  const int classes = logits.c() * logits.h() * logits.w();
  if (static_cast<std::size_t>(n) != labels.size())
    throw std::invalid_argument("cross_entropy: one label per sample required");
  LossResult result{0.0, Tensor4(logits.n(), logits.c(), logits.h(), logits.w())};
  auto in = logits.values();
  auto grad = result.grad.values();
  for (int i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= classes)
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range");
    const std::size_t base = static_cast<std::size_t>(i) * classes;
    double max_logit = in[base];
    for (int c = 1; c < classes; ++c)
      max_logit = std::max(max_logit, in[base + c]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c)
      sum += std::exp(in[base + c] - max_logit);
    const double log_sum = std::log(sum);
    result.loss += log_sum - (in[base + label] - max_logit);
    for (int c = 0; c < classes; ++c) {
      const double p = std::exp(in[base + c] - max_logit - log_sum);
      grad[base + c] = (p - (c == label ? 1.0 : 0.0)) / n;
    }
  }
  result.loss /= n;
  return result;
}

LossResult mse_loss(const Tensor4& pred, const Tensor4& target) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("mse_loss: shape mismatch");
  LossResult result{0.0, Tensor4(pred.n(), pred.c(), pred.h(), pred.w())};
  auto p = pred.values();
  auto t = target.values();
  auto g = result.grad.values();
  const double count = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    result.loss += d * d;
    g[i] = 2.0 * d / count;
  }
  result.loss /= count;
  return result;
}

namespace {

LossResult batch_loss(Network& net, const Dataset& data, std::span<const std::size_t> idx,
                      Tensor4* prediction = nullptr) {
  Tensor4 x = data.inputs.gather_batch(idx);
  Tensor4 y = net.forward(x);
  if (prediction)
    *prediction = y;
  if (data.task == Task::Classify) {
    std::vector<int> labels;
    labels.reserve(idx.size());
    for (std::size_t i : idx)
      labels.push_back(data.labels[i]);
    return cross_entropy(y, labels);
  }
  return mse_loss(y, data.targets.gather_batch(idx));
}

} // namespace

std::vector<EpochMetrics> train_loop(Network& net, const Dataset& train, const Dataset& eval,
                                     const TrainConfig& config) {
  if (config.epochs < 0 || config.batch_size < 1)
    throw std::invalid_argument("train_loop: epochs must be >= 0 and batch_size >= 1");
  train.validate();
  const std::size_t count = static_cast<std::size_t>(train.inputs.n());
  const std::size_t batches = (count + static_cast<std::size_t>(config.batch_size) - 1) /
                              static_cast<std::size_t>(config.batch_size);
  std::vector<EpochMetrics> metrics;
  if (config.epochs == 0)
    return metrics;

  Schedule schedule{config.schedule, config.learning_rate, config.final_learning_rate,
                    batches * static_cast<std::size_t>(config.epochs)};
  const bool frozen_rate = config.learning_rate == 0.0;
  if (!frozen_rate)
    schedule.validate();
  OptimizerState state{config.learning_rate, config.momentum, config.weight_decay, {}};
  auto params = net.parameters();

  Rng shuffle_rng = Rng::derived(config.seed, 0x5348554646ULL);
  std::vector<std::size_t> order(count);
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = count; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double loss_sum = 0.0;
    net.set_training(true);
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const std::size_t first = b * static_cast<std::size_t>(config.batch_size);
      const std::size_t last = std::min(count, first + static_cast<std::size_t>(config.batch_size));
      std::span<const std::size_t> idx(order.data() + first, last - first);
      LossResult loss = batch_loss(net, train, idx);
      loss_sum += loss.loss;
      net.backward(loss.grad);
      state.learning_rate = frozen_rate ? 0.0 : schedule_lr(schedule, step);
      sgd_step(params, state);
    }
    EpochMetrics row;
    row.epoch = epoch + 1;
    row.step = step;
    row.lr = state.learning_rate;
    row.loss = loss_sum / static_cast<double>(batches);
    row.metric = evaluate_metric(net, eval.inputs.n() > 0 ? eval : train, config.batch_size);
    metrics.push_back(row);
  }
  return metrics;
}

double evaluate_loss(Network& net, const Dataset& data, int batch_size) {
  net.set_training(false);
  const std::size_t count = static_cast<std::size_t>(data.inputs.n());
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double weighted = 0.0;
  for (std::size_t first = 0; first < count; first += static_cast<std::size_t>(batch_size)) {
    const std::size_t last = std::min(count, first + static_cast<std::size_t>(batch_size));
    const LossResult loss = batch_loss(net, data, std::span<const std::size_t>(idx.data() + first, last - first));
    weighted += loss.loss * static_cast<double>(last - first);
  }
  return weighted / static_cast<double>(count);
}

double evaluate_metric(Network& net, const Dataset& data, int batch_size) {
  net.set_training(false);
  const std::size_t count = static_cast<std::size_t>(data.inputs.n());
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double wrong_or_sq = 0.0;
  std::size_t values = 0;
  for (std::size_t first = 0; first < count; first += static_cast<std::size_t>(batch_size)) {
    const std::size_t last = std::min(count, first + static_cast<std::size_t>(batch_size));
    std::span<const std::size_t> part(idx.data() + first, last - first);
    Tensor4 y = net.forward(data.inputs.gather_batch(part));
    if (data.task == Task::Classify) {
      std::vector<int> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(first),
                              data.labels.begin() + static_cast<std::ptrdiff_t>(last));
      wrong_or_sq += classification_error(y, labels) * static_cast<double>(part.size()) / 100.0;
    } else {
      Tensor4 t = data.targets.gather_batch(part);
      auto a = y.values();
      auto b = t.values();
      for (std::size_t i = 0; i < a.size(); ++i)
        wrong_or_sq += (a[i] - b[i]) * (a[i] - b[i]);
      values += a.size();
    }
  }
  if (data.task == Task::Classify)
    return 100.0 * wrong_or_sq / static_cast<double>(count);
  return psnr_from_mse(wrong_or_sq / static_cast<double>(values), 1.0);
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> rows) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "epoch,step,lr,loss,metric\n";
  for (const auto& r : rows)
    out << r.epoch << ',' << r.step << ',' << r.lr << ',' << r.loss << ',' << r.metric << '\n';
}

} // namespace mcg

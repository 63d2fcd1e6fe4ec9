#include "commands.hpp"

#include "mcg/checkpoint.hpp"
#include "mcg/conv.hpp"
#include "mcg/layers.hpp"
#include "mcg/rng.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace mcg::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  return out;
}

class RuntimeFailure : public std::runtime_error {
public:
  RuntimeFailure(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

private:
  int code_;
};

} // namespace

fs::path prepare_run_dir(const fs::path& out, const ExperimentConfig& config) {
  const fs::path dir = out / config.hash_hex();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("cannot create run directory " + dir.string() + ": " + ec.message());
  auto file = open_csv(dir / "config.txt");
  file << "# config hash " << config.hash_hex() << "\n" << config.canonical_text();
  return dir;
}

DataSplits make_datasets(const ExperimentConfig& config) {
  const DataOptions& d = config.data;
  DataSplits s;
  const std::uint64_t seed = config.seed;
  if (d.kind == "shapes") {
    ShapesOptions opt;
    opt.image_size = d.image_size;
    s.train = make_shapes_dataset(static_cast<std::size_t>(d.train_size), opt, Rng::derived(seed, 10).next_u64());
    s.test = make_shapes_dataset(static_cast<std::size_t>(d.test_size), opt, Rng::derived(seed, 11).next_u64());
    s.train.split = "train";
    s.test.split = "test";
  } else if (d.kind == "denoise") {
    s.train = make_denoise_dataset(static_cast<std::size_t>(d.train_size), d.patch_size, d.sigma_lo,
                                   d.sigma_hi, Rng::derived(seed, 10).next_u64());
    s.test = make_denoise_dataset(static_cast<std::size_t>(d.test_size), d.patch_size, d.eval_sigma,
                                  d.eval_sigma, Rng::derived(seed, 11).next_u64());
    s.train.split = "train";
    s.test.split = "test";
  } else if (d.kind == "idx") {
    s.train = load_idx(d.path, d.labels);
    s.test = d.test_path.empty() ? s.train : load_idx(d.test_path, d.test_labels);
  } else {
    s.train = load_cifar_binary(d.path);
    s.test = d.test_path.empty() ? s.train : load_cifar_binary(d.test_path);
  }
  s.train.validate();
  s.test.validate();
  return s;
}

Network make_network(const ExperimentConfig& config, const Dataset& train) {
  const NetworkSpec spec = config.network_spec(train.inputs.c(), std::max(2, train.num_classes));
  return build_network(spec, Rng::derived(config.seed, 20).next_u64());
}

TrainOutcome run_training(const ExperimentConfig& config, const DataSplits& data) {
  TrainOutcome r{make_network(config, data.train), {}, 0.0, 0.0};
  r.metrics = train_loop(r.net, data.train, data.test, config.train);
  r.final_train_loss = evaluate_loss(r.net, data.train, config.train.batch_size);
  if (data.test.task == Task::Denoise)
    r.noisy_psnr = psnr(data.test.inputs, data.test.targets, 1.0);
  return r;
}

MgeStudy run_mge_study(const ExperimentConfig& config) {
  const MgeOptions& m = config.mge;
  const int k = config.basis.kernel_size;
  MgeStudy study;
  for (int s = 0; s < m.seeds; ++s) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(s);
    LayerInit init;
    init.geometry = {1, (k - 1) / 2, Padding::Zero};
    std::shared_ptr<const FilterBasis> basis;
    if (m.layer == "conv") {
      basis = std::make_shared<const FilterBasis>(dirac_basis(k));
    } else {
      basis = std::make_shared<const FilterBasis>(config.basis);
      init.ranges = config.ranges;
      init.sample_out_transforms = config.sample_out;
    }
    const WmcgLayer layer(make_layer_params(basis, 1, m.channels, init, Rng::derived(seed, 1).next_u64()));
    ShapesOptions opt;
    opt.image_size = m.image_size;
    const Tensor4 images =
        make_shapes_dataset(static_cast<std::size_t>(m.images), opt, Rng::derived(seed, 2).next_u64()).inputs;
    MgeConfig probe = m.measure;
    probe.seed = Rng::derived(seed, 3).next_u64();
    study.seeds.push_back(seed);
    study.results.push_back(mge([&](const Tensor4& x) { return layer.forward(x); }, images, probe));
  }
  return study;
}

void write_basis_csv(const fs::path& path, const FilterBasis& basis, const TransformParams& t) {
  auto out = open_csv(path);
  const int k = basis.kernel_size();
  for (int j = 0; j < basis.size(); ++j) {
    if (j > 0)
      out << "\n";
    const auto r = basis.rasterize(j, t);
    for (int y = 0; y < k; ++y) {
      for (int x = 0; x < k; ++x)
        out << (x ? "," : "") << fmt(r[static_cast<std::size_t>(y * k + x)]);
      out << "\n";
    }
  }
}

namespace {

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

SuiteResult suite_group_axioms(const ExperimentConfig& config) {
  // Rotation-scale and shear-scale subgroups commute, so the product is a
  // group law on each of them.
  const SampleRanges rs{config.ranges.alpha_lo, config.ranges.alpha_hi, config.ranges.theta_max, 0.0};
  const SampleRanges ss{config.ranges.alpha_lo, config.ranges.alpha_hi, 0.0, config.ranges.shear_max};
  Rng rng = Rng::derived(config.seed, 30);
  double worst = 0.0;
  auto dist = [](const GroupElement& a, const GroupElement& b) {
    return std::max({std::abs(a.x.x - b.x.x), std::abs(a.x.y - b.x.y), std::abs(a.a.alpha - b.a.alpha),
                     std::abs(a.a.theta - b.a.theta), std::abs(a.a.shear - b.a.shear)});
  };
  for (int i = 0; i < 1000; ++i) {
    const SampleRanges& r = i % 2 ? ss : rs;
    const auto t = sample_transforms(r, 3, rng.next_u64());
    GroupElement g[3];
    for (int e = 0; e < 3; ++e)
      g[e] = {{rng.uniform(-3, 3), rng.uniform(-3, 3)}, t[static_cast<std::size_t>(e)]};
    worst = std::max(worst, dist(group_product(group_product(g[0], g[1]), g[2]),
                                 group_product(g[0], group_product(g[1], g[2]))));
    worst = std::max(worst, dist(group_product(g[0], group_inverse(g[0])), GroupElement::identity()));
    worst = std::max(worst, dist(group_product(GroupElement::identity(), g[0]), g[0]));
    const Vec2 p{rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const Vec2 lhs = act_on_point(group_product(g[0], g[1]), p);
    const Vec2 rhs = act_on_point(g[0], act_on_point(g[1], p));
    worst = std::max({worst, std::abs(lhs.x - rhs.x), std::abs(lhs.y - rhs.y)});
  }
  return {"group_axioms", worst <= 1e-10, "max deviation " + fmt(worst)};
}

SuiteResult suite_degeneration(const ExperimentConfig& config) {
  Rng rng = Rng::derived(config.seed, 31);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const int k = 1 + 2 * static_cast<int>(rng.below(3));
    const int cin = 1 + static_cast<int>(rng.below(3)), cout = 1 + static_cast<int>(rng.below(3));
    const ConvGeometry geo{1 + static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2)), Padding::Zero};
    auto params = make_identity_params(std::make_shared<const FilterBasis>(dirac_basis(k)), cin, cout, geo);
    for (double& w : params.weights)
      w = rng.normal();
    Tensor4 x(2, cin, 7, 8);
    for (double& v : x.values())
      v = rng.normal();
    const Tensor4 kernels(cout, cin, k, k, params.weights);
    const Tensor4 a = WmcgLayer(params).forward(x);
    const Tensor4 b = reference::conv2d_forward(x, kernels, geo);
    for (std::size_t j = 0; j < a.size(); ++j)
      worst = std::max(worst, std::abs(a.storage()[j] - b.storage()[j]));
  }
  return {"degeneration", worst <= 1e-12, "max deviation " + fmt(worst)};
}

SuiteResult suite_gradients(const ExperimentConfig& config) {
  Rng rng = Rng::derived(config.seed, 32);
  auto basis = std::make_shared<const FilterBasis>(config.basis);
  LayerInit init;
  init.geometry = {1, 1, Padding::Zero};
  init.ranges = config.ranges;
  WmcgLayer layer(make_layer_params(basis, 2, 2, init, rng.next_u64()));
  const int k = basis->kernel_size();
  Tensor4 x(1, 2, k + 2, k + 3);
  for (double& v : x.values())
    v = rng.normal();
  const Tensor4 y0 = layer.forward(x);
  Tensor4 r(y0.n(), y0.c(), y0.h(), y0.w());
  for (double& v : r.values())
    v = rng.normal();
  auto loss = [&](const WmcgLayer& l, const Tensor4& in) { return dot(l.forward(in).values(), r.values()); };
  const auto g = layer.backward(r, x);
  double worst = 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); };
  const double h = 1e-6;
  for (std::size_t i = 0; i < layer.weights().size(); ++i) {
    const double w = layer.weights()[i];
    WmcgLayer plus = layer, minus = layer;
    plus.weights()[i] = w + h;
    minus.weights()[i] = w - h;
    worst = std::max(worst, rel(g.weights[i], (loss(plus, x) - loss(minus, x)) / (2 * h)));
  }
  for (std::size_t i = 0; i < x.size(); i += 3) {
    Tensor4 xp = x, xm = x;
    xp.storage()[i] += h;
    xm.storage()[i] -= h;
    worst = std::max(worst, rel(g.input.storage()[i], (loss(layer, xp) - loss(layer, xm)) / (2 * h)));
  }
  return {"gradients", worst <= 1e-6, "max relative error " + fmt(worst)};
}

SuiteResult suite_mge_identity(const ExperimentConfig& config) {
  auto basis = std::make_shared<const FilterBasis>(config.basis);
  LayerInit init;
  init.geometry = {1, (basis->kernel_size() - 1) / 2, Padding::Zero};
  init.ranges = config.ranges;
  const WmcgLayer layer(make_layer_params(basis, 1, 4, init, config.seed));
  ShapesOptions opt;
  opt.image_size = 16;
  const Tensor4 images = make_shapes_dataset(4, opt, config.seed).inputs;
  MgeConfig probe;
  probe.shear_max = probe.theta_max = 0.0;
  probe.scale_lo = probe.scale_hi = 1.0;
  const double v = mge([&](const Tensor4& in) { return layer.forward(in); }, images, probe).mean_raw;
  return {"mge_identity", v <= 1e-10, "mGE " + fmt(v)};
}

SuiteResult suite_basis(const ExperimentConfig& config) {
  const FilterBasis basis(config.basis);
  double worst = 0.0;
  for (int j = 0; j < basis.size(); ++j)
    worst = std::max(worst, std::abs(l2_norm(basis.reference(j)) - 1.0));
  return {"basis_norms", worst <= 1e-12, "max norm deviation " + fmt(worst)};
}

void check_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Group-equivariant convolution experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out", checkpoint_path;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "Config file (key = value lines)");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out", out_dir, "Root output directory");
  app.add_flag("--quiet", quiet, "Only print errors");

  auto* basis_cmd = app.add_subcommand("basis", "Basis inspection");
  basis_cmd->require_subcommand(1);
  auto* dump = basis_cmd->add_subcommand("dump", "Write reference and transformed rasters as CSV");
  auto* check = app.add_subcommand("check", "Run the invariant suites");
  auto* mge_cmd = app.add_subcommand("mge", "Mean group-equivariant error of a first layer");
  auto* converge = app.add_subcommand("converge", "Monte Carlo convergence study");
  auto* train = app.add_subcommand("train", "Train a model and write metrics and a checkpoint");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  for (auto* sub : {basis_cmd, dump, check, mge_cmd, converge, train, eval})
    sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  auto say = [&](const std::string& line) {
    if (!quiet)
      out << line << "\n";
  };

  ExperimentConfig config;
  try {
    config = config_path.empty() ? ExperimentConfig::defaults() : ExperimentConfig::load(config_path);
    if (seed)
      config.set("seed", std::to_string(*seed));
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }

  try {
    if (dump->parsed()) {
      const fs::path dir = prepare_run_dir(out_dir, config);
      const FilterBasis basis = config.basis.kind == BasisKind::Dirac ? dirac_basis(config.basis.kernel_size)
                                                                       : FilterBasis(config.basis);
      write_basis_csv(dir / "basis_reference.csv", basis, TransformParams{});
      const TransformParams t = sample_transforms(config.ranges, 1, config.seed).front();
      write_basis_csv(dir / "basis_transformed.csv", basis, t);
      say("wrote " + (dir / "basis_reference.csv").string());
      say("wrote " + (dir / "basis_transformed.csv").string());
      return kExitOk;
    }
    if (check->parsed()) {
      bool all = true;
      for (auto suite : {suite_group_axioms, suite_degeneration, suite_gradients, suite_mge_identity, suite_basis}) {
        const SuiteResult r = suite(config);
        all = all && r.pass;
        say(std::string(r.pass ? "PASS " : "FAIL ") + r.name + " (" + r.detail + ")");
      }
      return all ? kExitOk : kExitFailure;
    }
    if (mge_cmd->parsed()) {
      const fs::path dir = prepare_run_dir(out_dir, config);
      const MgeStudy study = run_mge_study(config);
      auto csv = open_csv(dir / "mge.csv");
      csv << "seed,image_idx,mge_raw,mge_norm\n";
      std::vector<double> per_seed;
      for (std::size_t s = 0; s < study.results.size(); ++s) {
        for (const auto& rec : study.results[s].records)
          csv << study.seeds[s] << "," << rec.image_idx << "," << fmt(rec.raw) << "," << fmt(rec.normalized) << "\n";
        per_seed.push_back(study.results[s].mean_normalized);
      }
      say("median normalized mGE over seeds: " + fmt(median(per_seed)));
      say("wrote " + (dir / "mge.csv").string());
      return kExitOk;
    }
    if (converge->parsed()) {
      const fs::path dir = prepare_run_dir(out_dir, config);
      const ConvergenceResult r = mc_convergence_study(config.converge);
      auto csv = open_csv(dir / "convergence.csv");
      csv << "N,seed,abs_err\n";
      for (const auto& row : r.rows)
        csv << row.n << "," << row.seed << "," << fmt(row.abs_err) << "\n";
      say("reference integral: " + fmt(r.reference));
      for (std::size_t i = 0; i < r.median_errors.size(); ++i)
        say("N=" + std::to_string(config.converge.sample_counts[i]) + " median |error| " + fmt(r.median_errors[i]));
      say(r.slope ? "log-log slope: " + fmt(*r.slope) : std::string("log-log slope: undefined (zero-variance integrand)"));
      say("wrote " + (dir / "convergence.csv").string());
      return kExitOk;
    }
    if (train->parsed()) {
      const fs::path dir = prepare_run_dir(out_dir, config);
      const DataSplits data = make_datasets(config);
      TrainOutcome r = run_training(config, data);
      write_metrics_csv(dir / "metrics.csv", r.metrics);
      if (config.task == Task::Classify) {
        auto csv = open_csv(dir / "classify.csv");
        csv << "epoch,error_pct\n";
        for (const auto& m : r.metrics)
          csv << m.epoch << "," << fmt(m.metric) << "\n";
      } else {
        auto csv = open_csv(dir / "denoise.csv");
        csv << "sigma,psnr\n";
        csv << fmt(config.data.eval_sigma) << "," << fmt(evaluate_metric(r.net, data.test, config.train.batch_size))
            << "\n";
        say("noisy input PSNR: " + fmt(r.noisy_psnr));
      }
      write_checkpoint(dir / "checkpoint.bin", capture_checkpoint(r.net, config.hash()));
      auto loss = open_csv(dir / "final_loss.txt");
      loss << fmt(r.final_train_loss) << "\n";
      if (!r.metrics.empty())
        say("final epoch metric: " + fmt(r.metrics.back().metric));
      say("final training loss: " + fmt(r.final_train_loss));
      say("wrote " + dir.string());
      return kExitOk;
    }
    if (eval->parsed()) {
      if (!fs::exists(checkpoint_path)) {
        err << "error: checkpoint not found: " << checkpoint_path << "\n";
        return kExitFailure;
      }
      const Checkpoint ckpt = read_checkpoint(checkpoint_path);
      if (ckpt.config_hash != config.hash()) {
        char buf[80];
        std::snprintf(buf, sizeof buf, "checkpoint config hash %016llx does not match config %s",
                      static_cast<unsigned long long>(ckpt.config_hash), config.hash_hex().c_str());
        err << "error: " << buf << "\n";
        return kExitCheckpointMismatch;
      }
      const DataSplits data = make_datasets(config);
      Network net = make_network(config, data.train);
      restore_checkpoint(net, ckpt);
      const double loss = evaluate_loss(net, data.train, config.train.batch_size);
      const double metric = evaluate_metric(net, data.test, config.train.batch_size);
      const fs::path dir = prepare_run_dir(out_dir, config);
      auto csv = open_csv(dir / "eval.csv");
      csv << "train_loss,metric\n" << fmt(loss) << "," << fmt(metric) << "\n";
      say("training-set loss: " + fmt(loss));
      say(std::string(config.task == Task::Classify ? "test error (%): " : "test PSNR (dB): ") + fmt(metric));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

} // namespace mcg::cli

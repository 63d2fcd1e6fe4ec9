// Acceptance run: one PASS/FAIL line per criterion. Optional arguments pick
// criteria by number (e.g. `acceptance 1 3`).
#include "commands.hpp"

#include "mcg/affine_group.hpp"
#include "mcg/basis.hpp"
#include "mcg/config.hpp"
#include "mcg/conv.hpp"
#include "mcg/harness.hpp"
#include "mcg/layers.hpp"
#include "mcg/model.hpp"
#include "mcg/rng.hpp"
#include "mcg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace mcg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Tensor4 random_tensor(int n, int c, int h, int w, Rng& rng) {
  Tensor4 t(n, c, h, w);
  for (double& v : t.values())
    v = rng.normal();
  return t;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

// 1 -----------------------------------------------------------------------

Outcome degeneration() {
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int k = 1 + 2 * static_cast<int>(rng.below(3));
    const int cin = 1 + static_cast<int>(rng.below(4)), cout = 1 + static_cast<int>(rng.below(4));
    const ConvGeometry geo{1 + static_cast<int>(rng.below(2)), static_cast<int>(rng.below(static_cast<std::uint64_t>(k))),
                           rng.below(2) ? Padding::Circular : Padding::Zero};
    const int h = k + 2 + static_cast<int>(rng.below(6)), w = k + 2 + static_cast<int>(rng.below(6));
    auto params = make_identity_params(std::make_shared<const FilterBasis>(dirac_basis(k)), cin, cout, geo);
    for (double& v : params.weights)
      v = rng.normal();
    const Tensor4 x = random_tensor(1 + static_cast<int>(rng.below(3)), cin, h, w, rng);
    const Tensor4 a = WmcgLayer(params).forward(x);
    const Tensor4 b = reference::conv2d_forward(x, Tensor4(cout, cin, k, k, params.weights), geo);
    if (!a.same_shape(b))
      return {false, "shape mismatch on instance " + std::to_string(i)};
    for (std::size_t j = 0; j < a.size(); ++j)
      worst = std::max(worst, std::abs(a.storage()[j] - b.storage()[j]));
  }
  return {worst <= 1e-12, "50 instances, max abs deviation " + num(worst)};
}

// 2 -----------------------------------------------------------------------

double network_fd(Network& net, Tensor4 x, const std::function<LossResult(const Tensor4&)>& loss_fn) {
  const LossResult l = loss_fn(net.forward(x));
  const Tensor4 gx = net.backward(l.grad);
  auto params = net.parameters();
  std::vector<std::vector<double>> grads;
  for (const auto& p : params)
    grads.emplace_back(p.grad.begin(), p.grad.end());
  auto eval = [&] { return loss_fn(net.forward(x)).loss; };
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < params[i].value.size(); ++j) {
      const double v = params[i].value[j];
      params[i].value[j] = v + h;
      const double plus = eval();
      params[i].value[j] = v - h;
      const double minus = eval();
      params[i].value[j] = v;
      worst = std::max(worst, rel_err(grads[i][j], (plus - minus) / (2 * h)));
    }
  for (std::size_t i = 0; i < x.size(); i += 5) {
    const double v = x.storage()[i];
    x.storage()[i] = v + h;
    const double plus = eval();
    x.storage()[i] = v - h;
    const double minus = eval();
    x.storage()[i] = v;
    worst = std::max(worst, rel_err(gx.storage()[i], (plus - minus) / (2 * h)));
  }
  return worst;
}

double loss_fd(const Tensor4& y, const std::function<LossResult(const Tensor4&)>& loss_fn) {
  const LossResult l = loss_fn(y);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    Tensor4 p = y, m = y;
    p.storage()[i] += h;
    m.storage()[i] -= h;
    worst = std::max(worst, rel_err(l.grad.storage()[i], (loss_fn(p).loss - loss_fn(m).loss) / (2 * h)));
  }
  return worst;
}

Outcome gradients() {
  double worst = 0.0;
  int instances = 0;
  std::string worst_case;
  auto record = [&](double e, const std::string& name) {
    ++instances;
    if (e > worst) {
      worst = e;
      worst_case = name;
    }
  };
  std::uint64_t seed = 200;
  for (const char* kind : {"wmcg", "conv", "mcg", "gcnn", "bottleneck"})
    for (const Task task : {Task::Classify, Task::Denoise})
      for (const bool norm : {true, false}) {
        ++seed;
        NetworkSpec spec;
        spec.task = task;
        spec.num_classes = 3;
        spec.basis = {BasisKind::FourierBessel, 3, 6};
        spec.ranges = {0.0, 1.0, 2 * std::numbers::pi, 0.25 * std::numbers::pi};
        if (std::string(kind) == "gcnn")
          spec.ranges = {0.0, 0.5, 0.5, 0.2};
        LayerSpec a;
        a.kind = kind;
        a.out = 2;
        a.mid = 2;
        a.samples = 2;
        a.out_samples = 2;
        a.norm = norm;
        a.pool = task == Task::Classify ? 2 : 1;
        LayerSpec b = a;
        b.kind = "bottleneck";
        b.pool = 1;
        spec.layers = {a};
        if (task == Task::Denoise)
          spec.layers.push_back(b);
        Network net = build_network(spec, seed);
        Rng rng(seed);
        const Tensor4 x = random_tensor(3, 1, 6, 6, rng);
        const std::string name = std::string(kind) + (task == Task::Classify ? "/classify" : "/denoise") +
                                 (norm ? "/bn" : "");
        if (task == Task::Classify) {
          const std::vector<int> labels{0, 2, 1};
          record(network_fd(net, x, [&](const Tensor4& y) { return cross_entropy(y, labels); }), name);
        } else {
          const Tensor4 target = random_tensor(3, 1, 6, 6, rng);
          record(network_fd(net, x, [&](const Tensor4& y) { return mse_loss(y, target); }), name);
        }
      }
  Rng rng(299);
  for (int i = 0; i < 4; ++i) {
    const Tensor4 logits = random_tensor(4, 5, 1, 1, rng);
    const std::vector<int> labels{0, 4, 2, static_cast<int>(rng.below(5))};
    record(loss_fd(logits, [&](const Tensor4& y) { return cross_entropy(y, labels); }), "cross_entropy");
    const Tensor4 pred = random_tensor(2, 1, 3, 4, rng), target = random_tensor(2, 1, 3, 4, rng);
    record(loss_fd(pred, [&](const Tensor4& y) { return mse_loss(y, target); }), "mse");
  }
  return {worst <= 1e-6 && instances >= 20,
          std::to_string(instances) + " instances, max relative error " + num(worst) + " (" + worst_case + ")"};
}

// 3 -----------------------------------------------------------------------

Outcome group_axioms() {
  // Rotation-scale and shear-scale subgroups, where the parameter sum is the
  // matrix product.
  const double pi = std::numbers::pi;
  const SampleRanges rs{-1.0, 1.0, 2 * pi, 0.0};
  const SampleRanges ss{-1.0, 1.0, 0.0, 0.4 * pi};
  Rng rng(303);
  double worst = 0.0;
  auto dist = [](const GroupElement& a, const GroupElement& b) {
    return std::max({std::abs(a.x.x - b.x.x), std::abs(a.x.y - b.x.y), std::abs(a.a.alpha - b.a.alpha),
                     std::abs(a.a.theta - b.a.theta), std::abs(a.a.shear - b.a.shear)});
  };
  for (int i = 0; i < 10000; ++i) {
    const auto t = sample_transforms(i % 2 ? ss : rs, 3, rng.next_u64());
    GroupElement g[3];
    for (int e = 0; e < 3; ++e)
      g[e] = {{rng.uniform(-5, 5), rng.uniform(-5, 5)}, t[static_cast<std::size_t>(e)]};
    worst = std::max(worst, dist(group_product(group_product(g[0], g[1]), g[2]),
                                 group_product(g[0], group_product(g[1], g[2]))));
    worst = std::max(worst, dist(group_product(g[0], group_inverse(g[0])), GroupElement::identity()));
    worst = std::max(worst, dist(group_product(group_inverse(g[0]), g[0]), GroupElement::identity()));
    worst = std::max(worst, dist(group_product(GroupElement::identity(), g[1]), g[1]));
    worst = std::max(worst, dist(group_product(g[2], GroupElement::identity()), g[2]));
    const Vec2 p{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const Vec2 lhs = act_on_point(group_product(g[0], g[1]), p);
    const Vec2 rhs = act_on_point(g[0], act_on_point(g[1], p));
    worst = std::max({worst, std::abs(lhs.x - rhs.x), std::abs(lhs.y - rhs.y)});
  }
  return {worst <= 1e-10, "10000 triples, max deviation " + num(worst)};
}

// 4 -----------------------------------------------------------------------

Outcome convergence() {
  ConvergenceSpec spec;
  spec.kind = IntegrandKind::Rotation;
  spec.sample_counts = {16, 64, 256, 1024};
  spec.seeds = 32;
  const ConvergenceResult r = mc_convergence_study(spec);
  bool monotone = true;
  std::string medians;
  for (std::size_t i = 0; i < r.median_errors.size(); ++i) {
    medians += (i ? " " : "") + num(r.median_errors[i]);
    if (i > 0 && r.median_errors[i] > r.median_errors[i - 1])
      monotone = false;
  }
  if (!r.slope)
    return {false, "degenerate integrand"};
  const double s = *r.slope;
  return {s >= -0.65 && s <= -0.35 && monotone,
          "slope " + num(s) + ", medians " + medians + (monotone ? "" : " (not monotone)")};
}

// 5 -----------------------------------------------------------------------

Outcome mge_ordering() {
  std::vector<double> values[2];
  double seed_medians[2];
  int idx = 0;
  for (const char* layer : {"wmcg", "conv"}) {
    const auto config = ExperimentConfig::parse(std::string("[mge]\nseeds = 16\nimages = 32\nlayer = ") + layer + "\n");
    const cli::MgeStudy study = cli::run_mge_study(config);
    std::vector<double> per_seed;
    for (const auto& r : study.results) {
      per_seed.push_back(r.mean_normalized);
      for (const auto& rec : r.records)
        values[idx].push_back(rec.normalized);
    }
    seed_medians[idx] = median(per_seed);
    ++idx;
  }
  const double w = median(values[0]), c = median(values[1]);
  return {w < c, "median normalized mGE wmcg " + num(w) + " vs conv " + num(c) + " over " +
                     std::to_string(values[0].size()) + " images (per-seed medians " + num(seed_medians[0]) +
                     " vs " + num(seed_medians[1]) + ")"};
}

// 6 -----------------------------------------------------------------------

Outcome denoising() {
  const auto config = ExperimentConfig::parse(
      "seed = 0\n"
      "[model]\ntask = denoise\n"
      "layers = wmcg:out=8; bottleneck:out=8:mid=4:norm=false:relu=false; "
      "bottleneck:out=8:mid=4:norm=false:relu=false; bottleneck:out=8:mid=4:norm=false:relu=false; "
      "bottleneck:out=8:mid=4:norm=false:relu=false; bottleneck:out=8:mid=4:norm=false:relu=false\n"
      "[data]\nkind = denoise\ntrain_size = 2000\ntest_size = 200\npatch_size = 41\n"
      "sigma_lo = 0\nsigma_hi = 55\neval_sigma = 25\n"
      "[optim]\nepochs = 10\nbatch = 16\nlr = 0.02\n");
  const cli::DataSplits data = cli::make_datasets(config);
  const cli::TrainOutcome r = cli::run_training(config, data);
  const double denoised = r.metrics.back().metric;
  const double gain = denoised - r.noisy_psnr;
  return {gain >= 2.0, "noisy " + num(r.noisy_psnr) + " dB, denoised " + num(denoised) + " dB, gain " + num(gain) + " dB"};
}

// 7 -----------------------------------------------------------------------

Outcome classification() {
  const std::string common = "[data]\nkind = shapes\ntrain_size = 2000\ntest_size = 500\n[optim]\nepochs = 20\n";
  const std::string wmcg = "[model]\nlayers = wmcg:out=8:pool=2; wmcg:out=16:pool=2; wmcg:out=16\n";
  const std::string conv = "[model]\nlayers = conv:out=8:kernel=3:pool=2; conv:out=16:kernel=3:pool=2; conv:out=16:kernel=3\n";
  std::vector<double> errors[2];
  std::string detail;
  for (int seed = 0; seed < 5; ++seed) {
    int idx = 0;
    for (const std::string* layers : {&wmcg, &conv}) {
      const auto config = ExperimentConfig::parse("seed = " + std::to_string(seed) + "\n" + *layers + common);
      const cli::TrainOutcome r = cli::run_training(config, cli::make_datasets(config));
      errors[idx++].push_back(r.metrics.back().metric);
    }
  }
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v)
      s += (s.empty() ? "" : " ") + num(x);
    return s;
  };
  const double w = median(errors[0]), c = median(errors[1]);
  return {w <= 10.0 && w <= c, "median test error wmcg " + num(w) + "% [" + list(errors[0]) + "] vs conv " + num(c) +
                                   "% [" + list(errors[1]) + "]"};
}

// 8 -----------------------------------------------------------------------

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      files[fs::relative(e.path(), root).string()] = ss.str();
    }
  return files;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "mcg_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::map<std::string, std::string> configs = {
      {"classify", "seed = 5\n[model]\nlayers = wmcg:out=4:pool=2; mcg:out=4:samples=2; bottleneck:out=4\n"
                   "[data]\ntrain_size = 32\ntest_size = 16\nimage_size = 12\n[optim]\nepochs = 2\nbatch = 8\n"},
      {"denoise", "seed = 6\n[model]\ntask = denoise\nlayers = wmcg:out=4; bottleneck:out=4:mid=2\n"
                  "[data]\nkind = denoise\ntrain_size = 16\ntest_size = 4\npatch_size = 16\n[optim]\nepochs = 2\nbatch = 4\nlr = 0.01\n"},
      {"study", "seed = 7\n[mge]\nimages = 4\nimage_size = 16\nseeds = 2\n[converge]\ncounts = 8,32\nseeds = 4\n"},
  };
  std::vector<std::vector<std::string>> commands;
  for (const auto& [name, text] : configs) {
    const fs::path cfg = root / (name + ".txt");
    std::ofstream(cfg) << text;
    const std::string c = cfg.string();
    if (name == "study") {
      commands.push_back({"--config", c, "basis", "dump"});
      commands.push_back({"--config", c, "mge"});
      commands.push_back({"--config", c, "converge"});
    } else {
      commands.push_back({"--config", c, "train"});
      const fs::path ckpt = root / "first" / ExperimentConfig::load(cfg).hash_hex() / "checkpoint.bin";
      commands.push_back({"--config", c, "eval", "--checkpoint", ckpt.string()});
    }
  }
  for (const char* run : {"first", "second"})
    for (auto args : commands) {
      args.insert(args.begin(), {"--quiet", "--out", (root / run).string()});
      std::ostringstream out, err;
      if (const int code = cli::run_cli(args, out, err); code != cli::kExitOk)
        return {false, "command failed with exit " + std::to_string(code) + ": " + err.str()};
    }
  const auto a = tree(root / "first"), b = tree(root / "second");
  std::string differing;
  for (const auto& [name, bytes] : a)
    if (!b.contains(name) || b.at(name) != bytes)
      differing += " " + name;
  const bool same = differing.empty() && a.size() == b.size();
  fs::remove_all(root);
  return {same, std::to_string(a.size()) + " files compared" + (same ? "" : "; differing:" + differing)};
}

// 9 -----------------------------------------------------------------------

double span_residual(const FilterBasis& basis) {
  const auto cells = static_cast<std::size_t>(basis.cells());
  std::vector<std::vector<double>> q;
  for (int j = 0; j < basis.size(); ++j) {
    std::vector<double> v(basis.reference(j).begin(), basis.reference(j).end());
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : q) {
        const double d = dot(u, v);
        for (std::size_t c = 0; c < cells; ++c)
          v[c] -= d * u[c];
      }
    const double n = l2_norm(v);
    if (n < 1e-10)
      return 1.0;
    for (double& x : v)
      x /= n;
    q.push_back(v);
  }
  double worst = 0.0;
  for (std::size_t e = 0; e < cells; ++e) {
    std::vector<double> v(cells, 0.0);
    v[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : q) {
        const double d = dot(u, v);
        for (std::size_t c = 0; c < cells; ++c)
          v[c] -= d * u[c];
      }
    worst = std::max(worst, l2_norm(v));
  }
  return worst;
}

Outcome fb_validity() {
  double norm_dev = 0.0, rot_dev = 0.0;
  for (const auto& [k, K] : std::vector<std::pair<int, int>>{{3, 9}, {5, 9}, {5, 25}, {7, 12}, {9, 6}, {11, 30}}) {
    const FilterBasis b({BasisKind::FourierBessel, k, K});
    for (int j = 0; j < b.size(); ++j) {
      norm_dev = std::max(norm_dev, std::abs(l2_norm(b.reference(j)) - 1.0));
      if (b.mode(j).order != 0)
        continue;
      for (double r : {0.1, 0.45, 0.9})
        for (double phi = 0.0; phi < 2 * std::numbers::pi; phi += 0.37)
          rot_dev = std::max(rot_dev, std::abs(b.evaluate(j, r, phi) - b.evaluate(j, r, 0.0)));
      for (double theta : {0.4, 1.3, 2.7, -0.9}) {
        const auto rr = b.rasterize(j, {0.0, theta, 0.0});
        const auto ref = b.reference(j);
        for (std::size_t c = 0; c < rr.size(); ++c)
          rot_dev = std::max(rot_dev, std::abs(rr[c] - ref[c]));
      }
    }
  }
  const double span = span_residual(FilterBasis({BasisKind::FourierBessel, 3, 9}));
  return {norm_dev <= 1e-12 && rot_dev <= 1e-10 && span <= 1e-8,
          "norm deviation " + num(norm_dev) + ", m=0 rotation deviation " + num(rot_dev) + ", k=3 K=9 span residual " +
              num(span)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  Outcome (*run)();
};

} // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "degeneration oracle", 10, degeneration},
      {2, "gradient correctness", 60, gradients},
      {3, "group axioms", 5, group_axioms},
      {4, "Monte Carlo rate", 120, convergence},
      {5, "mGE ordering", 120, mge_ordering},
      {6, "denoising gain", 1800, denoising},
      {7, "classification", 1200, classification},
      {8, "determinism", 600, determinism},
      {9, "FB basis validity", 60, fb_validity},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i)
    wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.contains(c.id))
      continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("%s criterion %d %s: %s; %.1f s of %.0f s budget%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_s, in_time ? "" : " (over budget)");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

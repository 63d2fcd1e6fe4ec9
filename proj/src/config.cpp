#include "mcg/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mcg {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> d = {
      {"seed", "0"},
      {"basis.kind", "fb"},
      {"basis.kernel_size", "5"},
      {"basis.num_basis", "9"},
      {"ranges.alpha_lo", "0"},
      {"ranges.alpha_hi", "1"},
      {"ranges.theta_max", "2pi"},
      {"ranges.shear_max", "0.25pi"},
      {"ranges.sample_out", "false"},
      {"model.task", "classify"},
      {"model.layers", "wmcg:out=8:pool=2; wmcg:out=16:pool=2; wmcg:out=16"},
      {"model.residual_output", "true"},
      {"optim.lr", "0.05"},
      {"optim.final_lr", "0"},
      {"optim.momentum", "0.9"},
      {"optim.weight_decay", "0.0005"},
      {"optim.schedule", "cosine"},
      {"optim.epochs", "2"},
      {"optim.batch", "32"},
      {"data.kind", "shapes"},
      {"data.path", ""},
      {"data.labels", ""},
      {"data.test_path", ""},
      {"data.test_labels", ""},
      {"data.train_size", "256"},
      {"data.test_size", "128"},
      {"data.image_size", "20"},
      {"data.patch_size", "41"},
      {"data.sigma_lo", "0"},
      {"data.sigma_hi", "55"},
      {"data.eval_sigma", "25"},
      {"mge.shear_max", "0.0625pi"},
      {"mge.scale_lo", "1"},
      {"mge.scale_hi", "1.1"},
      {"mge.theta_max", "0.125pi"},
      {"mge.max_shift", "0"},
      {"mge.samples", "1"},
      {"mge.crop", "-1"},
      {"mge.layer", "wmcg"},
      {"mge.channels", "8"},
      {"mge.images", "32"},
      {"mge.image_size", "32"},
      {"mge.seeds", "1"},
      {"converge.kind", "rotation"},
      {"converge.counts", "16,64,256,1024"},
      {"converge.seeds", "32"},
      {"converge.reference_points", "0"},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(key, "config key '" + key + "': expected an integer, got '" + text + "'");
  return v;
}

int parse_int_min(const std::string& key, const std::string& text, long long lo) {
  const long long v = parse_int(key, text);
  if (v < lo || v > 1'000'000'000)
    throw ConfigError(key, "config key '" + key + "': value " + text + " out of range");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes")
    return true;
  if (t == "false" || t == "0" || t == "no")
    return false;
  throw ConfigError(key, "config key '" + key + "': expected true or false, got '" + text + "'");
}

template <class Fn> auto guarded(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, "config key '" + key + "': " + e.what());
  }
}

} // namespace

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

double parse_real(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  double factor = 1.0;
  if (t.size() >= 2 && t.compare(t.size() - 2, 2, "pi") == 0) {
    factor = std::numbers::pi;
    t = trim(t.substr(0, t.size() - 2));
    if (t.empty() || t == "+")
      return factor;
    if (t == "-")
      return -factor;
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v))
    throw ConfigError(key, "config key '" + key + "': expected a real, got '" + text + "'");
  return v * factor;
}

std::vector<LayerSpec> parse_layers(const std::string& text) {
  const std::string key = "model.layers";
  std::vector<LayerSpec> out;
  std::stringstream entries(text);
  std::string entry;
  while (std::getline(entries, entry, ';')) {
    entry = trim(entry);
    if (entry.empty())
      continue;
    std::stringstream parts(entry);
    std::string part;
    std::getline(parts, part, ':');
    LayerSpec ls;
    ls.kind = trim(part);
    if (ls.kind != "conv" && ls.kind != "wmcg" && ls.kind != "mcg" && ls.kind != "gcnn" &&
        ls.kind != "bottleneck")
      throw ConfigError(key, "config key 'model.layers': unknown layer kind '" + ls.kind + "'");
    while (std::getline(parts, part, ':')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos)
        throw ConfigError(key, "config key 'model.layers': expected name=value in '" + part + "'");
      const std::string name = trim(part.substr(0, eq));
      const std::string value = part.substr(eq + 1);
      if (name == "out") ls.out = parse_int_min(key, value, 1);
      else if (name == "mid") ls.mid = parse_int_min(key, value, 0);
      else if (name == "kernel") ls.kernel = parse_int_min(key, value, 1);
      else if (name == "stride") ls.stride = parse_int_min(key, value, 1);
      else if (name == "padding") ls.padding = parse_int_min(key, value, -1);
      else if (name == "groups") ls.groups = parse_int_min(key, value, 1);
      else if (name == "residual") ls.residual = parse_bool(key, value);
      else if (name == "relu") ls.relu = parse_bool(key, value);
      else if (name == "norm") ls.norm = parse_bool(key, value);
      else if (name == "pool") ls.pool = parse_int_min(key, value, 1);
      else if (name == "samples") ls.samples = parse_int_min(key, value, 1);
      else if (name == "out_samples") ls.out_samples = parse_int_min(key, value, 1);
      else
        throw ConfigError(key, "config key 'model.layers': unknown layer option '" + name + "'");
    }
    out.push_back(ls);
  }
  if (out.empty())
    throw ConfigError(key, "config key 'model.layers': no layers given");
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical_); }

std::string ExperimentConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

NetworkSpec ExperimentConfig::network_spec(int in_channels, int num_classes) const {
  NetworkSpec spec;
  spec.task = task;
  spec.in_channels = in_channels;
  spec.num_classes = num_classes;
  spec.basis = basis;
  spec.ranges = ranges;
  spec.sample_out_transforms = sample_out;
  spec.residual_output = residual_output;
  spec.layers = layers;
  return spec;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (!default_values().contains(key))
    throw ConfigError(key, "unknown config key '" + key + "'");
  values_[key] = trim(value);
  apply();
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.values_ = default_values();
  c.apply();
  return c;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c;
  c.values_ = default_values();
  std::stringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("", "config line " + std::to_string(line_no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty())
      key = section + "." + key;
    if (!default_values().contains(key))
      throw ConfigError(key, "unknown config key '" + key + "'");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  c.apply();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ExperimentConfig::apply() {
  const auto& v = values_;
  auto get = [&](const char* k) -> const std::string& { return v.at(k); };

  seed = static_cast<std::uint64_t>(parse_int("seed", get("seed")));

  const std::string& kind = get("basis.kind");
  if (kind == "fb")
    basis.kind = BasisKind::FourierBessel;
  else if (kind == "dirac")
    basis.kind = BasisKind::Dirac;
  else
    throw ConfigError("basis.kind", "config key 'basis.kind': expected fb or dirac");
  basis.kernel_size = parse_int_min("basis.kernel_size", get("basis.kernel_size"), 1);
  basis.num_basis = parse_int_min("basis.num_basis", get("basis.num_basis"), 1);
  guarded("basis.num_basis", [&] { basis.validate(); });

  ranges.alpha_lo = parse_real("ranges.alpha_lo", get("ranges.alpha_lo"));
  ranges.alpha_hi = parse_real("ranges.alpha_hi", get("ranges.alpha_hi"));
  ranges.theta_max = parse_real("ranges.theta_max", get("ranges.theta_max"));
  ranges.shear_max = parse_real("ranges.shear_max", get("ranges.shear_max"));
  guarded("ranges", [&] { ranges.validate(); });
  sample_out = parse_bool("ranges.sample_out", get("ranges.sample_out"));

  const std::string& t = get("model.task");
  if (t == "classify")
    task = Task::Classify;
  else if (t == "denoise")
    task = Task::Denoise;
  else
    throw ConfigError("model.task", "config key 'model.task': expected classify or denoise");
  layers = parse_layers(get("model.layers"));
  residual_output = parse_bool("model.residual_output", get("model.residual_output"));

  train.learning_rate = parse_real("optim.lr", get("optim.lr"));
  train.final_learning_rate = parse_real("optim.final_lr", get("optim.final_lr"));
  train.momentum = parse_real("optim.momentum", get("optim.momentum"));
  train.weight_decay = parse_real("optim.weight_decay", get("optim.weight_decay"));
  const std::string& sched = get("optim.schedule");
  if (sched == "constant")
    train.schedule = ScheduleKind::Constant;
  else if (sched == "cosine")
    train.schedule = ScheduleKind::Cosine;
  else if (sched == "exponential")
    train.schedule = ScheduleKind::Exponential;
  else
    throw ConfigError("optim.schedule",
                      "config key 'optim.schedule': expected constant, cosine or exponential");
  train.epochs = parse_int_min("optim.epochs", get("optim.epochs"), 0);
  train.batch_size = parse_int_min("optim.batch", get("optim.batch"), 1);
  if (train.learning_rate < 0.0)
    throw ConfigError("optim.lr", "config key 'optim.lr' must be non-negative");
  if (train.momentum < 0.0 || train.momentum >= 1.0)
    throw ConfigError("optim.momentum", "config key 'optim.momentum' must lie in [0, 1)");
  if (train.weight_decay < 0.0)
    throw ConfigError("optim.weight_decay", "config key 'optim.weight_decay' must be non-negative");
  train.seed = seed;

  data.kind = get("data.kind");
  if (data.kind != "shapes" && data.kind != "denoise" && data.kind != "idx" && data.kind != "cifar")
    throw ConfigError("data.kind", "config key 'data.kind': expected shapes, denoise, idx or cifar");
  data.path = get("data.path");
  data.labels = get("data.labels");
  data.test_path = get("data.test_path");
  data.test_labels = get("data.test_labels");
  data.train_size = parse_int_min("data.train_size", get("data.train_size"), 1);
  data.test_size = parse_int_min("data.test_size", get("data.test_size"), 1);
  data.image_size = parse_int_min("data.image_size", get("data.image_size"), 4);
  data.patch_size = parse_int_min("data.patch_size", get("data.patch_size"), 4);
  data.sigma_lo = parse_real("data.sigma_lo", get("data.sigma_lo"));
  data.sigma_hi = parse_real("data.sigma_hi", get("data.sigma_hi"));
  data.eval_sigma = parse_real("data.eval_sigma", get("data.eval_sigma"));
  if (data.sigma_lo < 0.0 || data.sigma_hi < data.sigma_lo)
    throw ConfigError("data.sigma_hi", "config keys 'data.sigma_lo'/'data.sigma_hi': bad range");
  if (data.eval_sigma < 0.0)
    throw ConfigError("data.eval_sigma", "config key 'data.eval_sigma' must be non-negative");
  if ((data.kind == "idx" || data.kind == "cifar") && data.path.empty())
    throw ConfigError("data.path", "config key 'data.path' is required for data.kind=" + data.kind);
  if (data.kind == "idx" && data.labels.empty())
    throw ConfigError("data.labels", "config key 'data.labels' is required for data.kind=idx");
  if ((data.kind == "denoise") != (task == Task::Denoise))
    throw ConfigError("data.kind", "config key 'data.kind' does not match model.task");

  MgeConfig& m = mge.measure;
  m.shear_max = parse_real("mge.shear_max", get("mge.shear_max"));
  m.scale_lo = parse_real("mge.scale_lo", get("mge.scale_lo"));
  m.scale_hi = parse_real("mge.scale_hi", get("mge.scale_hi"));
  m.theta_max = parse_real("mge.theta_max", get("mge.theta_max"));
  m.max_shift = parse_int_min("mge.max_shift", get("mge.max_shift"), 0);
  m.num_samples = static_cast<std::size_t>(parse_int_min("mge.samples", get("mge.samples"), 1));
  const int crop = parse_int_min("mge.crop", get("mge.crop"), -1);
  m.crop = crop < 0 ? basis.kernel_size : crop;
  m.seed = seed;
  guarded("mge", [&] { m.ranges(); });
  mge.layer = get("mge.layer");
  if (mge.layer != "wmcg" && mge.layer != "conv")
    throw ConfigError("mge.layer", "config key 'mge.layer': expected wmcg or conv");
  mge.channels = parse_int_min("mge.channels", get("mge.channels"), 1);
  mge.images = parse_int_min("mge.images", get("mge.images"), 1);
  mge.image_size = parse_int_min("mge.image_size", get("mge.image_size"), 4);
  mge.seeds = parse_int_min("mge.seeds", get("mge.seeds"), 1);
  if (2 * m.crop >= mge.image_size)
    throw ConfigError("mge.crop", "config key 'mge.crop' removes the whole image");

  const std::string& ck = get("converge.kind");
  if (ck == "constant")
    converge.kind = IntegrandKind::Constant;
  else if (ck == "rotation")
    converge.kind = IntegrandKind::Rotation;
  else if (ck == "affine")
    converge.kind = IntegrandKind::Affine;
  else
    throw ConfigError("converge.kind", "config key 'converge.kind': expected constant, rotation or affine");
  converge.sample_counts.clear();
  std::stringstream counts(get("converge.counts"));
  std::string item;
  while (std::getline(counts, item, ','))
    converge.sample_counts.push_back(parse_int_min("converge.counts", item, 1));
  if (converge.sample_counts.empty())
    throw ConfigError("converge.counts", "config key 'converge.counts' is empty");
  converge.seeds = parse_int_min("converge.seeds", get("converge.seeds"), 1);
  converge.reference_points =
      parse_int_min("converge.reference_points", get("converge.reference_points"), 0);
  converge.base_seed = seed;

  std::string text;
  for (const auto& [k, val] : values_)
    text += k + "=" + val + "\n";
  canonical_ = std::move(text);
}

} // namespace mcg

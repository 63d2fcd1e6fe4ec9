#include "mcg/dataset.hpp"

#include "mcg/affine_group.hpp"
#include "mcg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

namespace mcg {

void Dataset::validate() const {
  const int n = inputs.n();
  if (n == 0)
    throw std::invalid_argument("dataset '" + split + "' is empty");
  if (!inputs.all_finite())
    throw std::invalid_argument("dataset '" + split + "' has non-finite inputs");
  if (task == Task::Classify) {
    if (num_classes < 2)
      throw std::invalid_argument("dataset: num_classes must be at least 2");
    if (labels.size() != static_cast<std::size_t>(n))
      throw std::invalid_argument("dataset: one label per input required");
    for (int l : labels)
      if (l < 0 || l >= num_classes)
        throw std::invalid_argument("dataset: label out of range");
  } else {
    if (!targets.same_shape(inputs))
      throw std::invalid_argument("dataset: targets must match inputs");
    if (sigmas.size() != static_cast<std::size_t>(n))
      throw std::invalid_argument("dataset: one sigma per input required");
  }
}

namespace {

bool inside_shape(ShapeClass cls, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (cls) {
  case ShapeClass::Disk:
    return u * u + v * v <= 0.64;
  case ShapeClass::Square:
    return au <= 0.65 && av <= 0.65;
  case ShapeClass::Cross:
    return (au <= 0.25 && av <= 0.85) || (av <= 0.25 && au <= 0.85);
  case ShapeClass::Bar:
    return au <= 0.9 && av <= 0.25;
  }
  return false;
}

} // namespace

Dataset make_shapes_dataset(std::size_t size, const ShapesOptions& options, std::uint64_t seed) {
  if (size == 0 || options.image_size < 4)
    throw std::invalid_argument("shapes: need a positive size and image_size >= 4");
  if (!(options.min_scale > 0.0) || options.max_scale < options.min_scale)
    throw std::invalid_argument("shapes: bad scale range");
  constexpr int kClasses = 4;
  constexpr int kSuper = 4;
  const int s = options.image_size;

  Dataset ds;
  ds.task = Task::Classify;
  ds.num_classes = kClasses;
  ds.split = "shapes";
  ds.inputs = Tensor4(static_cast<int>(size), 1, s, s);
  ds.labels.resize(size);
  for (std::size_t i = 0; i < size; ++i)
    ds.labels[i] = static_cast<int>(i % kClasses);
  Rng order = Rng::derived(seed, 0);
  for (std::size_t i = size; i > 1; --i)
    std::swap(ds.labels[i - 1], ds.labels[order.below(i)]);

  const double center = (s - 1) / 2.0;
  for (std::size_t i = 0; i < size; ++i) {
    Rng rng = Rng::derived(seed, i + 1);
    const double radius = rng.uniform(options.min_scale, options.max_scale) * 0.4 * s;
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double shear =
        std::tan(rng.uniform(-options.max_shear_angle, options.max_shear_angle));
    const auto span = static_cast<std::uint64_t>(2 * options.max_shift + 1);
    const double sx = static_cast<double>(rng.below(span)) - options.max_shift;
    const double sy = static_cast<double>(rng.below(span)) - options.max_shift;
    const Mat2 inv = (rotation_matrix(theta) * shear_matrix(shear)).inverse();
    const auto cls = static_cast<ShapeClass>(ds.labels[i]);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        int hits = 0;
        for (int a = 0; a < kSuper; ++a)
          for (int b = 0; b < kSuper; ++b) {
            const Vec2 p{x - center - sx + (b + 0.5) / kSuper - 0.5,
                         y - center - sy + (a + 0.5) / kSuper - 0.5};
            const Vec2 u = (1.0 / radius) * (inv * p);
            hits += inside_shape(cls, u.x, u.y);
          }
        ds.inputs(static_cast<int>(i), 0, y, x) = static_cast<double>(hits) / (kSuper * kSuper);
      }
  }
  return ds;
}

Dataset make_denoise_dataset(std::size_t size, int patch_size, double sigma_lo, double sigma_hi,
                             std::uint64_t seed) {
  if (size == 0 || patch_size < 4)
    throw std::invalid_argument("denoise: need a positive size and patch_size >= 4");
  if (sigma_lo < 0.0 || sigma_hi < sigma_lo)
    throw std::invalid_argument("denoise: bad sigma range");
  const int s = patch_size;
  Dataset ds;
  ds.task = Task::Denoise;
  ds.split = "denoise";
  ds.targets = Tensor4(static_cast<int>(size), 1, s, s);
  ds.inputs = Tensor4(static_cast<int>(size), 1, s, s);
  ds.sigmas.resize(size);

  for (std::size_t i = 0; i < size; ++i) {
    Rng rng = Rng::derived(seed, i);
    // Piecewise-constant regions from random half-planes, plus an oriented
    // grating and a soft blob.
    struct Edge {
      double nx, ny, off, step;
    };
    std::vector<Edge> edges(3);
    for (auto& e : edges) {
      const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
      e = {std::cos(ang), std::sin(ang), rng.uniform(-0.4, 0.4) * s, rng.uniform(-0.3, 0.3)};
    }
    const double base = rng.uniform(0.3, 0.7);
    const double g_ang = rng.uniform(0.0, std::numbers::pi);
    const double g_freq = rng.uniform(0.15, 0.6);
    const double g_amp = rng.uniform(0.0, 0.15);
    const double bx = rng.uniform(0.0, s), by = rng.uniform(0.0, s);
    const double b_amp = rng.uniform(-0.3, 0.3), b_w = rng.uniform(2.0, 0.3 * s);
    const double c = (s - 1) / 2.0;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        double v = base;
        for (const auto& e : edges)
          if (e.nx * (x - c) + e.ny * (y - c) > e.off)
            v += e.step;
        v += g_amp * std::sin(g_freq * (std::cos(g_ang) * x + std::sin(g_ang) * y));
        v += b_amp * std::exp(-((x - bx) * (x - bx) + (y - by) * (y - by)) / (2 * b_w * b_w));
        ds.targets(static_cast<int>(i), 0, y, x) = std::clamp(v, 0.0, 1.0);
      }
    const double sigma = rng.uniform(sigma_lo, sigma_hi);
    ds.sigmas[i] = sigma;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        ds.inputs(static_cast<int>(i), 0, y, x) =
            ds.targets(static_cast<int>(i), 0, y, x) + sigma / 255.0 * rng.normal();
  }
  return ds;
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DatasetError(DatasetErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void check_header(const std::vector<std::uint8_t>& bytes, std::size_t header, std::uint32_t magic,
                  const std::filesystem::path& path) {
  if (bytes.size() < 4)
    throw DatasetError(DatasetErrorKind::Truncated, path.string() + ": missing header");
  if (read_be32(bytes, 0) != magic)
    throw DatasetError(DatasetErrorKind::BadMagic, path.string() + ": bad magic number");
  if (bytes.size() < header)
    throw DatasetError(DatasetErrorKind::Truncated, path.string() + ": truncated header");
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DatasetError(DatasetErrorKind::Io, "cannot write " + path.string());
  return out;
}

} // namespace

Tensor4 load_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  check_header(bytes, 16, kIdxImageMagic, path);
  const std::size_t n = read_be32(bytes, 4), rows = read_be32(bytes, 8), cols = read_be32(bytes, 12);
  if (bytes.size() < 16 + n * rows * cols)
    throw DatasetError(DatasetErrorKind::Truncated, path.string() + ": truncated pixel data");
  Tensor4 out(static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols));
  for (std::size_t i = 0; i < out.size(); ++i)
    out.storage()[i] = bytes[16 + i] / 255.0;
  return out;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path, int num_classes) {
  const auto bytes = read_bytes(path);
  check_header(bytes, 8, kIdxLabelMagic, path);
  const std::size_t n = read_be32(bytes, 4);
  if (bytes.size() < 8 + n)
    throw DatasetError(DatasetErrorKind::Truncated, path.string() + ": truncated labels");
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = bytes[8 + i];
    if (labels[i] >= num_classes)
      throw DatasetError(DatasetErrorKind::LabelOutOfRange,
                         path.string() + ": label " + std::to_string(labels[i]) + " at index " +
                             std::to_string(i) + " is out of range");
  }
  return labels;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int num_classes) {
  Dataset ds;
  ds.task = Task::Classify;
  ds.num_classes = num_classes;
  ds.split = images.filename().string();
  ds.inputs = load_idx_images(images);
  ds.labels = load_idx_labels(labels, num_classes);
  if (ds.labels.size() != static_cast<std::size_t>(ds.inputs.n()))
    throw DatasetError(DatasetErrorKind::Mismatch, "image and label counts differ");
  return ds;
}

Dataset load_cifar_binary(const std::filesystem::path& path, int num_classes) {
  constexpr std::size_t kRecord = 3073;
  const auto bytes = read_bytes(path);
  if (bytes.empty() || bytes.size() % kRecord != 0)
    throw DatasetError(DatasetErrorKind::Truncated,
                       path.string() + ": size is not a whole number of records");
  const std::size_t n = bytes.size() / kRecord;
  Dataset ds;
  ds.task = Task::Classify;
  ds.num_classes = num_classes;
  ds.split = path.filename().string();
  ds.inputs = Tensor4(static_cast<int>(n), 3, 32, 32);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kRecord;
    if (rec[0] >= num_classes)
      throw DatasetError(DatasetErrorKind::LabelOutOfRange,
                         path.string() + ": label out of range at record " + std::to_string(i));
    ds.labels[i] = rec[0];
    for (std::size_t k = 0; k < 3072; ++k)
      ds.inputs.storage()[i * 3072 + k] = rec[1 + k] / 255.0;
  }
  return ds;
}

void write_idx_images(const std::filesystem::path& path, int rows, int cols,
                      std::span<const std::uint8_t> pixels) {
  const std::size_t per = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (per == 0 || pixels.size() % per != 0)
    throw std::invalid_argument("write_idx_images: pixel count is not a multiple of rows*cols");
  auto out = open_out(path);
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(pixels.size() / per));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  auto out = open_out(path);
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

void write_cifar_binary(const std::filesystem::path& path, std::span<const std::uint8_t> labels,
                        std::span<const std::uint8_t> pixels) {
  if (pixels.size() != labels.size() * 3072)
    throw std::invalid_argument("write_cifar_binary: expected 3072 pixels per label");
  auto out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.put(static_cast<char>(labels[i]));
    out.write(reinterpret_cast<const char*>(pixels.data() + i * 3072), 3072);
  }
}

} // namespace mcg

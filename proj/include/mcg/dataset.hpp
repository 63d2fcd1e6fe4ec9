#pragma once

#include "mcg/model.hpp"
#include "mcg/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcg {

/// Inputs with either class labels (classification) or clean targets
/// (denoising). Pixel values are in [0, 1].
struct Dataset {
  Task task = Task::Classify;
  Tensor4 inputs;
  std::vector<int> labels;   // classification
  Tensor4 targets;           // denoising: clean images
  std::vector<double> sigmas; // denoising: per-image noise level on the 0..255 scale
  int num_classes = 0;
  std::string split;

  void validate() const;
};

struct ShapesOptions {
  int image_size = 20;
  double min_scale = 0.75;      // shape radius factor range
  double max_scale = 1.0;
  double max_shear_angle = 0.15; // radians
  int max_shift = 2;             // pixels
};

enum class ShapeClass { Disk = 0, Square = 1, Cross = 2, Bar = 3 };

/// Randomly scaled / rotated / sheared / shifted binary shapes, anti-aliased by
/// 4x4 supersampling, with balanced random labels.
Dataset make_shapes_dataset(std::size_t size, const ShapesOptions& options, std::uint64_t seed);

/// Procedural clean textures and noisy copies, noise level sigma drawn per
/// image from [sigma_lo, sigma_hi] on the 0..255 scale (noise std sigma/255,
/// no clipping).
Dataset make_denoise_dataset(std::size_t size, int patch_size, double sigma_lo, double sigma_hi,
                             std::uint64_t seed);

enum class DatasetErrorKind { Io, BadMagic, Truncated, LabelOutOfRange, Mismatch };

class DatasetError : public std::runtime_error {
public:
  DatasetError(DatasetErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  DatasetErrorKind kind() const { return kind_; }

private:
  DatasetErrorKind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// IDX image file (big-endian header, u8 pixels) as (n, 1, rows, cols) / 255.
Tensor4 load_idx_images(const std::filesystem::path& path);
/// IDX label file; labels must be below num_classes.
std::vector<int> load_idx_labels(const std::filesystem::path& path, int num_classes = 10);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int num_classes = 10);

/// CIFAR binary batch: 3073-byte records (label, 1024 R, 1024 G, 1024 B).
Dataset load_cifar_binary(const std::filesystem::path& path, int num_classes = 10);

void write_idx_images(const std::filesystem::path& path, int rows, int cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);
void write_cifar_binary(const std::filesystem::path& path, std::span<const std::uint8_t> labels,
                        std::span<const std::uint8_t> pixels);

} // namespace mcg

#pragma once

#include "mcg/model.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace mcg {

/// Binary layout, little-endian throughout:
///   "MCGC" | u32 version | u64 config hash | u32 array count |
///   per array: u32 name length | name bytes | u64 value count | f64 values
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { Io, BadMagic, BadVersion, Truncated, HashMismatch, Layout };

class CheckpointError : public std::runtime_error {
public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

private:
  CheckpointErrorKind kind_;
};

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::vector<NamedArray> arrays;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Trainable weights, then running statistics, then frozen transforms.
Checkpoint capture_checkpoint(Network& net, std::uint64_t config_hash);

/// Copies weights and running statistics into `net` and verifies that the frozen transforms equal
/// the network's own. Names, order and sizes must match.
void restore_checkpoint(Network& net, const Checkpoint& ckpt);

} // namespace mcg

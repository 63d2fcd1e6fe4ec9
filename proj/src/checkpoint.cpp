#include "mcg/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mcg {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <class T> void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <class T> T get() {
    T v;
    take(&v, sizeof v);
    return v;
  }
  void take(void* dst, std::size_t n) {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(CheckpointErrorKind::Truncated, "checkpoint is truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

} // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw CheckpointError(CheckpointErrorKind::Io, "cannot write checkpoint " + path.string());
  out.write("MCGC", 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, ckpt.config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put<std::uint64_t>(out, a.values.size());
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  }
  if (!out)
    throw CheckpointError(CheckpointErrorKind::Io, "failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError(CheckpointErrorKind::Io, "cannot open checkpoint " + path.string());
  Reader r({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, "MCGC", 4) != 0)
    throw CheckpointError(CheckpointErrorKind::BadMagic, path.string() + " is not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.config_hash = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name.resize(r.get<std::uint32_t>());
    r.take(a.name.data(), a.name.size());
    const auto n = r.get<std::uint64_t>();
    if (n > r.remaining() / sizeof(double))
      throw CheckpointError(CheckpointErrorKind::Truncated, "checkpoint is truncated");
    a.values.resize(n);
    r.take(a.values.data(), n * sizeof(double));
    ckpt.arrays.push_back(std::move(a));
  }
  if (r.remaining() != 0)
    throw CheckpointError(CheckpointErrorKind::Layout, "trailing bytes after checkpoint arrays");
  return ckpt;
}

Checkpoint capture_checkpoint(Network& net, std::uint64_t config_hash) {
  Checkpoint ckpt;
  ckpt.config_hash = config_hash;
  for (const auto& p : net.parameters())
    ckpt.arrays.push_back({p.name, {p.value.begin(), p.value.end()}});
  for (const auto& b : net.buffers())
    ckpt.arrays.push_back({b.name, {b.value.begin(), b.value.end()}});
  for (auto& a : net.frozen_state())
    ckpt.arrays.push_back(std::move(a));
  return ckpt;
}

void restore_checkpoint(Network& net, const Checkpoint& ckpt) {
  auto params = net.parameters();
  for (auto& b : net.buffers())
    params.push_back(std::move(b));
  const auto frozen = net.frozen_state();
  if (ckpt.arrays.size() != params.size() + frozen.size())
    throw CheckpointError(CheckpointErrorKind::Layout, "checkpoint array count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = ckpt.arrays[i];
    if (a.name != params[i].name || a.values.size() != params[i].value.size())
      throw CheckpointError(CheckpointErrorKind::Layout,
                            "checkpoint array '" + a.name + "' does not match parameter '" +
                                params[i].name + "'");
  }
  for (std::size_t i = 0; i < frozen.size(); ++i)
    if (ckpt.arrays[params.size() + i] != frozen[i])
      throw CheckpointError(CheckpointErrorKind::Layout,
                            "frozen transforms '" + frozen[i].name + "' differ from the checkpoint");
  for (std::size_t i = 0; i < params.size(); ++i)
    std::copy(ckpt.arrays[i].values.begin(), ckpt.arrays[i].values.end(), params[i].value.begin());
}

} // namespace mcg

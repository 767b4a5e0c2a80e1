#include "cma/toymodel/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace cma::toy {
namespace {

constexpr std::array<char, 8> kMagic{'C', 'M', 'A', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put(std::ostream& out, U v) {
  std::array<char, sizeof(U)> b{};
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

template <typename U>
U get(std::istream& in) {
  std::array<unsigned char, sizeof(U)> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) throw CheckpointError("checkpoint truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d = 0; d < e.value.rank(); ++d) put<std::uint64_t>(out, e.value.dim(d));
    for (double v : e.value.data()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in);
  ParamSet ps;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in);
    if (len > 4096) throw CheckpointError("corrupt parameter name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw CheckpointError("checkpoint truncated");
    const auto rank = get<std::uint32_t>(in);
    if (rank > 4) throw CheckpointError("parameter " + name + " has rank " + std::to_string(rank));
    std::vector<std::size_t> dims(rank);
    std::size_t numel = 1;
    for (auto& d : dims) {
      d = static_cast<std::size_t>(get<std::uint64_t>(in));
      if (d > (std::size_t{1} << 28)) throw CheckpointError("corrupt extent in " + name);
      numel *= d;
    }
    const Shape shape{std::span<const std::size_t>(dims)};
    std::vector<double> values(numel);
    for (auto& v : values) v = std::bit_cast<double>(get<std::uint64_t>(in));
    ps.add(std::move(name), Tensor(shape, std::move(values)));
  }
  return ps;
}

void restore(ToyModel& model, const ParamSet& loaded) {
  auto& ps = model.params();
  if (loaded.size() != ps.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(loaded.size()) + " tensors, model expects " +
                          std::to_string(ps.size()));
  }
  for (auto& e : ps.entries()) {
    const Tensor& src = loaded.get(e.name);
    if (!(src.shape() == e.value.shape())) {
      throw CheckpointError("shape mismatch for " + e.name + ": " + src.shape().str() + " vs " +
                            e.value.shape().str());
    }
    e.value = src;
  }
}

}  // namespace cma::toy

#include "rectape/experiment/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

namespace rectape::experiment {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'R', 'E', 'C'};
constexpr std::size_t kMaxRank = 8;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Source {
 public:
  explicit Source(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n, std::string_view what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw CheckpointError(CheckpointError::Code::kTruncated, fmt::format("checkpoint truncated while reading {}", what));
    }
  }

  template <typename T>
  T get(std::string_view what) {
    T v;
    bytes(reinterpret_cast<char*>(&v), sizeof(T), what);
    return v;
  }

  std::string string(std::string_view what) {
    const auto n = get<std::uint32_t>(what);
    std::string s;
    // Grow in chunks so a corrupt length cannot force a huge allocation.
    while (s.size() < n) {
      const std::size_t chunk = std::min<std::size_t>(n - s.size(), 1 << 16);
      const std::size_t at = s.size();
      s.resize(at + chunk);
      bytes(s.data() + at, chunk, what);
    }
    return s;
  }

  std::vector<double> doubles(std::size_t n, std::string_view what) {
    std::vector<double> v;
    while (v.size() < n) {
      const std::size_t chunk = std::min<std::size_t>(n - v.size(), 1 << 16);
      const std::size_t at = v.size();
      v.resize(at + chunk);
      bytes(reinterpret_cast<char*>(v.data() + at), chunk * sizeof(double), what);
    }
    return v;
  }

 private:
  std::istream& in_;
};

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint16_t>(out, kCheckpointVersion);
  put_string(out, ckpt.model_name);
  put_string(out, ckpt.config_echo);
  const auto& entries = ckpt.params.entries();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_string(out, e.trainable ? e.name : "~" + e.name);
    const auto& shape = e.value.shape();
    put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) put<std::uint64_t>(out, d);
    const auto values = e.value.values();
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  Source src(in);
  std::array<char, 4> magic{};
  src.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) {
    throw CheckpointError(CheckpointError::Code::kBadMagic,
                          fmt::format("not a checkpoint: magic '{}' is not 'DREC'", std::string_view(magic.data(), 4)));
  }
  const auto version = src.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Code::kUnsupportedVersion,
                          fmt::format("unsupported checkpoint version {} (expected {})", version, kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.model_name = src.string("model name");
  ckpt.config_echo = src.string("config echo");
  const auto count = src.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = src.string("tensor name");
    const bool trainable = name.empty() || name.front() != '~';
    if (!trainable) name.erase(0, 1);
    if (name.empty() || ckpt.params.contains(name)) {
      throw CheckpointError(CheckpointError::Code::kMalformed, fmt::format("bad or duplicate tensor name '{}'", name));
    }
    const auto rank = src.get<std::uint8_t>("tensor rank");
    if (rank == 0 || rank > kMaxRank) {
      throw CheckpointError(CheckpointError::Code::kMalformed, fmt::format("tensor '{}' has rank {}", name, rank));
    }
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const auto d = src.get<std::uint64_t>("tensor dims");
      if (d != 0 && numel > (std::uint64_t{1} << 40) / d) {
        throw CheckpointError(CheckpointError::Code::kMalformed, fmt::format("tensor '{}' is implausibly large", name));
      }
      numel *= d;
      shape.push_back(static_cast<std::size_t>(d));
    }
    auto values = src.doubles(static_cast<std::size_t>(numel), fmt::format("values of tensor '{}'", name));
    ckpt.params.add(name, Tensor(std::move(shape), std::move(values)), trainable);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError(CheckpointError::Code::kMalformed, "trailing bytes after the last tensor");
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const models::Model& model, const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Code::kIo, fmt::format("cannot write checkpoint '{}'", path));
  write_checkpoint(out, Checkpoint{std::string(model.name()), config_echo, model.params()});
  out.flush();
  if (!out) throw CheckpointError(CheckpointError::Code::kIo, fmt::format("error writing checkpoint '{}'", path));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Code::kIo, fmt::format("cannot open checkpoint '{}'", path));
  try {
    return read_checkpoint(in);
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.code(), fmt::format("{}: {}", path, e.what()));
  }
}

LoadedModel load_model(const std::string& path) {
  auto ckpt = load_checkpoint(path);
  LoadedModel out;
  out.model = models::restore_model(ckpt.model_name, std::move(ckpt.params));
  out.config_echo = std::move(ckpt.config_echo);
  return out;
}

}  // namespace rectape::experiment

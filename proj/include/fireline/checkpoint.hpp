#pragma once

// Binary checkpoint, little-endian throughout:
//   "FPSG" | u32 version | u32 n, n bytes of JSON {"network": ..., "meta": ...}
//   | u32 tensor count | per tensor: u32 name length, name, u32 rank, u32 dims[rank],
//     float32 data | u64 FNV-1a of every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "fireline/config.hpp"
#include "fireline/netpbm.hpp"
#include "fireline/network.hpp"

namespace fireline {

inline constexpr char kCheckpointMagic[4] = {'F', 'P', 'S', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace ckpt_detail {

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n)
      throw TruncatedCheckpointError("checkpoint truncated while reading " + std::string(what) +
                                     " at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace ckpt_detail

struct Checkpoint {
  NetworkConfig config;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor<float>> tensors;
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  using ckpt_detail::put;
  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string header = nlohmann::json{{"network", ck.config}, {"meta", ck.meta}}.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.ptr()), t.size() * sizeof(float));
  }
  put<std::uint64_t>(out, ckpt_detail::fnv1a(out));
  return out;
}

namespace ckpt_detail {

/// Bytes from the start of the file to the end of the tensor table.
inline std::size_t layout_length(std::string_view bytes) {
  Reader r(bytes);
  r.take(8, "preamble");
  r.take(r.get<std::uint32_t>("header length"), "header");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    r.take(r.get<std::uint32_t>("tensor name length"), "tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank == 0 || rank > 8) throw CorruptCheckpointError("tensor table has an invalid rank");
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) numel *= r.get<std::uint32_t>("tensor dims");
    r.take(numel * sizeof(float), "tensor data");
  }
  return bytes.size() - r.remaining();
}

}  // namespace ckpt_detail

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw NotACheckpointError("not a checkpoint (bad magic)");
  ckpt_detail::Reader r(bytes);
  r.take(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  if (bytes.size() < 16) throw TruncatedCheckpointError("checkpoint truncated (file too short)");
  {
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    // A cut-off file fails the checksum too; walk the layout to tell the two
    // apart. The walk throws TruncatedCheckpointError when it runs out.
    if (stored != ckpt_detail::fnv1a(bytes.substr(0, bytes.size() - 8))) {
      if (ckpt_detail::layout_length(bytes) + 8 > bytes.size())
        throw TruncatedCheckpointError("checkpoint truncated (tensor table runs past the end)");
      throw CorruptCheckpointError("checkpoint checksum mismatch");
    }
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  ckpt_detail::Reader b(body);
  b.take(8, "preamble");
  Checkpoint ck;
  const auto hlen = b.get<std::uint32_t>("header length");
  try {
    const auto header = nlohmann::json::parse(b.take(hlen, "header"));
    ck.config = header.at("network").get<NetworkConfig>();
    ck.meta = header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptCheckpointError(std::string("checkpoint config: ") + e.what());
  }
  const auto count = b.get<std::uint32_t>("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto nlen = b.get<std::uint32_t>("tensor name length");
    std::string name(b.take(nlen, "tensor name"));
    const auto rank = b.get<std::uint32_t>("tensor rank");
    if (rank == 0 || rank > 8) throw CorruptCheckpointError("tensor '" + name + "' has invalid rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(b.get<std::uint32_t>("tensor dims"));
    if (shape_numel(shape) == 0) throw CorruptCheckpointError("tensor '" + name + "' has a zero extent");
    const auto raw = b.take(shape_numel(shape) * sizeof(float), "tensor data");
    std::vector<float> data(shape_numel(shape));
    std::memcpy(data.data(), raw.data(), raw.size());
    if (!ck.tensors.emplace(name, Tensor<float>(shape, std::move(data))).second)
      throw CorruptCheckpointError("duplicate tensor '" + name + "'");
  }
  if (b.remaining() != 0) throw CorruptCheckpointError("trailing bytes after tensor table");
  return ck;
}

template <typename T>
Checkpoint make_checkpoint(const SegmentationNetwork<T>& net, nlohmann::json meta = nlohmann::json::object()) {
  Checkpoint ck{net.config(), std::move(meta), {}};
  for (auto& [name, t] : net.named_tensors()) ck.tensors.emplace(name, t.template cast<float>());
  return ck;
}

/// Written to a temporary name and renamed into place.
template <typename T>
void save_checkpoint(const SegmentationNetwork<T>& net, const std::filesystem::path& path,
                     nlohmann::json meta = nlohmann::json::object()) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  netpbm::write_bytes(tmp, encode_checkpoint(make_checkpoint(net, std::move(meta))));
  std::filesystem::rename(tmp, path);
}

inline SegmentationNetwork<float> network_from_checkpoint(const Checkpoint& ck) {
  auto net = SegmentationNetwork<float>::build(ck.config, 0);
  net.assign_named(ck.tensors);
  return net;
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw CheckpointError(path.string() + ": no such checkpoint");
  return decode_checkpoint(netpbm::read_bytes(path));
}

inline SegmentationNetwork<float> load_checkpoint(const std::filesystem::path& path) {
  return network_from_checkpoint(read_checkpoint(path));
}

}  // namespace fireline

#include "fhsst/checkpoint.hpp"

#include "fhsst/errors.hpp"
#include "fhsst/hash.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fhsst {
namespace {

constexpr char kMagic[8] = {'F', 'H', 'S', 'S', 'T', 'C', 'K', '1'};
constexpr std::uint32_t kFloat32 = 1;

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, std::size_t end, const std::filesystem::path& path)
      : data_(data), end_(end), path_(path) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (pos_ + n > end_) fail(Errc::CorruptCheckpoint, path_.string() + " is truncated");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& data_;
  std::size_t end_;
  std::size_t pos_ = 0;
  const std::filesystem::path& path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string buf(kMagic, sizeof(kMagic));
  const std::string meta = ckpt.metadata.dump();
  put(buf, static_cast<std::uint32_t>(meta.size()));
  buf += meta;
  put(buf, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors.tensors) {
    put(buf, static_cast<std::uint32_t>(t.name.size()));
    buf += t.name;
    put(buf, kFloat32);
    put(buf, static_cast<std::uint64_t>(t.value.rows()));
    put(buf, static_cast<std::uint64_t>(t.value.cols()));
    buf.append(reinterpret_cast<const char*>(t.value.data()), static_cast<std::size_t>(t.value.size()) * sizeof(float));
  }
  Fnv1a64 h;
  h.update(buf);
  put(buf, h.digest());

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoFailure, "cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(Errc::IoFailure, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<std::string>& expected_config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) + sizeof(std::uint64_t) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
    fail(Errc::CorruptCheckpoint, path.string() + " is not a checkpoint");

  const std::size_t body = data.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, data.data() + body, sizeof(stored));
  Fnv1a64 h;
  h.update(std::string_view(data.data(), body));
  if (h.digest() != stored) fail(Errc::CorruptCheckpoint, path.string() + ": content hash mismatch");

  Reader r(data, body, path);
  r.take(sizeof(kMagic));
  Checkpoint ckpt;
  const auto meta_len = r.get<std::uint32_t>();
  ckpt.metadata = nlohmann::json::parse(std::string_view(r.take(meta_len), meta_len), nullptr, false);
  if (ckpt.metadata.is_discarded()) fail(Errc::CorruptCheckpoint, path.string() + ": malformed metadata");
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len), name_len);
    if (r.get<std::uint32_t>() != kFloat32) fail(Errc::CorruptCheckpoint, name + ": unsupported dtype");
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    Matrix<float> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(float);
    std::memcpy(m.data(), r.take(bytes), bytes);
    ckpt.tensors.tensors.push_back({std::move(name), std::move(m)});
  }
  if (r.pos() != body) fail(Errc::CorruptCheckpoint, path.string() + ": trailing bytes");

  if (expected_config_hash) {
    const std::string found = ckpt.metadata.value("config_hash", std::string());
    if (found != *expected_config_hash)
      fail(Errc::CorruptCheckpoint, path.string() + ": config hash " + found + " does not match " + *expected_config_hash);
  }
  return ckpt;
}

ParamSet<float> extract_group(const Checkpoint& ckpt, const std::string& prefix) {
  ParamSet<float> out;
  for (const auto& t : ckpt.tensors.tensors)
    if (t.name.rfind(prefix, 0) == 0) out.tensors.push_back({t.name.substr(prefix.size()), t.value});
  return out;
}

void append_group(Checkpoint& ckpt, const std::string& prefix, const ParamSet<float>& group) {
  for (const auto& t : group.tensors) ckpt.tensors.tensors.push_back({prefix + t.name, t.value});
}

}  // namespace fhsst

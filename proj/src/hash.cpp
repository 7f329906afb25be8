#include "fhsst/hash.hpp"

#include "fhsst/errors.hpp"
#include "fhsst/params.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace fhsst {

void Fnv1a64::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= 0x100000001b3ULL;
  }
}

void Fnv1a64::update(std::string_view text) { update(std::as_bytes(std::span(text.data(), text.size()))); }

std::string Fnv1a64::hex() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << state_;
  return os.str();
}

std::string hash_hex(std::string_view text) {
  Fnv1a64 h;
  h.update(text);
  return h.hex();
}

std::string hash_file_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  Fnv1a64 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    h.update(std::string_view(buf.data(), n));
  }
  return h.hex();
}

template <typename Scalar>
std::string params_hash(const ParamSet<Scalar>& p) {
  Fnv1a64 h;
  for (const auto& t : p.tensors) {
    h.update(t.name);
    h.update_pod(static_cast<std::int64_t>(t.value.rows()));
    h.update_pod(static_cast<std::int64_t>(t.value.cols()));
    h.update(std::as_bytes(std::span(t.value.data(), static_cast<std::size_t>(t.value.size()))));
  }
  return h.hex();
}

template std::string params_hash<float>(const ParamSet<float>&);
template std::string params_hash<double>(const ParamSet<double>&);

}  // namespace fhsst

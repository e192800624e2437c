#include "localgp/kernel.hpp"

#include <cstring>
#include <vector>

namespace localgp {
namespace {

std::uint64_t fnv1a(const unsigned char* data, std::size_t n, std::uint64_t h) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::array<std::uint64_t, 4> KernelSpec::fingerprint() const {
  std::vector<unsigned char> buf;
  auto push_f64 = [&buf](double v) {
    unsigned char raw[sizeof(double)];
    std::memcpy(raw, &v, sizeof(double));
    buf.insert(buf.end(), raw, raw + sizeof(double));
  };
  push_f64(static_cast<double>(dims));
  push_f64(scale);
  push_f64(power);
  for (int i = 0; i < dims; ++i) push_f64(lengthscales[i]);

  const std::uint64_t bases[4] = {0xcbf29ce484222325ull, 0x84222325cbf29ce4ull,
                                  0x9ae16a3b2f90404full, 0xc949d7c7509e6557ull};
  std::array<std::uint64_t, 4> out{};
  for (int i = 0; i < 4; ++i) out[i] = fnv1a(buf.data(), buf.size(), bases[i]);
  return out;
}

}  // namespace localgp

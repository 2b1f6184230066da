#pragma once

#include <cstdint>
#include <cstring>
#include <string>

namespace tcav {

// FNV-1a, 64-bit. Used for weight checksums and output-file digests in run
// manifests; not cryptographic.
class Fnv1a {
 public:
  void update(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ull;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  void update_f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(bits >> (8 * i));
    update(le, 8);
  }
  uint64_t digest() const { return state_; }

 private:
  uint64_t state_ = 0xcbf29ce484222325ull;
};

std::string hex64(uint64_t v);
uint64_t digest_file(const std::string& path);  // throws InputError if unreadable

}  // namespace tcav

#include <cstdlib>
#include <string>

#include "m3net/kernels.hpp"

namespace m3net::kernels {

#ifndef M3NET_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#ifndef M3NET_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

const KernelTable* by_name(std::string_view name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2") return avx2_table();
  if (name == "neon") return neon_table();
  return nullptr;
}

const KernelTable* best() {
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &scalar_table();
}

const KernelTable* initial() {
  const char* env = std::getenv("M3NET_KERNELS");
  if (env && std::string_view(env) != "auto") {
    if (const KernelTable* t = by_name(env)) return t;
  }
  return best();
}

const KernelTable*& current() {
  static const KernelTable* table = initial();
  return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

void select(std::string_view name) {
  if (name == "auto") {
    current() = best();
    return;
  }
  const KernelTable* t = by_name(name);
  if (!t) throw ConfigError("kernel variant '" + std::string(name) + "' is not available");
  current() = t;
}

std::vector<std::string_view> available() {
  std::vector<std::string_view> names{"scalar"};
  if (avx2_table()) names.push_back("avx2");
  if (neon_table()) names.push_back("neon");
  return names;
}

}  // namespace m3net::kernels

#include <atomic>
#include <cstdlib>
#include <string>

#include "tl/errors.hpp"
#include "tl/kernels.hpp"

namespace tl::kernels {

#if defined(TL_HAVE_AVX2_KERNELS)
const KernelTable& avx2_table_unchecked();
#endif
#if defined(TL_HAVE_NEON_KERNELS)
const KernelTable& neon_table_unchecked();
#endif

const KernelTable* avx2_table() {
#if defined(TL_HAVE_AVX2_KERNELS)
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(TL_HAVE_NEON_KERNELS)
  return &neon_table_unchecked();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* resolve(std::string_view name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2") return avx2_table();
  if (name == "neon") return neon_table();
  if (name == "auto" || name.empty()) {
    if (const auto* t = avx2_table()) return t;
    if (const auto* t = neon_table()) return t;
    return &scalar_table();
  }
  return nullptr;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current = [] {
    const char* env = std::getenv("TL_KERNELS");
    const KernelTable* t = resolve(env ? env : "auto");
    return t ? t : resolve("auto");
  }();
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void select(std::string_view name) {
  const KernelTable* t = resolve(name);
  if (!t) throw ConfigError("kernel variant '" + std::string(name) + "' is not available on this build/CPU");
  slot().store(t, std::memory_order_relaxed);
}

std::vector<std::string> available() {
  std::vector<std::string> names{"scalar"};
  if (avx2_table()) names.emplace_back("avx2");
  if (neon_table()) names.emplace_back("neon");
  return names;
}

}  // namespace tl::kernels

#include <atomic>
#include <cstdlib>
#include <string>

#include "dpq/error.hpp"
#include "dpq/simd.hpp"

namespace dpq::simd {

#ifdef DPQ_HAVE_AVX2
const KernelTable& avx2_kernel_table() noexcept;
#endif

namespace {

bool cpu_has_avx2() noexcept {
#if defined(DPQ_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Level initial_level() noexcept {
  if (const char* env = std::getenv("DPQ_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Level::Scalar;
    if (v == "avx2" && level_supported(Level::Avx2)) return Level::Avx2;
  }
  return best_level();
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{nullptr};
  return table;
}

const KernelTable& table_for(Level level) noexcept {
  if (level == Level::Avx2) {
    if (const KernelTable* t = avx2_kernels()) return *t;
  }
  return scalar_kernels();
}

}  // namespace

const KernelTable* avx2_kernels() noexcept {
#ifdef DPQ_HAVE_AVX2
  static const bool ok = cpu_has_avx2();
  return ok ? &avx2_kernel_table() : nullptr;
#else
  return nullptr;
#endif
}

bool level_supported(Level level) noexcept {
  return level == Level::Scalar || avx2_kernels() != nullptr;
}

Level best_level() noexcept { return level_supported(Level::Avx2) ? Level::Avx2 : Level::Scalar; }

const KernelTable& kernels() noexcept {
  const KernelTable* t = current().load(std::memory_order_acquire);
  if (t == nullptr) {
    t = &table_for(initial_level());
    current().store(t, std::memory_order_release);
  }
  return *t;
}

Level active_level() noexcept {
  return &kernels() == &scalar_kernels() ? Level::Scalar : Level::Avx2;
}

void set_level(Level level) {
  if (!level_supported(level)) {
    fail(ErrorKind::Config, "simd level not supported on this machine: " +
                                std::string(level_name(level)));
  }
  current().store(&table_for(level), std::memory_order_release);
}

std::string_view level_name(Level level) noexcept {
  return level == Level::Avx2 ? "avx2" : "scalar";
}

}  // namespace dpq::simd

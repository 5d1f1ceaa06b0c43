#include "edgetree/split_kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "edgetree/error.hpp"

namespace edgetree::kernels {

namespace {

Isa initial_isa() { return detect_isa(); }

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(EDGETREE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() {
  if (const char* forced = std::getenv("EDGETREE_KERNEL")) {
    const std::string_view name(forced);
    if (name == "scalar") return Isa::scalar;
    if (name == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
  }
  return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

Isa active_isa() { return selected().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) throw Error("kernel '" + std::string(isa_name(isa)) + "' unsupported on this CPU");
  selected().store(isa, std::memory_order_relaxed);
}

void score_splits(const SplitCounts& in, std::span<double> out) {
  if (active_isa() == Isa::avx2) {
    score_splits_avx2(in, out);
  } else {
    score_splits_scalar(in, out);
  }
}

}  // namespace edgetree::kernels

#include <cstdlib>
#include <stdexcept>
#include <string>

#include "texa/simd/kernels.hpp"

namespace texa::simd {

#ifndef TEXA_HAVE_AVX2
namespace detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace detail
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  if (isa == Isa::scalar) return true;
#if defined(TEXA_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool cpu = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return cpu && detail::avx2_table() != nullptr;
#else
  return false;
#endif
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_available(isa)) {
    throw std::runtime_error("kernel ISA '" + std::string(isa_name(isa)) + "' is not available on this CPU/build");
  }
  return isa == Isa::avx2 ? *detail::avx2_table() : detail::scalar_table();
}

const KernelTable& kernels() {
  static const KernelTable& chosen = [] () -> const KernelTable& {
    const char* forced = std::getenv("TEXA_ISA");
    if (forced && std::string(forced) == "scalar") return detail::scalar_table();
    return isa_available(Isa::avx2) ? *detail::avx2_table() : detail::scalar_table();
  }();
  return chosen;
}

std::vector<std::int16_t> pack_int16_pairs(std::span<const std::int8_t> weight, std::size_t in_dim,
                                           std::size_t out_dim) {
  if (in_dim % 2 != 0) throw std::invalid_argument("pack_int16_pairs: in_dim must be even");
  if (weight.size() != in_dim * out_dim) throw std::invalid_argument("pack_int16_pairs: weight size mismatch");
  const std::size_t stride = padded_columns(out_dim);
  std::vector<std::int16_t> packed(in_dim / 2 * stride * 2, 0);
  for (std::size_t k = 0; k < in_dim / 2; ++k) {
    for (std::size_t j = 0; j < out_dim; ++j) {
      packed[(k * stride + j) * 2] = weight[(2 * k) * out_dim + j];
      packed[(k * stride + j) * 2 + 1] = weight[(2 * k + 1) * out_dim + j];
    }
  }
  return packed;
}

std::vector<std::uint32_t> nonzero_rows(const float* m, std::size_t n, std::size_t dim) {
  std::vector<std::uint32_t> rows;
  rows.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = m + r * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      if (row[j] != 0.0f) {
        rows.push_back(static_cast<std::uint32_t>(r));
        break;
      }
    }
  }
  return rows;
}

}  // namespace texa::simd

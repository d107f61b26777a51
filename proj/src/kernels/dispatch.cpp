#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"
#include "lexmine/error.hpp"

namespace lexmine::kernels {
namespace {

Isa best_supported() noexcept {
  if (supported(Isa::avx2)) return Isa::avx2;
  if (supported(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

Isa initial_isa() noexcept {
  if (const char* forced = std::getenv("LEXMINE_ISA")) {
    const std::string v(forced);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (v == name(isa) && supported(isa)) return isa;
    }
  }
  return best_supported();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

bool supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(LEXMINE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(LEXMINE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const Table& table(Isa isa) {
  if (!supported(isa)) throw Error("kernels: " + std::string(name(isa)) + " not supported here");
  switch (isa) {
#if defined(LEXMINE_HAVE_AVX2)
    case Isa::avx2:
      return detail::kAvx2Table;
#endif
#if defined(LEXMINE_HAVE_NEON)
    case Isa::neon:
      return detail::kNeonTable;
#endif
    default:
      return detail::kScalarTable;
  }
}

std::string_view name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

Isa active() noexcept { return current().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
  table(isa);  // throws when unsupported
  current().store(isa, std::memory_order_relaxed);
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error("kernels::dot: length mismatch");
  return table(active()).dot(a.data(), b.data(), a.size());
}

double squared_norm(std::span<const float> a) { return dot(a, a); }

void batch_dot(std::span<const float> query, std::span<const float> rows, std::span<double> out) {
  const std::size_t dim = query.size();
  if (dim == 0 || rows.size() != out.size() * dim) {
    throw Error("kernels::batch_dot: shape mismatch");
  }
  table(active()).batch_dot(query.data(), rows.data(), out.size(), dim, out.data());
}

double sparse_dot(std::span<const std::uint32_t> index, std::span<const double> value,
                  std::span<const double> dense) {
  if (index.size() != value.size()) throw Error("kernels::sparse_dot: length mismatch");
  return table(active()).sparse_dot(index.data(), value.data(), index.size(), dense.data());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw Error("kernels::axpy: length mismatch");
  table(active()).axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace lexmine::kernels

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

// Data-parallel inner loops. Each instruction set provides the same table of
// kernels; the scalar table is the reference and every vector table must
// agree with it to rounding (see tests/kernels_test.cpp). Float inputs are
// accumulated in double so reordering the sum only perturbs the last bits.
namespace lexmine::kernels {

enum class Isa { scalar, avx2, neon };

struct Table {
  double (*dot)(const float* a, const float* b, std::size_t n);
  void (*batch_dot)(const float* query, const float* rows, std::size_t count, std::size_t dim,
                    double* out);
  double (*sparse_dot)(const std::uint32_t* index, const double* value, std::size_t nnz,
                       const double* dense);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

bool supported(Isa isa) noexcept;
const Table& table(Isa isa);
std::string_view name(Isa isa) noexcept;

/// Best supported ISA, unless LEXMINE_ISA=scalar|avx2|neon overrides it.
Isa active() noexcept;
void set_active(Isa isa);

double dot(std::span<const float> a, std::span<const float> b);
double squared_norm(std::span<const float> a);
/// out[i] = <query, rows[i*dim .. (i+1)*dim)>
void batch_dot(std::span<const float> query, std::span<const float> rows, std::span<double> out);
double sparse_dot(std::span<const std::uint32_t> index, std::span<const double> value,
                  std::span<const double> dense);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace lexmine::kernels

#include "kernels_impl.hpp"

namespace lexmine::kernels::detail {
namespace {

double dot(const float* a, const float* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

void batch_dot(const float* query, const float* rows, std::size_t count, std::size_t dim,
               double* out) {
  for (std::size_t r = 0; r < count; ++r) out[r] = dot(query, rows + r * dim, dim);
}

double sparse_dot(const std::uint32_t* index, const double* value, std::size_t nnz,
                  const double* dense) {
  double sum = 0.0;
  for (std::size_t i = 0; i < nnz; ++i) sum += value[i] * dense[index[i]];
  return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const Table kScalarTable{dot, batch_dot, sparse_dot, axpy};

}  // namespace lexmine::kernels::detail

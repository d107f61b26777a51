#include <arm_neon.h>

#include "kernels_impl.hpp"

namespace lexmine::kernels::detail {
namespace {

double dot(const float* a, const float* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t va = vld1q_f32(a + i);
    const float32x4_t vb = vld1q_f32(b + i);
    acc0 = vfmaq_f64(acc0, vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
    acc1 = vfmaq_f64(acc1, vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb));
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

void batch_dot(const float* query, const float* rows, std::size_t count, std::size_t dim,
               double* out) {
  for (std::size_t r = 0; r < count; ++r) out[r] = dot(query, rows + r * dim, dim);
}

// No gather on NEON; two lanes of scalar loads still halve the adds.
double sparse_dot(const std::uint32_t* index, const double* value, std::size_t nnz,
                  const double* dense) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= nnz; i += 2) {
    const double w[2] = {dense[index[i]], dense[index[i + 1]]};
    acc = vfmaq_f64(acc, vld1q_f64(value + i), vld1q_f64(w));
  }
  double sum = vaddvq_f64(acc);
  for (; i < nnz; ++i) sum += value[i] * dense[index[i]];
  return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const Table kNeonTable{dot, batch_dot, sparse_dot, axpy};

}  // namespace lexmine::kernels::detail

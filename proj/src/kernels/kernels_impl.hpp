#pragma once

#include "lexmine/kernels.hpp"

namespace lexmine::kernels::detail {

extern const Table kScalarTable;
#if defined(LEXMINE_HAVE_AVX2)
extern const Table kAvx2Table;
#endif
#if defined(LEXMINE_HAVE_NEON)
extern const Table kNeonTable;
#endif

}  // namespace lexmine::kernels::detail

#include "edgetree/split_kernels.hpp"

#if defined(EDGETREE_HAVE_AVX2)
#include <immintrin.h>
#endif

namespace edgetree::kernels {

#if defined(EDGETREE_HAVE_AVX2)

void score_splits_avx2(const SplitCounts& in, std::span<double> out) {
  const std::size_t count = out.size();
  const __m256d n = _mm256_set1_pd(in.total);
  const __m256d a = _mm256_set1_pd(in.total_attack);
  const double* lt = in.left_total.data();
  const double* la = in.left_attack.data();
  double* dst = out.data();

  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    const __m256d nl = _mm256_loadu_pd(lt + i);
    const __m256d al = _mm256_loadu_pd(la + i);
    const __m256d bl = _mm256_sub_pd(nl, al);
    const __m256d nr = _mm256_sub_pd(n, nl);
    const __m256d ar = _mm256_sub_pd(a, al);
    const __m256d br = _mm256_sub_pd(nr, ar);
    const __m256d ql = _mm256_add_pd(_mm256_mul_pd(al, al), _mm256_mul_pd(bl, bl));
    const __m256d qr = _mm256_add_pd(_mm256_mul_pd(ar, ar), _mm256_mul_pd(br, br));
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_div_pd(ql, nl), _mm256_div_pd(qr, nr)));
  }
  if (i < count) {
    SplitCounts tail{in.left_total.subspan(i), in.left_attack.subspan(i), in.total, in.total_attack};
    score_splits_scalar(tail, out.subspan(i));
  }
}

#else

void score_splits_avx2(const SplitCounts& in, std::span<double> out) { score_splits_scalar(in, out); }

#endif

}  // namespace edgetree::kernels

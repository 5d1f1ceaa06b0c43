#include "edgetree/split_kernels.hpp"

namespace edgetree::kernels {

void score_splits_scalar(const SplitCounts& in, std::span<double> out) {
  const double n = in.total;
  const double a = in.total_attack;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double nl = in.left_total[i];
    const double al = in.left_attack[i];
    const double bl = nl - al;
    const double nr = n - nl;
    const double ar = a - al;
    const double br = nr - ar;
    const double sl = (al * al + bl * bl) / nl;
    const double sr = (ar * ar + br * br) / nr;
    out[i] = sl + sr;
  }
}

}  // namespace edgetree::kernels

#pragma once

#include <span>
#include <string_view>

namespace edgetree::kernels {

// Candidate split scoring for binary Gini.
//
// Candidate i sends left_total[i] rows, left_attack[i] of them attacks, to the
// left child of a node holding `total` rows with `total_attack` attacks. The
// score is the Gini "purity mass"
//
//   S = (aL^2 + bL^2) / nL + (aR^2 + bR^2) / nR
//
// which is monotone in the impurity decrease: dG = S/n - (A^2 + B^2)/n^2.
// Counts are carried as doubles (exact below 2^53). Every variant performs
// the same IEEE operations in the same order, so outputs are bit-identical.
struct SplitCounts {
  std::span<const double> left_total;
  std::span<const double> left_attack;
  double total = 0.0;
  double total_attack = 0.0;
};

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Best variant supported by this CPU, unless EDGETREE_KERNEL=scalar|avx2
// narrows the choice.
Isa detect_isa();
bool isa_supported(Isa isa);

// Process-wide selection used by score_splits(); defaults to detect_isa().
Isa active_isa();
void set_active_isa(Isa isa);

void score_splits_scalar(const SplitCounts& in, std::span<double> out);
void score_splits_avx2(const SplitCounts& in, std::span<double> out);

// Dispatches on active_isa(). `out` must be as long as the inputs.
void score_splits(const SplitCounts& in, std::span<double> out);

}  // namespace edgetree::kernels

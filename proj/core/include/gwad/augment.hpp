#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gwad/dataio.hpp"

namespace gwad {

struct AugmentPlan {
  std::vector<int> n_values = {3, 5, 10};  // signals averaged per draw
  std::size_t count_per_n = 0;             // outputs per n value
  std::uint64_t seed = 0;
  bool include_originals = true;  // consumed by the merge step
};

// Componentwise arithmetic mean of the given windows. Sums run in double so
// averaging identical samples is exact whenever the count divides the sum
// exactly (any power of two in particular).
SignalSample average_signals(std::span<const SignalSample> signals);

// For each n in plan.n_values (in order), emits plan.count_per_n samples,
// each the mean of n draws with replacement from class_data (a source may
// repeat within one mean). Randomness derives from (plan.seed, n-position,
// output index), so generation order cannot change the result.
LabeledDataset augment_class(const LabeledDataset& class_data,
                             const AugmentPlan& plan);

// Concatenation with stable ordering: originals first, then each augmented
// dataset in the given order.
LabeledDataset merge_augmented(const LabeledDataset& original,
                               std::span<const LabeledDataset> augmented);

}  // namespace gwad

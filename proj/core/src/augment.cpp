#include "gwad/augment.hpp"

#include <string>

namespace gwad {

SignalSample average_signals(std::span<const SignalSample> signals) {
  if (signals.empty()) throw DomainError("average_signals: empty input");
  SignalSample out;
  for (std::size_t j = 0; j < kSampleSize; ++j) {
    double acc = 0.0;
    for (const auto& s : signals) acc += s.values[j];
    out.values[j] = static_cast<float>(acc / static_cast<double>(signals.size()));
  }
  return out;
}

LabeledDataset augment_class(const LabeledDataset& class_data,
                             const AugmentPlan& plan) {
  if (class_data.samples.empty())
    throw DomainError("augment_class: empty class");
  std::int32_t label = class_data.labels.at(0);
  for (auto l : class_data.labels)
    if (l != label) throw DomainError("augment_class: mixed labels in class");
  for (int n : plan.n_values)
    if (n < 1) throw DomainError("augment_class: n must be >= 1");

  std::int32_t class_id =
      class_data.class_ids.empty() ? 0 : class_data.class_ids.at(0);

  LabeledDataset out;
  out.class_names = class_data.class_names;
  out.seed = plan.seed;
  out.samples.reserve(plan.n_values.size() * plan.count_per_n);

  std::vector<SignalSample> picks;
  for (std::size_t p = 0; p < plan.n_values.size(); ++p) {
    auto n = static_cast<std::size_t>(plan.n_values[p]);
    std::string stream = "augment.n" + std::to_string(p);
    for (std::size_t i = 0; i < plan.count_per_n; ++i) {
      Rng rng(derive_seed(plan.seed, stream, i));
      picks.clear();
      for (std::size_t k = 0; k < n; ++k)
        picks.push_back(class_data.samples[rng.below(class_data.size())]);
      out.samples.push_back(average_signals(picks));
      out.labels.push_back(label);
      out.class_ids.push_back(class_id);
    }
  }
  return out;
}

LabeledDataset merge_augmented(const LabeledDataset& original,
                               std::span<const LabeledDataset> augmented) {
  LabeledDataset out = original;
  for (const auto& part : augmented) {
    if (part.samples.size() != part.labels.size())
      throw ShapeError("merge_augmented: label count mismatch");
    out.samples.insert(out.samples.end(), part.samples.begin(),
                       part.samples.end());
    out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
    out.class_ids.insert(out.class_ids.end(), part.class_ids.begin(),
                         part.class_ids.end());
  }
  return out;
}

}  // namespace gwad

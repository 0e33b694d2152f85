#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gwad/layers.hpp"

namespace gwad {

struct BlockSpec {
  int channels = 32;
  int kernel = 3;
  int stride = 1;  // downsample stride of the block's first conv and its P

  bool operator==(const BlockSpec&) const = default;
};

// The concrete default widths stand in for the source network's unpublished
// layout; everything is config-driven so tests never depend on them.
struct ModelConfig {
  int input_len = 200;
  int input_channels = 2;

  int stem_channels = 32;
  int stem_kernel = 7;
  int stem_pool = 2;

  std::vector<BlockSpec> blocks = {{32, 3, 1}, {64, 3, 2}, {128, 3, 2}};

  std::optional<int> head_hidden;  // extra dense layer before the output
  int num_classes = 2;
  bool post_block_relu = true;   // ReLU applied after each block's C - P(x)
  bool standardize_inputs = false;  // per-sample, per-channel standardization

  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

// Full classifier: stem [conv -> bn -> relu -> maxpool] -> residual
// difference blocks -> global max+mean pool -> dense head -> logits.
template <typename T>
class Model {
 public:
  // Validates the config and initializes parameters from config.seed
  // (He-normal weights, zero biases, unit-gamma batch norm).
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // x is [batch, input_len, input_channels] (the on-disk sample layout);
  // returns logits [batch, 2] for {background, signal}. Gradients flow to
  // parameters, not to x.
  Array<T> forward(const Array<T>& x, Mode mode);

  // Named trainable parameters in a fixed, deterministic order.
  std::vector<std::pair<std::string, Array<T>*>> parameters();
  // Batch-norm running statistics (not trainable).
  std::vector<std::pair<std::string, std::vector<T>*>> buffers();

  void watch_all(Tape<T>& tape);
  void zero_grad();

  // Predicted label for one logit row; equal logits resolve to background.
  static std::int32_t predict_label(T logit0, T logit1) {
    return logit1 > logit0 ? 1 : 0;
  }

 private:
  ModelConfig config_;
  Conv1dLayer<T> stem_conv_;
  BatchNorm1dLayer<T> stem_bn_;
  std::vector<ResidualDifferenceBlock<T>> blocks_;
  std::optional<DenseLayer<T>> hidden_;
  DenseLayer<T> out_;
};

// Shape bookkeeping shared with config validation.
struct ModelPlan {
  std::size_t len_after_stem = 0;
  std::size_t len_out = 0;
  int channels_out = 0;
  std::size_t pooled_features = 0;
};
ModelPlan plan_model(const ModelConfig& config);  // throws ConfigError

}  // namespace gwad

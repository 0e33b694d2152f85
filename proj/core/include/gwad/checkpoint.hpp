#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gwad/model.hpp"
#include "gwad/optim.hpp"

namespace gwad {

// On-disk model state. Binary layout (little-endian):
//   magic "GWCK", u16 version=1, u32 entry count,
//   per entry: u16 name length, name bytes, u8 rank, rank x u64 dims,
//              f32 payload (product of dims),
//   trailing u32 CRC32 over all payload bytes in file order.
struct CheckpointEntry {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  void add(std::string name, std::vector<std::uint64_t> dims,
           std::vector<float> values);
  void add_scalar(std::string name, float value) {
    add(std::move(name), {1}, {value});
  }
};

void write_checkpoint_file(const std::filesystem::path& path,
                           const Checkpoint& ckpt);
// Throws FormatError on bad magic/version, CorruptCheckpointError on
// truncation or CRC mismatch.
Checkpoint read_checkpoint_file(const std::filesystem::path& path);

// Full training state: parameters, running stats, config, epoch counter and
// best validation loss, plus optimizer moments under the "optim." prefix.
template <typename T>
Checkpoint make_checkpoint(Model<T>& model, const NAdam<T>* optimizer,
                           int epoch, double best_val_loss);

// Rebuilds a model (and optionally optimizer state) from stored entries.
// Missing or malformed entries raise CorruptCheckpointError.
struct LoadedModel {
  Model<float> model;
  int epoch = 0;
  double best_val_loss = 0.0;
  bool has_optimizer = false;
  NAdam<float> optimizer;
};
LoadedModel model_from_checkpoint(const Checkpoint& ckpt);

// Copies parameters/buffers into an existing model; the stored config must
// equal the model's (ConfigError otherwise).
void load_into_model(const Checkpoint& ckpt, Model<float>& model);

ModelConfig config_from_checkpoint(const Checkpoint& ckpt);

}  // namespace gwad

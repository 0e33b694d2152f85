#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gwad/checkpoint.hpp"
#include "gwad/dataio.hpp"
#include "gwad/metrics.hpp"
#include "gwad/model.hpp"
#include "gwad/optim.hpp"

namespace gwad {

struct TrainConfig {
  int max_epochs = 100;
  int batch_size = 512;
  double lr = 1e-4;
  int early_stop_patience = 10;  // 0 disables early stopping
  int plateau_patience = 5;      // 0 disables the lr schedule
  double plateau_factor = 0.1;
  std::uint64_t seed = 0;

  // When set, the trainer keeps these files current (also on abort).
  std::filesystem::path checkpoint_path;
  std::filesystem::path history_path;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, train_acc = 0;
  double val_loss = 0, val_acc = 0;
  double lr = 0;       // value in effect during this epoch's steps
  double seconds = 0;  // wall time, the only nondeterministic column
};

struct TrainHistory {
  std::vector<EpochRecord> records;
  bool aborted = false;
  std::string abort_reason;
};

struct TrainOutcome {
  Checkpoint checkpoint;  // best weights, final optimizer state
  TrainHistory history;
  double best_val_loss = 0;
  int best_epoch = 0;
};

// One epoch = shuffled batches -> train-mode forward -> softmax ->
// cross-entropy -> backward -> NAdam step; then validation loss/accuracy,
// the plateau schedule, and the early-stop check, in that order. The model
// ends up holding the best-validation-loss weights. Throws NumericsError on
// a non-finite training loss after persisting the last good state.
template <typename T>
TrainOutcome train(Model<T>& model, const LabeledDataset& train_set,
                   const LabeledDataset& val_set, const TrainConfig& config);

// Class-1 probability per sample, eval mode, batched.
template <typename T>
std::vector<double> predict_scores(Model<T>& model,
                                   const LabeledDataset& dataset,
                                   std::size_t batch_size = 512);

template <typename T>
EvalReport evaluate(Model<T>& model, const LabeledDataset& dataset,
                    double threshold = 0.5);

// CSV: epoch,train_loss,train_acc,val_loss,val_acc,lr,seconds. An aborted
// run gets a trailing "# aborted: ..." marker line.
void write_history_csv(const std::filesystem::path& path,
                       const TrainHistory& history);

}  // namespace gwad

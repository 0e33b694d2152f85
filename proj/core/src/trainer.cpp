#include "gwad/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace gwad {

namespace {

// Sequential chunks; validation and scoring need no shuffle.
std::vector<std::vector<std::size_t>> ordered_chunks(std::size_t n,
                                                     std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + batch); ++i)
      idx.push_back(i);
    out.push_back(std::move(idx));
  }
  return out;
}

template <typename T>
std::pair<double, double> eval_loss_acc(Model<T>& model,
                                        const LabeledDataset& data,
                                        std::size_t batch) {
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  for (const auto& idx : ordered_chunks(data.size(), batch)) {
    auto x = gather_inputs<T>(data, idx);
    auto y = gather_labels(data, idx);
    auto logits = model.forward(x, Mode::Eval);
    auto probs = softmax(logits);
    loss_sum += static_cast<double>(cross_entropy(probs, y).item()) *
                static_cast<double>(idx.size());
    const T* lp = logits.data().data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (Model<T>::predict_label(lp[i * 2], lp[i * 2 + 1]) == y[i]) ++correct;
  }
  double n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

}  // namespace

template <typename T>
TrainOutcome train(Model<T>& model, const LabeledDataset& train_set,
                   const LabeledDataset& val_set, const TrainConfig& config) {
  if (config.batch_size < 1)
    throw ConfigError("train: batch_size must be >= 1");
  if (config.max_epochs < 0)
    throw ConfigError("train: max_epochs must be >= 0");
  if (train_set.size() == 0 && config.max_epochs > 0)
    throw DomainError("train: empty training set");

  NAdam<T> optimizer(static_cast<T>(config.lr));
  PlateauScheduler scheduler(config.lr, config.plateau_factor,
                             config.plateau_patience);
  int stop_patience = config.early_stop_patience > 0
                          ? config.early_stop_patience
                          : std::numeric_limits<int>::max();
  EarlyStopper<T> stopper(stop_patience);

  TrainOutcome outcome;
  auto batch = static_cast<std::size_t>(config.batch_size);
  auto params = model.parameters();

  auto persist = [&](Checkpoint&& ckpt) {
    outcome.checkpoint = std::move(ckpt);
    if (!config.checkpoint_path.empty())
      write_checkpoint_file(config.checkpoint_path, outcome.checkpoint);
    if (!config.history_path.empty())
      write_history_csv(config.history_path, outcome.history);
  };

  // Both abort sources (non-finite loss, non-finite gradients inside the
  // optimizer) persist the last good state before propagating.
  auto abort_run = [&](const std::string& reason) {
    outcome.history.aborted = true;
    outcome.history.abort_reason = reason;
    stopper.restore_best(model);
    outcome.best_val_loss = stopper.best_loss();
    outcome.best_epoch = stopper.best_epoch();
    persist(make_checkpoint(model, &optimizer, stopper.best_epoch(),
                            stopper.best_loss()));
    throw NumericsError("train: " + reason);
  };

  // lr tracked in double so the history column is exactly lr0 * factor^k
  double current_lr = config.lr;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double lr_in_effect = current_lr;

    auto batches = epoch_batches(
        train_set.size(), batch,
        derive_seed(config.seed, "epoch", static_cast<std::uint64_t>(epoch)));

    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (const auto& idx : batches) {
      auto x = gather_inputs<T>(train_set, idx);
      auto y = gather_labels(train_set, idx);

      Tape<T> tape;
      model.zero_grad();
      model.watch_all(tape);
      auto logits = model.forward(x, Mode::Train);
      auto loss = cross_entropy(softmax(logits), y);

      double loss_val = static_cast<double>(loss.item());
      if (!std::isfinite(loss_val))
        abort_run("non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += loss_val * static_cast<double>(idx.size());
      const T* lp = logits.data().data();
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (Model<T>::predict_label(lp[i * 2], lp[i * 2 + 1]) == y[i])
          ++correct;

      tape.backward(loss);
      try {
        optimizer.step(params);
      } catch (const NumericsError&) {
        abort_run("non-finite gradient at epoch " + std::to_string(epoch));
      }
    }

    auto [val_loss, val_acc] = eval_loss_acc(model, val_set, batch);
    if (config.plateau_patience > 0) {
      current_lr = scheduler.on_epoch_end(val_loss);
      optimizer.set_lr(static_cast<T>(current_lr));
    }
    bool stop = stopper.update(val_loss, model) &&
                config.early_stop_patience > 0;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_acc =
        static_cast<double>(correct) / static_cast<double>(train_set.size());
    rec.val_loss = val_loss;
    rec.val_acc = val_acc;
    rec.lr = lr_in_effect;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    outcome.history.records.push_back(rec);

    if (stop) break;
  }

  stopper.restore_best(model);
  outcome.best_val_loss = stopper.best_loss();
  outcome.best_epoch = stopper.best_epoch();
  persist(make_checkpoint(model, &optimizer, stopper.best_epoch(),
                          stopper.best_loss()));
  return outcome;
}

template <typename T>
std::vector<double> predict_scores(Model<T>& model,
                                   const LabeledDataset& dataset,
                                   std::size_t batch_size) {
  std::vector<double> scores;
  scores.reserve(dataset.size());
  for (const auto& idx : ordered_chunks(dataset.size(), batch_size)) {
    auto x = gather_inputs<T>(dataset, idx);
    auto probs = softmax(model.forward(x, Mode::Eval));
    const T* pp = probs.data().data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      scores.push_back(static_cast<double>(pp[i * 2 + 1]));
  }
  return scores;
}

template <typename T>
EvalReport evaluate(Model<T>& model, const LabeledDataset& dataset,
                    double threshold) {
  if (dataset.size() == 0) throw DomainError("evaluate: empty dataset");
  auto scores = predict_scores(model, dataset);
  return make_report(scores, dataset.labels, threshold);
}

void write_history_csv(const std::filesystem::path& path,
                       const TrainHistory& history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f << "epoch,train_loss,train_acc,val_loss,val_acc,lr,seconds\n";
  char buf[256];
  for (const auto& r : history.records) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n",
                  r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc,
                  r.lr, r.seconds);
    f << buf;
  }
  if (history.aborted) f << "# aborted: " << history.abort_reason << "\n";
}

template TrainOutcome train<float>(Model<float>&, const LabeledDataset&,
                                   const LabeledDataset&, const TrainConfig&);
template TrainOutcome train<double>(Model<double>&, const LabeledDataset&,
                                    const LabeledDataset&, const TrainConfig&);
template std::vector<double> predict_scores<float>(Model<float>&,
                                                   const LabeledDataset&,
                                                   std::size_t);
template std::vector<double> predict_scores<double>(Model<double>&,
                                                    const LabeledDataset&,
                                                    std::size_t);
template EvalReport evaluate<float>(Model<float>&, const LabeledDataset&,
                                    double);
template EvalReport evaluate<double>(Model<double>&, const LabeledDataset&,
                                     double);

}  // namespace gwad

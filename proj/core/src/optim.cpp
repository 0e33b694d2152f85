#include "gwad/optim.hpp"

#include <cmath>

namespace gwad {

template <typename T>
void NAdam<T>::step(
    const std::vector<std::pair<std::string, Array<T>*>>& params) {
  for (const auto& [name, p] : params) {
    if (!p->has_grad())
      throw DomainError("nadam: parameter '" + name + "' has no gradient");
    for (T g : p->grad())
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericsError("nadam: non-finite gradient in '" + name + "'");
  }

  ++t_;
  double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), t_);
  double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), t_);

  for (const auto& [name, p] : params) {
    auto& slot = slots_[name];
    if (slot.m.empty()) {
      slot.m.assign(p->numel(), T{0});
      slot.v.assign(p->numel(), T{0});
    }
    auto data = p->data();
    auto grad = p->grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      T g = grad[i];
      slot.m[i] = beta1_ * slot.m[i] + (T{1} - beta1_) * g;
      slot.v[i] = beta2_ * slot.v[i] + (T{1} - beta2_) * g * g;
      T mhat = slot.m[i] / static_cast<T>(bc1);
      T vhat = slot.v[i] / static_cast<T>(bc2);
      T update = lr_ * (beta1_ * mhat + (T{1} - beta1_) * g / static_cast<T>(bc1)) /
                 (std::sqrt(vhat) + epsilon_);
      data[i] -= update;
    }
  }
}

double PlateauScheduler::on_epoch_end(double val_loss) {
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    since_improvement_ = 0;
  } else if (++since_improvement_ == patience_) {
    lr_ *= factor_;
    ++reductions_;
    since_improvement_ = 0;
  }
  return lr_;
}

template <typename T>
bool EarlyStopper<T>::update(double val_loss, Model<T>& model) {
  ++epoch_;
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    since_improvement_ = 0;
    snapshot_params_.clear();
    snapshot_buffers_.clear();
    for (auto& [name, p] : model.parameters())
      snapshot_params_.emplace_back(p->data().begin(), p->data().end());
    for (auto& [name, b] : model.buffers()) snapshot_buffers_.push_back(*b);
    return false;
  }
  return ++since_improvement_ == patience_;
}

template <typename T>
void EarlyStopper<T>::restore_best(Model<T>& model) const {
  if (snapshot_params_.empty()) return;
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].second->data();
    std::copy(snapshot_params_[i].begin(), snapshot_params_[i].end(),
              dst.begin());
  }
  auto buffers = model.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i)
    *buffers[i].second = snapshot_buffers_[i];
}

template class NAdam<float>;
template class NAdam<double>;
template class EarlyStopper<float>;
template class EarlyStopper<double>;

}  // namespace gwad

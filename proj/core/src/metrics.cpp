#include "gwad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "gwad/errors.hpp"

namespace gwad {

template <typename T>
Array<T> cross_entropy(const Array<T>& probabilities,
                       std::span<const std::int32_t> labels) {
  if (probabilities.rank() != 2 || probabilities.shape()[1] != 2)
    throw ShapeError("cross_entropy: probabilities must be [batch, 2]");
  std::size_t batch = probabilities.shape()[0];
  if (labels.size() != batch)
    throw ShapeError("cross_entropy: label count mismatch");
  for (auto l : labels)
    if (l != 0 && l != 1)
      throw DomainError("cross_entropy: label outside {0, 1}");
  if (batch == 0) throw DomainError("cross_entropy: empty batch");

  const T eps = static_cast<T>(1e-7);
  const T* pp = probabilities.data().data();
  double acc = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    T p = pp[b * 2 + static_cast<std::size_t>(labels[b])];
    p = std::clamp(p, eps, T{1} - eps);
    acc -= std::log(static_cast<double>(p));
  }
  Array<T> out = Array<T>::scalar(static_cast<T>(acc / batch));

  if (auto state = probabilities.tape_state_locked()) {
    int out_id = static_cast<int>(state->nodes.size());
    int ip = probabilities.tape_node().second;
    auto p_data = probabilities.storage();
    std::vector<std::int32_t> lab(labels.begin(), labels.end());
    state->emit(1, [=, lab = std::move(lab)](detail::TapeState<T>& t) {
      T seed = t.adjoint(out_id)[0];
      T* gp = t.adjoint(ip).data();
      for (std::size_t b = 0; b < lab.size(); ++b) {
        std::size_t idx = b * 2 + static_cast<std::size_t>(lab[b]);
        T p = (*p_data)[idx];
        if (p > eps && p < T{1} - eps)
          gp[idx] -= seed / (p * static_cast<T>(lab.size()));
      }
    });
    out.bind_node(state, out_id);
  }
  return out;
}

Confusion confusion(std::span<const double> scores,
                    std::span<const std::int32_t> labels, double threshold) {
  if (scores.size() != labels.size())
    throw ShapeError("confusion: score/label count mismatch");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool positive = scores[i] > threshold;
    if (labels[i] == 1)
      positive ? ++c.tp : ++c.fn;
    else
      positive ? ++c.fp : ++c.tn;
  }
  return c;
}

double tnr(std::int64_t tn, std::int64_t fp) {
  if (tn + fp == 0)
    throw UndefinedMetricError("tnr: no negative samples");
  return static_cast<double>(tn) / static_cast<double>(tn + fp);
}

RocResult roc_auc(std::span<const double> scores,
                  std::span<const std::int32_t> labels) {
  if (scores.size() != labels.size())
    throw ShapeError("roc_auc: score/label count mismatch");
  std::int64_t n_pos = 0, n_neg = 0;
  for (auto l : labels) l == 1 ? ++n_pos : ++n_neg;
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedMetricError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocResult r;
  r.points.push_back({0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  double auc = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    // group every sample tied at this score into a single sweep step
    double s = scores[order[i]];
    std::int64_t dtp = 0, dfp = 0;
    while (i < order.size() && scores[order[i]] == s) {
      labels[order[i]] == 1 ? ++dtp : ++dfp;
      ++i;
    }
    double x0 = static_cast<double>(fp) / n_neg;
    double y0 = static_cast<double>(tp) / n_pos;
    tp += dtp;
    fp += dfp;
    double x1 = static_cast<double>(fp) / n_neg;
    double y1 = static_cast<double>(tp) / n_pos;
    auc += (x1 - x0) * (y0 + y1) / 2.0;
    r.points.push_back({x1, y1});
  }
  r.auc = auc;
  return r;
}

EvalReport make_report(std::span<const double> scores,
                       std::span<const std::int32_t> labels, double threshold) {
  EvalReport rep;
  rep.threshold = threshold;
  rep.counts = confusion(scores, labels, threshold);
  const auto& c = rep.counts;
  rep.tnr = c.tn + c.fp > 0
                ? static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp)
                : std::numeric_limits<double>::quiet_NaN();
  rep.fpr = 1.0 - rep.tnr;
  rep.tpr = c.tp + c.fn > 0
                ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                : std::numeric_limits<double>::quiet_NaN();
  rep.accuracy = c.total() > 0 ? static_cast<double>(c.tp + c.tn) / c.total()
                               : std::numeric_limits<double>::quiet_NaN();

  std::int64_t n_pos = c.tp + c.fn, n_neg = c.tn + c.fp;
  if (n_pos > 0 && n_neg > 0) {
    auto roc = roc_auc(scores, labels);
    rep.roc_valid = true;
    rep.roc_points = std::move(roc.points);
    rep.auc = roc.auc;

    // Smallest positive set reaching TPR >= 0.9, swept in descending score
    // order. The reported threshold is inclusive: predict positive when
    // score >= threshold_at_tpr90.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] > scores[b];
    });
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
      double s = scores[order[i]];
      while (i < order.size() && scores[order[i]] == s) {
        labels[order[i]] == 1 ? ++tp : ++fp;
        ++i;
      }
      if (static_cast<double>(tp) / n_pos >= 0.9) {
        rep.threshold_at_tpr90 = s;
        rep.tnr_at_tpr90 = static_cast<double>(n_neg - fp) / n_neg;
        break;
      }
    }
  }
  return rep;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string format_report(const EvalReport& r) {
  std::string out;
  out += "threshold " + fmt(r.threshold) + "\n";
  out += "tp " + std::to_string(r.counts.tp) + "\n";
  out += "fp " + std::to_string(r.counts.fp) + "\n";
  out += "tn " + std::to_string(r.counts.tn) + "\n";
  out += "fn " + std::to_string(r.counts.fn) + "\n";
  out += "tnr " + fmt(r.tnr) + "\n";
  out += "fpr " + fmt(r.fpr) + "\n";
  out += "tpr " + fmt(r.tpr) + "\n";
  out += "accuracy " + fmt(r.accuracy) + "\n";
  if (r.roc_valid) {
    out += "auc " + fmt(r.auc) + "\n";
    out += "threshold_at_tpr90 " + fmt(r.threshold_at_tpr90) + "\n";
    out += "tnr_at_tpr90 " + fmt(r.tnr_at_tpr90) + "\n";
  }
  return out;
}

void write_report(const std::filesystem::path& report_path,
                  const std::filesystem::path& roc_csv_path,
                  const EvalReport& report) {
  std::ofstream rf(report_path);
  if (!rf) throw FormatError("cannot write " + report_path.string());
  rf << format_report(report);

  if (report.roc_valid) {
    std::ofstream cf(roc_csv_path);
    if (!cf) throw FormatError("cannot write " + roc_csv_path.string());
    cf << "fpr,tpr\n";
    for (const auto& p : report.roc_points)
      cf << fmt(p.fpr) << "," << fmt(p.tpr) << "\n";
  }
}

template Array<float> cross_entropy<float>(const Array<float>&,
                                           std::span<const std::int32_t>);
template Array<double> cross_entropy<double>(const Array<double>&,
                                             std::span<const std::int32_t>);

}  // namespace gwad

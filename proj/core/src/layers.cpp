#include "gwad/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace gwad {

std::size_t conv_out_len(std::size_t len, int kernel, int stride,
                         Padding padding) {
  auto s = static_cast<std::size_t>(stride);
  if (padding == Padding::Same) return (len + s - 1) / s;
  return (len - static_cast<std::size_t>(kernel)) / s + 1;
}

namespace {

struct ConvDims {
  std::int64_t batch, in_ch, len, out_ch, kernel, stride, out_len, pad_left;
};

template <typename T>
ConvDims conv_dims(const Array<T>& x, const Array<T>& w, int stride,
                   Padding padding) {
  if (x.rank() != 3) throw ShapeError("conv1d: input must be [batch, ch, len]");
  if (w.rank() != 3)
    throw ShapeError("conv1d: weight must be [out_ch, in_ch, kernel]");
  ConvDims d{};
  d.batch = static_cast<std::int64_t>(x.shape()[0]);
  d.in_ch = static_cast<std::int64_t>(x.shape()[1]);
  d.len = static_cast<std::int64_t>(x.shape()[2]);
  d.out_ch = static_cast<std::int64_t>(w.shape()[0]);
  d.kernel = static_cast<std::int64_t>(w.shape()[2]);
  d.stride = stride;
  if (static_cast<std::int64_t>(w.shape()[1]) != d.in_ch)
    throw ShapeError("conv1d: channel mismatch between input and weight");
  if (stride < 1) throw ShapeError("conv1d: stride must be >= 1");
  if (d.kernel < 1) throw ShapeError("conv1d: kernel must be >= 1");
  if (padding == Padding::Valid && d.len < d.kernel)
    throw ShapeError("conv1d: input shorter than kernel with valid padding");

  d.out_len = static_cast<std::int64_t>(conv_out_len(
      static_cast<std::size_t>(d.len), static_cast<int>(d.kernel), stride,
      padding));
  if (padding == Padding::Same) {
    std::int64_t total =
        std::max<std::int64_t>(0, (d.out_len - 1) * stride + d.kernel - d.len);
    d.pad_left = total / 2;  // extra zero on the right when odd
  } else {
    d.pad_left = 0;
  }
  return d;
}

// Valid output range [t_lo, t_hi] for kernel offset k: the tap must land
// inside [0, len).
inline void tap_range(std::int64_t k, const ConvDims& d, std::int64_t& t_lo,
                      std::int64_t& t_hi) {
  std::int64_t off = k - d.pad_left;
  t_lo = off >= 0 ? 0 : (-off + d.stride - 1) / d.stride;
  t_hi = (d.len - 1 - off) / d.stride;
  if (t_hi > d.out_len - 1) t_hi = d.out_len - 1;
}

}  // namespace

template <typename T>
Array<T> conv1d(const Array<T>& x, const Array<T>& weight, const Array<T>& bias,
                int stride, Padding padding) {
  ConvDims d = conv_dims(x, weight, stride, padding);
  if (bias.rank() != 1 ||
      static_cast<std::int64_t>(bias.numel()) != d.out_ch)
    throw ShapeError("conv1d: bias must be [out_ch]");

  Array<T> out({static_cast<std::size_t>(d.batch),
                static_cast<std::size_t>(d.out_ch),
                static_cast<std::size_t>(d.out_len)});
  const T* xp = x.data().data();
  const T* wp = weight.data().data();
  const T* bp = bias.data().data();
  T* op = out.data().data();

  for (std::int64_t b = 0; b < d.batch; ++b)
    for (std::int64_t oc = 0; oc < d.out_ch; ++oc) {
      T* orow = op + (b * d.out_ch + oc) * d.out_len;
      std::fill(orow, orow + d.out_len, bp[oc]);
      for (std::int64_t ic = 0; ic < d.in_ch; ++ic) {
        const T* xrow = xp + (b * d.in_ch + ic) * d.len;
        const T* wrow = wp + (oc * d.in_ch + ic) * d.kernel;
        for (std::int64_t k = 0; k < d.kernel; ++k) {
          T w = wrow[k];
          std::int64_t t_lo, t_hi;
          tap_range(k, d, t_lo, t_hi);
          const T* xk = xrow + k - d.pad_left;
          for (std::int64_t t = t_lo; t <= t_hi; ++t)
            orow[t] += w * xk[t * d.stride];
        }
      }
    }

  // tape recording
  auto sx = x.tape_state_locked();
  auto sw = weight.tape_state_locked();
  auto sb = bias.tape_state_locked();
  auto state = sx ? sx : (sw ? sw : sb);
  if ((sx && sw && sx != sw) || (sx && sb && sx != sb) ||
      (sw && sb && sw != sb))
    throw DomainError("conv1d: operands belong to different tapes");
  if (state) {
    int out_id = static_cast<int>(state->nodes.size());
    int ix = sx ? x.tape_node().second : -1;
    int iw = sw ? weight.tape_node().second : -1;
    int ib = sb ? bias.tape_node().second : -1;
    auto x_data = x.storage();
    auto w_data = weight.storage();
    state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      const T* gop = adj.data();
      if (ix >= 0) {
        T* gx = t.adjoint(ix).data();
        for (std::int64_t b = 0; b < d.batch; ++b)
          for (std::int64_t oc = 0; oc < d.out_ch; ++oc) {
            const T* grow = gop + (b * d.out_ch + oc) * d.out_len;
            for (std::int64_t ic = 0; ic < d.in_ch; ++ic) {
              T* gxrow = gx + (b * d.in_ch + ic) * d.len;
              const T* wrow = (*w_data).data() + (oc * d.in_ch + ic) * d.kernel;
              for (std::int64_t k = 0; k < d.kernel; ++k) {
                T w = wrow[k];
                std::int64_t t_lo, t_hi;
                tap_range(k, d, t_lo, t_hi);
                T* gxk = gxrow + k - d.pad_left;
                for (std::int64_t tt = t_lo; tt <= t_hi; ++tt)
                  gxk[tt * d.stride] += w * grow[tt];
              }
            }
          }
      }
      if (iw >= 0) {
        T* gw = t.adjoint(iw).data();
        for (std::int64_t b = 0; b < d.batch; ++b)
          for (std::int64_t oc = 0; oc < d.out_ch; ++oc) {
            const T* grow = gop + (b * d.out_ch + oc) * d.out_len;
            for (std::int64_t ic = 0; ic < d.in_ch; ++ic) {
              const T* xrow = (*x_data).data() + (b * d.in_ch + ic) * d.len;
              T* gwrow = gw + (oc * d.in_ch + ic) * d.kernel;
              for (std::int64_t k = 0; k < d.kernel; ++k) {
                std::int64_t t_lo, t_hi;
                tap_range(k, d, t_lo, t_hi);
                const T* xk = xrow + k - d.pad_left;
                T acc{0};
                for (std::int64_t tt = t_lo; tt <= t_hi; ++tt)
                  acc += grow[tt] * xk[tt * d.stride];
                gwrow[k] += acc;
              }
            }
          }
      }
      if (ib >= 0) {
        T* gb = t.adjoint(ib).data();
        for (std::int64_t b = 0; b < d.batch; ++b)
          for (std::int64_t oc = 0; oc < d.out_ch; ++oc) {
            const T* grow = gop + (b * d.out_ch + oc) * d.out_len;
            T acc{0};
            for (std::int64_t tt = 0; tt < d.out_len; ++tt) acc += grow[tt];
            gb[oc] += acc;
          }
      }
    });
    out.bind_node(state, out_id);
  }
  return out;
}

template <typename T>
Array<T> batchnorm1d(const Array<T>& x, const Array<T>& gamma,
                     const Array<T>& beta, std::vector<T>& running_mean,
                     std::vector<T>& running_var, T momentum, T epsilon,
                     Mode mode) {
  if (x.rank() < 2) throw ShapeError("batchnorm1d: input must be rank >= 2");
  std::size_t batch = x.shape()[0];
  std::size_t ch = x.shape()[1];
  std::size_t inner = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) inner *= x.shape()[i];
  if (gamma.numel() != ch || beta.numel() != ch ||
      running_mean.size() != ch || running_var.size() != ch)
    throw ShapeError("batchnorm1d: channel parameter length mismatch");

  std::size_t n_per_ch = batch * inner;
  if (mode == Mode::Train && n_per_ch < 2)
    throw DomainError("batchnorm1d: train mode needs >= 2 values per channel");

  const T* xp = x.data().data();
  std::vector<T> mean(ch), inv_std(ch);

  if (mode == Mode::Train) {
    for (std::size_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* row = xp + (b * ch + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) acc += row[i];
      }
      double mu = acc / static_cast<double>(n_per_ch);
      double var_acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* row = xp + (b * ch + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          double dv = row[i] - mu;
          var_acc += dv * dv;
        }
      }
      double var = var_acc / static_cast<double>(n_per_ch);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + epsilon));
      running_mean[c] = (T{1} - momentum) * running_mean[c] +
                        momentum * static_cast<T>(mu);
      running_var[c] =
          (T{1} - momentum) * running_var[c] + momentum * static_cast<T>(var);
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] =
          static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) +
                                         static_cast<double>(epsilon)));
    }
  }

  Array<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  const T* gp = gamma.data().data();
  const T* bp = beta.data().data();
  T* op = out.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T* row = xp + (b * ch + c) * inner;
      T* orow = op + (b * ch + c) * inner;
      T* hrow = xhat->data() + (b * ch + c) * inner;
      T mu = mean[c], is = inv_std[c], g = gp[c], be = bp[c];
      for (std::size_t i = 0; i < inner; ++i) {
        T h = (row[i] - mu) * is;
        hrow[i] = h;
        orow[i] = g * h + be;
      }
    }

  auto sx = x.tape_state_locked();
  auto sg = gamma.tape_state_locked();
  auto sb = beta.tape_state_locked();
  auto state = sx ? sx : (sg ? sg : sb);
  if ((sx && sg && sx != sg) || (sx && sb && sx != sb) ||
      (sg && sb && sg != sb))
    throw DomainError("batchnorm1d: operands belong to different tapes");
  if (state) {
    int out_id = static_cast<int>(state->nodes.size());
    int ix = sx ? x.tape_node().second : -1;
    int ig = sg ? gamma.tape_node().second : -1;
    int ib = sb ? beta.tape_node().second : -1;
    auto gamma_data = gamma.storage();
    bool train = mode == Mode::Train;
    state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      const T* ap = adj.data();
      const T* hp = xhat->data();
      if (ig >= 0) {
        T* gg = t.adjoint(ig).data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c) {
            const T* arow = ap + (b * ch + c) * inner;
            const T* hrow = hp + (b * ch + c) * inner;
            T acc{0};
            for (std::size_t i = 0; i < inner; ++i) acc += arow[i] * hrow[i];
            gg[c] += acc;
          }
      }
      if (ib >= 0) {
        T* gb = t.adjoint(ib).data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c) {
            const T* arow = ap + (b * ch + c) * inner;
            T acc{0};
            for (std::size_t i = 0; i < inner; ++i) acc += arow[i];
            gb[c] += acc;
          }
      }
      if (ix >= 0) {
        T* gx = t.adjoint(ix).data();
        const T* gmp = gamma_data->data();
        if (train) {
          // dx = inv_std / N * (N*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
          for (std::size_t c = 0; c < ch; ++c) {
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              const T* arow = ap + (b * ch + c) * inner;
              const T* hrow = hp + (b * ch + c) * inner;
              for (std::size_t i = 0; i < inner; ++i) {
                double dh = static_cast<double>(arow[i]) * gmp[c];
                sum_dh += dh;
                sum_dh_h += dh * hrow[i];
              }
            }
            double n = static_cast<double>(n_per_ch);
            for (std::size_t b = 0; b < batch; ++b) {
              const T* arow = ap + (b * ch + c) * inner;
              const T* hrow = hp + (b * ch + c) * inner;
              T* grow = gx + (b * ch + c) * inner;
              for (std::size_t i = 0; i < inner; ++i) {
                double dh = static_cast<double>(arow[i]) * gmp[c];
                grow[i] += static_cast<T>(inv_std[c] / n *
                                          (n * dh - sum_dh - hrow[i] * sum_dh_h));
              }
            }
          }
        } else {
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c) {
              const T* arow = ap + (b * ch + c) * inner;
              T* grow = gx + (b * ch + c) * inner;
              T scale = gmp[c] * inv_std[c];
              for (std::size_t i = 0; i < inner; ++i)
                grow[i] += arow[i] * scale;
            }
        }
      }
    });
    out.bind_node(state, out_id);
  }
  return out;
}

template <typename T>
Array<T> maxpool1d(const Array<T>& x, int window, int stride) {
  if (x.rank() != 3) throw ShapeError("maxpool1d: input must be [batch, ch, len]");
  if (window < 1 || stride < 1)
    throw ShapeError("maxpool1d: window and stride must be >= 1");
  std::size_t batch = x.shape()[0], ch = x.shape()[1], len = x.shape()[2];
  if (len < static_cast<std::size_t>(window))
    throw ShapeError("maxpool1d: input shorter than window");

  std::size_t out_len = (len - static_cast<std::size_t>(window)) /
                            static_cast<std::size_t>(stride) +
                        1;
  Array<T> out({batch, ch, out_len});
  std::vector<std::size_t> argmax(out.numel());
  const T* xp = x.data().data();
  T* op = out.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T* row = xp + (b * ch + c) * len;
      T* orow = op + (b * ch + c) * out_len;
      std::size_t* amrow = argmax.data() + (b * ch + c) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        std::size_t start = t * static_cast<std::size_t>(stride);
        T best = row[start];
        std::size_t best_i = start;
        for (std::size_t i = 1; i < static_cast<std::size_t>(window); ++i)
          if (row[start + i] > best) {
            best = row[start + i];
            best_i = start + i;
          }
        orow[t] = best;
        amrow[t] = best_i;
      }
    }

  if (auto state = x.tape_state_locked()) {
    int out_id = static_cast<int>(state->nodes.size());
    int ix = x.tape_node().second;
    state->emit(out.numel(), [=, argmax = std::move(argmax)](
                                 detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      T* gx = t.adjoint(ix).data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
          const T* arow = adj.data() + (b * ch + c) * out_len;
          const std::size_t* amrow = argmax.data() + (b * ch + c) * out_len;
          T* grow = gx + (b * ch + c) * len;
          for (std::size_t t = 0; t < out_len; ++t) grow[amrow[t]] += arow[t];
        }
    });
    out.bind_node(state, out_id);
  }
  return out;
}

template <typename T>
Array<T> global_pool_head(const Array<T>& x) {
  if (x.rank() != 3)
    throw ShapeError("global_pool_head: input must be [batch, ch, len]");
  std::size_t batch = x.shape()[0], ch = x.shape()[1], len = x.shape()[2];
  if (len == 0) throw DomainError("global_pool_head: empty time axis");

  Array<T> out({batch, 2 * ch});
  std::vector<std::size_t> argmax(batch * ch);
  const T* xp = x.data().data();
  T* op = out.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T* row = xp + (b * ch + c) * len;
      T best = row[0];
      std::size_t best_i = 0;
      T acc{0};
      for (std::size_t i = 0; i < len; ++i) {
        acc += row[i];
        if (row[i] > best) {
          best = row[i];
          best_i = i;
        }
      }
      op[b * 2 * ch + c] = best;
      op[b * 2 * ch + ch + c] = acc / static_cast<T>(len);
      argmax[b * ch + c] = best_i;
    }

  if (auto state = x.tape_state_locked()) {
    int out_id = static_cast<int>(state->nodes.size());
    int ix = x.tape_node().second;
    state->emit(out.numel(), [=, argmax = std::move(argmax)](
                                 detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      T* gx = t.adjoint(ix).data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
          T* grow = gx + (b * ch + c) * len;
          grow[argmax[b * ch + c]] += adj[b * 2 * ch + c];
          T gm = adj[b * 2 * ch + ch + c] / static_cast<T>(len);
          for (std::size_t i = 0; i < len; ++i) grow[i] += gm;
        }
    });
    out.bind_node(state, out_id);
  }
  return out;
}

template <typename T>
Array<T> dense(const Array<T>& x, const Array<T>& weight,
               const Array<T>& bias) {
  if (x.rank() != 2) throw ShapeError("dense: input must be [batch, in]");
  if (weight.rank() != 2) throw ShapeError("dense: weight must be [out, in]");
  std::size_t batch = x.shape()[0], in = x.shape()[1];
  std::size_t out_n = weight.shape()[0];
  if (weight.shape()[1] != in) throw ShapeError("dense: in-features mismatch");
  if (bias.numel() != out_n) throw ShapeError("dense: bias length mismatch");

  Array<T> out({batch, out_n});
  const T* xp = x.data().data();
  const T* wp = weight.data().data();
  const T* bp = bias.data().data();
  T* op = out.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out_n; ++o) {
      const T* xrow = xp + b * in;
      const T* wrow = wp + o * in;
      T acc = bp[o];
      for (std::size_t i = 0; i < in; ++i) acc += xrow[i] * wrow[i];
      op[b * out_n + o] = acc;
    }

  auto sx = x.tape_state_locked();
  auto sw = weight.tape_state_locked();
  auto sb = bias.tape_state_locked();
  auto state = sx ? sx : (sw ? sw : sb);
  if ((sx && sw && sx != sw) || (sx && sb && sx != sb) ||
      (sw && sb && sw != sb))
    throw DomainError("dense: operands belong to different tapes");
  if (state) {
    int out_id = static_cast<int>(state->nodes.size());
    int ix = sx ? x.tape_node().second : -1;
    int iw = sw ? weight.tape_node().second : -1;
    int ib = sb ? bias.tape_node().second : -1;
    auto x_data = x.storage();
    auto w_data = weight.storage();
    state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      if (ix >= 0) {
        T* gx = t.adjoint(ix).data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < out_n; ++o) {
            T g = adj[b * out_n + o];
            const T* wrow = w_data->data() + o * in;
            T* gxrow = gx + b * in;
            for (std::size_t i = 0; i < in; ++i) gxrow[i] += g * wrow[i];
          }
      }
      if (iw >= 0) {
        T* gw = t.adjoint(iw).data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < out_n; ++o) {
            T g = adj[b * out_n + o];
            const T* xrow = x_data->data() + b * in;
            T* gwrow = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) gwrow[i] += g * xrow[i];
          }
      }
      if (ib >= 0) {
        T* gb = t.adjoint(ib).data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < out_n; ++o) gb[o] += adj[b * out_n + o];
      }
    });
    out.bind_node(state, out_id);
  }
  return out;
}

template <typename T>
Array<T> softmax(const Array<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax: input must be [batch, k]");
  std::size_t batch = x.shape()[0], k = x.shape()[1];

  Array<T> out(x.shape());
  const T* xp = x.data().data();
  T* op = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = xp + b * k;
    T* orow = op + b * k;
    T m = row[0];
    for (std::size_t i = 1; i < k; ++i) m = std::max(m, row[i]);
    T sum{0};
    for (std::size_t i = 0; i < k; ++i) {
      orow[i] = std::exp(row[i] - m);
      sum += orow[i];
    }
    for (std::size_t i = 0; i < k; ++i) orow[i] /= sum;
  }

  if (auto state = x.tape_state_locked()) {
    int out_id = static_cast<int>(state->nodes.size());
    int ix = x.tape_node().second;
    auto y_data = out.storage();
    state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      T* gx = t.adjoint(ix).data();
      for (std::size_t b = 0; b < batch; ++b) {
        const T* yrow = y_data->data() + b * k;
        const T* arow = adj.data() + b * k;
        T dot{0};
        for (std::size_t i = 0; i < k; ++i) dot += arow[i] * yrow[i];
        T* grow = gx + b * k;
        for (std::size_t i = 0; i < k; ++i)
          grow[i] += yrow[i] * (arow[i] - dot);
      }
    });
    out.bind_node(state, out_id);
  }
  return out;
}

#define GWAD_INSTANTIATE_LAYERS(T)                                            \
  template Array<T> conv1d<T>(const Array<T>&, const Array<T>&,               \
                              const Array<T>&, int, Padding);                 \
  template Array<T> batchnorm1d<T>(const Array<T>&, const Array<T>&,          \
                                   const Array<T>&, std::vector<T>&,          \
                                   std::vector<T>&, T, T, Mode);              \
  template Array<T> maxpool1d<T>(const Array<T>&, int, int);                  \
  template Array<T> global_pool_head<T>(const Array<T>&);                     \
  template Array<T> dense<T>(const Array<T>&, const Array<T>&,                \
                             const Array<T>&);                                \
  template Array<T> softmax<T>(const Array<T>&);

GWAD_INSTANTIATE_LAYERS(float)
GWAD_INSTANTIATE_LAYERS(double)

#undef GWAD_INSTANTIATE_LAYERS

}  // namespace gwad

#pragma once

#include <optional>
#include <vector>

#include "gwad/array.hpp"

namespace gwad {

enum class Padding { Same, Valid };
enum class Mode { Train, Eval };

// ---- Differentiable layer ops ---------------------------------------------
//
// All sequence ops use channels-first layout: x is [batch, channels, len].

// Cross-correlation (no kernel flip). `Same` pads zeros symmetrically with
// the extra zero on the right; output length is ceil(len / stride). `Valid`
// output length is floor((len - kernel) / stride) + 1.
template <typename T>
Array<T> conv1d(const Array<T>& x, const Array<T>& weight, const Array<T>& bias,
                int stride, Padding padding);

// Train mode normalizes with batch statistics (population variance, i.e.
// divide by N) and folds them into the running stats with
// running = (1 - momentum) * running + momentum * batch. Eval mode uses the
// running stats only. Affine transform gamma * xhat + beta either way.
template <typename T>
Array<T> batchnorm1d(const Array<T>& x, const Array<T>& gamma,
                     const Array<T>& beta, std::vector<T>& running_mean,
                     std::vector<T>& running_var, T momentum, T epsilon,
                     Mode mode);

// Per-window maxima; trailing partial windows are dropped. Gradient goes to
// the lowest-index maximum of each window.
template <typename T>
Array<T> maxpool1d(const Array<T>& x, int window, int stride);

// [batch, ch, len] -> [batch, 2*ch]: global max per channel, then global
// mean per channel.
template <typename T>
Array<T> global_pool_head(const Array<T>& x);

// x [batch, in] with weight [out, in], bias [out] -> [batch, out].
template <typename T>
Array<T> dense(const Array<T>& x, const Array<T>& weight, const Array<T>& bias);

// Row-wise softmax with max-shift, x [batch, k].
template <typename T>
Array<T> softmax(const Array<T>& x);

// ---- Layer records ----------------------------------------------------------

template <typename T>
struct Conv1dLayer {
  Array<T> weight;  // [out_ch, in_ch, kernel]
  Array<T> bias;    // [out_ch]
  int stride = 1;
  Padding padding = Padding::Same;

  Array<T> forward(const Array<T>& x) const {
    return conv1d(x, weight, bias, stride, padding);
  }
};

template <typename T>
struct BatchNorm1dLayer {
  Array<T> gamma;  // [channels]
  Array<T> beta;   // [channels]
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T{0.1};
  T epsilon = T{1e-5};

  Array<T> forward(const Array<T>& x, Mode mode) {
    return batchnorm1d(x, gamma, beta, running_mean, running_var, momentum,
                       epsilon, mode);
  }
};

template <typename T>
struct DenseLayer {
  Array<T> weight;  // [out, in]
  Array<T> bias;    // [out]

  Array<T> forward(const Array<T>& x) const { return dense(x, weight, bias); }
};

// Two-conv path producing a projection C of the input, combined as C - P(x).
// P is a 1x1 convolution matching channels/stride when they differ from the
// input, identity otherwise. Any post-merge activation is the caller's
// business; forward() returns the plain difference.
template <typename T>
struct ResidualDifferenceBlock {
  Conv1dLayer<T> conv1;
  BatchNorm1dLayer<T> bn1;
  Conv1dLayer<T> conv2;
  BatchNorm1dLayer<T> bn2;
  std::optional<Conv1dLayer<T>> input_proj;

  Array<T> conv_path(const Array<T>& x, Mode mode) {
    auto h = relu(bn1.forward(conv1.forward(x), mode));
    return bn2.forward(conv2.forward(h), mode);
  }

  Array<T> project(const Array<T>& x) const {
    return input_proj ? input_proj->forward(x) : x;
  }

  Array<T> forward(const Array<T>& x, Mode mode) {
    return sub(conv_path(x, mode), project(x));
  }
};

// Output length of a convolution/pool along the time axis.
std::size_t conv_out_len(std::size_t len, int kernel, int stride,
                         Padding padding);

}  // namespace gwad

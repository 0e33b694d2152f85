#include "gwad/array.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

namespace gwad {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

// ---- Array ---------------------------------------------------------------

template <typename T>
Array<T>::Array(std::vector<std::size_t> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T{0})) {}

template <typename T>
Array<T>::Array(std::vector<std::size_t> shape, std::vector<T> values)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<T>>(std::move(values))) {
  if (shape_numel(shape_) != data_->size())
    throw ShapeError("array: shape does not match value count");
}

template <typename T>
Array<T> Array<T>::scalar(T value) {
  return Array({}, {value});
}

template <typename T>
Array<T> Array<T>::full(std::vector<std::size_t> shape, T value) {
  Array a(std::move(shape));
  std::fill(a.data_->begin(), a.data_->end(), value);
  return a;
}

template <typename T>
std::span<T> Array<T>::data() {
  return data_ ? std::span<T>(*data_) : std::span<T>();
}

template <typename T>
std::span<const T> Array<T>::data() const {
  return data_ ? std::span<const T>(*data_) : std::span<const T>();
}

template <typename T>
T Array<T>::item() const {
  if (numel() != 1) throw ShapeError("item: array is not a scalar");
  return (*data_)[0];
}

template <typename T>
Array<T> Array<T>::clone() const {
  Array out;
  out.shape_ = shape_;
  out.data_ = data_ ? std::make_shared<std::vector<T>>(*data_)
                    : std::make_shared<std::vector<T>>();
  return out;
}

template <typename T>
std::span<T> Array<T>::grad() {
  if (!grad_) throw DomainError("grad: array has no gradient buffer");
  return std::span<T>(*grad_);
}

template <typename T>
std::span<const T> Array<T>::grad() const {
  if (!grad_) throw DomainError("grad: array has no gradient buffer");
  return std::span<const T>(*grad_);
}

template <typename T>
void Array<T>::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), T{0});
}

template <typename T>
bool Array<T>::all_finite() const {
  if (!data_) return true;
  for (T v : *data_)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
std::pair<detail::TapeState<T>*, int> Array<T>::tape_node() const {
  auto state = tape_.lock();
  if (!state || node_ < 0 || state->generation != generation_)
    return {nullptr, -1};
  return {state.get(), node_};
}

template <typename T>
std::shared_ptr<detail::TapeState<T>> Array<T>::tape_state_locked() const {
  auto state = tape_.lock();
  if (!state || node_ < 0 || state->generation != generation_) return nullptr;
  return state;
}

template <typename T>
void Array<T>::bind_node(const std::shared_ptr<detail::TapeState<T>>& state,
                         int node) {
  tape_ = state;
  generation_ = state->generation;
  node_ = node;
}

// ---- Tape ------------------------------------------------------------------

namespace detail {

template <typename T>
int TapeState<T>::emit(std::size_t numel, std::function<void(TapeState&)> fn) {
  Node node;
  node.numel = numel;
  node.backward_fn = std::move(fn);
  nodes.push_back(std::move(node));
  return static_cast<int>(nodes.size()) - 1;
}

}  // namespace detail

template <typename T>
void Tape<T>::watch(Array<T>& leaf) {
  if (auto [state, node] = leaf.tape_node(); state == state_.get() && node >= 0)
    return;  // already watched on this tape
  if (!leaf.grad_)
    leaf.grad_ = std::make_shared<std::vector<T>>(leaf.numel(), T{0});
  int id = state_->emit(leaf.numel(), nullptr);
  state_->nodes.back().leaf_grad = leaf.grad_;
  leaf.bind_node(state_, id);
}

namespace {

template <typename T>
void run_backward(detail::TapeState<T>& state, int root) {
  for (auto& n : state.nodes) n.adjoint.assign(n.numel, T{0});
  state.nodes[static_cast<std::size_t>(root)].adjoint[0] = T{1};
  for (std::size_t i = state.nodes.size(); i-- > 0;) {
    auto& n = state.nodes[i];
    if (n.backward_fn) n.backward_fn(state);
  }
  for (auto& n : state.nodes) {
    if (n.leaf_grad)
      for (std::size_t j = 0; j < n.numel; ++j)
        (*n.leaf_grad)[j] += n.adjoint[j];
    n.adjoint.clear();
  }
}

}  // namespace

template <typename T>
void Tape<T>::backward(const Array<T>& output) {
  if (output.numel() != 1) throw ShapeError("backward: output is not scalar");
  auto [state, node] = output.tape_node();
  if (state != state_.get() || node < 0)
    throw DomainError("backward: output is not recorded on this tape");
  run_backward(*state_, node);
}

template <typename T>
void Tape<T>::clear() {
  state_->nodes.clear();
  ++state_->generation;
}

template <typename T>
void backward(const Array<T>& output) {
  if (output.numel() != 1) throw ShapeError("backward: output is not scalar");
  auto state = output.tape_state_locked();
  if (!state) throw DomainError("backward: output is not recorded on a tape");
  run_backward(*state, output.tape_node().second);
}

// ---- Op plumbing -----------------------------------------------------------

namespace {

// How the right operand of a binary op maps onto the left one.
enum class Bcast { Full, Scalar, Channel };

template <typename T>
Bcast classify_broadcast(const Array<T>& a, const Array<T>& b) {
  if (a.shape() == b.shape()) return Bcast::Full;
  if (b.rank() <= 1 && b.numel() == 1) return Bcast::Scalar;
  if (b.rank() == 1 && a.rank() >= 2 && b.numel() == a.shape()[1])
    return Bcast::Channel;
  throw ShapeError("elementwise: shapes are not broadcast-compatible");
}

// Elements per channel slice (product of extents after axis 1).
template <typename T>
std::size_t inner_extent(const Array<T>& a) {
  std::size_t inner = 1;
  for (std::size_t i = 2; i < a.rank(); ++i) inner *= a.shape()[i];
  return inner;
}

template <typename T>
struct BinaryCtx {
  std::shared_ptr<detail::TapeState<T>> state;
  int a_node = -1;
  int b_node = -1;
  bool recording() const { return state != nullptr; }
};

template <typename T>
BinaryCtx<T> resolve(const Array<T>& a, const Array<T>* b) {
  BinaryCtx<T> ctx;
  auto sa = a.tape_state_locked();
  auto sb = b ? b->tape_state_locked() : nullptr;
  if (sa && sb && sa != sb)
    throw DomainError("op: operands belong to different tapes");
  ctx.state = sa ? sa : sb;
  if (sa) ctx.a_node = a.tape_node().second;
  if (sb) ctx.b_node = b->tape_node().second;
  return ctx;
}

// Accumulates `adj` into the right operand's adjoint under broadcasting.
template <typename T>
void scatter_rhs(std::vector<T>& b_adj, const std::vector<T>& adj, Bcast mode,
                 std::size_t channels, std::size_t inner, T sign) {
  switch (mode) {
    case Bcast::Full:
      for (std::size_t i = 0; i < adj.size(); ++i) b_adj[i] += sign * adj[i];
      break;
    case Bcast::Scalar: {
      T s{0};
      for (T v : adj) s += v;
      b_adj[0] += sign * s;
      break;
    }
    case Bcast::Channel:
      for (std::size_t i = 0; i < adj.size(); ++i)
        b_adj[(i / inner) % channels] += sign * adj[i];
      break;
  }
}

}  // namespace

// ---- Elementwise -----------------------------------------------------------

template <typename T>
Array<T> add(const Array<T>& a, const Array<T>& b) {
  Bcast mode = classify_broadcast(a, b);
  std::size_t channels = a.rank() >= 2 ? a.shape()[1] : 1;
  std::size_t inner = inner_extent(a);

  Array<T> out(a.shape());
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) {
    std::size_t j = mode == Bcast::Full      ? i
                    : mode == Bcast::Scalar  ? 0
                                             : (i / inner) % channels;
    ov[i] = av[i] + bv[j];
  }

  auto ctx = resolve(a, &b);
  if (ctx.recording()) {
    int out_id = static_cast<int>(ctx.state->nodes.size());
    int ia = ctx.a_node, ib = ctx.b_node;
    ctx.state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      if (ia >= 0) {
        auto& ga = t.adjoint(ia);
        for (std::size_t i = 0; i < adj.size(); ++i) ga[i] += adj[i];
      }
      if (ib >= 0) scatter_rhs(t.adjoint(ib), adj, mode, channels, inner, T{1});
    });
    out.bind_node(ctx.state, out_id);
  }
  return out;
}

template <typename T>
Array<T> sub(const Array<T>& a, const Array<T>& b) {
  Bcast mode = classify_broadcast(a, b);
  std::size_t channels = a.rank() >= 2 ? a.shape()[1] : 1;
  std::size_t inner = inner_extent(a);

  Array<T> out(a.shape());
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) {
    std::size_t j = mode == Bcast::Full      ? i
                    : mode == Bcast::Scalar  ? 0
                                             : (i / inner) % channels;
    ov[i] = av[i] - bv[j];
  }

  auto ctx = resolve(a, &b);
  if (ctx.recording()) {
    int out_id = static_cast<int>(ctx.state->nodes.size());
    int ia = ctx.a_node, ib = ctx.b_node;
    ctx.state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      if (ia >= 0) {
        auto& ga = t.adjoint(ia);
        for (std::size_t i = 0; i < adj.size(); ++i) ga[i] += adj[i];
      }
      if (ib >= 0)
        scatter_rhs(t.adjoint(ib), adj, mode, channels, inner, T{-1});
    });
    out.bind_node(ctx.state, out_id);
  }
  return out;
}

template <typename T>
Array<T> mul(const Array<T>& a, const Array<T>& b) {
  Bcast mode = classify_broadcast(a, b);
  std::size_t channels = a.rank() >= 2 ? a.shape()[1] : 1;
  std::size_t inner = inner_extent(a);

  Array<T> out(a.shape());
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) {
    std::size_t j = mode == Bcast::Full      ? i
                    : mode == Bcast::Scalar  ? 0
                                             : (i / inner) % channels;
    ov[i] = av[i] * bv[j];
  }

  auto ctx = resolve(a, &b);
  if (ctx.recording()) {
    int out_id = static_cast<int>(ctx.state->nodes.size());
    int ia = ctx.a_node, ib = ctx.b_node;
    auto a_data = a.storage();
    auto b_data = b.storage();
    ctx.state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      if (ia >= 0) {
        auto& ga = t.adjoint(ia);
        for (std::size_t i = 0; i < adj.size(); ++i) {
          std::size_t j = mode == Bcast::Full      ? i
                          : mode == Bcast::Scalar  ? 0
                                                   : (i / inner) % channels;
          ga[i] += adj[i] * (*b_data)[j];
        }
      }
      if (ib >= 0) {
        auto& gb = t.adjoint(ib);
        for (std::size_t i = 0; i < adj.size(); ++i) {
          std::size_t j = mode == Bcast::Full      ? i
                          : mode == Bcast::Scalar  ? 0
                                                   : (i / inner) % channels;
          gb[j] += adj[i] * (*a_data)[i];
        }
      }
    });
    out.bind_node(ctx.state, out_id);
  }
  return out;
}

template <typename T>
Array<T> relu(const Array<T>& a) {
  Array<T> out(a.shape());
  auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] > T{0} ? av[i] : T{0};

  auto ctx = resolve(a, static_cast<const Array<T>*>(nullptr));
  if (ctx.recording()) {
    int out_id = static_cast<int>(ctx.state->nodes.size());
    int ia = ctx.a_node;
    auto a_data = a.storage();
    ctx.state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      auto& ga = t.adjoint(ia);
      for (std::size_t i = 0; i < adj.size(); ++i)
        if ((*a_data)[i] > T{0}) ga[i] += adj[i];
    });
    out.bind_node(ctx.state, out_id);
  }
  return out;
}

template <typename T>
Array<T> exp(const Array<T>& a) {
  Array<T> out(a.shape());
  auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = std::exp(av[i]);

  auto ctx = resolve(a, static_cast<const Array<T>*>(nullptr));
  if (ctx.recording()) {
    int out_id = static_cast<int>(ctx.state->nodes.size());
    int ia = ctx.a_node;
    auto out_data = out.storage();
    ctx.state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      auto& ga = t.adjoint(ia);
      for (std::size_t i = 0; i < adj.size(); ++i)
        ga[i] += adj[i] * (*out_data)[i];
    });
    out.bind_node(ctx.state, out_id);
  }
  return out;
}

template <typename T>
Array<T> log(const Array<T>& a) {
  auto av = a.data();
  for (T v : av)
    if (!(v > T{0})) throw DomainError("log: non-positive input");

  Array<T> out(a.shape());
  auto ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = std::log(av[i]);

  auto ctx = resolve(a, static_cast<const Array<T>*>(nullptr));
  if (ctx.recording()) {
    int out_id = static_cast<int>(ctx.state->nodes.size());
    int ia = ctx.a_node;
    auto a_data = a.storage();
    ctx.state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      auto& ga = t.adjoint(ia);
      for (std::size_t i = 0; i < adj.size(); ++i)
        ga[i] += adj[i] / (*a_data)[i];
    });
    out.bind_node(ctx.state, out_id);
  }
  return out;
}

// ---- Matmul ---------------------------------------------------------------

template <typename T>
Array<T> matmul(const Array<T>& a, const Array<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: operands must be rank-2");
  std::size_t m = a.shape()[0], k = a.shape()[1];
  std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) throw ShapeError("matmul: inner dimensions disagree");

  Array<T> out({m, n});
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      T ail = av[i * k + l];
      for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += ail * bv[l * n + j];
    }

  auto ctx = resolve(a, &b);
  if (ctx.recording()) {
    int out_id = static_cast<int>(ctx.state->nodes.size());
    int ia = ctx.a_node, ib = ctx.b_node;
    auto a_data = a.storage();
    auto b_data = b.storage();
    ctx.state->emit(out.numel(), [=](detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      if (ia >= 0) {
        auto& ga = t.adjoint(ia);  // adj (m x n) * b^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            T g = adj[i * n + j];
            for (std::size_t l = 0; l < k; ++l)
              ga[i * k + l] += g * (*b_data)[l * n + j];
          }
      }
      if (ib >= 0) {
        auto& gb = t.adjoint(ib);  // a^T * adj
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            T ail = (*a_data)[i * k + l];
            for (std::size_t j = 0; j < n; ++j)
              gb[l * n + j] += ail * adj[i * n + j];
          }
      }
    });
    out.bind_node(ctx.state, out_id);
  }
  return out;
}

// ---- Reductions -------------------------------------------------------------

template <typename T>
Array<T> reduce(Reduce op, const Array<T>& a, std::optional<std::size_t> axis) {
  if (axis && *axis >= a.rank()) throw ShapeError("reduce: axis out of range");

  std::size_t outer = 1, extent = a.numel(), inner = 1;
  std::vector<std::size_t> out_shape;
  if (axis) {
    for (std::size_t i = 0; i < a.rank(); ++i) {
      if (i < *axis)
        outer *= a.shape()[i];
      else if (i > *axis)
        inner *= a.shape()[i];
      else
        extent = a.shape()[i];
      if (i != *axis) out_shape.push_back(a.shape()[i]);
    }
  }
  if (extent == 0) throw DomainError("reduce: empty reduction axis");

  Array<T> out(out_shape);
  auto av = a.data();
  auto ov = out.data();
  std::vector<std::size_t> argmax;
  if (op == Reduce::Max) argmax.resize(out.numel());

  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t oi = o * inner + in;
      if (op == Reduce::Max) {
        std::size_t best = 0;
        T bv = av[(o * extent) * inner + in];
        for (std::size_t j = 1; j < extent; ++j) {
          T v = av[(o * extent + j) * inner + in];
          if (v > bv) {
            bv = v;
            best = j;
          }
        }
        ov[oi] = bv;
        argmax[oi] = best;
      } else {
        T s{0};
        for (std::size_t j = 0; j < extent; ++j)
          s += av[(o * extent + j) * inner + in];
        ov[oi] = op == Reduce::Mean ? s / static_cast<T>(extent) : s;
      }
    }

  auto ctx = resolve(a, static_cast<const Array<T>*>(nullptr));
  if (ctx.recording()) {
    int out_id = static_cast<int>(ctx.state->nodes.size());
    int ia = ctx.a_node;
    ctx.state->emit(out.numel(), [=, argmax = std::move(argmax)](
                                     detail::TapeState<T>& t) {
      const auto& adj = t.adjoint(out_id);
      auto& ga = t.adjoint(ia);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          std::size_t oi = o * inner + in;
          switch (op) {
            case Reduce::Sum:
              for (std::size_t j = 0; j < extent; ++j)
                ga[(o * extent + j) * inner + in] += adj[oi];
              break;
            case Reduce::Mean:
              for (std::size_t j = 0; j < extent; ++j)
                ga[(o * extent + j) * inner + in] +=
                    adj[oi] / static_cast<T>(extent);
              break;
            case Reduce::Max:
              ga[(o * extent + argmax[oi]) * inner + in] += adj[oi];
              break;
          }
        }
    });
    out.bind_node(ctx.state, out_id);
  }
  return out;
}

// ---- Finite differences -----------------------------------------------------

template <typename T>
double finite_diff_check(
    const std::function<Array<T>(Tape<T>&, Array<T>&)>& f, const Array<T>& x,
    T h) {
  Array<T> xa = x.clone();
  Tape<T> tape;
  tape.watch(xa);
  Array<T> y = f(tape, xa);
  if (y.numel() != 1) throw ShapeError("finite_diff_check: f is not scalar");
  if (!std::isfinite(static_cast<double>(y.item())))
    throw DomainError("finite_diff_check: f(x) is not finite");

  std::vector<T> analytic(x.numel(), T{0});
  if (y.tape_state_locked()) {
    tape.backward(y);
    auto g = xa.grad();
    std::copy(g.begin(), g.end(), analytic.begin());
  }

  double max_err = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Array<T> xp = x.clone();
    Array<T> xm = x.clone();
    xp.data()[i] += h;
    xm.data()[i] -= h;
    Tape<T> tp, tm;
    double fp = static_cast<double>(f(tp, xp).item());
    double fm = static_cast<double>(f(tm, xm).item());
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw DomainError("finite_diff_check: perturbed f is not finite");
    double numeric = (fp - fm) / (2.0 * static_cast<double>(h));
    double ai = static_cast<double>(analytic[i]);
    double err = std::abs(ai - numeric) / std::max(1.0, std::abs(ai));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

// ---- Instantiations ---------------------------------------------------------

template class Array<float>;
template class Array<double>;
template class Tape<float>;
template class Tape<double>;
namespace detail {
template struct TapeState<float>;
template struct TapeState<double>;
}  // namespace detail

#define GWAD_INSTANTIATE_OPS(T)                                              \
  template void backward<T>(const Array<T>&);                                \
  template Array<T> add<T>(const Array<T>&, const Array<T>&);                \
  template Array<T> sub<T>(const Array<T>&, const Array<T>&);                \
  template Array<T> mul<T>(const Array<T>&, const Array<T>&);                \
  template Array<T> relu<T>(const Array<T>&);                                \
  template Array<T> exp<T>(const Array<T>&);                                 \
  template Array<T> log<T>(const Array<T>&);                                 \
  template Array<T> matmul<T>(const Array<T>&, const Array<T>&);             \
  template Array<T> reduce<T>(Reduce, const Array<T>&,                       \
                              std::optional<std::size_t>);                   \
  template double finite_diff_check<T>(                                      \
      const std::function<Array<T>(Tape<T>&, Array<T>&)>&, const Array<T>&, \
      T);

GWAD_INSTANTIATE_OPS(float)
GWAD_INSTANTIATE_OPS(double)

#undef GWAD_INSTANTIATE_OPS

}  // namespace gwad

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gwad/errors.hpp"

namespace gwad {

// Dense row-major n-d array of reals with optional participation in a
// reverse-mode gradient tape. Arrays are cheap handles: copies share the
// underlying buffer, clone() makes a detached deep copy. A rank-0 array is a
// scalar (one element).
//
// The tape is define-by-run: ops record a node when at least one operand is
// watched on a live tape, and record nothing otherwise. An array that
// outlives its tape silently degrades to a constant, so parameters can be
// reused across training steps and eval passes without explicit detaching.

namespace detail {
template <typename T>
struct TapeState;
}

template <typename T>
class Tape;

template <typename T>
class Array {
 public:
  Array() = default;
  explicit Array(std::vector<std::size_t> shape);
  Array(std::vector<std::size_t> shape, std::vector<T> values);

  static Array scalar(T value);
  static Array full(std::vector<std::size_t> shape, T value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }

  std::span<T> data();
  std::span<const T> data() const;

  // Value of a one-element array.
  T item() const;

  // Deep copy with no tape association and no gradient.
  Array clone() const;

  // Gradient buffer. Allocated by Tape::watch; accumulates across backward
  // passes until zero_grad().
  bool has_grad() const { return grad_ != nullptr; }
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();

  bool all_finite() const;

 private:
  friend class Tape<T>;
  friend struct detail::TapeState<T>;

  std::vector<std::size_t> shape_;
  std::shared_ptr<std::vector<T>> data_;
  std::shared_ptr<std::vector<T>> grad_;

  // Tape association; stale once the tape is cleared or destroyed.
  std::weak_ptr<detail::TapeState<T>> tape_;
  std::uint64_t generation_ = 0;
  int node_ = -1;

 public:
  // Op plumbing; not part of the user-facing surface.
  std::shared_ptr<std::vector<T>> storage() const { return data_; }
  std::shared_ptr<std::vector<T>> grad_storage() const { return grad_; }
  // Live tape state and node id, or {nullptr, -1} when detached/stale.
  std::pair<detail::TapeState<T>*, int> tape_node() const;
  std::shared_ptr<detail::TapeState<T>> tape_state_locked() const;
  void bind_node(const std::shared_ptr<detail::TapeState<T>>& state, int node);
};

namespace detail {

template <typename T>
struct TapeState {
  struct Node {
    std::size_t numel = 0;
    // Reads this node's adjoint and accumulates into its inputs' adjoints.
    // Null for leaves.
    std::function<void(TapeState&)> backward_fn;
    // Leaves additionally own a persistent gradient buffer.
    std::shared_ptr<std::vector<T>> leaf_grad;
    std::vector<T> adjoint;
  };

  std::vector<Node> nodes;
  std::uint64_t generation = 0;

  int emit(std::size_t numel, std::function<void(TapeState&)> fn);
  std::vector<T>& adjoint(int node) { return nodes[static_cast<std::size_t>(node)].adjoint; }
};

}  // namespace detail

// Records the forward computation; rebuilt (or cleared) for every pass.
template <typename T>
class Tape {
 public:
  Tape() : state_(std::make_shared<detail::TapeState<T>>()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Marks `leaf` as a differentiable input of this tape, allocating its
  // gradient buffer on first use.
  void watch(Array<T>& leaf);

  // Seeds d(output)/d(output) = 1 and traverses nodes in reverse insertion
  // order. Leaf gradients accumulate; call again without zero_grad to add.
  void backward(const Array<T>& output);

  // Drops every node (and the activations they kept alive).
  void clear();

  std::size_t node_count() const { return state_->nodes.size(); }

  std::shared_ptr<detail::TapeState<T>> state() const { return state_; }

 private:
  std::shared_ptr<detail::TapeState<T>> state_;
};

// Convenience: backward through the tape `output` was recorded on.
template <typename T>
void backward(const Array<T>& output);

// ---- Primitive operations ----------------------------------------------
//
// Binary ops accept equal shapes, a scalar right operand, or a rank-1 right
// operand whose length matches the channel extent (axis 1) of a rank >= 2
// left operand. Anything else is a ShapeError. The result always takes the
// left operand's shape.

template <typename T>
Array<T> add(const Array<T>& a, const Array<T>& b);
template <typename T>
Array<T> sub(const Array<T>& a, const Array<T>& b);
template <typename T>
Array<T> mul(const Array<T>& a, const Array<T>& b);

template <typename T>
Array<T> relu(const Array<T>& a);
template <typename T>
Array<T> exp(const Array<T>& a);
// Throws DomainError if any element is <= 0.
template <typename T>
Array<T> log(const Array<T>& a);

// Standard matrix product, rank-2 operands only.
template <typename T>
Array<T> matmul(const Array<T>& a, const Array<T>& b);

enum class Reduce { Sum, Mean, Max };

// Without an axis, reduces everything to a scalar. With an axis, the result
// drops that axis. Max routes its gradient to the lowest-index maximum.
template <typename T>
Array<T> reduce(Reduce op, const Array<T>& a,
                std::optional<std::size_t> axis = std::nullopt);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for the scalar function f at x. f receives a tape and the point; it must
// not call watch itself. Intended for T = double.
template <typename T>
double finite_diff_check(
    const std::function<Array<T>(Tape<T>&, Array<T>&)>& f, const Array<T>& x,
    T h);

}  // namespace gwad

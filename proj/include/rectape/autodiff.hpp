#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rectape/rng.hpp"
#include "rectape/tensor.hpp"

namespace rectape::ad {

enum class OpKind : std::uint8_t {
  kLeaf,
  kConstant,
  kMatmul,
  kEmbeddingLookup,
  kAdd,
  kSub,
  kMul,
  kDot,
  kSum,
  kMean,
  kSigmoid,
  kTanh,
  kRelu,
  kSoftmaxRows,
  kConcat,
  kReshape,
  kConvH,
  kMaxOverTime,
  kDropout,
  kSqL2Dist,
  // Extensions used by the model losses.
  kTranspose,
  kLogSigmoid,
  kAddRow,
  kNeg,
};

std::string_view op_name(OpKind kind);
/// Parses an op name such as "matmul"; throws rectape::Error for unknown names.
OpKind op_from_name(std::string_view name);

/// Per-op attributes. Only the fields relevant to the op are read.
struct OpAttrs {
  int axis = -1;                        // sum, mean, concat (-1: all / last axis)
  std::vector<std::uint32_t> indices;   // embedding_lookup
  Shape shape;                          // reshape
  std::size_t height = 0;               // conv_h
  double keep_prob = 1.0;               // dropout
  bool training = true;                 // dropout
  Rng* rng = nullptr;                   // dropout (required when training)
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Result of a backward pass. Nodes not reachable from the loss report zeros.
class Gradients {
 public:
  Tensor operator[](Var v) const;
  bool reached(Var v) const;

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
  std::vector<Shape> shapes_;
};

/// Records a computation as a DAG in creation (= topological) order.
/// A tape is meant to be built, differentiated once, and discarded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Input that never receives a gradient.
  Var constant(Tensor value);

  Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});
  Var apply(OpKind kind, std::initializer_list<Var> inputs, const OpAttrs& attrs = {}) {
    return apply(kind, std::span<const Var>(inputs.begin(), inputs.size()), attrs);
  }

  /// Reverse-mode accumulation from a single-element loss.
  Gradients backward(Var loss) const;

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    int axis = -1;
    std::size_t height = 0;
    std::vector<std::uint32_t> index;  // lookup indices or argmax positions
    std::vector<double> aux;           // dropout mask
  };

  Var push(Node node);
  void backprop(const Node& node, const Tensor& grad, std::vector<std::optional<Tensor>>& grads) const;

  std::deque<Node> nodes_;
};

Var matmul(Var a, Var b);
Var embedding_lookup(Var table, std::vector<std::uint32_t> indices);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Row-wise inner product: [n x k] . [n x k] -> [n x 1]; rank-1 inputs give [1].
Var dot(Var a, Var b);
/// axis -1 reduces everything to [1]; axis 0 / 1 reduce a matrix's rows / columns.
Var sum(Var x, int axis = -1);
Var mean(Var x, int axis = -1);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var softmax_rows(Var x);
Var concat(std::span<const Var> parts, int axis = -1);
Var concat(std::initializer_list<Var> parts, int axis = -1);
Var reshape(Var x, Shape shape);
/// Valid convolution of an [L x d] signal with filters [n_f x height*d]: [L-height+1 x n_f].
Var conv_h(Var signal, Var filters, std::size_t height);
/// Column-wise max over rows: [T x n] -> [1 x n].
Var max_over_time(Var x);
Var dropout(Var x, double keep_prob, Rng& rng, bool training);
/// Row-wise squared Euclidean distance: [n x k], [n x k] -> [n x 1].
Var sq_l2_dist(Var a, Var b);
Var transpose(Var x);
Var log_sigmoid(Var x);
/// Adds a [m] or [1 x m] bias to every row of an [n x m] matrix.
Var add_row(Var x, Var bias);
Var neg(Var x);

Var scale(Var x, double factor);
Var square(Var x);
/// Sum of squares of all elements.
Var sum_squares(Var x);

}  // namespace rectape::ad

#include "rectape/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include <fmt/format.h>

#include "rectape/error.hpp"

namespace rectape::ad {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 24> kOpNames{{
    {OpKind::kLeaf, "leaf"},
    {OpKind::kConstant, "constant"},
    {OpKind::kMatmul, "matmul"},
    {OpKind::kEmbeddingLookup, "embedding_lookup"},
    {OpKind::kAdd, "add"},
    {OpKind::kSub, "sub"},
    {OpKind::kMul, "mul"},
    {OpKind::kDot, "dot"},
    {OpKind::kSum, "sum"},
    {OpKind::kMean, "mean"},
    {OpKind::kSigmoid, "sigmoid"},
    {OpKind::kTanh, "tanh"},
    {OpKind::kRelu, "relu"},
    {OpKind::kSoftmaxRows, "softmax_rows"},
    {OpKind::kConcat, "concat"},
    {OpKind::kReshape, "reshape"},
    {OpKind::kConvH, "conv_h"},
    {OpKind::kMaxOverTime, "max_over_time"},
    {OpKind::kDropout, "dropout"},
    {OpKind::kSqL2Dist, "sq_l2_dist"},
    {OpKind::kTranspose, "transpose"},
    {OpKind::kLogSigmoid, "log_sigmoid"},
    {OpKind::kAddRow, "add_row"},
    {OpKind::kNeg, "neg"},
}};

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

void expect(bool ok, std::string_view op, const std::string& expected, const Shape& actual) {
  if (!ok) throw ShapeError(std::string(op), expected, shape_string(actual));
}

void expect_arity(OpKind kind, std::size_t got, std::size_t want) {
  if (got != want) {
    throw Error(fmt::format("{}: expected {} inputs, got {}", op_name(kind), want, got));
  }
}

bool is_matrix(const Tensor& t) { return t.rank() == 2; }

/// Shape rule for elementwise binary ops: equal shapes or one side has one element.
Shape broadcast_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  // Two one-element operands keep the higher-rank shape ([1 x 1] over [1]).
  if (a.numel() == 1 && b.numel() == 1) return a.rank() >= b.rank() ? a.shape() : b.shape();
  if (a.numel() == 1) return b.shape();
  if (b.numel() == 1) return a.shape();
  throw ShapeError(std::string(op), shape_string(a.shape()), shape_string(b.shape()));
}

double at_broadcast(const Tensor& t, std::size_t i) { return t.numel() == 1 ? t[0] : t[i]; }

Tensor& ensure(std::vector<std::optional<Tensor>>& grads, std::size_t id, const Shape& shape) {
  auto& slot = grads[id];
  if (!slot) slot.emplace(shape, 0.0);
  return *slot;
}

/// Accumulates a gradient for a (possibly broadcast) binary-op operand.
void accumulate_broadcast(Tensor& target, std::span<const double> contribution) {
  if (target.numel() == contribution.size()) {
    for (std::size_t i = 0; i < contribution.size(); ++i) target[i] += contribution[i];
  } else {
    double s = 0.0;
    for (double c : contribution) s += c;
    target[0] += s;
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

OpKind op_from_name(std::string_view name) {
  for (const auto& [k, n] : kOpNames) {
    if (n == name) return k;
  }
  throw Error(fmt::format("unknown op kind '{}'", name));
}

const Tensor& Var::value() const {
  if (!tape_) throw Error("use of an unbound Var");
  return tape_->value(id_);
}

Tensor Gradients::operator[](Var v) const {
  if (v.id() < grads_.size() && grads_[v.id()]) return *grads_[v.id()];
  return Tensor(shapes_.at(v.id()), 0.0);
}

bool Gradients::reached(Var v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  for (const Var& v : inputs) {
    if (v.tape() != this) throw Error(fmt::format("{}: input belongs to another tape", op_name(kind)));
  }
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i].id()].value; };
  const std::string_view name = op_name(kind);

  Node node;
  node.kind = kind;
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }
  node.axis = attrs.axis;

  switch (kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      throw Error("leaf and constant nodes are created with Tape::leaf / Tape::constant");

    case OpKind::kMatmul: {
      expect_arity(kind, inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      expect(is_matrix(a), name, "rank-2 left operand", a.shape());
      expect(is_matrix(b) && b.dim(0) == a.dim(1), name,
             fmt::format("[{}xp] right operand", a.dim(1)), b.shape());
      const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
      Tensor out(Shape{m, p}, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * p;
        for (std::size_t k = 0; k < n; ++k) {
          const double aik = a[i * n + k];
          if (aik == 0.0) continue;
          const double* brow = b.data() + k * p;
          for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
      }
      node.value = std::move(out);
      break;
    }

    case OpKind::kEmbeddingLookup: {
      expect_arity(kind, inputs.size(), 1);
      const Tensor& table = in(0);
      expect(is_matrix(table), name, "rank-2 table", table.shape());
      if (attrs.indices.empty()) throw Error("embedding_lookup: empty index list");
      const std::size_t k = table.dim(1);
      Tensor out(Shape{attrs.indices.size(), k});
      for (std::size_t r = 0; r < attrs.indices.size(); ++r) {
        const auto idx = attrs.indices[r];
        if (idx >= table.dim(0)) {
          throw Error(fmt::format("embedding_lookup: index {} out of range for table of {} rows", idx,
                                  table.dim(0)));
        }
        std::copy_n(table.data() + idx * k, k, out.data() + r * k);
      }
      node.index = attrs.indices;
      node.value = std::move(out);
      break;
    }

    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      expect_arity(kind, inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor out(broadcast_shape(name, a, b));
      for (std::size_t i = 0; i < out.numel(); ++i) {
        const double x = at_broadcast(a, i), y = at_broadcast(b, i);
        out[i] = kind == OpKind::kAdd ? x + y : kind == OpKind::kSub ? x - y : x * y;
      }
      node.value = std::move(out);
      break;
    }

    case OpKind::kDot:
    case OpKind::kSqL2Dist: {
      expect_arity(kind, inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      expect(a.shape() == b.shape(), name, shape_string(a.shape()), b.shape());
      expect(a.rank() <= 2, name, "rank 1 or 2", a.shape());
      const std::size_t rows = a.rows(), k = a.cols();
      Tensor out(a.rank() == 2 ? Shape{rows, 1} : Shape{1});
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
          const double x = a[r * k + c], y = b[r * k + c];
          s += kind == OpKind::kDot ? x * y : (x - y) * (x - y);
        }
        out[r] = s;
      }
      node.value = std::move(out);
      break;
    }

    case OpKind::kSum:
    case OpKind::kMean: {
      expect_arity(kind, inputs.size(), 1);
      const Tensor& x = in(0);
      const bool is_mean = kind == OpKind::kMean;
      if (attrs.axis == -1) {
        double s = 0.0;
        for (double v : x.values()) s += v;
        node.value = Tensor::scalar(is_mean ? s / static_cast<double>(x.numel()) : s);
      } else {
        expect(is_matrix(x) && (attrs.axis == 0 || attrs.axis == 1), name,
               "rank-2 input with axis 0 or 1", x.shape());
        const std::size_t rows = x.dim(0), cols = x.dim(1);
        if (attrs.axis == 0) {
          Tensor out(Shape{1, cols}, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) out[c] += x[r * cols + c];
          if (is_mean) for (auto& v : out.values()) v /= static_cast<double>(rows);
          node.value = std::move(out);
        } else {
          Tensor out(Shape{rows, 1}, 0.0);
          for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c];
            out[r] = is_mean ? s / static_cast<double>(cols) : s;
          }
          node.value = std::move(out);
        }
      }
      break;
    }

    case OpKind::kSigmoid:
    case OpKind::kTanh:
    case OpKind::kRelu:
    case OpKind::kLogSigmoid:
    case OpKind::kNeg: {
      expect_arity(kind, inputs.size(), 1);
      Tensor out = in(0);
      for (auto& v : out.values()) {
        switch (kind) {
          case OpKind::kSigmoid: v = stable_sigmoid(v); break;
          case OpKind::kTanh: v = std::tanh(v); break;
          case OpKind::kRelu: v = v > 0.0 ? v : 0.0; break;
          case OpKind::kLogSigmoid: v = stable_log_sigmoid(v); break;
          default: v = -v; break;
        }
      }
      node.value = std::move(out);
      break;
    }

    case OpKind::kSoftmaxRows: {
      expect_arity(kind, inputs.size(), 1);
      Tensor out = in(0);
      expect(out.rank() <= 2, name, "rank 1 or 2", out.shape());
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (auto& v : row) {
          v = std::exp(v - mx);
          z += v;
        }
        for (auto& v : row) v /= z;
      }
      node.value = std::move(out);
      break;
    }

    case OpKind::kConcat: {
      if (inputs.empty()) throw Error("concat: no inputs");
      const Tensor& first = in(0);
      const int axis = attrs.axis == -1 ? static_cast<int>(first.rank()) - 1 : attrs.axis;
      expect(first.rank() <= 2 && axis >= 0 && axis < static_cast<int>(first.rank()), name,
             "rank 1 or 2 inputs with a valid axis", first.shape());
      node.axis = axis;
      if (first.rank() == 1) {
        std::vector<double> values;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          expect(in(i).rank() == 1, name, "rank-1 inputs", in(i).shape());
          values.insert(values.end(), in(i).values().begin(), in(i).values().end());
        }
        node.value = Tensor::vector(std::move(values));
      } else if (axis == 0) {
        std::size_t rows = 0;
        std::vector<double> values;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          expect(is_matrix(in(i)) && in(i).dim(1) == first.dim(1), name,
                 fmt::format("[r x {}]", first.dim(1)), in(i).shape());
          rows += in(i).dim(0);
          values.insert(values.end(), in(i).values().begin(), in(i).values().end());
        }
        node.value = Tensor(Shape{rows, first.dim(1)}, std::move(values));
      } else {
        const std::size_t rows = first.dim(0);
        std::size_t cols = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          expect(is_matrix(in(i)) && in(i).dim(0) == rows, name, fmt::format("[{} x c]", rows),
                 in(i).shape());
          cols += in(i).dim(1);
        }
        Tensor out(Shape{rows, cols});
        std::size_t offset = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          const Tensor& part = in(i);
          const std::size_t pc = part.dim(1);
          for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(part.data() + r * pc, pc, out.data() + r * cols + offset);
          offset += pc;
        }
        node.value = std::move(out);
      }
      break;
    }

    case OpKind::kReshape: {
      expect_arity(kind, inputs.size(), 1);
      node.value = in(0).reshaped(attrs.shape);
      break;
    }

    case OpKind::kConvH: {
      expect_arity(kind, inputs.size(), 2);
      const Tensor& x = in(0);
      const Tensor& f = in(1);
      const std::size_t h = attrs.height;
      expect(is_matrix(x) && h >= 1 && x.dim(0) >= h, name,
             fmt::format("[L x d] signal with L >= {}", h), x.shape());
      const std::size_t length = x.dim(0), d = x.dim(1);
      expect(is_matrix(f) && f.dim(1) == h * d, name, fmt::format("[n_f x {}] filters", h * d),
             f.shape());
      const std::size_t out_len = length - h + 1, nf = f.dim(0), width = h * d;
      Tensor out(Shape{out_len, nf});
      for (std::size_t t = 0; t < out_len; ++t) {
        const double* window = x.data() + t * d;
        for (std::size_t j = 0; j < nf; ++j) {
          const double* filt = f.data() + j * width;
          double s = 0.0;
          for (std::size_t e = 0; e < width; ++e) s += window[e] * filt[e];
          out[t * nf + j] = s;
        }
      }
      node.height = h;
      node.value = std::move(out);
      break;
    }

    case OpKind::kMaxOverTime: {
      expect_arity(kind, inputs.size(), 1);
      const Tensor& x = in(0);
      expect(is_matrix(x), name, "[T x n]", x.shape());
      const std::size_t rows = x.dim(0), cols = x.dim(1);
      Tensor out(Shape{1, cols});
      node.index.assign(cols, 0);
      for (std::size_t c = 0; c < cols; ++c) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < rows; ++r) {
          if (x[r * cols + c] > x[best * cols + c]) best = r;
        }
        node.index[c] = static_cast<std::uint32_t>(best);
        out[c] = x[best * cols + c];
      }
      node.value = std::move(out);
      break;
    }

    case OpKind::kDropout: {
      expect_arity(kind, inputs.size(), 1);
      if (!(attrs.keep_prob > 0.0 && attrs.keep_prob <= 1.0)) {
        throw Error(fmt::format("dropout: keep probability {} outside (0, 1]", attrs.keep_prob));
      }
      Tensor out = in(0);
      if (attrs.training && attrs.keep_prob < 1.0) {
        if (!attrs.rng) throw Error("dropout: training mode requires an Rng");
        node.aux.resize(out.numel());
        for (std::size_t i = 0; i < out.numel(); ++i) {
          node.aux[i] = attrs.rng->bernoulli(attrs.keep_prob) ? 1.0 / attrs.keep_prob : 0.0;
          out[i] *= node.aux[i];
        }
      }
      node.value = std::move(out);
      break;
    }

    case OpKind::kTranspose: {
      expect_arity(kind, inputs.size(), 1);
      const Tensor& x = in(0);
      expect(is_matrix(x), name, "rank-2 input", x.shape());
      const std::size_t rows = x.dim(0), cols = x.dim(1);
      Tensor out(Shape{cols, rows});
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = x[r * cols + c];
      node.value = std::move(out);
      break;
    }

    case OpKind::kAddRow: {
      expect_arity(kind, inputs.size(), 2);
      const Tensor& x = in(0);
      const Tensor& b = in(1);
      expect(is_matrix(x), name, "rank-2 input", x.shape());
      expect(b.numel() == x.dim(1) && b.rows() == 1, name, fmt::format("[{}] bias", x.dim(1)),
             b.shape());
      Tensor out = x;
      const std::size_t cols = x.dim(1);
      for (std::size_t r = 0; r < x.dim(0); ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
      node.value = std::move(out);
      break;
    }
  }
  return push(std::move(node));
}

Gradients Tape::backward(Var loss) const {
  if (loss.tape() != this) throw Error("backward: loss belongs to another tape");
  const Tensor& lv = nodes_[loss.id()].value;
  if (lv.numel() != 1) {
    throw Error(fmt::format("backward: loss must be a scalar, got shape {}", shape_string(lv.shape())));
  }
  Gradients result;
  result.shapes_.reserve(nodes_.size());
  for (const Node& n : nodes_) result.shapes_.push_back(n.value.shape());
  result.grads_.resize(nodes_.size());
  result.grads_[loss.id()].emplace(lv.shape(), 1.0);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!result.grads_[id] || !node.requires_grad) continue;
    backprop(node, *result.grads_[id], result.grads_);
  }
  return result;
}

void Tape::backprop(const Node& node, const Tensor& g,
                    std::vector<std::optional<Tensor>>& grads) const {
  auto wants = [&](std::size_t i) { return nodes_[node.inputs[i]].requires_grad; };
  auto input = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  auto target = [&](std::size_t i) -> Tensor& {
    return ensure(grads, node.inputs[i], input(i).shape());
  };

  switch (node.kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      break;

    case OpKind::kMatmul: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
      if (wants(0)) {
        Tensor& ga = target(0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) s += g[i * p + j] * b[k * p + j];
            ga[i * n + k] += s;
          }
      }
      if (wants(1)) {
        Tensor& gb = target(1);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            const double aik = a[i * n + k];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j) gb[k * p + j] += aik * g[i * p + j];
          }
      }
      break;
    }

    case OpKind::kEmbeddingLookup: {
      if (!wants(0)) break;
      Tensor& gt = target(0);
      const std::size_t k = gt.dim(1);
      for (std::size_t r = 0; r < node.index.size(); ++r) {
        double* dst = gt.data() + node.index[r] * k;
        const double* src = g.data() + r * k;
        for (std::size_t c = 0; c < k; ++c) dst[c] += src[c];
      }
      break;
    }

    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      std::vector<double> contribution(g.numel());
      if (wants(0)) {
        for (std::size_t i = 0; i < g.numel(); ++i)
          contribution[i] = node.kind == OpKind::kMul ? g[i] * at_broadcast(b, i) : g[i];
        accumulate_broadcast(target(0), contribution);
      }
      if (wants(1)) {
        for (std::size_t i = 0; i < g.numel(); ++i) {
          contribution[i] = node.kind == OpKind::kMul   ? g[i] * at_broadcast(a, i)
                            : node.kind == OpKind::kSub ? -g[i]
                                                        : g[i];
        }
        accumulate_broadcast(target(1), contribution);
      }
      break;
    }

    case OpKind::kDot:
    case OpKind::kSqL2Dist: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      const std::size_t rows = a.rows(), k = a.cols();
      const bool is_dot = node.kind == OpKind::kDot;
      if (wants(0)) {
        Tensor& ga = target(0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < k; ++c) {
            const std::size_t i = r * k + c;
            ga[i] += g[r] * (is_dot ? b[i] : 2.0 * (a[i] - b[i]));
          }
      }
      if (wants(1)) {
        Tensor& gb = target(1);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < k; ++c) {
            const std::size_t i = r * k + c;
            gb[i] += g[r] * (is_dot ? a[i] : -2.0 * (a[i] - b[i]));
          }
      }
      break;
    }

    case OpKind::kSum:
    case OpKind::kMean: {
      if (!wants(0)) break;
      Tensor& gx = target(0);
      const Tensor& x = input(0);
      const bool is_mean = node.kind == OpKind::kMean;
      if (node.axis == -1) {
        const double v = is_mean ? g[0] / static_cast<double>(x.numel()) : g[0];
        for (auto& e : gx.values()) e += v;
      } else {
        const std::size_t rows = x.dim(0), cols = x.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            double v = node.axis == 0 ? g[c] : g[r];
            if (is_mean) v /= static_cast<double>(node.axis == 0 ? rows : cols);
            gx[r * cols + c] += v;
          }
      }
      break;
    }

    case OpKind::kSigmoid:
    case OpKind::kTanh:
    case OpKind::kRelu:
    case OpKind::kLogSigmoid:
    case OpKind::kNeg: {
      if (!wants(0)) break;
      Tensor& gx = target(0);
      const Tensor& x = input(0);
      const Tensor& y = node.value;
      for (std::size_t i = 0; i < g.numel(); ++i) {
        double d = 0.0;
        switch (node.kind) {
          case OpKind::kSigmoid: d = y[i] * (1.0 - y[i]); break;
          case OpKind::kTanh: d = 1.0 - y[i] * y[i]; break;
          case OpKind::kRelu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
          case OpKind::kLogSigmoid: d = stable_sigmoid(-x[i]); break;
          default: d = -1.0; break;
        }
        gx[i] += g[i] * d;
      }
      break;
    }

    case OpKind::kSoftmaxRows: {
      if (!wants(0)) break;
      Tensor& gx = target(0);
      const Tensor& y = node.value;
      const std::size_t rows = y.rows(), cols = y.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += g[r * cols + c] * y[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          gx[i] += y[i] * (g[i] - s);
        }
      }
      break;
    }

    case OpKind::kConcat: {
      const Tensor& out = node.value;
      if (out.rank() == 1 || node.axis == 0) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
          const std::size_t n = input(i).numel();
          if (wants(i)) {
            Tensor& gi = target(i);
            for (std::size_t e = 0; e < n; ++e) gi[e] += g[offset + e];
          }
          offset += n;
        }
      } else {
        const std::size_t rows = out.dim(0), cols = out.dim(1);
        std::size_t offset = 0;
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
          const std::size_t pc = input(i).dim(1);
          if (wants(i)) {
            Tensor& gi = target(i);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < pc; ++c) gi[r * pc + c] += g[r * cols + offset + c];
          }
          offset += pc;
        }
      }
      break;
    }

    case OpKind::kReshape: {
      if (!wants(0)) break;
      Tensor& gx = target(0);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
      break;
    }

    case OpKind::kConvH: {
      const Tensor& x = input(0);
      const Tensor& f = input(1);
      const std::size_t d = x.dim(1), nf = f.dim(0), width = node.height * d;
      const std::size_t out_len = node.value.dim(0);
      Tensor* gx = wants(0) ? &target(0) : nullptr;
      Tensor* gf = wants(1) ? &target(1) : nullptr;
      for (std::size_t t = 0; t < out_len; ++t) {
        for (std::size_t j = 0; j < nf; ++j) {
          const double go = g[t * nf + j];
          if (go == 0.0) continue;
          if (gx) {
            double* dst = gx->data() + t * d;
            const double* filt = f.data() + j * width;
            for (std::size_t e = 0; e < width; ++e) dst[e] += go * filt[e];
          }
          if (gf) {
            double* dst = gf->data() + j * width;
            const double* window = x.data() + t * d;
            for (std::size_t e = 0; e < width; ++e) dst[e] += go * window[e];
          }
        }
      }
      break;
    }

    case OpKind::kMaxOverTime: {
      if (!wants(0)) break;
      Tensor& gx = target(0);
      const std::size_t cols = node.value.dim(1);
      for (std::size_t c = 0; c < cols; ++c) gx[node.index[c] * cols + c] += g[c];
      break;
    }

    case OpKind::kDropout: {
      if (!wants(0)) break;
      Tensor& gx = target(0);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += node.aux.empty() ? g[i] : g[i] * node.aux[i];
      break;
    }

    case OpKind::kTranspose: {
      if (!wants(0)) break;
      Tensor& gx = target(0);
      const std::size_t rows = gx.dim(0), cols = gx.dim(1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c * rows + r];
      break;
    }

    case OpKind::kAddRow: {
      const std::size_t rows = g.dim(0), cols = g.dim(1);
      if (wants(0)) {
        Tensor& gx = target(0);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
      }
      if (wants(1)) {
        Tensor& gb = target(1);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
      break;
    }
  }
}

Var matmul(Var a, Var b) { return a.tape()->apply(OpKind::kMatmul, {a, b}); }

Var embedding_lookup(Var table, std::vector<std::uint32_t> indices) {
  OpAttrs attrs;
  attrs.indices = std::move(indices);
  return table.tape()->apply(OpKind::kEmbeddingLookup, {table}, attrs);
}

Var add(Var a, Var b) { return a.tape()->apply(OpKind::kAdd, {a, b}); }
Var sub(Var a, Var b) { return a.tape()->apply(OpKind::kSub, {a, b}); }
Var mul(Var a, Var b) { return a.tape()->apply(OpKind::kMul, {a, b}); }
Var dot(Var a, Var b) { return a.tape()->apply(OpKind::kDot, {a, b}); }

Var sum(Var x, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return x.tape()->apply(OpKind::kSum, {x}, attrs);
}

Var mean(Var x, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return x.tape()->apply(OpKind::kMean, {x}, attrs);
}

Var sigmoid(Var x) { return x.tape()->apply(OpKind::kSigmoid, {x}); }
Var tanh(Var x) { return x.tape()->apply(OpKind::kTanh, {x}); }
Var relu(Var x) { return x.tape()->apply(OpKind::kRelu, {x}); }
Var softmax_rows(Var x) { return x.tape()->apply(OpKind::kSoftmaxRows, {x}); }

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw Error("concat: no inputs");
  OpAttrs attrs;
  attrs.axis = axis;
  return parts.front().tape()->apply(OpKind::kConcat, parts, attrs);
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var reshape(Var x, Shape shape) {
  OpAttrs attrs;
  attrs.shape = std::move(shape);
  return x.tape()->apply(OpKind::kReshape, {x}, attrs);
}

Var conv_h(Var signal, Var filters, std::size_t height) {
  OpAttrs attrs;
  attrs.height = height;
  return signal.tape()->apply(OpKind::kConvH, {signal, filters}, attrs);
}

Var max_over_time(Var x) { return x.tape()->apply(OpKind::kMaxOverTime, {x}); }

Var dropout(Var x, double keep_prob, Rng& rng, bool training) {
  OpAttrs attrs;
  attrs.keep_prob = keep_prob;
  attrs.rng = &rng;
  attrs.training = training;
  return x.tape()->apply(OpKind::kDropout, {x}, attrs);
}

Var sq_l2_dist(Var a, Var b) { return a.tape()->apply(OpKind::kSqL2Dist, {a, b}); }
Var transpose(Var x) { return x.tape()->apply(OpKind::kTranspose, {x}); }
Var log_sigmoid(Var x) { return x.tape()->apply(OpKind::kLogSigmoid, {x}); }
Var add_row(Var x, Var bias) { return x.tape()->apply(OpKind::kAddRow, {x, bias}); }
Var neg(Var x) { return x.tape()->apply(OpKind::kNeg, {x}); }

Var scale(Var x, double factor) { return mul(x, x.tape()->constant(Tensor::scalar(factor))); }
Var square(Var x) { return mul(x, x); }
Var sum_squares(Var x) { return sum(square(x)); }

}  // namespace rectape::ad

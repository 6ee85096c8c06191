#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sactext/nn/parameters.hpp"

namespace sactext::nn {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode record of vector-valued primitives.
///
/// Nodes that depend on neither a tracked parameter nor a differentiable input are stored
/// without a backward rule, so constant subgraphs (target networks, frozen heads) cost only
/// their forward pass. Parameters are tracked only when they belong to the store passed at
/// construction; reading any other store is treated as reading constants.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  /// Forward-only: nothing is tracked.
  Tape() = default;
  /// Track `store`; gradients accumulate into its grad slots.
  explicit Tape(ParameterStore& store) : trainable_(&store), owner_(&store) {}
  /// Track `store`; gradients accumulate into `sink` (one per worker thread).
  Tape(const ParameterStore& store, GradientBuffer& sink) : trainable_(&store), sink_(&sink) {}

  Var constant(std::vector<double> value);
  Var scalar(double value) { return constant({value}); }

  const std::vector<double>& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  double item(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() target with respect to `v` (zeros if unreachable).
  const std::vector<double>& grad(Var v) const;

  /// Accumulate d(loss)/d(parameter) into the gradient slots. `loss` must be a scalar.
  void backward(Var loss);

  // Primitive-author interface.
  bool tracks(const ParameterStore& store) const { return trainable_ == &store; }
  /// Id the next pushed node will get, so backward rules can capture their own output.
  Var next() const { return Var{static_cast<int>(nodes_.size())}; }
  Var push(std::vector<double> value, bool needs_grad, BackwardFn backward);
  std::vector<double>& grad_mut(Var v) { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  std::vector<double>& param_grad(ParamId id);

 private:
  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  const ParameterStore* trainable_ = nullptr;
  GradientBuffer* sink_ = nullptr;
  ParameterStore* owner_ = nullptr;
  std::vector<Node> nodes_;
};

// Linear algebra. `w` has shape {out, in}; `b` has shape {out}.
Var dense(Tape& tape, const ParameterStore& store, ParamId w, std::optional<ParamId> b, Var x);
/// Layer registered as "<layer>.w" with optional "<layer>.b".
Var dense(Tape& tape, const ParameterStore& store, std::string_view layer, Var x);
/// W[:, offset : offset + |x|] * x (+ b). Lets a layer over a concatenated input be evaluated
/// block by block, reusing blocks that are shared across candidates.
Var dense_slice(Tape& tape, const ParameterStore& store, ParamId w, std::size_t offset, Var x,
                std::optional<ParamId> b = std::nullopt);
/// Mean of embedding rows; a zero vector when `ids` is empty.
Var embed_mean(Tape& tape, const ParameterStore& store, ParamId table, std::span<const int> ids);

// Elementwise.
Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double c);
Var add_scalar(Tape& tape, Var a, double c);
Var relu(Tape& tape, Var a);
Var exp(Tape& tape, Var a);
Var square(Tape& tape, Var a);
/// Elementwise clamp; gradient passes only where lo < a < hi.
Var clamp(Tape& tape, Var a, double lo, double hi);
/// Elementwise minimum; ties send the gradient to `a`.
Var minimum(Tape& tape, Var a, Var b);
Var detach(Tape& tape, Var a);

// Reductions and reshaping.
Var log_softmax(Tape& tape, Var logits);
Var pick(Tape& tape, Var a, std::size_t index);
Var sum(Tape& tape, Var a);
Var dot(Tape& tape, Var a, Var b);
Var concat(Tape& tape, std::span<const Var> parts);
/// Sum of scalar nodes.
Var sum_scalars(Tape& tape, std::span<const Var> scalars);

}  // namespace sactext::nn

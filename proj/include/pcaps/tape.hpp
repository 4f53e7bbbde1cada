#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>

#include "pcaps/tensor.hpp"

namespace pcaps {

class ParameterStore;
struct ParameterEntry;
class Tape;

/// Precision of the nearest/largest-response searches inside pooled layers.
/// Values and gradients are always evaluated in 64-bit; only the selection of
/// the winning row may run in 32-bit for speed.
enum class SearchPrecision { kFloat64, kFloat32 };

enum class BnMode { kTrain, kEval };

struct TapeOptions {
  // Fail with NonFiniteError as soon as any op produces NaN/Inf.
  bool checked = false;
  SearchPrecision search = SearchPrecision::kFloat64;
  // Record a hash of every discrete choice (relu masks, argmax, nearest
  // neighbours) so finite-difference checks can detect kink crossings.
  bool track_branches = false;
  // Train-mode batchnorm updates running statistics in the store.
  bool update_running_stats = true;
  // Upper bound on worker threads for the heavy pooled search.
  int threads = 1;
};

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse id
/// order is a valid topological order for backpropagation.
class Tape {
 public:
  // Receives this node's output and the gradient of the loss with respect to
  // it, and accumulates into the gradients of its inputs via Tape::grad().
  using Backward = std::function<void(Tape&, const Tensor& out, const Tensor& grad_out)>;

  explicit Tape(TapeOptions options = {}) : options_(options) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a store entry; backward accumulates into the entry's
  /// gradient slot. Repeated requests for one name return the same leaf.
  Var parameter(ParameterStore& store, const std::string& name);

  /// Appends an op result. `backward` is only kept when an input requires
  /// gradients.
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, Backward backward);
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             Backward backward) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  /// Gradient accumulator of a node, zero-initialized on first access.
  Tensor& grad(Var v);

  /// Backpropagates d(loss)/d(node) to every node and into the parameter store.
  void backward(Var loss);

  void note_branch(std::uint64_t word);
  void note_branches(std::span<const std::uint8_t> bits);
  std::uint64_t branch_signature() const { return branch_hash_; }

  const TapeOptions& options() const { return options_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
    ParameterEntry* parameter = nullptr;
  };

  TapeOptions options_;
  std::deque<Node> nodes_;
  std::unordered_map<std::string, std::size_t> parameter_ids_;
  std::uint64_t branch_hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace pcaps

#include "pcaps/tape.hpp"

#include "pcaps/error.hpp"
#include "pcaps/parameter_store.hpp"

namespace pcaps {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(ParameterStore& store, const std::string& name) {
  if (auto it = parameter_ids_.find(name); it != parameter_ids_.end()) {
    return Var(this, it->second);
  }
  ParameterEntry& entry = store.at(name);
  Node node;
  node.op = "parameter";
  node.value = entry.value;
  node.requires_grad = entry.trainable;
  node.parameter = &entry;
  nodes_.push_back(std::move(node));
  parameter_ids_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs,
                 Backward backward) {
  if (options_.checked && !value.all_finite()) {
    throw NonFiniteError("non-finite output from op '" + std::string(op) + "' with shape " +
                         shape_string(value.shape()));
  }
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw InvalidArgument("op '" + std::string(op) + "' mixes tapes");
    needs = needs || nodes_[in.id_].requires_grad;
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(Var v) {
  Node& node = nodes_[v.id_];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw InvalidArgument("backward: loss belongs to another tape");
  Node& root = nodes_[loss.id_];
  if (root.value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_string(root.value.shape()));
  }
  grad(loss).fill(1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.parameter != nullptr) {
      auto dst = node.parameter->grad.values();
      auto src = node.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    } else if (node.backward) {
      node.backward(*this, node.value, node.grad);
    }
    // Intermediate gradients are no longer needed.
    if (node.parameter == nullptr && i != loss.id_) node.grad = Tensor();
  }
}

void Tape::note_branch(std::uint64_t word) {
  if (!options_.track_branches) return;
  for (int b = 0; b < 8; ++b) {
    branch_hash_ ^= (word >> (8 * b)) & 0xffU;
    branch_hash_ *= 0x100000001b3ULL;
  }
}

void Tape::note_branches(std::span<const std::uint8_t> bits) {
  if (!options_.track_branches) return;
  for (auto b : bits) {
    branch_hash_ ^= b;
    branch_hash_ *= 0x100000001b3ULL;
  }
}

}  // namespace pcaps

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pcaps/tensor.hpp"

namespace pcaps {

class Rng;

/// Whether stored state is kept representable as 32-bit reals.
enum class StoragePrecision { kFloat32, kFloat64 };

struct ParameterEntry {
  Tensor value;
  Tensor grad;
  // Adam moments.
  Tensor m;
  Tensor v;
  // Non-trainable entries (batchnorm running statistics) have no optimizer
  // state and are skipped by the optimizer.
  bool trainable = true;
};

/// Named, shaped parameter tensors with gradient slots and optimizer state.
class ParameterStore {
 public:
  explicit ParameterStore(StoragePrecision precision = StoragePrecision::kFloat32)
      : precision_(precision) {}

  ParameterEntry& add(const std::string& name, Tensor value, bool trainable = true);
  /// Adds a weight initialized uniformly in [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
  ParameterEntry& add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out,
                             Rng& rng);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  ParameterEntry& at(const std::string& name);
  const ParameterEntry& at(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return at(name).value; }

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t step) { step_ = step; }

  StoragePrecision precision() const { return precision_; }
  /// Rounds a value to the storage precision.
  double store(double x) const {
    return precision_ == StoragePrecision::kFloat32 ? static_cast<double>(static_cast<float>(x)) : x;
  }

 private:
  std::map<std::string, ParameterEntry> entries_;
  std::int64_t step_ = 0;
  StoragePrecision precision_;
};

/// True when both stores hold the same names, flags, step, and bit-identical
/// values and optimizer moments.
bool stores_bitwise_equal(const ParameterStore& a, const ParameterStore& b);

}  // namespace pcaps

#include "pcaps/parameter_store.hpp"

#include <cmath>

#include "pcaps/error.hpp"
#include "pcaps/random.hpp"

namespace pcaps {

ParameterEntry& ParameterStore::add(const std::string& name, Tensor value, bool trainable) {
  if (contains(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
  for (auto& x : value.values()) x = store(x);
  ParameterEntry entry;
  entry.grad = Tensor(value.shape());
  if (trainable) {
    entry.m = Tensor(value.shape());
    entry.v = Tensor(value.shape());
  }
  entry.value = std::move(value);
  entry.trainable = trainable;
  return entries_.emplace(name, std::move(entry)).first->second;
}

ParameterEntry& ParameterStore::add_glorot(const std::string& name, std::size_t fan_in,
                                           std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (auto& x : w.values()) x = rng.uniform(-a, a);
  return add(name, std::move(w));
}

ParameterEntry& ParameterStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

const ParameterEntry& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.fill(0.0);
}

bool stores_bitwise_equal(const ParameterStore& a, const ParameterStore& b) {
  if (a.size() != b.size() || a.step() != b.step()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.trainable != ib->second.trainable) return false;
    if (!bitwise_equal(ia->second.value, ib->second.value)) return false;
    if (ia->second.trainable && (!bitwise_equal(ia->second.m, ib->second.m) ||
                                 !bitwise_equal(ia->second.v, ib->second.v))) {
      return false;
    }
  }
  return true;
}

}  // namespace pcaps

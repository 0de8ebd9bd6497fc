#pragma once

#include <map>
#include <string>
#include <vector>

#include "dfl/tensor.hpp"

namespace dfl {

/// Gradients keyed by parameter name. std::map keeps iteration order stable
/// for deterministic serialization and updates.
using GradientMap = std::map<std::string, Tensor>;

/// Named, insertion-ordered parameter store. Freezing the set makes every
/// entry non-trainable; frozen sets reject optimizer updates.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  std::size_t add(const std::string& name, Tensor value, bool trainable = true) {
    if (index_.count(name)) {
      throw ConfigError("duplicate parameter name: " + name);
    }
    entries_.push_back({name, std::move(value), trainable});
    index_[name] = entries_.size() - 1;
    return entries_.size() - 1;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  Tensor& value(const std::string& name) { return entries_[at(name)].value; }
  const Tensor& value(const std::string& name) const {
    return entries_[at(name)].value;
  }

  bool trainable(const std::string& name) const {
    return !frozen_ && entries_[at(name)].trainable;
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  bool same_values(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name) return false;
      if (!(entries_[i].value == other.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  std::size_t at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw ConfigError("unknown parameter: " + name);
    }
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  bool frozen_ = false;
};

}  // namespace dfl

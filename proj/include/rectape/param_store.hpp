#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rectape/autodiff.hpp"
#include "rectape/tensor.hpp"

namespace rectape {

/// Ordered collection of named tensors. Trainable entries receive gradients;
/// the rest are model state (data statistics, cached histories) that is
/// checkpointed alongside the weights.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  Tensor& add(std::string name, Tensor value, bool trainable = true);

  bool contains(std::string_view name) const;
  const Entry& entry(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Replaces the value of an existing entry; the shape must match.
  void assign(std::string_view name, Tensor value);
  /// Adds a non-trainable entry or replaces its value, whatever the shape.
  void put_state(std::string_view name, Tensor value);

 private:
  Entry* find(std::string_view name);
  const Entry* find(std::string_view name) const;

  std::vector<Entry> entries_;
};

using GradMap = std::map<std::string, Tensor, std::less<>>;

/// Lazily binds parameters to tape leaves for one training step.
class Bindings {
 public:
  Bindings(ad::Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  /// Leaf for a trainable parameter, created on first use. Non-trainable
  /// entries are bound as constants.
  ad::Var operator[](std::string_view name);
  /// Constant node for non-trainable state or a frozen copy of a parameter.
  ad::Var constant(std::string_view name);

  ad::Tape& tape() { return tape_; }
  const ParamStore& store() const { return store_; }

  /// Gradients for every parameter that was bound.
  GradMap collect(const ad::Gradients& grads) const;

 private:
  ad::Tape& tape_;
  const ParamStore& store_;
  std::map<std::string, ad::Var, std::less<>> bound_;
};

}  // namespace rectape

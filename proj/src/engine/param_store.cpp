#include "rectape/param_store.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "rectape/error.hpp"

namespace rectape {

Tensor& ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw Error(fmt::format("duplicate parameter '{}'", name));
  entries_.push_back({std::move(name), std::move(value), trainable});
  return entries_.back().value;
}

ParamStore::Entry* ParamStore::find(std::string_view name) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

const ParamStore::Entry* ParamStore::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

bool ParamStore::contains(std::string_view name) const { return find(name) != nullptr; }

const ParamStore::Entry& ParamStore::entry(std::string_view name) const {
  if (const auto* e = find(name)) return *e;
  throw Error(fmt::format("unknown parameter '{}'", name));
}

Tensor& ParamStore::at(std::string_view name) {
  if (auto* e = find(name)) return e->value;
  throw Error(fmt::format("unknown parameter '{}'", name));
}

const Tensor& ParamStore::at(std::string_view name) const {
  if (const auto* e = find(name)) return e->value;
  throw Error(fmt::format("unknown parameter '{}'", name));
}

void ParamStore::assign(std::string_view name, Tensor value) {
  Tensor& current = at(name);
  if (current.shape() != value.shape()) {
    throw ShapeError(fmt::format("assign '{}'", name), shape_string(current.shape()),
                     shape_string(value.shape()));
  }
  current = std::move(value);
}

void ParamStore::put_state(std::string_view name, Tensor value) {
  if (auto* e = find(name)) {
    if (e->trainable) throw Error(fmt::format("parameter '{}' is trainable, not state", name));
    e->value = std::move(value);
    return;
  }
  entries_.push_back({std::string(name), std::move(value), false});
}

ad::Var Bindings::operator[](std::string_view name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const auto& e = store_.entry(name);
  const ad::Var v = e.trainable ? tape_.leaf(e.value) : tape_.constant(e.value);
  bound_.emplace(std::string(name), v);
  return v;
}

ad::Var Bindings::constant(std::string_view name) { return tape_.constant(store_.at(name)); }

GradMap Bindings::collect(const ad::Gradients& grads) const {
  GradMap out;
  for (const auto& [name, var] : bound_) {
    if (store_.entry(name).trainable && grads.reached(var)) out.emplace(name, grads[var]);
  }
  return out;
}

}  // namespace rectape

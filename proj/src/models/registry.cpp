#include <fmt/format.h>

#include "common.hpp"
#include "rectape/models/ranking.hpp"
#include "rectape/models/rating.hpp"
#include "rectape/models/sequential.hpp"

namespace rectape::models {

const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {"biasedsvd", "fm",   "autorec", "bprmf", "cml",   "gmf",
                                                 "mlp",       "neumf", "cdae",   "prme",  "caser", "attrec"};
  return names;
}

Task task_of(std::string_view name) {
  if (name == "biasedsvd" || name == "fm" || name == "autorec") return Task::kRating;
  if (name == "bprmf" || name == "cml" || name == "gmf" || name == "mlp" || name == "neumf" || name == "cdae") {
    return Task::kRanking;
  }
  if (name == "prme" || name == "caser" || name == "attrec") return Task::kSequential;
  throw ValidationError(fmt::format("unknown model '{}'", name));
}

std::unique_ptr<Model> create_model(const ModelSpec& spec, const Dims& dims, std::uint64_t seed) {
  const auto& n = spec.name;
  const std::size_t nu = dims.n_users, ni = dims.n_items;
  if (n == "biasedsvd") return BiasedSvd::create(nu, ni, spec.k, seed);
  if (n == "fm") {
    const FmTask task = dims.binary_labels ? FmTask::kBinary : FmTask::kRegression;
    if (dims.n_features > 0) return FactorizationMachine::create(dims.n_features, spec.k, task, seed);
    return FactorizationMachine::create_for_table(nu, ni, spec.k, task, seed);
  }
  if (n == "autorec") return AutoRec::create(nu, ni, spec.k, seed);
  if (n == "bprmf") return BprMf::create(nu, ni, spec.k, seed);
  if (n == "cml") return Cml::create(nu, ni, spec.k, spec.margin, seed);
  if (n == "gmf") return NeuMf::create(NcfVariant::kGmf, nu, ni, spec.k, spec.layers, seed);
  if (n == "mlp") return NeuMf::create(NcfVariant::kMlp, nu, ni, spec.k, spec.layers, seed);
  if (n == "neumf") return NeuMf::create(NcfVariant::kNeuMf, nu, ni, spec.k, spec.layers, seed);
  if (n == "cdae") return Cdae::create(nu, ni, spec.k, spec.dropout_q, seed);
  if (n == "prme") return Prme::create(nu, ni, spec.k, spec.alpha, seed);
  if (n == "caser") return Caser::create(nu, ni, spec.k, spec.L, spec.T, spec.n_h, spec.n_v, seed);
  if (n == "attrec") return AttRec::create(nu, ni, spec.k, spec.L, spec.omega, spec.margin, spec.clip_rho, seed);
  throw ValidationError(fmt::format("unknown model '{}'", n));
}

namespace {

std::unique_ptr<Model> empty_model(std::string_view name) {
  if (name == "biasedsvd") return std::make_unique<BiasedSvd>();
  if (name == "fm") return std::make_unique<FactorizationMachine>();
  if (name == "autorec") return std::make_unique<AutoRec>();
  if (name == "bprmf") return std::make_unique<BprMf>();
  if (name == "cml") return std::make_unique<Cml>();
  if (name == "gmf" || name == "mlp" || name == "neumf") return std::make_unique<NeuMf>();
  if (name == "cdae") return std::make_unique<Cdae>();
  if (name == "prme") return std::make_unique<Prme>();
  if (name == "caser") return std::make_unique<Caser>();
  if (name == "attrec") return std::make_unique<AttRec>();
  throw ValidationError(fmt::format("unknown model '{}'", name));
}

}  // namespace

std::unique_ptr<Model> restore_model(std::string_view name, ParamStore params) {
  auto m = empty_model(name);
  m->params() = std::move(params);
  m->refresh();
  if (m->name() != name) {
    throw Error(fmt::format("checkpoint parameters describe '{}', not '{}'", m->name(), name));
  }
  return m;
}

}  // namespace rectape::models

#include <fmt/format.h>

#include "common.hpp"
#include "rectape/models/ranking.hpp"

namespace rectape::models {

using namespace detail;

namespace {

std::string layer_name(char kind, std::size_t l) { return fmt::format("{}{}", kind, l); }

bool has_gmf(NcfVariant v) { return v != NcfVariant::kMlp; }
bool has_mlp(NcfVariant v) { return v != NcfVariant::kGmf; }

}  // namespace

std::unique_ptr<NeuMf> NeuMf::create(NcfVariant variant, std::size_t n_users, std::size_t n_items, std::size_t k,
                                     std::vector<std::size_t> layers, std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || k == 0) throw ValidationError("ncf: n_users, n_items and k must be >= 1");
  if (layers.empty()) layers = {2 * k, k, k / 2};
  if (has_mlp(variant)) {
    if (layers.size() < 2 || layers[0] % 2 != 0) {
      throw ValidationError("ncf: MLP tower needs an even input size and at least one hidden layer");
    }
    for (auto s : layers) {
      if (s == 0) throw ValidationError("ncf: MLP layer sizes must be >= 1 (k must be >= 2)");
    }
  }
  auto m = std::make_unique<NeuMf>();
  Rng rng(seed);
  auto& p = m->params_;
  set_hyper(p, "variant", static_cast<double>(variant));
  set_hyper(p, "n_layers", has_mlp(variant) ? static_cast<double>(layers.size() - 1) : 0.0);
  std::size_t fusion_in = 0;
  if (has_gmf(variant)) {
    p.add("P_g", normal_tensor(Shape{n_users, k}, rng));
    p.add("Q_g", normal_tensor(Shape{n_items, k}, rng));
    fusion_in += k;
  }
  if (has_mlp(variant)) {
    const std::size_t km = layers[0] / 2;
    p.add("P_m", normal_tensor(Shape{n_users, km}, rng));
    p.add("Q_m", normal_tensor(Shape{n_items, km}, rng));
    for (std::size_t l = 1; l < layers.size(); ++l) {
      p.add(layer_name('W', l), normal_tensor(Shape{layers[l - 1], layers[l]}, rng));
      p.add(layer_name('b', l), Tensor(Shape{layers[l]}));
    }
    fusion_in += layers.back();
  }
  p.add("h", normal_tensor(Shape{fusion_in, 1}, rng));
  if (has_mlp(variant)) p.add("b_out", Tensor::scalar(0.0));
  return m;
}

NcfVariant NeuMf::variant() const { return static_cast<NcfVariant>(static_cast<int>(hyper(params_, "variant"))); }

std::string_view NeuMf::name() const {
  switch (variant()) {
    case NcfVariant::kGmf: return "gmf";
    case NcfVariant::kMlp: return "mlp";
    case NcfVariant::kNeuMf: return "neumf";
  }
  return "?";
}

std::size_t NeuMf::n_users() const { return params_.at(has_gmf(variant()) ? "P_g" : "P_m").rows(); }
std::size_t NeuMf::n_items() const { return params_.at(has_gmf(variant()) ? "Q_g" : "Q_m").rows(); }

std::vector<double> NeuMf::gmf_vector(Id user, Id item) const {
  check_ids(user, item);
  const auto p = params_.at("P_g").row(user);
  const auto q = params_.at("Q_g").row(item);
  std::vector<double> out(p.size());
  for (std::size_t f = 0; f < p.size(); ++f) out[f] = p[f] * q[f];
  return out;
}

std::vector<double> NeuMf::mlp_hidden(Id user, Id item) const {
  check_ids(user, item);
  const auto p = params_.at("P_m").row(user);
  const auto q = params_.at("Q_m").row(item);
  std::vector<double> x(p.begin(), p.end());
  x.insert(x.end(), q.begin(), q.end());
  const auto n_layers = static_cast<std::size_t>(hyper(params_, "n_layers"));
  for (std::size_t l = 1; l <= n_layers; ++l) {
    const auto& W = params_.at(layer_name('W', l));
    const auto& b = params_.at(layer_name('b', l));
    std::vector<double> next(W.cols());
    for (std::size_t o = 0; o < W.cols(); ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * W.at(i, o);
      next[o] = s > 0.0 ? s : 0.0;
    }
    x = std::move(next);
  }
  return x;
}

double NeuMf::logit(Id user, Id item) const {
  std::vector<double> features;
  if (has_gmf(variant())) features = gmf_vector(user, item);
  if (has_mlp(variant())) {
    const auto h = mlp_hidden(user, item);
    features.insert(features.end(), h.begin(), h.end());
  }
  const auto& h = params_.at("h");
  double z = has_mlp(variant()) ? params_.at("b_out").item() : 0.0;
  for (std::size_t f = 0; f < features.size(); ++f) z += features[f] * h[f];
  return z;
}

double NeuMf::score(Id user, Id item) const { return detail::sigmoid(logit(user, item)); }

ad::Var NeuMf::batch_logits(Bindings& bind, NcfVariant variant, const std::vector<Id>& users,
                            const std::vector<Id>& items) {
  const auto ui = to_indices(users), ii = to_indices(items);
  std::vector<Var> parts;
  if (has_gmf(variant)) {
    parts.push_back(ad::mul(ad::embedding_lookup(bind["P_g"], ui), ad::embedding_lookup(bind["Q_g"], ii)));
  }
  if (has_mlp(variant)) {
    Var x = ad::concat({ad::embedding_lookup(bind["P_m"], ui), ad::embedding_lookup(bind["Q_m"], ii)}, 1);
    const auto n_layers = static_cast<std::size_t>(hyper(bind.store(), "n_layers"));
    for (std::size_t l = 1; l <= n_layers; ++l) {
      x = ad::relu(ad::add_row(ad::matmul(x, bind[layer_name('W', l)]), bind[layer_name('b', l)]));
    }
    parts.push_back(x);
  }
  const Var features = parts.size() == 1 ? parts[0] : ad::concat(parts, 1);
  Var z = ad::matmul(features, bind["h"]);
  if (has_mlp(variant)) z = ad::add(z, bind["b_out"]);
  return z;
}

ad::Var NeuMf::batch_loss(Bindings& bind, NcfVariant variant, const std::vector<Id>& users,
                          const std::vector<Id>& items, const std::vector<double>& labels, double l2) {
  const Var z = batch_logits(bind, variant, users, items);
  Var loss = ad::mean(bce_with_logits(z, column(bind.tape(), labels)));
  if (l2 != 0.0) {
    const auto ui = to_indices(users), ii = to_indices(items);
    Var reg;
    auto accumulate = [&](const char* table, const std::vector<std::uint32_t>& idx) {
      const Var s = ad::sum_squares(ad::embedding_lookup(bind[table], idx));
      reg = reg.valid() ? ad::add(reg, s) : s;
    };
    if (has_gmf(variant)) {
      accumulate("P_g", ui);
      accumulate("Q_g", ii);
    }
    if (has_mlp(variant)) {
      accumulate("P_m", ui);
      accumulate("Q_m", ii);
    }
    loss = ad::add(loss, ad::scale(reg, l2 / static_cast<double>(users.size())));
  }
  return loss;
}

namespace {

class NcfObjective : public Objective {
 public:
  NcfObjective(NcfVariant variant, Positives pos, double l2, std::size_t batch, std::size_t negs)
      : variant_(variant), pos_(std::move(pos)), l2_(l2), batch_(batch), negs_(negs) {}

  std::vector<LossBuilder> epoch(Rng& rng) override {
    const data::NegativeSampler sampler(*pos_.consumed);
    std::vector<Id> users, items;
    std::vector<double> labels;
    for (const auto& [u, i] : pos_.pairs) {
      users.push_back(u);
      items.push_back(i);
      labels.push_back(1.0);
      for (std::size_t s = 0; s < negs_; ++s) {
        users.push_back(u);
        items.push_back(sampler.sample(u, rng));
        labels.push_back(0.0);
      }
    }
    std::vector<LossBuilder> out;
    for (const auto& idx : shuffled_batches(users.size(), batch_, rng)) {
      std::vector<Id> bu, bi;
      std::vector<double> by;
      for (auto k : idx) {
        bu.push_back(users[k]);
        bi.push_back(items[k]);
        by.push_back(labels[k]);
      }
      out.push_back([bu, bi, by, v = variant_, l2 = l2_](Bindings& b) { return NeuMf::batch_loss(b, v, bu, bi, by, l2); });
    }
    return out;
  }
  std::size_t skipped_users() const override { return pos_.full_users; }

 private:
  NcfVariant variant_;
  Positives pos_;
  double l2_;
  std::size_t batch_, negs_;
};

}  // namespace

std::unique_ptr<Objective> NeuMf::objective(const TrainData& data, const TrainOptions& options) {
  const auto& table = require_table(data, name());
  if (table.n_users() != n_users() || table.n_items() != n_items()) {
    throw Error(fmt::format("{}: training table does not match the model's id space", name()));
  }
  return std::make_unique<NcfObjective>(variant(), collect_positives(table, name()), options.l2, options.batch_size,
                                        options.neg_samples);
}

}  // namespace rectape::models

#include "rectape/experiment/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rectape/error.hpp"

namespace rectape::experiment {

namespace pt = boost::property_tree;

const std::vector<std::string>& model_keys(std::string_view model_name) {
  static const std::map<std::string, std::vector<std::string>, std::less<>> keys = {
      {"biasedsvd", {"k"}},
      {"fm", {"k"}},
      {"autorec", {"k"}},
      {"bprmf", {"k"}},
      {"cml", {"k", "margin"}},
      {"gmf", {"k"}},
      {"mlp", {"k", "layers"}},
      {"neumf", {"k", "layers"}},
      {"cdae", {"k", "dropout_q"}},
      {"prme", {"k", "alpha"}},
      {"caser", {"k", "L", "T", "n_h", "n_v"}},
      {"attrec", {"k", "L", "omega", "margin", "clip_rho"}},
  };
  const auto it = keys.find(model_name);
  if (it == keys.end()) throw ValidationError(fmt::format("unknown model '{}'", model_name));
  return it->second;
}

namespace {

const std::map<std::string, std::set<std::string>, std::less<>> kSectionKeys = {
    {"data", {"path", "format", "split", "seed", "binarize_threshold"}},
    {"model", {"name", "k", "layers", "L", "T", "margin", "alpha", "omega", "dropout_q", "n_h", "n_v", "clip_rho"}},
    {"train", {"optimizer", "lr", "l2", "epochs", "batch_size", "neg_samples", "seed"}},
    {"eval", {"cutoffs", "protocol"}},
};

// Keys that only apply to some models; the rest of [model] is `name`.
bool uses_negatives(std::string_view model) {
  return model == "cml" || model == "gmf" || model == "mlp" || model == "neumf" || model == "cdae" ||
         model == "caser";
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  T v{};
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) return std::nullopt;
  return v;
}

std::optional<std::vector<std::size_t>> parse_list(std::string_view text) {
  std::vector<std::size_t> out;
  std::string s = trim(text);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto v = parse_number<std::size_t>(part);
    if (!v) return std::nullopt;
    out.push_back(*v);
  }
  if (out.empty()) return std::nullopt;
  return out;
}

/// Collects typed reads and every problem found along the way.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::vector<std::string>& problems() { return problems_; }

  bool has(std::string_view section, std::string_view key) const {
    const auto s = tree_.get_child_optional(std::string(section));
    return s && s->get_child_optional(pt::ptree::path_type(std::string(key), '\0'));
  }

  std::optional<std::string> text(std::string_view section, std::string_view key, bool required) {
    const auto s = tree_.get_child_optional(std::string(section));
    if (s) {
      if (const auto v = s->get_optional<std::string>(pt::ptree::path_type(std::string(key), '\0'))) {
        return trim(*v);
      }
    }
    if (required) problems_.push_back(fmt::format("{}.{}: required key is missing", section, key));
    return std::nullopt;
  }

  template <typename T>
  std::optional<T> number(std::string_view section, std::string_view key, bool required, std::string_view what) {
    const auto t = text(section, key, required);
    if (!t) return std::nullopt;
    const auto v = parse_number<T>(*t);
    if (!v) problems_.push_back(fmt::format("{}.{}: '{}' is not {}", section, key, *t, what));
    return v;
  }

  std::optional<double> real(std::string_view section, std::string_view key, bool required) {
    auto v = number<double>(section, key, required, "a number");
    if (v && !std::isfinite(*v)) {
      problems_.push_back(fmt::format("{}.{}: must be finite", section, key));
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::size_t> count(std::string_view section, std::string_view key, bool required) {
    return number<std::size_t>(section, key, required, "a non-negative integer");
  }

  void forbid(std::string_view section, std::string_view key, std::string_view reason) {
    if (has(section, key)) problems_.push_back(fmt::format("{}.{}: {}", section, key, reason));
  }

  void check(bool ok, std::string message) {
    if (!ok) problems_.push_back(std::move(message));
  }

 private:
  const pt::ptree& tree_;
  std::vector<std::string> problems_;
};

void check_structure(const pt::ptree& tree, std::vector<std::string>& problems) {
  for (const auto& [section, body] : tree) {
    const auto known = kSectionKeys.find(section);
    if (body.empty() || known == kSectionKeys.end()) {
      if (known == kSectionKeys.end()) {
        problems.push_back(body.empty() && !body.data().empty()
                               ? fmt::format("key '{}' appears outside any section", section)
                               : fmt::format("unknown section [{}]", section));
      }
      continue;
    }
    for (const auto& [key, value] : body) {
      if (!known->second.contains(key)) problems.push_back(fmt::format("{}.{}: unknown key", section, key));
    }
  }
}

void read_data(Reader& r, ExperimentConfig& c, std::optional<models::Task> task) {
  auto& d = c.data;
  if (auto v = r.text("data", "path", true)) {
    d.path = *v;
    r.check(!d.path.empty(), "data.path: must not be empty");
  }
  if (auto v = r.text("data", "format", true)) {
    if (*v == "uirt") {
      d.format = DataFormat::kUirt;
    } else if (*v == "libfm") {
      d.format = DataFormat::kLibfm;
      r.check(c.model.name.empty() || c.model.name == "fm",
              fmt::format("data.format: libfm rows only feed model 'fm', not '{}'", c.model.name));
    } else {
      r.problems().push_back(fmt::format("data.format: '{}' is not one of uirt, libfm", *v));
    }
  }
  if (auto v = r.number<std::uint64_t>("data", "seed", true, "an unsigned integer")) d.seed = *v;
  if (auto v = r.text("data", "split", true)) {
    d.split = *v;
    try {
      const auto spec = data::SplitSpec::parse(*v, d.seed);
      r.check(d.format != DataFormat::kLibfm || spec.kind == data::SplitSpec::Kind::kRandomHoldout,
              "data.split: libfm rows carry no users or timestamps; use random:<ratio>");
    } catch (const ValidationError& e) {
      for (const auto& p : e.problems()) r.problems().push_back(fmt::format("data.split: {}", p));
    }
  }
  if (r.has("data", "binarize_threshold")) {
    if (task == models::Task::kRating) {
      r.forbid("data", "binarize_threshold", "rating models train on raw ratings");
    } else if (d.format == DataFormat::kLibfm) {
      r.forbid("data", "binarize_threshold", "does not apply to libfm rows");
    } else {
      d.binarize_threshold = r.real("data", "binarize_threshold", false);
    }
  }
}

void read_model(Reader& r, ExperimentConfig& c) {
  auto& m = c.model;
  const auto& keys = model_keys(m.name);
  for (const auto& key : kSectionKeys.at("model")) {
    if (key == "name") continue;
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      r.forbid("model", key, fmt::format("does not apply to model '{}'", m.name));
    }
  }
  auto wants = [&keys](std::string_view key) { return std::find(keys.begin(), keys.end(), key) != keys.end(); };
  auto positive = [&r](std::optional<std::size_t> v, std::string_view key, std::size_t& out) {
    if (!v) return;
    r.check(*v >= 1, fmt::format("model.{}: must be >= 1", key));
    out = *v;
  };
  positive(r.count("model", "k", true), "k", m.k);
  if (wants("layers")) {
    if (auto t = r.text("model", "layers", false)) {
      if (auto v = parse_list(*t)) {
        m.layers = *v;
      } else {
        r.problems().push_back(fmt::format("model.layers: '{}' is not a comma-separated integer list", *t));
      }
    }
  }
  if (wants("L")) positive(r.count("model", "L", true), "L", m.L);
  if (wants("T")) positive(r.count("model", "T", true), "T", m.T);
  if (wants("n_h")) positive(r.count("model", "n_h", true), "n_h", m.n_h);
  if (wants("n_v")) positive(r.count("model", "n_v", true), "n_v", m.n_v);
  if (wants("margin")) {
    if (auto v = r.real("model", "margin", true)) {
      r.check(*v >= 0.0, "model.margin: must be >= 0");
      m.margin = *v;
    }
  }
  if (wants("alpha")) {
    if (auto v = r.real("model", "alpha", true)) {
      r.check(*v >= 0.0 && *v <= 1.0, "model.alpha: must lie in [0, 1]");
      m.alpha = *v;
    }
  }
  if (wants("omega")) {
    if (auto v = r.real("model", "omega", true)) {
      r.check(*v >= 0.0 && *v <= 1.0, "model.omega: must lie in [0, 1]");
      m.omega = *v;
    }
  }
  if (wants("dropout_q")) {
    if (auto v = r.real("model", "dropout_q", true)) {
      r.check(*v >= 0.0 && *v < 1.0, "model.dropout_q: must lie in [0, 1)");
      m.dropout_q = *v;
    }
  }
  if (wants("clip_rho")) {
    if (auto v = r.real("model", "clip_rho", true)) {
      r.check(*v > 0.0, "model.clip_rho: must be > 0");
      m.clip_rho = *v;
    }
  }
}

void read_train(Reader& r, ExperimentConfig& c, std::optional<models::Task> task) {
  auto& t = c.train;
  if (auto v = r.text("train", "optimizer", true)) {
    if (*v == "sgd") {
      t.optimizer = OptimizerKind::kSgd;
    } else if (*v == "adam") {
      t.optimizer = OptimizerKind::kAdam;
    } else {
      r.problems().push_back(fmt::format("train.optimizer: '{}' is not one of sgd, adam", *v));
    }
  }
  if (auto v = r.real("train", "lr", true)) {
    r.check(*v > 0.0, "train.lr: must be > 0");
    t.lr = *v;
  }
  if (auto v = r.real("train", "l2", true)) {
    r.check(*v >= 0.0, "train.l2: must be >= 0");
    t.l2 = *v;
  }
  if (auto v = r.count("train", "epochs", true)) {
    r.check(*v >= 1, "train.epochs: must be >= 1");
    t.epochs = *v;
  }
  if (auto v = r.count("train", "batch_size", true)) {
    r.check(*v >= 1, "train.batch_size: must be >= 1");
    t.batch_size = *v;
  }
  if (auto v = r.number<std::uint64_t>("train", "seed", true, "an unsigned integer")) t.seed = *v;
  if (task && uses_negatives(c.model.name)) {
    if (auto v = r.count("train", "neg_samples", true)) {
      r.check(*v >= 1, "train.neg_samples: must be >= 1");
      t.neg_samples = *v;
    }
  } else if (task) {
    r.forbid("train", "neg_samples", fmt::format("model '{}' does not take a negative count", c.model.name));
  }
}

void read_eval(Reader& r, ExperimentConfig& c, std::optional<models::Task> task) {
  if (task == models::Task::kRating) {
    const std::string reason =
        fmt::format("metric/task mismatch: rating model '{}' reports rmse and mae only", c.model.name);
    r.forbid("eval", "cutoffs", reason);
    r.forbid("eval", "protocol", reason);
    return;
  }
  const bool required = task.has_value();
  if (auto t = r.text("eval", "cutoffs", required)) {
    auto v = parse_list(*t);
    if (!v || std::find(v->begin(), v->end(), std::size_t{0}) != v->end()) {
      r.problems().push_back(fmt::format("eval.cutoffs: '{}' is not a list of positive integers", *t));
    } else {
      c.eval.cutoffs = *v;
    }
  }
  if (auto t = r.text("eval", "protocol", required)) {
    c.eval.protocol = *t;
    try {
      (void)metrics::Protocol::parse(*t, c.data.seed);
    } catch (const ValidationError& e) {
      for (const auto& p : e.problems()) r.problems().push_back(fmt::format("eval.protocol: {}", p));
    }
  }
}

std::string join(const std::vector<std::size_t>& v) { return fmt::format("{}", fmt::join(v, ",")); }

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  std::vector<std::string> structural;
  check_structure(tree, structural);

  Reader r(tree);
  ExperimentConfig c;
  std::optional<models::Task> task;
  if (auto name = r.text("model", "name", true)) {
    c.model.name = *name;
    try {
      task = models::task_of(*name);
    } catch (const ValidationError&) {
      r.problems().push_back(fmt::format("model.name: '{}' is not one of {}", *name,
                                         fmt::join(models::model_names(), ", ")));
    }
  }
  read_data(r, c, task);
  if (task) read_model(r, c);
  read_train(r, c, task);
  read_eval(r, c, task);

  auto problems = std::move(structural);
  problems.insert(problems.end(), r.problems().begin(), r.problems().end());
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open config file '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  auto config = parse(ss.str());
  // Data paths are relative to the config file, not the working directory.
  const std::filesystem::path data_path(config.data.path);
  if (data_path.is_relative()) {
    config.data.path =
        std::filesystem::absolute(std::filesystem::path(path).parent_path() / data_path).lexically_normal().string();
  }
  return config;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  auto line = [&out](std::string_view key, const std::string& value) { out += fmt::format("{} = {}\n", key, value); };
  out += "[data]\n";
  line("path", data.path);
  line("format", data.format == DataFormat::kLibfm ? "libfm" : "uirt");
  line("split", data.split);
  line("seed", fmt::format("{}", data.seed));
  if (data.binarize_threshold) line("binarize_threshold", fmt::format("{}", *data.binarize_threshold));

  out += "\n[model]\n";
  line("name", model.name);
  for (const auto& key : model_keys(model.name)) {
    if (key == "k") line(key, fmt::format("{}", model.k));
    if (key == "layers" && !model.layers.empty()) line(key, join(model.layers));
    if (key == "L") line(key, fmt::format("{}", model.L));
    if (key == "T") line(key, fmt::format("{}", model.T));
    if (key == "n_h") line(key, fmt::format("{}", model.n_h));
    if (key == "n_v") line(key, fmt::format("{}", model.n_v));
    if (key == "margin") line(key, fmt::format("{}", model.margin));
    if (key == "alpha") line(key, fmt::format("{}", model.alpha));
    if (key == "omega") line(key, fmt::format("{}", model.omega));
    if (key == "dropout_q") line(key, fmt::format("{}", model.dropout_q));
    if (key == "clip_rho") line(key, fmt::format("{}", model.clip_rho));
  }

  out += "\n[train]\n";
  line("optimizer", train.optimizer == OptimizerKind::kSgd ? "sgd" : "adam");
  line("lr", fmt::format("{}", train.lr));
  line("l2", fmt::format("{}", train.l2));
  line("epochs", fmt::format("{}", train.epochs));
  line("batch_size", fmt::format("{}", train.batch_size));
  if (train.neg_samples) line("neg_samples", fmt::format("{}", *train.neg_samples));
  line("seed", fmt::format("{}", train.seed));

  if (task() != models::Task::kRating) {
    out += "\n[eval]\n";
    line("cutoffs", join(eval.cutoffs));
    line("protocol", eval.protocol);
  }
  return out;
}

data::SplitSpec ExperimentConfig::split_spec() const { return data::SplitSpec::parse(data.split, data.seed); }

metrics::Protocol ExperimentConfig::protocol() const {
  return eval.protocol.empty() ? metrics::Protocol::full() : metrics::Protocol::parse(eval.protocol, data.seed);
}

models::TrainOptions ExperimentConfig::train_options() const {
  models::TrainOptions o;
  o.optimizer = train.optimizer == OptimizerKind::kSgd ? OptimizerState::sgd(train.lr) : OptimizerState::adam(train.lr);
  o.l2 = train.l2;
  o.epochs = train.epochs;
  o.batch_size = train.batch_size;
  o.neg_samples = train.neg_samples.value_or(1);
  o.seed = train.seed;
  return o;
}

}  // namespace rectape::experiment

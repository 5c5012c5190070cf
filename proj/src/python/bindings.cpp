#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rectape/error.hpp"
#include "rectape/experiment/checkpoint.hpp"
#include "rectape/experiment/config.hpp"
#include "rectape/experiment/runner.hpp"
#include "rectape/models/model.hpp"

namespace py = pybind11;
namespace ex = rectape::experiment;
using rectape::models::Model;

namespace {

py::list report_items(const rectape::metrics::MetricReport& r) {
  py::list out;
  for (const auto& [k, v] : r.values) out.append(py::make_tuple(k, v));
  return out;
}

/// A trained model plus the config it was trained with.
struct PyModel {
  std::shared_ptr<Model> model;
  std::string config_echo;
};

}  // namespace

PYBIND11_MODULE(_rectape, m) {
  m.doc() = "Recommender models on a reverse-mode autodiff tape";

  auto base = py::register_exception<rectape::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<rectape::ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ex::CheckpointError>(m, "CheckpointError", base.ptr());

  m.def("model_names", &rectape::models::model_names);

  py::class_<ex::ExperimentConfig>(m, "ExperimentConfig")
      .def_static("parse", &ex::ExperimentConfig::parse, py::arg("text"))
      .def_static("load", &ex::ExperimentConfig::load, py::arg("path"))
      .def("to_text", &ex::ExperimentConfig::to_text)
      .def_property_readonly("model_name", [](const ex::ExperimentConfig& c) { return c.model.name; })
      .def_property_readonly("task",
                             [](const ex::ExperimentConfig& c) { return std::string(task_name(c.task())); })
      .def_property(
          "data_path", [](const ex::ExperimentConfig& c) { return c.data.path; },
          [](ex::ExperimentConfig& c, const std::string& p) { c.data.path = p; });

  py::class_<PyModel>(m, "Model")
      .def_property_readonly("name", [](const PyModel& p) { return std::string(p.model->name()); })
      .def_property_readonly("n_users", [](const PyModel& p) { return p.model->n_users(); })
      .def_property_readonly("n_items", [](const PyModel& p) { return p.model->n_items(); })
      .def_property_readonly("config_echo", [](const PyModel& p) { return p.config_echo; })
      .def("score", [](const PyModel& p, rectape::data::Id u, rectape::data::Id i) { return p.model->score(u, i); },
           py::arg("user"), py::arg("item"))
      .def(
          "score_items",
          [](const PyModel& p, rectape::data::Id u, const std::vector<rectape::data::Id>& items) {
            std::vector<double> out(items.size());
            p.model->score_items(u, items, out);
            return out;
          },
          py::arg("user"), py::arg("items"))
      .def(
          "recommend",
          [](const PyModel& p, const std::string& user, std::size_t n) {
            const auto config = ex::ExperimentConfig::parse(p.config_echo);
            std::vector<std::pair<std::string, double>> out;
            for (const auto& r : ex::recommend(*p.model, config, user, n)) out.emplace_back(r.item, r.score);
            return out;
          },
          py::arg("user"), py::arg("n"));

  m.def(
      "run",
      [](const ex::ExperimentConfig& config, const std::string& checkpoint, const std::string& report) {
        ex::RunResult r;
        {
          py::gil_scoped_release release;
          r = checkpoint.empty() ? ex::run(config) : ex::run_and_save(config, checkpoint, report);
        }
        py::dict out;
        out["metrics"] = report_items(r.report);
        out["report_text"] = r.report.to_text();
        out["epoch_loss"] = r.trace.epoch_loss;
        out["model"] = PyModel{std::move(r.model), config.to_text()};
        return out;
      },
      py::arg("config"), py::arg("checkpoint") = "", py::arg("report") = "",
      "Load, split, train and evaluate; optionally save the checkpoint and report.");

  m.def(
      "load_model",
      [](const std::string& path) {
        auto loaded = ex::load_model(path);
        return PyModel{std::move(loaded.model), std::move(loaded.config_echo)};
      },
      py::arg("path"));

  m.def(
      "evaluate",
      [](const PyModel& model, const ex::ExperimentConfig& config) {
        return report_items(ex::evaluate(*model.model, config, ex::prepare_data(config)));
      },
      py::arg("model"), py::arg("config"));
}

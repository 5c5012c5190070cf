#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rectape/error.hpp"
#include "rectape/experiment/checkpoint.hpp"
#include "rectape/experiment/config.hpp"
#include "rectape/experiment/runner.hpp"

namespace ex = rectape::experiment;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

void print_report(const rectape::metrics::MetricReport& report, const std::string& path) {
  const auto text = report.to_text();
  if (!path.empty()) ex::write_text(path, text);
  std::cout << text;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("rectape");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);

  CLI::App app{"Config-driven recommender experiments"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  std::string config_path, ckpt_path, out_path, report_path, train_path, test_path, user;
  std::size_t n = 10;

  auto* split = app.add_subcommand("split", "Write the train and test parts of the configured split");
  split->add_option("--config", config_path, "Experiment config")->required();
  split->add_option("--train", train_path, "Output path for the training part")->required();
  split->add_option("--test", test_path, "Output path for the test part")->required();

  auto* train = app.add_subcommand("train", "Train, evaluate and save a checkpoint");
  train->add_option("--config", config_path, "Experiment config")->required();
  train->add_option("--out", out_path, "Checkpoint path")->required();
  train->add_option("--report", report_path, "Also write the report here");

  auto* evaluate = app.add_subcommand("evaluate", "Re-evaluate a checkpoint under a config");
  evaluate->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  evaluate->add_option("--config", config_path, "Experiment config (data and eval sections)")->required();
  evaluate->add_option("--report", report_path, "Also write the report here");

  auto* recommend = app.add_subcommand("recommend", "Top-n unseen items for one user");
  recommend->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  recommend->add_option("--user", user, "Raw user id")->required();
  recommend->add_option("--n", n, "Number of items")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kValidation;
  }
  if (verbose) spdlog::set_level(spdlog::level::info);

  try {
    if (*split) {
      ex::write_split(ex::ExperimentConfig::load(config_path), train_path, test_path);
    } else if (*train) {
      const auto result = ex::run_and_save(ex::ExperimentConfig::load(config_path), out_path);
      print_report(result.report, report_path);
    } else if (*evaluate) {
      const auto config = ex::ExperimentConfig::load(config_path);
      const auto loaded = ex::load_model(ckpt_path);
      const auto data = ex::prepare_data(config);
      print_report(ex::evaluate(*loaded.model, config, data), report_path);
    } else if (*recommend) {
      const auto loaded = ex::load_model(ckpt_path);
      const auto config = ex::ExperimentConfig::parse(loaded.config_echo);
      for (const auto& r : ex::recommend(*loaded.model, config, user, n)) {
        std::cout << fmt::format("{}\t{:.6f}\n", r.item, r.score);
      }
    }
  } catch (const rectape::ValidationError& e) {
    for (const auto& p : e.problems()) std::cerr << "error: " << p << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

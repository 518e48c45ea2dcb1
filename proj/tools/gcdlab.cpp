// Command-line front end: run, report, validate, gen-data.

#include <CLI11.hpp>

#include <iostream>

#include "gcdlab/error.hpp"
#include "gcdlab/experiment.hpp"

namespace {

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gcdlab: desk-scale generalized category discovery experiments"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Train every point of the experiment grid");
  run->add_option("config", run_config, "Experiment config (YAML)")->required();

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Render SVG curves and a comparison table");
  report->add_option("dirs", report_inputs, "Run directories or metrics CSV files")->required();
  report->add_option("-o,--output", report_out, "Output directory")->required();

  std::string validate_config;
  auto* validate = app.add_subcommand("validate", "Check a config and print its canonical form");
  validate->add_option("config", validate_config, "Experiment config (YAML)")->required();

  std::string gen_config;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Write the configured synthetic dataset as CSV");
  gen->add_option("config", gen_config, "Experiment config (YAML)")->required();
  gen->add_option("-o,--output", gen_out, "Output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      return gcdlab::run_experiment(gcdlab::parse_config(run_config), log_line);
    }
    if (*report) {
      std::vector<std::filesystem::path> inputs(report_inputs.begin(), report_inputs.end());
      return gcdlab::emit_report(inputs, report_out, log_line);
    }
    if (*validate) {
      std::cout << gcdlab::serialize_config(gcdlab::parse_config(validate_config));
      return 0;
    }
    if (*gen) {
      const auto cfg = gcdlab::parse_config(gen_config);
      if (cfg.dataset.source != gcdlab::DatasetSpec::Source::synthetic) {
        std::cerr << "gen-data: dataset.source must be synthetic\n";
        return 2;
      }
      gcdlab::write_dataset_csv(gcdlab::load_dataset(cfg.dataset, cfg.train.seed), gen_out);
      return 0;
    }
  } catch (const gcdlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

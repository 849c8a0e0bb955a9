// r2dl: train a source classifier, reprogram it for a target task, evaluate, sweep.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "r2dl/errors.hpp"
#include "r2dl/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> outer_iterations;
  std::optional<std::size_t> ksvd_iterations;
  std::optional<double> epsilon;
  std::optional<double> step_size;
  std::string grid;
};

void add_common(CLI::App* cmd, Overrides& o, std::string& out) {
  cmd->add_option("--config", o.config, "experiment JSON file");
  cmd->add_option("--seed", o.seed, "overrides the config seed");
  cmd->add_option("--out", out, "output directory")->required();
}

void add_reprogram_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--outer-iterations", o.outer_iterations, "T1");
  cmd->add_option("--ksvd-iterations", o.ksvd_iterations, "T2, k-SVD sweeps per projection");
  cmd->add_option("--epsilon", o.epsilon, "OMP residual tolerance");
  cmd->add_option("--step-size", o.step_size, "gradient step size");
}

std::vector<std::size_t> parse_grid(const std::string& text) {
  std::vector<std::size_t> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      throw r2dl::ConfigError("bad --grid entry '" + item + "'");
    }
    if (used != item.size()) throw r2dl::ConfigError("bad --grid entry '" + item + "'");
    grid.push_back(static_cast<std::size_t>(v));
  }
  return grid;
}

r2dl::ExperimentConfig resolve(const Overrides& o) {
  auto cfg = o.config.empty() ? r2dl::default_experiment_config() : r2dl::load_experiment_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (o.outer_iterations) cfg.reprogram.outer_iterations = *o.outer_iterations;
  if (o.ksvd_iterations) cfg.reprogram.ksvd.sweeps = *o.ksvd_iterations;
  if (o.epsilon) cfg.reprogram.ksvd.epsilon = *o.epsilon;
  if (o.step_size) cfg.reprogram.step_size = *o.step_size;
  cfg.reprogram.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-coded reprogramming of frozen sequence classifiers"};
  app.require_subcommand(1);

  Overrides o;
  std::string out, source_model, program, dataset;
  r2dl::CsvColumns columns;

  auto* train = app.add_subcommand("train-source", "train and freeze the source classifier");
  add_common(train, o, out);

  auto* reprogram = app.add_subcommand("reprogram", "learn an adversarial program for the target task");
  add_common(reprogram, o, out);
  add_reprogram_flags(reprogram, o);
  reprogram->add_option("--source-model", source_model, "source checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "score a saved program on a CSV dataset");
  eval->add_option("--program", program, "program checkpoint")->required();
  eval->add_option("--source-model", source_model, "source checkpoint")->required();
  eval->add_option("--dataset", dataset, "CSV with sequence and label columns")->required();
  eval->add_option("--sequence-column", columns.sequence);
  eval->add_option("--label-column", columns.label);
  eval->add_option("--out", out, "optional output directory for eval.json");

  auto* sweep_data = app.add_subcommand("sweep-data", "accuracy against training-set size");
  add_common(sweep_data, o, out);
  add_reprogram_flags(sweep_data, o);
  sweep_data->add_option("--source-model", source_model, "source checkpoint")->required();
  sweep_data->add_option("--grid", o.grid, "comma-separated training sizes");

  auto* sweep_ksvd = app.add_subcommand("sweep-ksvd", "accuracy against k-SVD sweeps per projection");
  add_common(sweep_ksvd, o, out);
  add_reprogram_flags(sweep_ksvd, o);
  sweep_ksvd->add_option("--source-model", source_model, "source checkpoint")->required();
  sweep_ksvd->add_option("--grid", o.grid, "comma-separated k-SVD sweep counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      r2dl::cmd_train_source(resolve(o), out, std::cout);
    } else if (*reprogram) {
      const auto rep = r2dl::cmd_reprogram(resolve(o), source_model, out, std::cout);
      if (!rep.source_checkpoint_unchanged) {
        std::cerr << "error: source checkpoint changed during reprogramming\n";
        return kExitRuntime;
      }
    } else if (*eval) {
      std::optional<std::filesystem::path> dir;
      if (!out.empty()) dir = out;
      r2dl::cmd_eval(program, source_model, dataset, columns, dir, std::cout);
    } else if (*sweep_data) {
      auto cfg = resolve(o);
      if (!o.grid.empty()) cfg.data_grid = parse_grid(o.grid);
      r2dl::cmd_sweep_data(cfg, source_model, out, std::cout);
    } else if (*sweep_ksvd) {
      auto cfg = resolve(o);
      if (!o.grid.empty()) cfg.ksvd_grid = parse_grid(o.grid);
      r2dl::cmd_sweep_ksvd(cfg, source_model, out, std::cout);
    }
  } catch (const r2dl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const r2dl::FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const r2dl::DegenerateDataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

// optosq: run the registered experiments from a TOML/JSON config.
//
//   optosq list-experiments
//   optosq derive configs/fig2.toml
//   optosq run configs/fig5.toml --out results/fig5 --threads 4

#include <CLI11.hpp>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "optosq/experiments.hpp"

namespace {

std::vector<int> parse_dims(const std::string& text) {
  std::vector<int> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const int d = std::stoi(part, &used);
      if (used != part.size() || d < 2) throw std::invalid_argument(part);
      dims.push_back(d);
    } catch (const std::exception&) {
      throw optosq::ConfigError("--truncation", "expected comma-separated integers >= 2, got '" + text + "'");
    }
  }
  if (dims.size() != 2 && dims.size() != 3) {
    throw optosq::ConfigError("--truncation", "give 2 dims (b,c) or 3 dims (a,b,c)");
  }
  return dims;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mirror-squeezing simulator: mean field, master equation and covariance-matrix tracks"};
  app.require_subcommand(1);

  std::string config_path, out_dir, truncation;
  int threads = 0;
  double t_final = 0.0, dt = 0.0;

  auto* run = app.add_subcommand("run", "run the experiment named in a config file");
  run->add_option("config", config_path, "TOML or JSON config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (overrides the config)");
  run->add_option("--threads", threads, "worker threads for grid experiments")->check(CLI::PositiveNumber);
  run->add_option("--truncation", truncation, "Fock dims, e.g. 14,8 (effective) or 4,10,4 (three-mode)");
  run->add_option("--t-final", t_final, "final time for every time-stepping track")->check(CLI::PositiveNumber);
  run->add_option("--dt", dt, "step for every time-stepping track")->check(CLI::PositiveNumber);

  auto* derive = app.add_subcommand("derive", "print derived parameters as JSON");
  derive->add_option("config", config_path, "TOML or JSON config")->required()->check(CLI::ExistingFile);

  app.add_subcommand("list-experiments", "print the experiment ids");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("list-experiments")) {
      for (const auto& e : optosq::experiment_list()) std::cout << e.id << "\t" << e.description << "\n";
      return 0;
    }
    optosq::RunConfig cfg = optosq::load_config(config_path);
    if (app.got_subcommand("derive")) {
      std::cout << optosq::derived_report(cfg).dump(2) << "\n";
      return 0;
    }

    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (threads > 0) cfg.threads = threads;
    if (!truncation.empty()) {
      const auto dims = parse_dims(truncation);
      (dims.size() == 2 ? cfg.truncation_effective : cfg.truncation_full) = dims;
    }
    for (optosq::TrackSettings* t : {&cfg.meanfield, &cfg.me_full, &cfg.me_effective, &cfg.cm}) {
      if (t_final > 0.0) t->t_final = t_final;
      if (dt > 0.0) t->dt = dt;
    }

    const optosq::RunSummary s = optosq::run(cfg);
    for (const auto& f : s.files) std::cout << (s.output_dir / f).string() << "\n";
    std::cout << (s.output_dir / "manifest.json").string() << "\n";
    for (const auto& i : s.items) {
      if (!i.converged) std::cerr << "not converged: " << i.name << (i.note.empty() ? "" : " (" + i.note + ")") << "\n";
    }
    return s.all_converged() ? 0 : 3;
  } catch (const optosq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const optosq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

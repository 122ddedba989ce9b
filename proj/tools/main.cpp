#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "jntk/datasets.hpp"
#include "jntk/errors.hpp"
#include "jntk/experiments.hpp"
#include "jntk/report_io.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitAssumption = 4;

struct Overrides {
  std::string config_path;
  std::string out_dir = "out";
  long long seed = -1;
  int subset = -1;
  int quad_order = -1;
  bool unsafe_activation = false;
};

jntk::ExperimentConfig load_config(const Overrides& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config_path.empty()) {
    std::ifstream is(o.config_path);
    if (!is) throw jntk::DomainError("cannot open config file " + o.config_path);
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw jntk::DomainError("config file " + o.config_path + ": " + e.what());
    }
  }
  jntk::ExperimentConfig cfg = jntk::ExperimentConfig::from_json(j);
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (o.subset >= 0) cfg.dataset.subset = o.subset;
  if (o.quad_order >= 0) cfg.quad_order = o.quad_order;
  if (o.unsafe_activation) cfg.unsafe_activation = true;
  // Re-validate after the overrides.
  return jntk::ExperimentConfig::from_json(cfg.to_json());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Jacobian NNGP / JNTK kernels, finite networks and robust training experiments"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON experiment config");
    sub->add_option("--seed", o.seed, "base seed (overrides the config)");
    sub->add_option("--out", o.out_dir, "output directory");
    sub->add_option("--subset", o.subset, "keep only the first K dataset points");
    sub->add_option("--quad-order", o.quad_order, "Gauss-Hermite nodes per dimension");
    sub->add_flag("--unsafe-activation", o.unsafe_activation, "allow the square activation at depth > 1");
  };

  auto* nngp = app.add_subcommand("nngp-conv", "Monte-Carlo NNGP estimate vs limiting kernel, per width");
  auto* init = app.add_subcommand("jntk-init", "finite JNTK at initialisation vs limiting JNTK, per width");
  auto* drift = app.add_subcommand("jntk-drift", "JNTK drift during robust training, per width");
  auto* trn = app.add_subcommand("train", "robust training of one network");
  auto* reg = app.add_subcommand("regress", "kernel regression eigenfeature analysis over a lambda sweep");
  auto* mineig = app.add_subcommand("min-eig", "minimum Gram eigenvalue per depth and activation");
  auto* dataset = app.add_subcommand("dataset", "generate or ingest a dataset");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "Fibonacci-lattice points on the sphere");
  auto* load = dataset->add_subcommand("load", "load, scale, normalise and filter a CSV file");
  for (auto* s : {nngp, init, drift, trn, reg, mineig, gen, load}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const jntk::ExperimentConfig cfg = load_config(o);
    jntk::echo_config(cfg, o.out_dir);
    if (!*dataset) {
      const std::vector<std::string> names = *mineig ? cfg.activations : std::vector<std::string>{cfg.activation};
      for (const auto& name : names) {
        const auto act = jntk::Activation::make(jntk::parse_activation_kind(name), cfg.normalise);
        std::printf("activation %s, scale %.17g\n", name.c_str(), act.scale());
      }
    }
    if (*nngp) {
      jntk::run_nngp_convergence(cfg, o.out_dir);
    } else if (*init) {
      jntk::run_jntk_init(cfg, o.out_dir);
    } else if (*drift) {
      jntk::run_jntk_drift(cfg, o.out_dir);
    } else if (*trn) {
      const auto res = jntk::run_train(cfg, o.out_dir);
      std::printf("depth %d, final loss %.6g, accuracy %.3f\n", res.depth, res.loss.back(), res.accuracy.back());
    } else if (*reg) {
      const auto res = jntk::run_regression_analysis(cfg, o.out_dir);
      std::printf("depth %d, %zu lambda values\n", res.depth, res.lambdas.size());
    } else if (*mineig) {
      jntk::run_min_eig(cfg, o.out_dir);
    } else if (*gen || *load) {
      jntk::DatasetSpec spec = cfg.dataset;
      if (*load && spec.kind != "csv") {
        if (spec.path.empty()) throw jntk::DomainError("dataset load needs dataset.path in the config");
        spec.kind = "csv";
      }
      if (*gen) spec.kind = "fibonacci";
      jntk::ExperimentConfig c = cfg;
      c.dataset = spec;
      const jntk::Dataset ds = c.make_dataset();
      jntk::write_csv_file(o.out_dir + "/dataset.csv", cfg.hash(),
                           [&](std::ostream& os) { jntk::write_dataset_csv(os, ds); });
      std::printf("%d points in dimension %d, %zu rows removed\n", ds.n(), ds.d0(), ds.removed_rows.size());
    }
  } catch (const jntk::AssumptionViolation& e) {
    std::fprintf(stderr, "assumption violation: %s (min eigenvalue %.6g, threshold %.6g)\n", e.what(), e.min_eig(),
                 e.threshold());
    return kExitAssumption;
  } catch (const jntk::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const jntk::DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const jntk::IngestionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}

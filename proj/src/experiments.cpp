#include "jntk/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "jntk/errors.hpp"
#include "jntk/kernel_regression.hpp"
#include "jntk/mlp.hpp"
#include "jntk/report_io.hpp"
#include "jntk/robust_training.hpp"
#include "jntk/rng.hpp"

namespace jntk {

using nlohmann::json;

json ExperimentConfig::to_json() const {
  json ds = {{"kind", dataset.kind},
             {"n", dataset.n},
             {"dim", dataset.dim},
             {"path", dataset.path},
             {"target", dataset.target},
             {"parallel_threshold", dataset.parallel_threshold},
             {"subset", dataset.subset}};
  return json{{"activation", activation},
              {"normalise", normalise},
              {"depth", depth},
              {"depths", depths},
              {"activations", activations},
              {"widths", widths},
              {"seed", seed},
              {"repetitions", repetitions},
              {"samples", samples},
              {"dataset", ds},
              {"lambda", lambda},
              {"lambdas", lambdas},
              {"kappa", kappa},
              {"eta", eta},
              {"steps", steps},
              {"quad_order", quad_order},
              {"unsafe_activation", unsafe_activation},
              {"auto_depth", auto_depth},
              {"max_depth", max_depth},
              {"perturb_small", perturb_small},
              {"perturb_large", perturb_large},
              {"bootstrap_resamples", bootstrap_resamples}};
}

namespace {

void reject_unknown(const json& j, const json& known, const std::string& where) {
  if (!j.is_object()) throw DomainError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw DomainError("unknown config key '" + where + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  const json defaults = c.to_json();
  reject_unknown(j, defaults, "");
  read(j, "activation", c.activation);
  read(j, "normalise", c.normalise);
  read(j, "depth", c.depth);
  read(j, "depths", c.depths);
  read(j, "activations", c.activations);
  read(j, "widths", c.widths);
  read(j, "seed", c.seed);
  read(j, "repetitions", c.repetitions);
  read(j, "samples", c.samples);
  read(j, "lambda", c.lambda);
  read(j, "lambdas", c.lambdas);
  read(j, "kappa", c.kappa);
  read(j, "eta", c.eta);
  read(j, "steps", c.steps);
  read(j, "quad_order", c.quad_order);
  read(j, "unsafe_activation", c.unsafe_activation);
  read(j, "auto_depth", c.auto_depth);
  read(j, "max_depth", c.max_depth);
  read(j, "perturb_small", c.perturb_small);
  read(j, "perturb_large", c.perturb_large);
  read(j, "bootstrap_resamples", c.bootstrap_resamples);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d, defaults.at("dataset"), "dataset.");
    read(d, "kind", c.dataset.kind);
    read(d, "n", c.dataset.n);
    read(d, "dim", c.dataset.dim);
    read(d, "path", c.dataset.path);
    read(d, "target", c.dataset.target);
    read(d, "parallel_threshold", c.dataset.parallel_threshold);
    read(d, "subset", c.dataset.subset);
  }

  parse_activation_kind(c.activation);
  for (const auto& a : c.activations) parse_activation_kind(a);
  if (c.depth < 1) throw DomainError("depth must be at least 1");
  for (int d : c.depths)
    if (d < 1) throw DomainError("depths must be at least 1");
  if (c.widths.empty()) throw DomainError("widths must not be empty");
  for (int w : c.widths)
    if (w < 1) throw DomainError("widths must be positive");
  if (c.repetitions < 1) throw DomainError("repetitions must be at least 1");
  if (c.samples < 2) throw DomainError("samples must be at least 2");
  if (!(c.lambda > 0.0 && c.lambda <= 1.0)) throw DomainError("lambda must lie in (0, 1]");
  for (double l : c.lambdas)
    if (!(l > 0.0 && l <= 1.0)) throw DomainError("lambdas must lie in (0, 1]");
  if (!(c.kappa > 0.0)) throw DomainError("kappa must be positive");
  if (!(c.eta >= 0.0)) throw DomainError("eta must be non-negative");
  if (c.steps < 1) throw DomainError("steps must be at least 1");
  if (c.quad_order < 1 || c.quad_order > kMaxQuadOrder) throw DomainError("quad_order must lie in [1, 256]");
  if (c.max_depth < 1) throw DomainError("max_depth must be at least 1");
  if (c.bootstrap_resamples < 1) throw DomainError("bootstrap_resamples must be positive");
  if (c.dataset.kind != "fibonacci" && c.dataset.kind != "csv")
    throw DomainError("dataset.kind must be 'fibonacci' or 'csv'");
  if (c.dataset.subset < 0) throw DomainError("dataset.subset must be non-negative");
  return c;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(to_json().dump())); }

Activation ExperimentConfig::make_activation() const {
  return Activation::make(parse_activation_kind(activation), normalise);
}

KernelOptions ExperimentConfig::kernel_options() const {
  KernelOptions o;
  o.quad_order = quad_order;
  o.allow_unsafe_activation = unsafe_activation;
  return o;
}

Dataset ExperimentConfig::make_dataset() const {
  Dataset ds = dataset.kind == "csv"
                   ? load_csv(dataset.path, dataset.target, dataset.parallel_threshold)
                   : fibonacci_sphere(dataset.n, dataset.dim);
  if (dataset.subset > 0) ds = ds.subset(std::min(dataset.subset, ds.n()));
  ds.validate();
  return ds;
}

void echo_config(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream os(out_dir + "/config.json", std::ios::binary);
  if (!os) throw IngestionError("cannot write " + out_dir + "/config.json");
  os << cfg.to_json().dump(2) << '\n';
}

std::pair<Dataset, Dataset> split_alternating(const Dataset& ds) {
  Dataset train = ds, test = ds;
  train.inputs.clear();
  test.inputs.clear();
  std::vector<double> ytr, yte;
  for (int i = 0; i < ds.n(); ++i) {
    if (i % 2 == 0) {
      train.inputs.push_back(ds.inputs[i]);
      ytr.push_back(ds.targets[i]);
    } else {
      test.inputs.push_back(ds.inputs[i]);
      yte.push_back(ds.targets[i]);
    }
  }
  train.targets = Eigen::Map<Eigen::VectorXd>(ytr.data(), static_cast<Eigen::Index>(ytr.size()));
  test.targets = Eigen::Map<Eigen::VectorXd>(yte.data(), static_cast<Eigen::Index>(yte.size()));
  train.name = ds.name + "/train";
  test.name = ds.name + "/test";
  return {train, test};
}

Eigen::MatrixXd entrywise_max_distance(const GramMatrix& a, const GramMatrix& b) {
  if (a.n() != b.n() || a.d0() != b.d0()) throw DomainError("Gram matrices differ in shape");
  const int bs = a.block_size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(bs, bs);
  for (int i = 0; i < a.n(); ++i)
    for (int j = 0; j < a.n(); ++j)
      for (int p = 0; p < bs; ++p)
        for (int q = 0; q < bs; ++q)
          out(p, q) = std::max(out(p, q), std::abs(a.matrix()(i * bs + p, j * bs + q) -
                                                   b.matrix()(i * bs + p, j * bs + q)));
  return out;
}

double ConvergenceResult::median_at(std::size_t w, int a, int b) const {
  return median(deltas[w][a * block + b]);
}

double ConvergenceResult::median_max_at(std::size_t w) const {
  const std::size_t reps = deltas[w][0].size();
  std::vector<double> m(reps, 0.0);
  for (const auto& cell : deltas[w])
    for (std::size_t r = 0; r < reps; ++r) m[r] = std::max(m[r], cell[r]);
  return median(m);
}

double DriftResult::median_max_at(std::size_t w, std::size_t s) const {
  const std::size_t reps = drift[w][s][0].size();
  std::vector<double> m(reps, 0.0);
  for (const auto& cell : drift[w][s])
    for (std::size_t r = 0; r < reps; ++r) m[r] = std::max(m[r], cell[r]);
  return median(m);
}

namespace {

void emit_convergence(const ExperimentConfig& cfg, const ConvergenceResult& res, const std::string& out_dir,
                      const std::string& stem, const std::string& title) {
  std::filesystem::create_directories(out_dir);
  write_csv_file(out_dir + "/" + stem + ".csv", cfg.hash(), [&](std::ostream& os) {
    os << "width,a,b,delta,ci_lo,ci_hi\n";
    for (std::size_t w = 0; w < res.widths.size(); ++w)
      for (int a = 0; a < res.block; ++a)
        for (int b = 0; b < res.block; ++b) {
          const auto& vals = res.deltas[w][a * res.block + b];
          const auto ci = bootstrap_median_ci(
              vals, cfg.bootstrap_resamples,
              derive_seed(cfg.seed ^ 0xb0075u, static_cast<std::uint64_t>((w * res.block + a) * res.block + b)));
          os << res.widths[w] << ',' << a << ',' << b << ',' << format_double(median(vals)) << ','
             << format_double(ci.first) << ',' << format_double(ci.second) << '\n';
        }
  });
  std::vector<Series> series;
  for (int a = 0; a < res.block; ++a)
    for (int b = a; b < res.block; ++b) {
      if (a > 2 || b > 2) continue;
      Series s;
      s.label = "(" + std::to_string(a) + "," + std::to_string(b) + ")";
      for (std::size_t w = 0; w < res.widths.size(); ++w) {
        s.x.push_back(res.widths[w]);
        s.y.push_back(res.median_at(w, a, b));
      }
      series.push_back(std::move(s));
    }
  write_svg_plot(out_dir + "/" + stem + ".svg", {title, "width", "median max-norm distance", true, true, true},
                 series);
}

ConvergenceResult make_result(const ExperimentConfig& cfg, int block) {
  ConvergenceResult res;
  res.widths = cfg.widths;
  res.block = block;
  res.deltas.assign(cfg.widths.size(), std::vector<std::vector<double>>(block * block));
  return res;
}

}  // namespace

ConvergenceResult run_nngp_convergence(const ExperimentConfig& cfg, const std::string& out_dir) {
  const Activation act = cfg.make_activation();
  const Dataset ds = cfg.make_dataset();
  const LimitingKernel kernel(act, cfg.depth, cfg.kernel_options());
  const GramMatrix reference = kernel.sigma_gram(ds.inputs);
  ConvergenceResult res = make_result(cfg, ds.d0() + 1);
  for (std::size_t w = 0; w < cfg.widths.size(); ++w)
    for (int r = 0; r < cfg.repetitions; ++r) {
      const GramMatrix est = estimate_nngp(act, cfg.widths[w], cfg.depth, ds.inputs, cfg.kappa, cfg.samples,
                                           derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
      const Eigen::MatrixXd dist = entrywise_max_distance(est, reference);
      for (int a = 0; a < res.block; ++a)
        for (int b = 0; b < res.block; ++b) res.deltas[w][a * res.block + b].push_back(dist(a, b));
    }
  emit_convergence(cfg, res, out_dir, "nngp_convergence", "Jacobian NNGP: Monte-Carlo vs limit");
  return res;
}

ConvergenceResult run_jntk_init(const ExperimentConfig& cfg, const std::string& out_dir) {
  const Activation act = cfg.make_activation();
  const Dataset ds = cfg.make_dataset();
  const LimitingKernel kernel(act, cfg.depth, cfg.kernel_options());
  const GramMatrix reference = kernel.jntk_gram(ds.inputs);
  ConvergenceResult res = make_result(cfg, ds.d0() + 1);
  const double k2 = cfg.kappa * cfg.kappa;
  for (std::size_t w = 0; w < cfg.widths.size(); ++w)
    for (int r = 0; r < cfg.repetitions; ++r) {
      const MlpState st = init_mlp(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)), cfg.widths[w],
                                   cfg.depth, ds.d0(), cfg.kappa);
      GramMatrix fin = finite_jntk_gram(st, act, ds.inputs);
      fin.matrix() /= k2;
      const Eigen::MatrixXd dist = entrywise_max_distance(fin, reference);
      for (int a = 0; a < res.block; ++a)
        for (int b = 0; b < res.block; ++b) res.deltas[w][a * res.block + b].push_back(dist(a, b));
    }
  emit_convergence(cfg, res, out_dir, "jntk_init", "JNTK at initialisation: finite vs limit");
  return res;
}

DriftResult run_jntk_drift(const ExperimentConfig& cfg, const std::string& out_dir) {
  const Activation act = cfg.make_activation();
  const Dataset ds = cfg.make_dataset();
  const LimitingKernel kernel(act, cfg.depth, cfg.kernel_options());
  const GramMatrix reference = kernel.jntk_gram(ds.inputs);
  TrainConfig tc;
  tc.lambda = cfg.lambda;
  tc.eta = cfg.eta;
  tc.steps = cfg.steps;
  tc.log_schedule = log2_schedule(cfg.steps);
  tc.log_schedule.erase(tc.log_schedule.begin());  // t = 0 is the init distance, not drift

  DriftResult res;
  res.widths = cfg.widths;
  res.steps = tc.log_schedule;
  res.block = ds.d0() + 1;
  const int cells = res.block * res.block;
  res.drift.assign(cfg.widths.size(), std::vector<std::vector<std::vector<double>>>(
                                          res.steps.size(), std::vector<std::vector<double>>(cells)));
  for (std::size_t w = 0; w < cfg.widths.size(); ++w)
    for (int r = 0; r < cfg.repetitions; ++r) {
      MlpState st = init_mlp(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)), cfg.widths[w], cfg.depth,
                             ds.d0(), cfg.kappa);
      const TrainLog log = train(st, act, ds, tc, &reference);
      for (const auto& rec : log.drift) {
        const auto s = static_cast<std::size_t>(
            std::find(res.steps.begin(), res.steps.end(), rec.step) - res.steps.begin());
        res.drift[w][s][rec.a * res.block + rec.b].push_back(rec.drift);
      }
    }

  std::filesystem::create_directories(out_dir);
  write_csv_file(out_dir + "/jntk_drift.csv", cfg.hash(), [&](std::ostream& os) {
    os << "width,step,a,b,delta\n";
    for (std::size_t w = 0; w < res.widths.size(); ++w)
      for (std::size_t s = 0; s < res.steps.size(); ++s)
        for (int c = 0; c < cells; ++c)
          os << res.widths[w] << ',' << res.steps[s] << ',' << c / res.block << ',' << c % res.block << ','
             << format_double(median(res.drift[w][s][c])) << '\n';
  });
  std::vector<Series> series;
  for (std::size_t w = 0; w < res.widths.size(); ++w) {
    Series sr;
    sr.label = "d=" + std::to_string(res.widths[w]);
    for (std::size_t s = 0; s < res.steps.size(); ++s) {
      sr.x.push_back(res.steps[s]);
      sr.y.push_back(res.median_max_at(w, s));
    }
    series.push_back(std::move(sr));
  }
  write_svg_plot(out_dir + "/jntk_drift.svg", {"JNTK drift during training", "step", "max-norm distance", true, true, true},
                 series);
  return res;
}

TrainResult run_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  const Activation act = cfg.make_activation();
  const Dataset ds = cfg.make_dataset();
  TrainResult res;
  res.depth = cfg.auto_depth ? auto_depth(act, ds, cfg.lambda, cfg.max_depth, cfg.kernel_options()) : cfg.depth;
  const LimitingKernel kernel(act, res.depth, cfg.kernel_options());
  const GramMatrix reference = kernel.jntk_gram(ds.inputs);
  TrainConfig tc;
  tc.lambda = cfg.lambda;
  tc.eta = cfg.eta;
  tc.steps = cfg.steps;
  tc.log_schedule = log2_schedule(cfg.steps);
  MlpState st = init_mlp(cfg.seed, cfg.widths.front(), res.depth, ds.d0(), cfg.kappa);
  const TrainLog log = train(st, act, ds, tc, &reference);
  res.loss = log.loss;
  res.accuracy = log.accuracy;

  std::filesystem::create_directories(out_dir);
  const std::string h = cfg.hash();
  write_csv_file(out_dir + "/loss.csv", h, [&](std::ostream& os) {
    os << "step,loss,accuracy\n";
    for (std::size_t t = 0; t < log.loss.size(); ++t)
      os << t << ',' << format_double(log.loss[t]) << ',' << format_double(log.accuracy[t]) << '\n';
  });
  write_csv_file(out_dir + "/train.csv", h, [&](std::ostream& os) { write_train_csv(os, log); });
  write_csv_file(out_dir + "/drift.csv", h, [&](std::ostream& os) { write_drift_csv(os, log); });
  save_weights(out_dir + "/weights.bin", st);
  Series s{"loss", {}, {}};
  for (std::size_t t = 0; t < log.loss.size(); ++t) {
    s.x.push_back(static_cast<double>(t));
    s.y.push_back(log.loss[t]);
  }
  write_svg_plot(out_dir + "/loss.svg", {"training loss", "step", "loss", false, true, true}, {s});
  return res;
}

RegressionResult run_regression_analysis(const ExperimentConfig& cfg, const std::string& out_dir) {
  const Activation act = cfg.make_activation();
  const auto [train_set, test_set] = split_alternating(cfg.make_dataset());
  if (test_set.n() == 0) throw DomainError("regression analysis needs at least two points");
  RegressionResult res;
  const double hardest = *std::min_element(cfg.lambdas.begin(), cfg.lambdas.end());
  res.depth = cfg.auto_depth ? auto_depth(act, train_set, hardest, cfg.max_depth, cfg.kernel_options()) : cfg.depth;
  const LimitingKernel kernel(act, res.depth, cfg.kernel_options());
  const StandardNtkRegressor attack(kernel, train_set);
  const DifferentiablePredictor pred = [&](const Eigen::VectorXd& x) { return attack.value_and_gradient(x); };

  std::filesystem::create_directories(out_dir);
  const std::string h = cfg.hash();
  std::vector<Series> small_plot, large_plot;
  std::vector<std::string> summary;
  for (std::size_t k = 0; k < cfg.lambdas.size(); ++k) {
    const double lambda = cfg.lambdas[k];
    const NtkRegressor reg(kernel, train_set, lambda);
    const EigenfeatureReport rep = eigenfeatures(reg, test_set, {cfg.perturb_small, cfg.perturb_large}, pred);
    res.lambdas.push_back(lambda);
    res.completeness_error.push_back(rep.completeness_error);
    res.residual.push_back(reg.report().residual);
    char name[64];
    std::snprintf(name, sizeof name, "/eigenfeatures_lambda_%g.csv", lambda);
    write_csv_file(out_dir + name, h, [&](std::ostream& os) { write_eigenfeature_csv(os, rep); });
    summary.push_back(format_double(lambda) + ',' + std::to_string(res.depth) + ',' +
                      to_string(reg.report().method) + ',' + format_double(reg.report().residual) + ',' +
                      format_double(rep.acc_full) + ',' + format_double(rep.completeness_error) + ',' +
                      std::to_string(rep.skipped.size()));
    char label[32];
    std::snprintf(label, sizeof label, "lambda=%g", lambda);
    small_plot.push_back({label, rep.acc, rep.acc_small});
    large_plot.push_back({label, rep.acc, rep.acc_large});
  }
  write_csv_file(out_dir + "/regression_summary.csv", h, [&](std::ostream& os) {
    os << "lambda,depth,solver,residual,acc,completeness_error,skipped\n";
    for (const auto& line : summary) os << line << '\n';
  });
  write_svg_plot(out_dir + "/eigenfeatures_small.svg",
                 {"eigenfeature accuracy vs small perturbation", "test accuracy", "perturbed accuracy", false, false, false},
                 small_plot);
  write_svg_plot(out_dir + "/eigenfeatures_large.svg",
                 {"eigenfeature accuracy vs large perturbation", "test accuracy", "perturbed accuracy", false, false, false},
                 large_plot);
  return res;
}

void run_min_eig(const ExperimentConfig& cfg, const std::string& out_dir) {
  const Dataset ds = cfg.make_dataset();
  std::filesystem::create_directories(out_dir);
  const std::string h = cfg.hash();
  std::vector<Series> series;
  for (const auto& name : cfg.activations) {
    const Activation act = Activation::make(parse_activation_kind(name), cfg.normalise);
    const MinEigReport rep = min_eig_sweep(act, ds, cfg.depths, cfg.lambda, cfg.kernel_options());
    write_csv_file(out_dir + "/min_eig_" + name + ".csv", h, [&](std::ostream& os) { write_min_eig_csv(os, rep); });
    Series j{name + " JNTK", {}, {}}, n{name + " NTK", {}, {}};
    for (const auto& r : rep.rows) {
      j.x.push_back(r.depth);
      j.y.push_back(r.jntk_min);
      n.x.push_back(r.depth);
      n.y.push_back(r.ntk_min);
    }
    series.push_back(std::move(j));
    series.push_back(std::move(n));
  }
  write_svg_plot(out_dir + "/min_eig.svg", {"smallest Gram eigenvalue", "depth", "min eigenvalue", false, true, true},
                 series);
}

}  // namespace jntk

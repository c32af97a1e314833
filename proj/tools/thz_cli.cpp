// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "thz/config.hpp"
#include "thz/diagnostics.hpp"
#include "thz/gcc.hpp"
#include "thz/manufactured.hpp"
#include "thz/neural.hpp"
#include "thz/ocp.hpp"
#include "thz/training.hpp"

namespace {

using namespace thz;

double wall_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string hash_line(const RunConfig& cfg) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "# config_hash=%016llx\n",
                static_cast<unsigned long long>(cfg.hash()));
  return buf;
}

struct Problem {
  DomainSpec domain;
  Material material;
  CubicFeSpace space;
  PmlProfile pml;
  CoeffFn chi;
  MarchOptions opt;
  std::vector<double> taps;
};

Problem build_problem(const RunConfig& cfg) {
  Problem pr;
  pr.domain.x_left = cfg.num("domain.x_left");
  pr.domain.x_right = cfg.num("domain.x_right");
  pr.domain.poling_period = cfg.num("domain.poling_period");
  pr.domain.n_periods = cfg.integer("domain.n_periods");
  pr.domain.pml_width = cfg.num("domain.pml_width");

  pr.material.gamma0 = cfg.num("material.gamma0");
  pr.material.nu_t = cfg.num("material.nu_t");
  pr.material.eps_omega = cfg.num("material.eps_omega");
  pr.material.eps_Omega = cfg.num("material.eps_Omega");
  pr.material.chi2 = cfg.num("material.chi2");
  pr.material.validate();

  auto [mesh, space] = build_domain(pr.domain, cfg.integer("domain.n_elem_physical"),
                                    cfg.integer("domain.n_elem_pml"));
  pr.space = space;

  if (pr.domain.pml_width > 0.0) {
    pr.pml.x_start = pr.domain.x_right;
    pr.pml.width = pr.domain.pml_width;
    pr.pml.grade_power = cfg.integer("pml.grade_power");
    pr.pml.sigma_max = PmlProfile::sigma_for_round_trip(pr.pml.width, pr.pml.grade_power,
                                                        cfg.num("pml.round_trip"));
  }

  const DomainSpec dom = pr.domain;
  const double chi2 = pr.material.chi2;
  pr.chi = [dom, chi2](double x) { return chi2 * dom.chi2_sign(x); };

  pr.opt.n_slabs = cfg.integer("time.n_slabs");
  pr.opt.k = cfg.num("time.t_final") / pr.opt.n_slabs;
  pr.opt.newton.abs_tol = cfg.num("time.newton_abs_tol");
  pr.opt.newton.rel_tol = cfg.num("time.newton_rel_tol");
  pr.opt.newton.max_iter = cfg.integer("time.newton_max_iter");
  pr.opt.abs_mode =
      cfg.str("time.abs_mode") == "magnitude" ? AbsMode::magnitude : AbsMode::contraction;
  if (pr.pml.enabled()) pr.opt.pml = &pr.pml;

  pr.taps.push_back(pr.domain.x_left);
  for (double x : collocation_points(pr.domain.poling_period, pr.domain.n_periods))
    pr.taps.push_back(pr.domain.x_left + x);
  pr.opt.taps = pr.taps;
  return pr;
}

PulseParams pulse_from_config(const RunConfig& cfg) {
  PulseParams xi;
  xi.tau = cfg.num("ocp.tau");
  xi.p = cfg.num("ocp.p");
  std::stringstream fs(cfg.str("ocp.frequencies"));
  std::string tok;
  while (std::getline(fs, tok, ',')) {
    xi.f.push_back(std::stod(tok));
    xi.a.push_back(cfg.num("ocp.amplitude"));
    xi.phi.push_back(0.0);
    xi.zeta.push_back(0.0);
  }
  if (static_cast<int>(xi.f.size()) != cfg.integer("ocp.n_components"))
    throw std::invalid_argument("config: ocp.frequencies count must match ocp.n_components");
  xi.bounds.tau_max = cfg.num("ocp.tau_max");
  xi.bounds.p_max = cfg.num("ocp.p_max");
  xi.bounds.a_max = cfg.num("ocp.a_max");
  xi.bounds.zeta_max = cfg.num("ocp.zeta_max");
  xi.bounds.f_max = cfg.num("ocp.f_max");
  return xi;
}

int cmd_convergence(const RunConfig& cfg, const std::string& out_dir) {
  ConvergenceSetup setup;
  setup.material.gamma0 = cfg.num("material.gamma0");
  setup.material.nu_t = cfg.num("material.nu_t");
  setup.material.eps_omega = cfg.num("material.eps_omega");
  setup.material.eps_Omega = cfg.num("material.eps_Omega");
  setup.chi = cfg.num("convergence.chi2");
  setup.t_final = cfg.num("convergence.t_final");
  setup.levels = cfg.integer("convergence.levels");
  setup.base_elems = cfg.integer("convergence.base_elems");
  setup.base_slabs = cfg.integer("convergence.base_slabs");
  setup.waves = {{cfg.num("convergence.omega1"), cfg.num("convergence.speed1")},
                 {cfg.num("convergence.omega2"), cfg.num("convergence.speed2")}};
  setup.with_pml = cfg.flag("convergence.with_pml");
  if (setup.levels < 3) throw std::invalid_argument("convergence: need at least 3 levels");

  const auto rows = run_convergence(setup);
  const char* fields[4] = {"E", "A", "P", "U"};

  std::ofstream csv(out_dir + "/eoc.csv");
  csv << hash_line(cfg);
  csv << "level,n_elem,n_slabs,k";
  for (int fi = 0; fi < 4; ++fi)
    csv << ",linf_l2_" << fields[fi] << ",eoc_linf_" << fields[fi] << ",l2_l2_" << fields[fi]
        << ",eoc_l2_" << fields[fi];
  csv << '\n';
  csv.precision(17);
  bool monotone = true;
  for (const auto& r : rows) {
    csv << r.level << ',' << r.n_elem << ',' << r.n_slabs << ',' << r.k;
    for (int fi = 0; fi < 4; ++fi)
      csv << ',' << r.linf_l2[fi] << ',' << r.eoc_linf[fi] << ',' << r.l2_l2[fi] << ','
          << r.eoc_l2[fi];
    csv << '\n';
  }
  for (size_t i = 1; i < rows.size(); ++i)
    for (int fi = 0; fi < 4; ++fi)
      if (rows[i].linf_l2[fi] > rows[i - 1].linf_l2[fi] ||
          rows[i].l2_l2[fi] > rows[i - 1].l2_l2[fi])
        monotone = false;

  std::printf("%5s %7s %7s  %12s %6s  %12s %6s\n", "level", "elems", "slabs", "Linf-L2(E)", "EOC",
              "L2-L2(E)", "EOC");
  for (const auto& r : rows)
    std::printf("%5d %7d %7d  %12.4e %6.2f  %12.4e %6.2f\n", r.level, r.n_elem, r.n_slabs,
                r.linf_l2[0], r.eoc_linf[0], r.l2_l2[0], r.eoc_l2[0]);
  for (int fi = 0; fi < 4; ++fi)
    std::printf("finest EOC %s: Linf-L2 %.17g  L2-L2 %.17g\n", fields[fi],
                rows.back().eoc_linf[fi], rows.back().eoc_l2[fi]);
  if (!monotone) {
    std::fprintf(stderr, "convergence: error sequence not monotone\n");
    return 2;
  }
  return 0;
}

int cmd_gendata(const RunConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  Problem pr = build_problem(cfg);
  PulseParams xi = pulse_from_config(cfg);

  TrajectorySeries pulse = sample_pulse(xi, 0.0, pr.opt.k, pr.opt.n_slabs);
  BoundarySignal bc;
  const PulseParams xiv = xi;
  const double k = pr.opt.k;
  const int n_slabs = pr.opt.n_slabs;
  bc.left = [xiv, k, n_slabs](double t) {
    TrajectorySeries one = sample_pulse(xiv, t, 1.0, 1);  // sample exactly at t
    return std::make_pair(one.value[0], one.deriv[0]);
  };

  InitialData init;
  const int J = pr.space.n_dof();
  init.u0 = init.p0 = init.a0 = init.e0 = Vec::Zero(J);
  std::array<Vec, 4> dt0;
  dt0.fill(Vec::Zero(J));
  init.derivatives = dt0;

  Forcing none;
  MarchResult res = march(pr.space, pr.material, pr.chi, init, bc, none, pr.opt);

  Dataset ds;
  ds.series = res.tap_series;
  ds.meta["config_hash"] = hash_line(cfg).substr(14, 16);
  ds.meta["config"] = cfg.serialize();
  dataset_write(out_dir + "/dataset.thz", ds);

  nlohmann::json man;
  man["wall_seconds"] = wall_since(t0);
  man["newton_iterations"] = res.newton_iterations;
  man["config_hash"] = ds.meta["config_hash"];
  std::ofstream mf(out_dir + "/gendata_manifest.json");
  mf << man.dump(2) << '\n';
  std::printf("gendata: %zu taps, %d slabs, wall %.3fs\n", ds.series.size(), pr.opt.n_slabs,
              wall_since(t0));
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& dataset_path, const std::string& out_dir,
              std::uint64_t seed_override, int workers_override) {
  const auto t0 = std::chrono::steady_clock::now();
  Dataset ds = dataset_read(dataset_path);
  if (ds.series.size() < 2) throw std::invalid_argument("train: dataset has fewer than 2 taps");

  std::vector<TrainPair> pairs;
  for (size_t i = 0; i + 1 < ds.series.size(); ++i)
    pairs.push_back({ds.series[i], ds.series[i + 1]});

  SolutionOperator op;
  op.n_steps = ds.series[0].n_steps();
  op.k = ds.series[0].k;
  op.period = ds.series.size() > 1 ? ds.series[1].x - ds.series[0].x : 0.0;
  const std::uint64_t seed =
      seed_override ? seed_override : static_cast<std::uint64_t>(cfg.integer("training.seed"));
  if (cfg.str("network.kind") == "gru") {
    op.kind = SolutionOperator::Kind::gru;
    op.gru_cfg = GruConfig::make(cfg.integer("network.layers"), cfg.integer("network.width"));
    op.gru_params = gru_init(op.gru_cfg, seed);
  } else {
    op.kind = SolutionOperator::Kind::fno;
    op.fno_cfg.layers = cfg.integer("network.layers");
    op.fno_cfg.width = cfg.integer("network.width");
    op.fno_cfg.n_modes = std::min(cfg.integer("network.n_modes"),
                                  FnoConfig::default_n_modes(op.n_steps + 1));
    op.fno_cfg.pad_fraction = cfg.num("network.pad_fraction");
    op.fno_cfg.d_in = cfg.flag("network.grid_channel") ? 3 : 2;
    op.fno_params = fno_init(op.fno_cfg, seed);
  }

  TrainConfig tc;
  tc.epochs = cfg.integer("training.epochs");
  tc.seed = seed;
  const std::string lk = cfg.str("training.loss");
  tc.loss = lk == "l2" ? LossKind::l2 : (lk == "l_c1" ? LossKind::l_c1 : LossKind::l_dt);
  tc.optimizer = cfg.str("training.optimizer") == "lbfgs" ? TrainConfig::Opt::lbfgs
                                                          : TrainConfig::Opt::adamw;
  tc.adamw.lr = cfg.num("training.lr");
  tc.adamw.weight_decay = cfg.num("training.weight_decay");
  tc.workers = workers_override > 0 ? workers_override : cfg.integer("training.workers");
  tc.train_fraction = cfg.num("training.train_fraction");

  TrainResult tr = train(tc, pairs, op);

  std::ofstream csv(out_dir + "/loss.csv");
  csv << hash_line(cfg);
  csv << "epoch,train_loss,val_loss,wall_seconds\n";
  csv.precision(17);
  for (const auto& r : tr.curve)
    csv << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.wall_seconds << '\n';

  std::map<std::string, std::string> meta;
  meta["config_hash"] = hash_line(cfg).substr(14, 16);
  meta["seed"] = std::to_string(seed);
  meta["epochs"] = std::to_string(tc.epochs);
  meta["final_val_loss"] = std::to_string(tr.curve.back().val_loss);
  checkpoint_write(out_dir + "/model.ckpt", op, meta);

  std::printf("train: %d epochs, final train %.6e val %.6e, wall %.3fs\n", tc.epochs,
              tr.curve.back().train_loss, tr.curve.back().val_loss, wall_since(t0));
  return std::isfinite(tr.curve.back().val_loss) ? 0 : 3;
}

int cmd_optimize(const RunConfig& cfg, const std::string& ckpt_path, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  SolutionOperator op = checkpoint_read(ckpt_path);
  PulseParams xi = pulse_from_config(cfg);

  OcpConfig oc;
  oc.cost.f_center = cfg.num("ocp.f_target");
  oc.cost.band_halfwidth = cfg.num("ocp.band_halfwidth");
  oc.cost.penalty_alpha = cfg.num("ocp.penalty_alpha");
  oc.cost.maximize = cfg.str("ocp.sense") != "minimize";
  oc.chain_length = cfg.integer("domain.n_periods");
  oc.max_iter = cfg.integer("ocp.max_iter");
  oc.step_tol = cfg.num("ocp.step_tol");
  oc.optimizer =
      cfg.str("ocp.optimizer") == "lbfgs" ? OcpConfig::Opt::lbfgs : OcpConfig::Opt::adamw;
  oc.adamw.lr = cfg.num("ocp.lr");

  OcpResult res = optimize_pulse(xi, op, oc);
  const double wall_total = wall_since(t0);
  const double so_eval_per_iter =
      res.trace.empty() ? 0.0 : wall_total / static_cast<double>(res.trace.size());

  const int m = xi.n();
  std::ofstream csv(out_dir + "/ocp_trace.csv");
  csv << hash_line(cfg);
  csv << "iter,cost,penalty,J";
  for (int i = 1; i <= m; ++i) csv << ",a_" << i;
  for (int i = 1; i <= m; ++i) csv << ",f_" << i;
  csv << ",tau,p,step_norm\n";
  csv.precision(17);
  for (const auto& it : res.trace) {
    const PulseParams p = PulseParams::from_flat(it.xi, xi.bounds);
    csv << it.iter << ',' << it.cost << ',' << it.penalty << ',' << it.J;
    for (int i = 0; i < m; ++i) csv << ',' << p.a[i];
    for (int i = 0; i < m; ++i) csv << ',' << p.f[i];
    csv << ',' << p.tau << ',' << p.p << ',' << it.step_norm << '\n';
  }

  nlohmann::json j;
  j["config_hash"] = hash_line(cfg).substr(14, 16);
  j["stop_reason"] = res.stop_reason;
  j["tau"] = res.params.tau;
  j["p"] = res.params.p;
  j["a"] = res.params.a;
  j["phi"] = res.params.phi;
  j["zeta"] = res.params.zeta;
  j["f"] = res.params.f;
  j["wall_seconds_total"] = wall_total;
  j["wall_seconds_per_iteration"] = so_eval_per_iter;
  std::ofstream pf(out_dir + "/pulse_optimized.json");
  pf << j.dump(2) << '\n';

  std::printf("optimize: %zu iterations, stop: %s, wall %.3fs (%.4fs per surrogate iteration)\n",
              res.trace.size(), res.stop_reason.c_str(), wall_total, so_eval_per_iter);
  return 0;
}

int cmd_report(const RunConfig& cfg, const std::string& dataset_path, const std::string& out_dir) {
  Dataset ds = dataset_read(dataset_path);
  Material mat;
  mat.gamma0 = cfg.num("material.gamma0");
  mat.nu_t = cfg.num("material.nu_t");
  mat.eps_omega = cfg.num("material.eps_omega");
  mat.eps_Omega = cfg.num("material.eps_Omega");
  const double f_lo = cfg.num("ocp.f_target") - cfg.num("ocp.band_halfwidth");
  const double f_hi = cfg.num("ocp.f_target") + cfg.num("ocp.band_halfwidth");

  std::ofstream csv(out_dir + "/report.csv");
  csv << hash_line(cfg);
  csv << "x,fluence,conversion_efficiency\n";
  csv.precision(17);
  for (size_t i = 0; i < ds.series.size(); ++i) {
    const auto& s = ds.series[i];
    const auto ir = intensity_fluence(s, mat);
    const double ce = conversion_efficiency(s, std::max(0.0, f_lo), f_hi);
    csv << s.x << ',' << ir.fluence << ',' << ce << '\n';
    spectrum_write_csv(out_dir + "/spectrum_" + std::to_string(i) + ".csv", spectrum_of(s));
  }
  std::printf("report: %zu taps analyzed\n", ds.series.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"space-time FEM + neural-operator toolkit for pulse shaping"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", dataset_path, ckpt_path;
  std::uint64_t seed = 0;
  int workers = 0;
  app.add_option("--config", config_path, "run configuration (INI)")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "seed override");
  app.add_option("--workers", workers, "worker override");

  auto* conv = app.add_subcommand("convergence", "manufactured-solution refinement study");
  auto* sim = app.add_subcommand("simulate", "march the configured problem");
  auto* gen = app.add_subcommand("gendata", "march and record interface trajectories");
  auto* trn = app.add_subcommand("train", "train the surrogate on a dataset");
  trn->add_option("--dataset", dataset_path, "dataset file")->required();
  auto* opt = app.add_subcommand("optimize", "run the pulse-shaping control loop");
  opt->add_option("--checkpoint", ckpt_path, "trained model")->required();
  auto* rep = app.add_subcommand("report", "spectra and conversion efficiencies of a dataset");
  rep->add_option("--dataset", dataset_path, "dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 1 : 0;
  }

  try {
    RunConfig cfg = RunConfig::load(config_path);
    std::filesystem::create_directories(out_dir);
    if (conv->parsed()) return cmd_convergence(cfg, out_dir);
    if (sim->parsed() || gen->parsed()) return cmd_gendata(cfg, out_dir);
    if (trn->parsed()) return cmd_train(cfg, dataset_path, out_dir, seed, workers);
    if (opt->parsed()) return cmd_optimize(cfg, ckpt_path, out_dir);
    if (rep->parsed()) return cmd_report(cfg, dataset_path, out_dir);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const thz::NewtonFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}

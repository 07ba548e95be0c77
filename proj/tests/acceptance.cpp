// Acceptance gate: one pass/fail line per release criterion. Tolerances are
// pinned here as constants; run with no arguments, exit 0 iff all pass.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "core/allan.hpp"
#include "core/fll.hpp"
#include "core/scenario.hpp"
#include "core/vector_recon.hpp"

using namespace nvlock;
namespace fs = std::filesystem;

namespace {

// pinned tolerances
constexpr double kC2SlopeRelTol = 0.05;
constexpr double kC3ResidualHz = 100.0;
constexpr double kC3DecayRelTol = 0.10;
constexpr double kC4SpreadTolNt = 100.0;
constexpr double kC5RampNt = 4e6;
constexpr double kC5MaxErrorNt = 1e3;
constexpr double kC5MinRangeRatio = 1e3;
constexpr double kC6FieldPerturbNt = 50.0;
constexpr double kC6TempTrackK = 0.01;
constexpr double kC6RampK = 2.0;
constexpr double kC7RecoveryTolNt = 200.0;
constexpr double kC7LeakageTolNt = 200.0;
constexpr double kC7NoiselessTolNt = 10.0;
constexpr double kC7FullResidualHz = 1.0;
constexpr double kC8SumRelTol = 1e-9;
constexpr double kC8RoundTripRelTol = 1e-6;
constexpr double kC8TraceRelTol = 1e-6;
constexpr double kC9SlopeTol = 0.05;
constexpr double kC9LinearityTol = 0.10;

int g_failed = 0;

void report(int n, bool pass, const std::string& what, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", n, what.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failed;
}

fs::path out_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "nvlock_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// --- criterion 1: exact zero-field resonance ------------------------------

void criterion_1() {
  const TransitionPair p = transitions_linear(0.0, {0.0});
  const bool pass = p.f_minus_hz == 2.870000e9 && p.f_plus_hz == 2.870000e9;
  report(1, pass, "zero field, zero offset puts both transitions at 2.87 GHz exactly",
         "f- = " + fmt(p.f_minus_hz) + " Hz, f+ = " + fmt(p.f_plus_hz) + " Hz");
}

// --- criterion 2: settled lock-in slope matches 2 C V0 f_dev / sigma^2 ----

void criterion_2() {
  LineShapeParams shape;
  shape.sigma_hz = 5e5;
  const double fc = 2.87e9;
  const std::vector<double> centers{fc};
  LockInConfig li;
  li.f_ref_hz = 2000.0;
  li.sample_rate_hz = 1e6;
  ModulationParams mod;
  mod.f_ref_hz = li.f_ref_hz;

  double worst = 0.0;
  bool pass = true;
  for (double contrast : {0.003, 0.01, 0.03}) {
    for (double f_dev : {1e4, 2.5e4, 5e4}) {  // f_dev <= sigma/10
      shape.contrast = contrast;
      mod.f_dev_hz = f_dev;
      const double d = shape.sigma_hz / 20.0;  // probe at |delta| <= sigma/10
      const auto pts = lockin_spectrum(li, mod, shape, centers, fc - d, fc + d, 2.0 * d);
      const double slope = (pts.front().in_phase_v - pts.back().in_phase_v) /
                           (pts.back().f_lo_hz - pts.front().f_lo_hz);
      const double g = small_signal_gain(shape, f_dev).gain_v_per_hz;
      const double rel = std::abs(slope / g - 1.0);
      worst = std::max(worst, rel);
      pass = pass && rel < kC2SlopeRelTol;
    }
  }
  report(2, pass, "lock-in slope at line center matches 2 C V0 f_dev / sigma^2 on a 3x3 grid",
         "worst relative error " + fmt(worst) + ", tol " + fmt(kC2SlopeRelTol));
}

// --- criterion 3: zero steady-state error and pole-predicted decay --------

void criterion_3() {
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> uc(0.008, 0.02);
  std::uniform_real_distribution<double> ud(2.5e4, 5e4);
  // g K alpha_eff in [0.03, 0.06]: real poles with >= 45 updates of decay, so
  // the settling count resolves the ratio well inside the 10% tolerance
  std::uniform_real_distribution<double> ux(0.03, 0.06);
  std::uniform_real_distribution<double> udet(0.2, 0.4);
  std::bernoulli_distribution usign(0.5);

  const double fs = 1e5;
  const double f_ref = 2000.0;  // period 50 samples on the grid
  const std::uint64_t period = 50;
  double worst_resid = 0.0, worst_decay = 0.0;
  bool pass = true;

  for (int trial = 0; trial < 10; ++trial) {
    LockRunSetup setup;
    setup.clock.sample_rate_hz = fs;
    setup.shape.contrast = uc(rng);
    const double f_dev = ud(rng);
    const double g = small_signal_gain(setup.shape, f_dev).gain_v_per_hz;
    const double a_eff = effective_alpha(LockInConfig::default_alpha(f_ref, fs), period);
    const double k_i = ux(rng) / (g * a_eff);
    const LoopAnalysis an = closed_loop_analysis(g, a_eff, k_i, fs / static_cast<double>(period));
    const double pdom = std::max(std::abs(an.poles[0]), std::abs(an.poles[1]));
    if (!an.stable || std::abs(an.poles[0].imag()) > 1e-12) {
      pass = false;
      continue;
    }

    // large bias along axis 0: the target line is isolated from the other
    // classes, and its own hyperfine neighbors pull symmetrically, so the
    // discriminant zero coincides with the line center and the single-line
    // gain formula applies
    const auto n = NvOrientationSet::standard().axes[0];
    const double mag = 2e6;
    WorldTimeline world({n[0] * mag, n[1] * mag, n[2] * mag}, {0.0});
    const double target = transitions_linear(mag, {0.0}).f_minus_hz;
    const double det = (usign(rng) ? 1.0 : -1.0) * udet(rng) * setup.shape.sigma_hz;

    ChannelConfig ch;
    ch.target = {0, false, 0};
    ch.modulation.f_ref_hz = f_ref;
    ch.modulation.f_dev_hz = f_dev;
    ch.k_i_hz_per_v = k_i;
    ch.f_lo_init_hz = target + det;
    const double t_settle = 3.0 * an.settling_time_s;
    const LoopTrace tr = run_lock(world, {&ch, 1}, t_settle + 0.1, setup);
    const auto& s = tr.channels[0].samples;

    // steady-state error after 3x the predicted settling time
    double resid = 0.0;
    for (const auto& smp : s) {
      if (smp.t_s < t_settle) continue;
      resid = std::max(resid, std::abs(smp.f_lo_hz - target));
    }
    worst_resid = std::max(worst_resid, resid);
    pass = pass && resid < kC3ResidualHz;

    // decay ratio implied by the 0.1% settling count vs the dominant pole;
    // the update latency rotates the transient slightly, so endpoint ratios
    // are unreliable while the settling count tracks the envelope
    std::size_t i_release = 0, i_settle = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double e = std::abs(s[i].f_lo_hz - target);
      if (e >= 0.999 * std::abs(det)) i_release = i;  // still blanked
      if (e >= 1e-3 * std::abs(det)) i_settle = i + 1;
    }
    if (i_settle > i_release + 5) {
      const double n_upd = static_cast<double>(i_settle - i_release);
      const double ratio = std::pow(1e-3, 1.0 / n_upd);
      const double rel = std::abs(ratio / pdom - 1.0);
      worst_decay = std::max(worst_decay, rel);
      pass = pass && rel < kC3DecayRelTol;
    } else {
      pass = false;
    }
  }
  report(3, pass, "10 random stable loops: locked within 100 Hz, decay matches dominant pole",
         "worst residual " + fmt(worst_resid) + " Hz, worst decay mismatch " + fmt(worst_decay));
}

// --- criterion 4: scale-factor freedom across a 10x contrast span ---------

void criterion_4() {
  ScenarioConfig cfg = default_config();
  cfg.quiet = true;
  cfg.step.contrast_levels = {0.003, 0.01, 0.03};  // 10x span
  cfg.step.spread_tol_nt = kC4SpreadTolNt;
  cfg.out_dir = out_dir("step").string();
  std::string msg;
  const int status = run_scenario(cfg, "step", &msg);
  report(4, status == kStatusOk, "steady-state B_NV spread < 100 nT across a 10x contrast span",
         status == kStatusOk ? "step scenario ok" : msg);
}

// --- criterion 5: dynamic range, closed loop vs open-loop readout ---------

void criterion_5() {
  ScenarioConfig cfg = default_config();
  cfg.quiet = true;
  cfg.range.ramp_nt = kC5RampNt;
  cfg.range.max_error_nt = kC5MaxErrorNt;
  cfg.range.min_range_ratio = kC5MinRangeRatio;
  cfg.out_dir = out_dir("range").string();
  std::string msg;
  const int status = run_scenario(cfg, "range", &msg);
  const double nominal = open_loop_linear_range_nt(cfg.shape.sigma_hz);
  report(5, status == kStatusOk,
         "closed loop tracks a 4e6 nT ramp within 1e3 nT; range ratio >= 1e3",
         status == kStatusOk ? "range scenario ok, nominal open-loop range " + fmt(nominal) + " nT"
                             : msg);
}

// --- criterion 6: temperature decoupling ----------------------------------

void criterion_6() {
  const ScenarioConfig base = default_config();
  const PhysicalConstants c = base.consts;
  WorldTimeline world(base.bias_field(), {0.0});
  world.add_temp_ramp({0.5, 3.5, kC6RampK, true});
  world.add_temp_ramp({3.5, 6.5, -kC6RampK, true});

  // both channels on the central hyperfine line: no neighbor asymmetry
  ChannelConfig lo, hi;
  lo.target = {0, false, 0};
  lo.modulation.f_ref_hz = 1824.0;
  lo.k_i_hz_per_v = 7.8e6;
  hi.target = {0, true, 0};
  hi.modulation.f_ref_hz = 2281.3;
  hi.k_i_hz_per_v = 7.8e6;
  const ChannelConfig pair[] = {lo, hi};
  const LockRunSetup setup = base.lock_setup();  // noiseless, linear
  const LoopTrace tr = run_lock(world, pair, 7.0, setup);
  const auto derived = derive_pair_series(tr.channels[0], tr.channels[1], base.hyperfine_hz, c);

  double b0 = 0.0;
  std::size_t n0 = 0;
  for (const auto& d : derived) {
    if (d.t_s < 0.3 || d.t_s > 0.5) continue;
    b0 += d.b_nv_nt;
    ++n0;
  }
  b0 /= static_cast<double>(n0);

  double max_db = 0.0, max_dt_err = 0.0;
  for (const auto& d : derived) {
    if (d.t_s < 0.5) continue;
    max_db = std::max(max_db, std::abs(d.b_nv_nt - b0));
    max_dt_err = std::max(max_dt_err, std::abs(d.dt_k - world.at(d.t_s).dt.dt_k));
  }
  const bool pass = max_db < kC6FieldPerturbNt && max_dt_err < kC6TempTrackK;
  report(6, pass, "+-2 K ramp moves B_NV < 50 nT while dt tracks within 0.01 K",
         "max |dB_NV| " + fmt(max_db) + " nT, max dt error " + fmt(max_dt_err) + " K");
}

// --- criterion 7: vector reconstruction -----------------------------------

void criterion_7() {
  std::string msg;
  bool pass = true;
  std::string detail;

  ScenarioConfig noisy = default_config();
  noisy.quiet = true;
  noisy.noise.white_v_per_sqrt_hz = 1e-6;
  noisy.vector.recovery_tol_nt = kC7RecoveryTolNt;
  noisy.vector.leakage_tol_nt = kC7LeakageTolNt;
  noisy.out_dir = out_dir("vector_noisy").string();
  if (run_scenario(noisy, "vector", &msg) != kStatusOk) {
    pass = false;
    detail = "noisy: " + msg;
  }

  ScenarioConfig clean = default_config();
  clean.quiet = true;
  clean.vector.recovery_tol_nt = kC7NoiselessTolNt;
  clean.vector.leakage_tol_nt = kC7NoiselessTolNt;
  clean.out_dir = out_dir("vector_clean").string();
  if (pass && run_scenario(clean, "vector", &msg) != kStatusOk) {
    pass = false;
    detail = "noiseless: " + msg;
  }

  // full-model residual at the 7.8e6 nT bias vs the linear initializer
  const LabField bias = default_config().bias_field();
  const auto measured = forward_frequencies(bias, 0.0, SpinModel::kFull);
  ProjectionSet proj;
  for (int cls = 0; cls < 4; ++cls) {
    const auto i = static_cast<std::size_t>(cls);
    const PairInversion inv = field_from_pair(measured[2 * i + 1], measured[2 * i]);
    proj.b_nv_nt[i] = inv.b_nv_nt;
    proj.dt_k[i] = inv.dt_k;
  }
  const LinearRecon init = linear_reconstruct(proj);
  const ReconResult rec = nonlinear_reconstruct(measured, init, SpinModel::kFull);
  double lin_res = 0.0;
  const auto f_lin = forward_frequencies(init.b, init.dt_k, SpinModel::kFull);
  for (std::size_t i = 0; i < 8; ++i) lin_res += std::pow(f_lin[i] - measured[i], 2);
  lin_res = std::sqrt(lin_res);
  if (!(rec.converged && rec.residual_norm_hz < kC7FullResidualHz)) pass = false;
  if (detail.empty()) {
    detail = "recovery/leakage ok; full-model residual " + fmt(rec.residual_norm_hz) +
             " Hz vs linear " + fmt(lin_res) + " Hz";
  }
  report(7, pass, "orthogonal 1e4 nT fields recovered (200 nT noisy, 10 nT noiseless); "
                  "full-model residual < 1 Hz at 7.8e6 nT bias",
         detail);
}

// --- criterion 8: tetrahedral and Hamiltonian invariants -------------------

void criterion_8() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ub(-5e6, 5e6);
  std::uniform_real_distribution<double> ut(-10.0, 10.0);
  const PhysicalConstants c;
  double worst_sum = 0.0, worst_rt = 0.0, worst_tr = 0.0;
  for (int t = 0; t < 100; ++t) {
    const LabField b{ub(rng), ub(rng), ub(rng)};
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) sum += project_field(b, i);
    worst_sum = std::max(worst_sum, std::abs(sum) / b.norm());

    const double dt = ut(rng);
    const auto f = forward_frequencies(b, dt, SpinModel::kLinear, c);
    ProjectionSet p;
    for (int cls = 0; cls < 4; ++cls) {
      const auto i = static_cast<std::size_t>(cls);
      const PairInversion inv = field_from_pair(f[2 * i + 1], f[2 * i], c);
      p.b_nv_nt[i] = inv.b_nv_nt;
      p.dt_k[i] = inv.dt_k;
    }
    const LinearRecon r = linear_reconstruct(p);
    const double err = (r.b - b).norm() / b.norm();
    worst_rt = std::max(worst_rt, err);

    const double d_eff = c.delta_hz + c.beta_t_hz_per_k * dt;
    const auto ev = hamiltonian_eigenvalues(d_eff, c.gamma_hz_per_nt * ub(rng),
                                            std::abs(c.gamma_hz_per_nt * ub(rng)), c);
    worst_tr = std::max(worst_tr,
                        std::abs(ev[0] + ev[1] + ev[2] - 2.0 * d_eff) / std::abs(2.0 * d_eff));
  }
  const bool pass = worst_sum < kC8SumRelTol && worst_rt < kC8RoundTripRelTol &&
                    worst_tr < kC8TraceRelTol;
  report(8, pass, "axis projections sum to zero; linear round trip exact; trace = 2(delta+beta dt)",
         "rel errors: sum " + fmt(worst_sum) + ", round trip " + fmt(worst_rt) + ", trace " +
             fmt(worst_tr));
}

// --- criterion 9: noise scaling (relative, not absolute) -------------------

void criterion_9() {
  ScenarioConfig cfg = default_config();
  cfg.quiet = true;
  cfg.sensitivity.densities_v_per_sqrt_hz = {1e-7, 1e-6};  // one decade
  cfg.sensitivity.slope_tol = kC9SlopeTol;
  cfg.sensitivity.linearity_tol = kC9LinearityTol;
  cfg.out_dir = out_dir("sensitivity").string();
  std::string msg;
  const int status = run_scenario(cfg, "sensitivity", &msg);
  report(9, status == kStatusOk,
         "Allan slope -1/2 +- 0.05 in the white region; noise floor linear in density within 10%",
         status == kStatusOk ? "sensitivity scenario ok" : msg);
}

// --- criterion 10: determinism ---------------------------------------------

std::vector<std::string> artifact_lines(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("artifact: ", 0) == 0) lines.push_back(line);
  }
  std::sort(lines.begin(), lines.end());
  return lines;
}

void criterion_10() {
  bool pass = true;
  std::string detail = "all artifact digests identical across re-runs";
  const std::vector<std::string> names{"step", "range", "vector", "sensitivity", "spectrum"};
  for (const auto& name : names) {
    ScenarioConfig cfg = default_config();
    cfg.quiet = true;
    cfg.noise.rng_seed = 17;
    if (name == "vector") cfg.noise.white_v_per_sqrt_hz = 1e-6;
    std::string msg;
    const fs::path d1 = out_dir("det_" + name + "_1");
    const fs::path d2 = out_dir("det_" + name + "_2");
    cfg.out_dir = d1.string();
    const int s1 = run_scenario(cfg, name, &msg);
    cfg.out_dir = d2.string();
    const int s2 = run_scenario(cfg, name, &msg);
    if (s1 != kStatusOk || s2 != kStatusOk || s1 != s2) {
      pass = false;
      detail = name + ": status " + std::to_string(s1) + "/" + std::to_string(s2) + " " + msg;
      break;
    }
    const auto a1 = artifact_lines(d1);
    const auto a2 = artifact_lines(d2);
    if (a1.empty() || a1 != a2) {
      pass = false;
      detail = name + ": artifact digests differ between identically seeded runs";
      break;
    }
    if (verify_run(d1.string(), &msg) != kStatusOk || verify_run(d2.string(), &msg) != kStatusOk) {
      pass = false;
      detail = name + ": manifest verification failed: " + msg;
      break;
    }
  }
  report(10, pass, "fixed-seed re-runs are byte-identical and manifests verify", detail);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  std::printf("acceptance: %d/10 criteria passed\n", 10 - g_failed);
  return g_failed == 0 ? 0 : 1;
}

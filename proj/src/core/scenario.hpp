#pragma once

#include <array>
#include <string>
#include <vector>

#include "fll.hpp"

namespace nvlock {

inline constexpr const char* kVersion = "nvlock 1.0.0";

// Scenario exit codes (also the CLI exit codes).
enum ScenarioStatus : int {
  kStatusOk = 0,
  kStatusConfigError = 1,
  kStatusPropertyFail = 2,
  kStatusLockLoss = 3,
};

struct ChannelSpec {
  int cls = 0;
  bool plus_branch = false;
  int m_i = 0;
  double f_ref_hz = 1.8240e3;
  double f_dev_hz = 3.2e5;
  double alpha = 0.0;  // 0 -> corner = f_ref/10 default
  double k_i_hz_per_v = 7.8e6;
  double phase_rad = kPi;
};

struct ScenarioConfig {
  PhysicalConstants consts;
  double bias_magnitude_nt = 7.8e6;
  std::array<double, 3> bias_orientation{0.2, 0.5, 0.8};
  LineShapeParams shape;
  double hyperfine_hz = TransitionSet::kDefaultHyperfineHz;
  NoiseParams noise;
  SimClock clock{1e5};
  SpinModel model = SpinModel::kLinear;
  bool balanced = true;
  std::vector<ChannelSpec> channels;

  struct Step {
    std::vector<double> contrast_levels{0.003, 0.01, 0.03};
    double step_nt = 1.5e4;
    double t_step_s = 1.0;
    double duration_s = 3.0;
    double spread_tol_nt = 100.0;
  } step;

  struct Range {
    double ramp_nt = 4e6;
    double duration_s = 60.0;
    double max_error_nt = 1e3;
    double min_range_ratio = 1e3;
  } range;

  struct Vector {
    double dwell_s = 0.1;
    int cycles_per_segment = 3;
    double applied_nt = 1e4;
    double recovery_tol_nt = 200.0;
    double leakage_tol_nt = 200.0;
  } vector;

  struct Sensitivity {
    double duration_s = 20.0;
    std::vector<double> densities_v_per_sqrt_hz{1e-7, 1e-6};
    double slope_tol = 0.05;
    double linearity_tol = 0.10;
  } sensitivity;

  struct Spectrum {
    double f_start_hz = 2.6e9;
    double f_stop_hz = 3.15e9;
    double step_hz = 5e4;
  } spectrum;

  std::string out_dir = "out";
  bool quiet = false;
  std::string snapshot;  // normalized one-line JSON of the loaded config

  LabField bias_field() const;
  LockRunSetup lock_setup() const;
};

/// Parses and validates a config file (JSON, // comments allowed, unknown keys
/// rejected). Throws std::runtime_error with an actionable message.
ScenarioConfig load_config(const std::string& path);

/// Built-in defaults (used by tests and as a template).
ScenarioConfig default_config();

/// Runs one scenario by name (step|range|vector|sensitivity|spectrum), writes
/// artifacts and a manifest into cfg.out_dir. Returns a ScenarioStatus; any
/// failure description lands in *message.
int run_scenario(const ScenarioConfig& cfg, const std::string& name, std::string* message);

/// Digest verification of a previous run's manifest. Returns kStatusOk or
/// kStatusPropertyFail with the mismatch in *message.
int verify_run(const std::string& out_dir, std::string* message);

}  // namespace nvlock

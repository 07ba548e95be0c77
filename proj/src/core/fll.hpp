#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "lockin.hpp"
#include "odmr_signal.hpp"
#include "spin_model.hpp"
#include "world.hpp"

namespace nvlock {

/// Which resonance line a channel locks: orientation class, branch, hyperfine.
struct TargetLine {
  int cls = 0;
  bool plus_branch = false;
  int m_i = 0;  // -1, 0, +1
};

struct ChannelConfig {
  TargetLine target;
  ModulationParams modulation;
  LockInConfig lockin;
  double k_i_hz_per_v = 0.0;  // integrator gain
  double f_lo_init_hz = 0.0;  // 0 seeds from the forward model at t = 0
};

struct LoopSample {
  double t_s = 0.0;
  double f_lo_hz = 0.0;
  double error_v = 0.0;
};

struct ChannelTrace {
  TargetLine target;
  std::vector<LoopSample> samples;
  bool railed = false;
  bool lock_lost = false;
};

struct LoopTrace {
  std::vector<ChannelTrace> channels;
};

struct LoopAnalysis {
  double plant_gain_v_per_hz = 0.0;
  std::complex<double> poles[2];
  bool stable = false;
  double settling_time_s = 0.0;  // dominant pole decayed to 0.1%
};

struct IntegratorResult {
  double f_lo_hz = 0.0;
  bool railed = false;
};

/// One discrete-integrator update: f_lo' = f_lo + k_i * error, clamped to the
/// microwave band (anti-windup: the clamp is the state, nothing accumulates
/// past the rail).
IntegratorResult integrator_step(double f_lo_hz, double error_v, double k_i_hz_per_v);

/// Pole/stability analysis of T(z) = G C / (1 + G C) with
/// G(z) = g alpha z / (z + alpha - 1) and C(z) = K_I z / (z - 1).
/// DC gain is identically 1 (integrator pole at z = 1).
LoopAnalysis closed_loop_analysis(double g_v_per_hz, double alpha, double k_i_hz_per_v,
                                  double update_rate_hz = 1.0);

/// Per-axis field and temperature from a locked pair of hyperfine-corrected
/// center frequencies (inverse of the linear transition model).
struct PairInversion {
  double b_nv_nt = 0.0;
  double dt_k = 0.0;
};
PairInversion field_from_pair(double f_plus_hz, double f_minus_hz, const PhysicalConstants& c = {});

/// Linear dynamic range of an open-loop lock-in readout, (2 sigma / 10) / gamma.
double open_loop_linear_range_nt(double sigma_hz, const PhysicalConstants& c = {});

/// Everything run_lock needs besides the channels and schedule.
struct LockRunSetup {
  PhysicalConstants consts;
  LineShapeParams shape;
  NoiseParams noise;
  SimClock clock{1e5};
  SpinModel model = SpinModel::kLinear;
  double hyperfine_hz = TransitionSet::kDefaultHyperfineHz;
  bool balanced = true;
};

/// Closed-loop run: advances the synthesizer, per-channel demodulators and
/// integrators on a shared clock. One integrator update per reference period,
/// using the lock-in output averaged over that period.
LoopTrace run_lock(const WorldTimeline& world, std::span<const ChannelConfig> channels,
                   double duration_s, const LockRunSetup& setup);

/// Round-robin interrogation of the four orientation classes, one resonance
/// pair at a time, seeding each revisit from the last locked value.
struct ClassVisit {
  double t_start_s = 0.0;
  double t_end_s = 0.0;
  int cls = 0;
  double f_minus_locked_hz = 0.0;  // mean f_lo over the tail of the dwell
  double f_plus_locked_hz = 0.0;
  bool reacquired = false;  // spectral search was needed
  bool flagged = false;     // re-acquisition failed
};

struct SequenceResult {
  std::vector<ClassVisit> visits;  // cycles * 4, in visit order
  LoopTrace trace;                 // 8 channels, indexed cls*2 (minus) and cls*2+1 (plus)
};

SequenceResult sequence_classes(const WorldTimeline& world,
                                std::span<const ChannelConfig> pair_configs,  // 8 entries
                                double dwell_s, int cycles, const LockRunSetup& setup);

/// Derived (b_nv, dt) series for a minus/plus channel pair of a LoopTrace,
/// evaluated at the minus channel's update instants with the plus channel
/// sample-and-held. Hyperfine offsets of the targets are removed.
struct DerivedSample {
  double t_s = 0.0;
  double b_nv_nt = 0.0;
  double dt_k = 0.0;
};
std::vector<DerivedSample> derive_pair_series(const ChannelTrace& minus_ch,
                                              const ChannelTrace& plus_ch, double hyperfine_hz,
                                              const PhysicalConstants& c = {});

}  // namespace nvlock

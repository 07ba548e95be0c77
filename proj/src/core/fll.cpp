#include "fll.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace nvlock {

IntegratorResult integrator_step(double f_lo_hz, double error_v, double k_i_hz_per_v) {
  double f = f_lo_hz + k_i_hz_per_v * error_v;
  bool railed = false;
  if (f < kBandLoHz) {
    f = kBandLoHz;
    railed = true;
  } else if (f > kBandHiHz) {
    f = kBandHiHz;
    railed = true;
  }
  return {f, railed};
}

LoopAnalysis closed_loop_analysis(double g_v_per_hz, double alpha, double k_i_hz_per_v,
                                  double update_rate_hz) {
  if (alpha <= 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in (0, 1]");
  LoopAnalysis an;
  an.plant_gain_v_per_hz = g_v_per_hz;
  // characteristic polynomial of T(z): (1 + g K alpha) z^2 + (alpha - 2) z + (1 - alpha)
  const double a = 1.0 + g_v_per_hz * k_i_hz_per_v * alpha;
  const double b = alpha - 2.0;
  const double c = 1.0 - alpha;
  const std::complex<double> disc = std::sqrt(std::complex<double>(b * b - 4.0 * a * c, 0.0));
  an.poles[0] = (-b + disc) / (2.0 * a);
  an.poles[1] = (-b - disc) / (2.0 * a);
  const double p0 = std::abs(an.poles[0]);
  const double p1 = std::abs(an.poles[1]);
  const double pdom = std::max(p0, p1);
  an.stable = pdom < 1.0;
  if (pdom <= 0.0) {
    an.settling_time_s = 1.0 / update_rate_hz;  // deadbeat
  } else if (an.stable) {
    an.settling_time_s = std::log(1e-3) / std::log(pdom) / update_rate_hz;
  } else {
    an.settling_time_s = std::numeric_limits<double>::infinity();
  }
  return an;
}

PairInversion field_from_pair(double f_plus_hz, double f_minus_hz, const PhysicalConstants& c) {
  PairInversion r;
  r.b_nv_nt = (f_plus_hz - f_minus_hz) / (2.0 * c.gamma_hz_per_nt);
  r.dt_k = (f_plus_hz + f_minus_hz - 2.0 * c.delta_hz) / (2.0 * c.beta_t_hz_per_k);
  return r;
}

double open_loop_linear_range_nt(double sigma_hz, const PhysicalConstants& c) {
  if (sigma_hz <= 0.0) throw std::invalid_argument("sigma must be positive");
  return (2.0 * sigma_hz / 10.0) / c.gamma_hz_per_nt;
}

namespace {

struct ChannelRuntime {
  ChannelConfig cfg;
  double f_lo = 0.0;
  LockInState demod;
  double acc = 0.0;
  std::uint64_t acc_n = 0;
  std::uint64_t period = 0;  // samples per integrator update
  std::uint64_t sat_run = 0;
  double sat_level = 0.0;  // |error| at/above this counts toward lock loss
  ChannelTrace trace;
};

constexpr std::uint64_t kLockLossUpdates = 100;

class LockEngine {
 public:
  LockEngine(const WorldTimeline& world, const LockRunSetup& setup)
      : world_(world),
        setup_(setup),
        synth_(world, setup.model, setup.consts, setup.hyperfine_hz, setup.shape, setup.noise,
               setup.clock, setup.balanced) {}

  ChannelRuntime make_runtime(const ChannelConfig& cfg_in) const {
    ChannelConfig cfg = cfg_in;
    cfg.lockin.sample_rate_hz = setup_.clock.sample_rate_hz;
    cfg.lockin.f_ref_hz = cfg.modulation.f_ref_hz;
    if (cfg.modulation.f_ref_hz <= 0.0 || cfg.modulation.f_ref_hz > kMaxRefHz) {
      throw std::invalid_argument("f_ref outside the NV response bandwidth bound");
    }
    if (cfg.modulation.f_ref_hz * 20.0 > setup_.clock.sample_rate_hz) {
      throw std::invalid_argument("sample rate below 20x f_ref");
    }
    if (cfg.k_i_hz_per_v <= 0.0) throw std::invalid_argument("k_i must be positive");

    ChannelRuntime rt;
    rt.period = static_cast<std::uint64_t>(
        std::llround(setup_.clock.sample_rate_hz / cfg.modulation.f_ref_hz));
    // snap f_ref to the sample grid (as a DAQ-synchronous reference is) so one
    // update window is an exact reference period; otherwise the leaked 2 f_ref
    // ripple rotates through the window average and the loop chases it
    const double f_snap = setup_.clock.sample_rate_hz / static_cast<double>(rt.period);
    cfg.modulation.f_ref_hz = f_snap;
    cfg.lockin.f_ref_hz = f_snap;
    if (!cfg.lockin.valid()) throw std::invalid_argument("invalid lock-in config");
    rt.cfg = cfg;
    rt.trace.target = cfg.target;
    rt.f_lo = cfg.f_lo_init_hz;
    if (rt.f_lo <= 0.0) {
      const WorldState w0 = world_.at(0.0);
      const TransitionSet set = all_class_frequencies(w0.b, w0.dt, setup_.model, setup_.consts,
                                                      setup_.hyperfine_hz);
      rt.f_lo = set.line_hz(cfg.target.cls, cfg.target.plus_branch, cfg.target.m_i);
    }
    const double g = small_signal_gain(setup_.shape, cfg.modulation.f_dev_hz).gain_v_per_hz;
    // peak of the derivative-shaped error curve is ~0.325 g sigma (small-depth limit)
    rt.sat_level = 0.8 * 0.3248 * g * setup_.shape.sigma_hz;
    return rt;
  }

  /// Advance the shared clock, feeding every active channel. hold_integrator
  /// freezes f_lo (used by the spectral search).
  void run_segment(std::span<ChannelRuntime*> active, double duration_s, bool hold_integrator) {
    const double fs = setup_.clock.sample_rate_hz;
    const auto n = static_cast<std::uint64_t>(std::llround(duration_s * fs));
    drives_.resize(active.size());
    for (std::uint64_t k = 0; k < n; ++k) {
      const double t = synth_.time_s();
      for (std::size_t c = 0; c < active.size(); ++c) {
        ModulationParams m = active[c]->cfg.modulation;
        m.f_lo_hz = active[c]->f_lo;
        drives_[c] = fm_frequency(t, m);
      }
      const double v = synth_.next(drives_);
      for (ChannelRuntime* rt : active) {
        const IQ iq = demodulate_step(rt->demod, v, rt->cfg.lockin);
        rt->acc += iq.in_phase_v;
        if (++rt->acc_n == rt->period) {
          const double e = rt->acc / static_cast<double>(rt->period);
          rt->acc = 0.0;
          rt->acc_n = 0;
          bool railed = false;
          if (!hold_integrator) {
            const IntegratorResult res = integrator_step(rt->f_lo, e, rt->cfg.k_i_hz_per_v);
            rt->f_lo = res.f_lo_hz;
            railed = res.railed;
            if (railed) rt->trace.railed = true;
          }
          rt->trace.samples.push_back({synth_.time_s(), rt->f_lo, e});
          if (std::abs(e) >= rt->sat_level || railed) {
            if (++rt->sat_run > kLockLossUpdates) rt->trace.lock_lost = true;
          } else {
            rt->sat_run = 0;
          }
        }
      }
    }
  }

  /// Mixer-phase resync after a channel sat out segments of the shared clock.
  void resync(ChannelRuntime& rt) const {
    rt.demod.sample_index = static_cast<std::uint64_t>(
        std::llround(synth_.time_s() * setup_.clock.sample_rate_hz));
    rt.acc = 0.0;
    rt.acc_n = 0;
    rt.sat_run = 0;
  }

  double time_s() const { return synth_.time_s(); }
  const LockRunSetup& setup() const { return setup_; }

 private:
  const WorldTimeline& world_;
  LockRunSetup setup_;
  StreamSynthesizer synth_;
  std::vector<double> drives_;
};

void validate_distinct_refs(std::span<const ChannelConfig> channels) {
  for (std::size_t i = 0; i < channels.size(); ++i) {
    for (std::size_t j = i + 1; j < channels.size(); ++j) {
      if (channels[i].modulation.f_ref_hz == channels[j].modulation.f_ref_hz) {
        throw std::invalid_argument("channel f_ref values must be pairwise distinct");
      }
    }
  }
}

// Mean f_lo and mean signed error over the trailing fraction of a visit.
struct TailStats {
  double f_lo = 0.0;
  double error = 0.0;
};
TailStats tail_stats(const std::vector<LoopSample>& s, std::size_t begin, double frac) {
  const std::size_t n = s.size() - begin;
  const std::size_t k0 = begin + static_cast<std::size_t>(static_cast<double>(n) * (1.0 - frac));
  TailStats ts;
  std::size_t cnt = 0;
  for (std::size_t k = k0; k < s.size(); ++k) {
    ts.f_lo += s[k].f_lo_hz;
    ts.error += s[k].error_v;
    ++cnt;
  }
  if (cnt > 0) {
    ts.f_lo /= static_cast<double>(cnt);
    ts.error /= static_cast<double>(cnt);
  }
  return ts;
}

}  // namespace

LoopTrace run_lock(const WorldTimeline& world, std::span<const ChannelConfig> channels,
                   double duration_s, const LockRunSetup& setup) {
  if (channels.empty()) throw std::invalid_argument("no channels");
  validate_distinct_refs(channels);
  LockEngine engine(world, setup);
  std::vector<ChannelRuntime> rts;
  rts.reserve(channels.size());
  for (const auto& cfg : channels) rts.push_back(engine.make_runtime(cfg));
  for (std::size_t i = 0; i < rts.size(); ++i) {
    for (std::size_t j = i + 1; j < rts.size(); ++j) {
      if (rts[i].period == rts[j].period) {
        throw std::invalid_argument("channel f_ref values collide on the sample grid");
      }
    }
  }
  std::vector<ChannelRuntime*> active;
  for (auto& rt : rts) active.push_back(&rt);
  // startup blanking: the lock-in filters must settle before their output is
  // allowed to steer the integrators, otherwise the turn-on transient kicks
  // every loop off its starting point
  double a_min = 1.0;
  for (const auto& rt : rts) a_min = std::min(a_min, rt.cfg.lockin.alpha_or_default());
  const double blank_s = std::min(10.0 / (a_min * setup.clock.sample_rate_hz), 0.5 * duration_s);
  engine.run_segment(active, blank_s, true);
  engine.run_segment(active, duration_s - blank_s, false);
  LoopTrace trace;
  for (auto& rt : rts) trace.channels.push_back(std::move(rt.trace));
  return trace;
}

SequenceResult sequence_classes(const WorldTimeline& world,
                                std::span<const ChannelConfig> pair_configs, double dwell_s,
                                int cycles, const LockRunSetup& setup) {
  if (pair_configs.size() != 8) throw std::invalid_argument("expected 8 channel configs (4 pairs)");
  for (int cls = 0; cls < 4; ++cls) {
    const auto& lo = pair_configs[static_cast<std::size_t>(cls) * 2];
    const auto& hi = pair_configs[static_cast<std::size_t>(cls) * 2 + 1];
    if (lo.target.cls != cls || hi.target.cls != cls || lo.target.plus_branch ||
        !hi.target.plus_branch) {
      throw std::invalid_argument("pair_configs must be (minus, plus) per class in order");
    }
    if (lo.modulation.f_ref_hz == hi.modulation.f_ref_hz) {
      throw std::invalid_argument("pair channels need distinct f_ref");
    }
  }

  LockEngine engine(world, setup);
  std::vector<ChannelRuntime> rts;
  rts.reserve(8);
  for (const auto& cfg : pair_configs) rts.push_back(engine.make_runtime(cfg));
  for (int cls = 0; cls < 4; ++cls) {
    if (rts[static_cast<std::size_t>(cls) * 2].period ==
        rts[static_cast<std::size_t>(cls) * 2 + 1].period) {
      throw std::invalid_argument("pair f_ref values collide on the sample grid");
    }
  }

  // dwell must cover >= 20 dominant time constants
  for (auto& rt : rts) {
    const double g = small_signal_gain(setup.shape, rt.cfg.modulation.f_dev_hz).gain_v_per_hz;
    const double a_eff = effective_alpha(rt.cfg.lockin.alpha_or_default(), rt.period);
    const double f_upd = setup.clock.sample_rate_hz / static_cast<double>(rt.period);
    const LoopAnalysis an = closed_loop_analysis(g, a_eff, rt.cfg.k_i_hz_per_v, f_upd);
    if (!an.stable) throw std::invalid_argument("unstable loop configuration");
    const double pdom = std::max(std::abs(an.poles[0]), std::abs(an.poles[1]));
    const double tau = 1.0 / ((1.0 - pdom) * f_upd);
    if (dwell_s < 20.0 * tau) {
      throw std::invalid_argument("dwell shorter than 20 loop time constants");
    }
  }

  const double sigma = setup.shape.sigma_hz;
  SequenceResult result;

  auto spectral_search = [&](ChannelRuntime& rt, ChannelRuntime& other) -> bool {
    // Coarse sweep +-10 sigma around the stale lock point, integrator held.
    // The paired channel idles at its own value so the stream stays physical.
    const double f0 = rt.f_lo;
    const double step = sigma / 2.0;
    double prev_err = 0.0;
    bool have_prev = false;
    double found = 0.0;
    bool ok = false;
    for (double off = -10.0 * sigma; off <= 10.0 * sigma; off += step) {
      rt.f_lo = f0 + off;
      engine.resync(rt);
      engine.resync(other);
      ChannelRuntime* act[] = {&rt, &other};
      const double settle_s = std::max(3.0 / rt.cfg.modulation.f_ref_hz,
                                       10.0 / (rt.cfg.lockin.alpha_or_default() *
                                               setup.clock.sample_rate_hz));
      engine.run_segment(act, settle_s, true);
      // measure over a second settled segment: the mean rejects the beat the
      // paired channel's modulation harmonics leave in this demodulator
      const std::size_t n0 = rt.trace.samples.size();
      engine.run_segment(act, settle_s, true);
      double e = 0.0;
      for (std::size_t k = n0; k < rt.trace.samples.size(); ++k) {
        e += rt.trace.samples[k].error_v;
      }
      e /= static_cast<double>(rt.trace.samples.size() - n0);
      // arm only on a significant positive excursion: far-tail and
      // cross-channel intermodulation floors flip sign away from any line
      const double gate = 0.05 * rt.sat_level;
      if (have_prev && prev_err > gate && e < 0.0) {
        // crossing from + to -: interpolate
        found = f0 + off - step * e / (e - prev_err);
        ok = true;
        break;
      }
      prev_err = e;
      have_prev = true;
    }
    rt.f_lo = ok ? found : f0;
    return ok;
  };

  for (int cycle = 0; cycle < cycles; ++cycle) {
    for (int cls = 0; cls < 4; ++cls) {
      ChannelRuntime& lo = rts[static_cast<std::size_t>(cls) * 2];
      ChannelRuntime& hi = rts[static_cast<std::size_t>(cls) * 2 + 1];
      ClassVisit visit;
      visit.cls = cls;
      visit.t_start_s = engine.time_s();

      auto dwell_once = [&]() {
        engine.resync(lo);
        engine.resync(hi);
        ChannelRuntime* act[] = {&lo, &hi};
        // blanking after the channel switch: the lock-in filter must settle
        // before its output is allowed to steer the integrator
        const double a_min = std::min(lo.cfg.lockin.alpha_or_default(),
                                      hi.cfg.lockin.alpha_or_default());
        engine.run_segment(act, 10.0 / (a_min * setup.clock.sample_rate_hz), true);
        const std::size_t lo0 = lo.trace.samples.size();
        const std::size_t hi0 = hi.trace.samples.size();
        engine.run_segment(act, dwell_s, false);
        return std::pair{tail_stats(lo.trace.samples, lo0, 0.3),
                         tail_stats(hi.trace.samples, hi0, 0.3)};
      };

      auto [lo_tail, hi_tail] = dwell_once();
      const bool lo_bad = std::abs(lo_tail.error) > 0.1 * lo.sat_level;
      const bool hi_bad = std::abs(hi_tail.error) > 0.1 * hi.sat_level;
      if (lo_bad || hi_bad) {
        visit.reacquired = true;
        bool ok = true;
        if (lo_bad) ok = spectral_search(lo, hi) && ok;
        if (hi_bad) ok = spectral_search(hi, lo) && ok;
        if (ok) {
          std::tie(lo_tail, hi_tail) = dwell_once();
        } else {
          visit.flagged = true;
        }
      }
      visit.f_minus_locked_hz = lo_tail.f_lo;
      visit.f_plus_locked_hz = hi_tail.f_lo;
      visit.t_end_s = engine.time_s();
      result.visits.push_back(visit);
    }
  }
  for (auto& rt : rts) result.trace.channels.push_back(std::move(rt.trace));
  return result;
}

std::vector<DerivedSample> derive_pair_series(const ChannelTrace& minus_ch,
                                              const ChannelTrace& plus_ch, double hyperfine_hz,
                                              const PhysicalConstants& c) {
  std::vector<DerivedSample> out;
  out.reserve(minus_ch.samples.size());
  std::size_t j = 0;
  for (const auto& s : minus_ch.samples) {
    while (j + 1 < plus_ch.samples.size() && plus_ch.samples[j + 1].t_s <= s.t_s) ++j;
    if (plus_ch.samples.empty()) break;
    const double f_minus = s.f_lo_hz - minus_ch.target.m_i * hyperfine_hz;
    const double f_plus = plus_ch.samples[j].f_lo_hz - plus_ch.target.m_i * hyperfine_hz;
    const PairInversion inv = field_from_pair(f_plus, f_minus, c);
    out.push_back({s.t_s, inv.b_nv_nt, inv.dt_k});
  }
  return out;
}

}  // namespace nvlock

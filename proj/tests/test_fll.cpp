#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "core/fll.hpp"
#include "core/lockin.hpp"

using namespace nvlock;

TEST_CASE("integrator step and band clamping") {
  const IntegratorResult r = integrator_step(2.87e9, 0.5, 1e6);
  CHECK(r.f_lo_hz == doctest::Approx(2.87e9 + 5e5));
  CHECK_FALSE(r.railed);

  const IntegratorResult lo = integrator_step(kBandLoHz + 1.0, -1.0, 1e7);
  CHECK(lo.f_lo_hz == kBandLoHz);
  CHECK(lo.railed);
  const IntegratorResult hi = integrator_step(kBandHiHz - 1.0, 1.0, 1e7);
  CHECK(hi.f_lo_hz == kBandHiHz);
  CHECK(hi.railed);
  // anti-windup: nothing accumulates past the rail
  const IntegratorResult back = integrator_step(hi.f_lo_hz, -1e-3, 1e7);
  CHECK(back.f_lo_hz == doctest::Approx(kBandHiHz - 1e4));
}

TEST_CASE("closed loop poles are roots of the characteristic polynomial") {
  // oracle: plug each pole back into (1 + gKa) z^2 + (a - 2) z + (1 - a)
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> ug(1e-9, 1e-7);
  std::uniform_real_distribution<double> uk(1e5, 1e7);
  std::uniform_real_distribution<double> ua(0.01, 0.99);
  for (int t = 0; t < 50; ++t) {
    const double g = ug(rng);
    const double k = uk(rng);
    const double a = ua(rng);
    const LoopAnalysis an = closed_loop_analysis(g, a, k, 1818.0);
    const double c2 = 1.0 + g * k * a;
    for (const auto& p : an.poles) {
      const std::complex<double> v = c2 * p * p + (a - 2.0) * p + (1.0 - a);
      CHECK(std::abs(v) < 1e-9);
    }
    if (an.stable) {
      const double pdom = std::max(std::abs(an.poles[0]), std::abs(an.poles[1]));
      CHECK(pdom < 1.0);
      // settling: dominant pole decayed to 0.1% after settling_time_s
      CHECK(std::pow(pdom, an.settling_time_s * 1818.0) == doctest::Approx(1e-3).epsilon(1e-9));
    }
  }
}

TEST_CASE("closed loop limiting cases and stability boundary") {
  // alpha = 1 (no filter): poles 0 and 1/(1 + gK)
  const LoopAnalysis an = closed_loop_analysis(1e-8, 1.0, 1e7, 1000.0);
  const double p0 = std::min(std::abs(an.poles[0]), std::abs(an.poles[1]));
  const double p1 = std::max(std::abs(an.poles[0]), std::abs(an.poles[1]));
  CHECK(p0 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p1 == doctest::Approx(1.0 / 1.1));
  CHECK(an.stable);

  // negative loop gain flips the feedback sign: unstable
  const LoopAnalysis bad = closed_loop_analysis(-1e-8, 0.5, 1e8, 1000.0);
  CHECK_FALSE(bad.stable);
  CHECK(std::isinf(bad.settling_time_s));

  CHECK_THROWS_AS(closed_loop_analysis(1e-8, 0.0, 1e6), std::invalid_argument);
  CHECK_THROWS_AS(closed_loop_analysis(1e-8, 1.5, 1e6), std::invalid_argument);
}

TEST_CASE("pair inversion round trips the linear transition model") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ub(-5e6, 5e6);
  std::uniform_real_distribution<double> ut(-20.0, 20.0);
  for (int t = 0; t < 40; ++t) {
    const double b = ub(rng);
    const double dt = ut(rng);
    const TransitionPair p = transitions_linear(b, {dt});
    const PairInversion inv = field_from_pair(p.f_plus_hz, p.f_minus_hz);
    CHECK(inv.b_nv_nt == doctest::Approx(b).epsilon(1e-10));
    CHECK(inv.dt_k == doctest::Approx(dt).epsilon(1e-9));
  }
}

TEST_CASE("open loop linear range convention") {
  CHECK(open_loop_linear_range_nt(5e5) == doctest::Approx((2.0 * 5e5 / 10.0) / 28.0));
  CHECK_THROWS_AS(open_loop_linear_range_nt(0.0), std::invalid_argument);
}

namespace {

ChannelConfig basic_channel(int cls, bool plus, int m_i, double f_ref) {
  ChannelConfig ch;
  ch.target = {cls, plus, m_i};
  ch.modulation.f_ref_hz = f_ref;
  ch.modulation.f_dev_hz = 3.2e5;
  ch.lockin.f_ref_hz = f_ref;
  ch.k_i_hz_per_v = 7.8e6;
  return ch;
}

double tail_mean_f_lo(const ChannelTrace& tr, double frac = 0.1) {
  const std::size_t k0 = tr.samples.size() - static_cast<std::size_t>(
      static_cast<double>(tr.samples.size()) * frac);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t k = k0; k < tr.samples.size(); ++k) {
    s += tr.samples[k].f_lo_hz;
    ++n;
  }
  return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("single channel lock converges from a detuned start") {
  const PhysicalConstants c;
  const auto n = NvOrientationSet::standard().axes[0];
  const double mag = 5e5;
  WorldTimeline world({n[0] * mag, n[1] * mag, n[2] * mag}, {0.0});
  const double target = transitions_linear(mag, {0.0}, c).f_minus_hz;

  ChannelConfig ch = basic_channel(0, false, 0, 2000.0);
  ch.f_lo_init_hz = target + 2e5;  // start 0.4 sigma off the line
  LockRunSetup setup;
  const LoopTrace tr = run_lock(world, {&ch, 1}, 2.0, setup);
  REQUIRE(tr.channels.size() == 1);
  CHECK_FALSE(tr.channels[0].railed);
  CHECK_FALSE(tr.channels[0].lock_lost);

  // the loop settles on the zero of the composite discriminant, which the
  // one-sided tails of the other classes' lines pull slightly off center
  const TransitionSet set = all_class_frequencies({n[0] * mag, n[1] * mag, n[2] * mag}, {0.0},
                                                  SpinModel::kLinear, c);
  std::vector<double> centers;
  for (int cls = 0; cls < 4; ++cls) {
    for (int br = 0; br < 2; ++br) {
      for (int mi = -1; mi <= 1; ++mi) centers.push_back(set.line_hz(cls, br == 1, mi));
    }
  }
  LockInConfig spec_cfg = ch.lockin;
  spec_cfg.sample_rate_hz = 1e5;
  const auto pts = lockin_spectrum(spec_cfg, ch.modulation, setup.shape, centers, target - 5e3,
                                   target + 5e3, 100.0);
  double zero = target;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i - 1].in_phase_v > 0.0 && pts[i].in_phase_v <= 0.0) {
      zero = pts[i - 1].f_lo_hz + 100.0 * pts[i - 1].in_phase_v /
                                      (pts[i - 1].in_phase_v - pts[i].in_phase_v);
      break;
    }
  }
  CHECK(std::abs(zero - target) < 5e3);  // tail pull is small but nonzero
  CHECK(std::abs(tail_mean_f_lo(tr.channels[0]) - zero) < 100.0);
}

TEST_CASE("lock does not acquire far outside the capture range") {
  WorldTimeline world({0.0, 0.0, 0.0}, {0.0});
  ChannelConfig ch = basic_channel(0, false, 0, 2000.0);
  ch.f_lo_init_hz = 2.87e9 + 8e6;  // 16 sigma off every line
  LockRunSetup setup;
  const LoopTrace tr = run_lock(world, {&ch, 1}, 1.0, setup);
  CHECK(std::abs(tail_mean_f_lo(tr.channels[0]) - 2.87e9) > 1e6);
}

TEST_CASE("run_lock validation") {
  WorldTimeline world({0.0, 0.0, 0.0}, {0.0});
  LockRunSetup setup;
  CHECK_THROWS_AS(run_lock(world, {}, 0.1, setup), std::invalid_argument);

  ChannelConfig a = basic_channel(0, false, 0, 2000.0);
  ChannelConfig dup = basic_channel(0, true, 0, 2000.0);
  const ChannelConfig same_ref[] = {a, dup};
  CHECK_THROWS_AS(run_lock(world, same_ref, 0.1, setup), std::invalid_argument);

  // distinct nominal f_ref values that snap to the same sample-grid period
  ChannelConfig b = basic_channel(0, true, 0, 2010.0);
  const ChannelConfig grid_collide[] = {a, b};
  CHECK_THROWS_AS(run_lock(world, grid_collide, 0.1, setup), std::invalid_argument);

  ChannelConfig fast = basic_channel(0, false, 0, 3e4);  // above the response bound
  CHECK_THROWS_AS(run_lock(world, {&fast, 1}, 0.1, setup), std::invalid_argument);
  ChannelConfig nok = basic_channel(0, false, 0, 2000.0);
  nok.k_i_hz_per_v = 0.0;
  CHECK_THROWS_AS(run_lock(world, {&nok, 1}, 0.1, setup), std::invalid_argument);
}

namespace {

std::vector<ChannelConfig> eight_pairs() {
  std::vector<ChannelConfig> chans;
  for (int cls = 0; cls < 4; ++cls) {
    chans.push_back(basic_channel(cls, false, 0, 1824.0));
    chans.push_back(basic_channel(cls, true, 0, 2281.3));
  }
  return chans;
}

}  // namespace

TEST_CASE("class sequencing reacquires after a mid-run field step") {
  const PhysicalConstants c;
  const auto n = NvOrientationSet::standard().axes[0];
  // bias separates classes and branches; the widened hyperfine spacing keeps
  // every neighboring component outside the +-10 sigma search window, so the
  // test isolates reacquisition rather than component disambiguation
  const double bias_nt = 2e6;
  WorldTimeline world({n[0] * bias_nt, n[1] * bias_nt, n[2] * bias_nt}, {0.0});
  const double step_nt = 5.2e4;  // ~3 sigma shift on class 0, inside +-10 sigma
  world.add_step({0.45, {n[0] * step_nt, n[1] * step_nt, n[2] * step_nt}});

  LockRunSetup setup;
  setup.shape.contrast = 0.003;  // slow loop: a 3 sigma step cannot settle in one dwell
  setup.hyperfine_hz = 1.3e7;
  auto chans = eight_pairs();
  for (auto& ch : chans) ch.target.m_i = -1;
  const SequenceResult res = sequence_classes(world, chans, 0.2, 2, setup);
  REQUIRE(res.visits.size() == 8);
  for (const auto& v : res.visits) CHECK_FALSE(v.flagged);

  const ClassVisit& before = res.visits[0];
  const ClassVisit& after = res.visits[4];
  REQUIRE(after.cls == 0);
  REQUIRE(after.t_start_s > 0.45);
  CHECK(after.reacquired);
  // relocked pair tracks the true line shift -+ gamma * step
  const double shift = c.gamma_hz_per_nt * step_nt;
  CHECK(after.f_minus_locked_hz - before.f_minus_locked_hz == doctest::Approx(-shift).epsilon(1e-4));
  CHECK(after.f_plus_locked_hz - before.f_plus_locked_hz == doctest::Approx(shift).epsilon(1e-4));
}

TEST_CASE("class sequencing validation") {
  WorldTimeline world({0.0, 0.0, 0.0}, {0.0});
  LockRunSetup setup;
  auto chans = eight_pairs();
  CHECK_THROWS_AS(sequence_classes(world, std::span(chans).subspan(0, 6), 0.15, 1, setup),
                  std::invalid_argument);
  CHECK_THROWS_AS(sequence_classes(world, chans, 0.01, 1, setup),  // < 20 time constants
                  std::invalid_argument);
  std::swap(chans[0], chans[1]);  // (plus, minus) order is rejected
  CHECK_THROWS_AS(sequence_classes(world, chans, 0.15, 1, setup), std::invalid_argument);
}

TEST_CASE("derived pair series inverts with sample-and-hold and hyperfine removal") {
  const PhysicalConstants c;
  const double a_hf = 2.16e6;
  ChannelTrace minus_ch;
  minus_ch.target = {0, false, -1};
  ChannelTrace plus_ch;
  plus_ch.target = {0, true, 0};

  const TransitionPair p1 = transitions_linear(1e5, {0.5}, c);
  const TransitionPair p2 = transitions_linear(-3e4, {0.5}, c);
  // minus channel locks the m_i = -1 line: f_lo = center - A
  minus_ch.samples = {{0.10, p1.f_minus_hz - a_hf, 0.0},
                      {0.20, p1.f_minus_hz - a_hf, 0.0},
                      {0.30, p2.f_minus_hz - a_hf, 0.0}};
  plus_ch.samples = {{0.05, p1.f_plus_hz, 0.0}, {0.25, p2.f_plus_hz, 0.0}};

  const auto d = derive_pair_series(minus_ch, plus_ch, a_hf, c);
  REQUIRE(d.size() == 3);
  CHECK(d[0].t_s == 0.10);
  CHECK(d[0].b_nv_nt == doctest::Approx(1e5).epsilon(1e-10));
  CHECK(d[0].dt_k == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(d[1].b_nv_nt == doctest::Approx(1e5).epsilon(1e-10));
  // at t = 0.30 the held plus sample is p2: both centers consistent again
  CHECK(d[2].b_nv_nt == doctest::Approx(-3e4).epsilon(1e-10));
  CHECK(d[2].dt_k == doctest::Approx(0.5).epsilon(1e-9));
}

#include "world.hpp"

#include <algorithm>

namespace nvlock {

namespace {

// Fraction of a ramp completed at time t; triangular ramps return to zero.
double ramp_fraction(double t, double t0, double t1, bool triangular) {
  if (t <= t0) return 0.0;
  if (!triangular) {
    if (t >= t1) return 1.0;
    return (t - t0) / (t1 - t0);
  }
  if (t >= t1) return 0.0;
  const double mid = 0.5 * (t0 + t1);
  return t <= mid ? (t - t0) / (mid - t0) : (t1 - t) / (t1 - mid);
}

}  // namespace

WorldState WorldTimeline::at(double t_s) const {
  WorldState w{base_, base_dt_};
  for (const auto& s : steps_) {
    if (t_s >= s.t_s) w.b = w.b + s.delta;
  }
  for (const auto& r : ramps_) {
    w.b = w.b + r.delta * ramp_fraction(t_s, r.t0_s, r.t1_s, r.triangular);
  }
  for (const auto& r : temp_ramps_) {
    w.dt.dt_k += r.delta_k * ramp_fraction(t_s, r.t0_s, r.t1_s, r.triangular);
  }
  return w;
}

}  // namespace nvlock

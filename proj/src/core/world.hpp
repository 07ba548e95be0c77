#pragma once

#include <vector>

#include "constants.hpp"

namespace nvlock {

/// Piecewise schedule of the true field and temperature. Steps switch on at
/// t_s; ramps add their delta linearly between t0_s and t1_s and hold after.
struct FieldStep {
  double t_s = 0.0;
  LabField delta;
};

struct FieldRamp {
  double t0_s = 0.0;
  double t1_s = 0.0;
  LabField delta;
  bool triangular = false;  // up over [t0, mid], back down over [mid, t1]
};

struct TempRamp {
  double t0_s = 0.0;
  double t1_s = 0.0;
  double delta_k = 0.0;
  bool triangular = false;
};

struct WorldState {
  LabField b;
  TemperatureOffset dt;
};

class WorldTimeline {
 public:
  WorldTimeline() = default;
  WorldTimeline(LabField base, TemperatureOffset base_dt) : base_(base), base_dt_(base_dt) {}

  void add_step(FieldStep s) { steps_.push_back(s); }
  void add_ramp(FieldRamp r) { ramps_.push_back(r); }
  void add_temp_ramp(TempRamp r) { temp_ramps_.push_back(r); }

  WorldState at(double t_s) const;

  const LabField& base() const { return base_; }

 private:
  LabField base_;
  TemperatureOffset base_dt_;
  std::vector<FieldStep> steps_;
  std::vector<FieldRamp> ramps_;
  std::vector<TempRamp> temp_ramps_;
};

}  // namespace nvlock

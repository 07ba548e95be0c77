#pragma once

#include <array>

#include "constants.hpp"
#include "spin_model.hpp"

namespace nvlock {

/// Per-class pair inversions feeding the linear initializer.
struct ProjectionSet {
  std::array<double, 4> b_nv_nt{};
  std::array<double, 4> dt_k{};
  std::array<bool, 4> valid{true, true, true, true};

  int valid_count() const {
    int n = 0;
    for (bool v : valid) n += v ? 1 : 0;
    return n;
  }
};

struct LinearRecon {
  LabField b;
  double dt_k = 0.0;
};

struct ReconResult {
  LabField b;
  double dt_k = 0.0;
  double residual_norm_hz = 0.0;
  std::array<double, 8> residuals_hz{};
  bool converged = false;
  int iterations = 0;
};

/// Eight model frequencies ordered (class 0 minus, class 0 plus, class 1 minus, ...).
std::array<double, 8> forward_frequencies(const LabField& b, double dt_k, SpinModel model,
                                          const PhysicalConstants& c = {});

/// Minimum-norm least squares over the valid axial projections; dt is the mean
/// of the valid per-class estimates. Requires at least 3 valid projections.
LinearRecon linear_reconstruct(const ProjectionSet& p);

/// Damped Gauss-Newton fit of (b, dt) to the eight measured center
/// frequencies. Non-convergence returns converged = false with diagnostics.
ReconResult nonlinear_reconstruct(const std::array<double, 8>& measured_hz, const LinearRecon& init,
                                  SpinModel model, const PhysicalConstants& c = {},
                                  int max_iterations = 100);

/// Residual norm normalized by the expected noise-driven residual
/// (noise_std * sqrt(dof), dof = 8 measurements - 4 parameters). Scores well
/// above 1 flag class-crossing or mis-assignment.
double redundancy_check(const ReconResult& r, double noise_std_hz);

}  // namespace nvlock

#include "spin_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace nvlock {

double project_field(const LabField& b, int axis_index) {
  if (axis_index < 0 || axis_index > 3) {
    throw std::invalid_argument("axis_index must be in 0..3");
  }
  static const NvOrientationSet axes = NvOrientationSet::standard();
  const auto& n = axes.axes[static_cast<std::size_t>(axis_index)];
  return b.bx_nt * n[0] + b.by_nt * n[1] + b.bz_nt * n[2];
}

TransitionPair transitions_linear(double b_nv_nt, TemperatureOffset dt,
                                  const PhysicalConstants& c) {
  const double center = c.delta_hz + c.beta_t_hz_per_k * dt.dt_k;
  const double zeeman = c.gamma_hz_per_nt * b_nv_nt;
  return {center - zeeman, center + zeeman};
}

std::array<double, 3> hamiltonian_eigenvalues(double d_eff_hz, double axial_nt,
                                              double transverse_nt,
                                              const PhysicalConstants& c) {
  // Spin-1 basis |+1>, |0>, |-1>.
  const double gz = c.gamma_hz_per_nt * axial_nt;
  const double gx = c.gamma_hz_per_nt * transverse_nt / std::sqrt(2.0);
  Eigen::Matrix3d h;
  h << d_eff_hz + gz, gx, 0.0,
       gx, 0.0, gx,
       0.0, gx, d_eff_hz - gz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
  solver.computeDirect(h);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("3x3 eigensolver failed");  // must not happen
  }
  return {solver.eigenvalues()(0), solver.eigenvalues()(1), solver.eigenvalues()(2)};
}

TransitionPair transitions_full(const LabField& b, int axis_index, TemperatureOffset dt,
                                const PhysicalConstants& c) {
  if (b.norm() > kFieldBoundNt) {
    throw std::invalid_argument("field magnitude beyond validity bound");
  }
  const double axial = project_field(b, axis_index);
  const double b2 = b.bx_nt * b.bx_nt + b.by_nt * b.by_nt + b.bz_nt * b.bz_nt;
  const double transverse = std::sqrt(std::max(0.0, b2 - axial * axial));
  const double d_eff = c.delta_hz + c.beta_t_hz_per_k * dt.dt_k;
  const auto ev = hamiltonian_eigenvalues(d_eff, axial, transverse, c);
  // branch-resolved like the linear model: f_minus follows the |-1>-adiabatic
  // state, which lies above the |+1> branch when the axial projection is
  // negative, so f_minus > f_plus there
  if (axial >= 0.0) return {ev[1] - ev[0], ev[2] - ev[0]};
  return {ev[2] - ev[0], ev[1] - ev[0]};
}

std::array<double, 3> hyperfine_lines(double f_center_hz, double splitting_hz) {
  return {f_center_hz - splitting_hz, f_center_hz, f_center_hz + splitting_hz};
}

TransitionSet all_class_frequencies(const LabField& b, TemperatureOffset dt, SpinModel model,
                                    const PhysicalConstants& c, double hyperfine_hz) {
  TransitionSet set;
  set.hyperfine_hz = hyperfine_hz;
  for (int i = 0; i < 4; ++i) {
    set.classes[static_cast<std::size_t>(i)] =
        (model == SpinModel::kLinear)
            ? transitions_linear(project_field(b, i), dt, c)
            : transitions_full(b, i, dt, c);
  }
  return set;
}

}  // namespace nvlock

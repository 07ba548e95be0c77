#include "vector_recon.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace nvlock {

std::array<double, 8> forward_frequencies(const LabField& b, double dt_k, SpinModel model,
                                          const PhysicalConstants& c) {
  const TransitionSet set = all_class_frequencies(b, {dt_k}, model, c);
  std::array<double, 8> f{};
  for (int i = 0; i < 4; ++i) {
    f[static_cast<std::size_t>(i) * 2] = set.classes[static_cast<std::size_t>(i)].f_minus_hz;
    f[static_cast<std::size_t>(i) * 2 + 1] = set.classes[static_cast<std::size_t>(i)].f_plus_hz;
  }
  return f;
}

LinearRecon linear_reconstruct(const ProjectionSet& p) {
  const int n = p.valid_count();
  if (n < 3) throw std::invalid_argument("need at least 3 valid projections");
  const NvOrientationSet axes = NvOrientationSet::standard();
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd rhs(n);
  double dt_sum = 0.0;
  int row = 0;
  for (int i = 0; i < 4; ++i) {
    if (!p.valid[static_cast<std::size_t>(i)]) continue;
    for (int j = 0; j < 3; ++j) a(row, j) = axes.axes[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    rhs(row) = p.b_nv_nt[static_cast<std::size_t>(i)];
    dt_sum += p.dt_k[static_cast<std::size_t>(i)];
    ++row;
  }
  const Eigen::Vector3d x = a.colPivHouseholderQr().solve(rhs);
  return {{x(0), x(1), x(2)}, dt_sum / n};
}

namespace {

// Parameters are scaled to Hz: x = (gamma*bx, gamma*by, gamma*bz, beta_T*dt),
// so Jacobian entries are O(1) and the 1 Hz gradient tolerance is meaningful.
Eigen::Vector4d scale_params(const LabField& b, double dt_k, const PhysicalConstants& c) {
  return {c.gamma_hz_per_nt * b.bx_nt, c.gamma_hz_per_nt * b.by_nt, c.gamma_hz_per_nt * b.bz_nt,
          c.beta_t_hz_per_k * dt_k};
}

std::array<double, 8> model_at(const Eigen::Vector4d& x, SpinModel model,
                               const PhysicalConstants& c) {
  const LabField b{x(0) / c.gamma_hz_per_nt, x(1) / c.gamma_hz_per_nt, x(2) / c.gamma_hz_per_nt};
  return forward_frequencies(b, x(3) / c.beta_t_hz_per_k, model, c);
}

Eigen::Matrix<double, 8, 4> jacobian(const Eigen::Vector4d& x, SpinModel model,
                                     const PhysicalConstants& c) {
  Eigen::Matrix<double, 8, 4> j;
  if (model == SpinModel::kLinear) {
    const NvOrientationSet axes = NvOrientationSet::standard();
    for (int i = 0; i < 4; ++i) {
      for (int br = 0; br < 2; ++br) {
        const double sgn = br == 0 ? -1.0 : 1.0;
        const int row = i * 2 + br;
        for (int k = 0; k < 3; ++k) {
          j(row, k) = sgn * axes.axes[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        }
        j(row, 3) = 1.0;
      }
    }
    return j;
  }
  const double h = 100.0;  // Hz in scaled parameter space
  for (int k = 0; k < 4; ++k) {
    Eigen::Vector4d xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    const auto fp = model_at(xp, model, c);
    const auto fm = model_at(xm, model, c);
    for (int row = 0; row < 8; ++row) {
      j(row, k) = (fp[static_cast<std::size_t>(row)] - fm[static_cast<std::size_t>(row)]) / (2.0 * h);
    }
  }
  return j;
}

}  // namespace

ReconResult nonlinear_reconstruct(const std::array<double, 8>& measured_hz, const LinearRecon& init,
                                  SpinModel model, const PhysicalConstants& c,
                                  int max_iterations) {
  Eigen::Vector4d x = scale_params(init.b, init.dt_k, c);
  auto residuals = [&](const Eigen::Vector4d& p) {
    const auto f = model_at(p, model, c);
    Eigen::Matrix<double, 8, 1> r;
    for (int i = 0; i < 8; ++i) r(i) = measured_hz[static_cast<std::size_t>(i)] - f[static_cast<std::size_t>(i)];
    return r;
  };

  Eigen::Matrix<double, 8, 1> r = residuals(x);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  bool converged = false;
  int it = 0;
  for (; it < max_iterations; ++it) {
    const Eigen::Matrix<double, 8, 4> j = jacobian(x, model, c);
    const Eigen::Vector4d grad = j.transpose() * r;
    if (grad.norm() < 1.0) {
      converged = true;
      break;
    }
    Eigen::Matrix4d jtj = j.transpose() * j;
    Eigen::Matrix4d damped = jtj + lambda * Eigen::Matrix4d(jtj.diagonal().asDiagonal());
    const Eigen::Vector4d step = damped.ldlt().solve(grad);
    const Eigen::Vector4d x_new = x + step;
    const Eigen::Matrix<double, 8, 1> r_new = residuals(x_new);
    const double cost_new = r_new.squaredNorm();
    if (cost_new < cost) {
      x = x_new;
      r = r_new;
      cost = cost_new;
      lambda = std::max(lambda / 10.0, 1e-12);
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }

  ReconResult out;
  out.b = {x(0) / c.gamma_hz_per_nt, x(1) / c.gamma_hz_per_nt, x(2) / c.gamma_hz_per_nt};
  out.dt_k = x(3) / c.beta_t_hz_per_k;
  out.residual_norm_hz = r.norm();
  for (int i = 0; i < 8; ++i) out.residuals_hz[static_cast<std::size_t>(i)] = r(i);
  out.converged = converged;
  out.iterations = it;
  return out;
}

double redundancy_check(const ReconResult& r, double noise_std_hz) {
  const double dof = 4.0;  // 8 measurements, 4 parameters
  const double floor_hz = 1e-6;
  return r.residual_norm_hz / (std::max(noise_std_hz, floor_hz) * std::sqrt(dof));
}

}  // namespace nvlock

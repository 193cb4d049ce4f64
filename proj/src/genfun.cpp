#include "dvi/genfun.hpp"

#include <cmath>
#include <limits>

namespace dvi {

namespace {

Mat apply_j(const Mat& a) {
  const auto n = a.rows() / 2;
  Mat out(a.rows(), a.cols());
  out.topRows(n) = a.bottomRows(n);
  out.bottomRows(n) = -a.topRows(n);
  return out;
}

Vec flow(const HamiltonianSystem& sys, const Vec& z) { return apply_j(sys.gradient(z)); }

double inf_norm(const Mat& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

long steps_for(double t_final, double tau) {
  const double n = std::round(t_final / tau);
  if (!(n >= 0.0)) throw Error("final time must be nonnegative");
  return static_cast<long>(n);
}

ExactnessSample sample_of(const StateTransitionMatrix& stm, const ExactnessOptions& opt) {
  ExactnessSample s;
  s.t = stm.t;
  try {
    const GeneratingSlopes g = slopes_from_stm(stm, opt.singular_threshold);
    s.defect = g.defect;
    s.condition = g.condition;
    s.masked = !(g.condition <= opt.mask_condition);
  } catch (const SingularGeneratingFunction&) {
    s.defect = std::numeric_limits<double>::quiet_NaN();
    s.condition = std::numeric_limits<double>::infinity();
    s.masked = true;
  }
  return s;
}

}  // namespace

StmPropagation propagate_stm(const HamiltonianSystem& sys, const PhaseState& z0, Scheme stepper, double tau,
                             long n_steps, const StepperConfig& newton) {
  if (stepper != Scheme::Midpoint && stepper != Scheme::Rk4)
    throw Error("state transition matrices are propagated with midpoint or rk4 only");
  StepperConfig cfg = newton;
  cfg.tau = tau;
  cfg.validate();
  if (n_steps < 0) throw Error("n_steps must be nonnegative");
  const int m = sys.phase_dim();

  StmPropagation out;
  out.reference.scheme = stepper;
  out.stms.reserve(n_steps + 1);
  out.reference.push(0.0, z0, StepMeta{});
  out.stms.push_back({Mat::Identity(m, m), 0.0});

  PhaseState z = z0;
  Mat phi = Mat::Identity(m, m);
  for (long k = 0; k < n_steps; ++k) {
    StepMeta meta;
    meta.h = tau;
    PhaseState next;
    try {
      if (stepper == Scheme::Midpoint) {
        next = midpoint_step(sys, z, cfg, &meta);
        phi = midpoint_tangent_map(sys, z, next, tau) * phi;
      } else {
        // Classical RK4 on the augmented system (z, Phi).
        const Vec y = z.packed();
        auto stage = [&](const Vec& yz, const Mat& ph, Vec& dz, Mat& dph) {
          dz = flow(sys, yz);
          dph = apply_j(sys.hessian(yz) * ph);
        };
        Vec k1z, k2z, k3z, k4z;
        Mat k1p, k2p, k3p, k4p;
        stage(y, phi, k1z, k1p);
        stage(y + 0.5 * tau * k1z, phi + 0.5 * tau * k1p, k2z, k2p);
        stage(y + 0.5 * tau * k2z, phi + 0.5 * tau * k2p, k3z, k3p);
        stage(y + tau * k3z, phi + tau * k3p, k4z, k4p);
        next = PhaseState::unpack(y + (tau / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z));
        phi += (tau / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
      }
      require_finite(next, "propagate_stm");
    } catch (StepFailure& f) {
      f.set_step_index(k);
      throw;
    }
    const double t = static_cast<double>(k + 1) * tau;
    out.reference.push(t, next, meta);
    out.stms.push_back({phi, t});
    z = std::move(next);
  }
  return out;
}

GeneratingSlopes slopes_from_stm(const StateTransitionMatrix& stm, double singular_threshold) {
  const Mat qp = stm.qp();
  Eigen::FullPivLU<Mat> lu(qp);
  if (!lu.isInvertible()) throw SingularGeneratingFunction("Phi_qp is singular; no (q, q0) generating function");
  const Mat qp_inv = lu.inverse();
  const double inv_norm = inf_norm(qp_inv);
  if (!std::isfinite(inv_norm) || inv_norm > singular_threshold)
    throw SingularGeneratingFunction("Phi_qp is numerically singular; no (q, q0) generating function");
  GeneratingSlopes g;
  g.S1_grad_q = qp_inv;
  g.S2_grad_q0 = stm.pq() - stm.pp() * qp_inv * stm.qq();
  g.defect = inf_norm(g.S1_grad_q + g.S2_grad_q0.transpose());
  g.condition = inf_norm(stm.phi) * inv_norm;
  return g;
}

std::vector<ExactnessSample> exactness_series_serial(const std::vector<StateTransitionMatrix>& stms,
                                                     const ExactnessOptions& opt) {
  std::vector<ExactnessSample> out;
  out.reserve(stms.size());
  for (const auto& s : stms) out.push_back(sample_of(s, opt));
  return out;
}

std::vector<ExactnessSample> exactness_series(const std::vector<StateTransitionMatrix>& stms,
                                              const ExactnessOptions& opt) {
  std::vector<ExactnessSample> out(stms.size());
  const long count = static_cast<long>(stms.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < count; ++i) out[i] = sample_of(stms[i], opt);
  return out;
}

std::vector<ExactnessSample> exactness_experiment(const HamiltonianSystem& sys, const PhaseState& z0, Scheme stepper,
                                                  double tau, double t_final, const ExactnessOptions& opt) {
  const auto prop = propagate_stm(sys, z0, stepper, tau, steps_for(t_final, tau));
  return exactness_series(prop.stms, opt);
}

double max_masked_defect(const std::vector<ExactnessSample>& samples) {
  double m = 0.0;
  for (const auto& s : samples)
    if (!s.masked) m = std::max(m, s.defect);
  return m;
}

double max_finite_defect(const std::vector<ExactnessSample>& samples) {
  double m = 0.0;
  for (const auto& s : samples)
    if (std::isfinite(s.defect)) m = std::max(m, s.defect);
  return m;
}

}  // namespace dvi

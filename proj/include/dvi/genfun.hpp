#pragma once

#include "dvi/integrators.hpp"

#include <vector>

namespace dvi {

struct StateTransitionMatrix {
  Mat phi;
  double t = 0.0;

  int dof() const { return static_cast<int>(phi.rows() / 2); }
  Mat qq() const { return phi.topLeftCorner(dof(), dof()); }
  Mat qp() const { return phi.topRightCorner(dof(), dof()); }
  Mat pq() const { return phi.bottomLeftCorner(dof(), dof()); }
  Mat pp() const { return phi.bottomRightCorner(dof(), dof()); }
};

struct StmPropagation {
  std::vector<StateTransitionMatrix> stms;
  Trajectory reference;
};

/// Propagates the reference trajectory together with its state transition
/// matrix. Midpoint multiplies exact one-step tangent maps; rk4 integrates the
/// variational equation dPhi/dt = J hess H(z) Phi alongside z.
StmPropagation propagate_stm(const HamiltonianSystem& sys, const PhaseState& z0, Scheme stepper, double tau,
                             long n_steps, const StepperConfig& newton = {});

/// The (q, q0) generating function does not exist at this STM.
class SingularGeneratingFunction : public Error {
 public:
  using Error::Error;
};

struct GeneratingSlopes {
  Mat S1_grad_q;   // dS1/dq  = Phi_qp^{-1}
  Mat S2_grad_q0;  // dS2/dq0 = Phi_pq - Phi_pp Phi_qp^{-1} Phi_qq
  double defect = 0.0;     // || S1_grad_q + S2_grad_q0^T ||_inf
  double condition = 0.0;  // ||Phi||_inf * ||Phi_qp^{-1}||_inf
};

/// Slopes of the type-1 generating functions of a linear map. The defect sign
/// is fixed so that an exact symplectic flow gives zero.
GeneratingSlopes slopes_from_stm(const StateTransitionMatrix& stm, double singular_threshold = 1e12);

struct ExactnessSample {
  double t = 0.0;
  double defect = 0.0;     // NaN where the generating function is singular
  double condition = 0.0;  // infinite where singular
  bool masked = false;
};

struct ExactnessOptions {
  double mask_condition = 1e3;
  double singular_threshold = 1e12;
};

/// Defect per STM, evaluated in parallel; samples with condition above
/// mask_condition (or singular) are masked.
std::vector<ExactnessSample> exactness_series(const std::vector<StateTransitionMatrix>& stms,
                                              const ExactnessOptions& opt = {});
std::vector<ExactnessSample> exactness_series_serial(const std::vector<StateTransitionMatrix>& stms,
                                                     const ExactnessOptions& opt = {});

std::vector<ExactnessSample> exactness_experiment(const HamiltonianSystem& sys, const PhaseState& z0, Scheme stepper,
                                                  double tau, double t_final, const ExactnessOptions& opt = {});

/// Largest unmasked defect.
double max_masked_defect(const std::vector<ExactnessSample>& samples);
/// Largest finite defect, masked or not.
double max_finite_defect(const std::vector<ExactnessSample>& samples);

}  // namespace dvi

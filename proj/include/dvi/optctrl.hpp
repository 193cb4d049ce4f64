#pragma once

#include "dvi/integrators.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace dvi {

/// Pairing of the discrete variables: Stormer uses (x_k, p_{k+1}, u_k), the
/// midpoint geometry uses interval averages of x, p and one control per
/// interval.
enum class Geometry { Stormer, Midpoint };

Geometry parse_geometry(std::string_view key);
std::string geometry_key(Geometry g);

enum class BoundaryMode { HardEndpoints, Transversality };

using StateControlVec = std::function<Vec(const Vec& x, const Vec& u)>;
using StateControlMat = std::function<Mat(const Vec& x, const Vec& u)>;
using StateControlScalar = std::function<double(const Vec& x, const Vec& u)>;

struct OptimalControlProblem {
  int n = 0;  // state dimension
  int m = 0;  // control dimension
  double horizon = 1.0;
  int steps = 1;

  StateControlVec f;
  StateControlScalar g;
  // Optional analytic partials; missing ones are taken by central differences.
  StateControlMat f_x, f_u;
  StateControlVec g_x, g_u;

  BoundaryMode boundary = BoundaryMode::HardEndpoints;
  Vec x_initial, x_target;
  // Transversality mode: constraints phi0(x_0) = 0, phiN(x_N) = 0 and their Jacobians.
  std::function<Vec(const Vec&)> phi0, phi_n;
  std::function<Mat(const Vec&)> dphi0, dphi_n;

  // Closed-form stationary control u(x, p) and reduced Hamiltonian, when known.
  std::function<Vec(const Vec& x, const Vec& p)> stationary_control;
  std::optional<HamiltonianSystem> reduced;
  // Starting point for the numerical elimination of u.
  Vec control_guess;

  Vec default_p0_guess;
  // Control shapes used to restore feasibility of perturbed controls; empty
  // means a generic cosine family.
  std::vector<std::function<Vec(double t)>> correction_basis;

  double tau() const { return horizon / steps; }
  void validate() const;
};

/// H(x, p, u) = g(x, u) + <p, f(x, u)> with partials in each argument.
class ControlHamiltonian {
 public:
  explicit ControlHamiltonian(const OptimalControlProblem& ocp);

  double value(const Vec& x, const Vec& p, const Vec& u) const;
  Vec d1(const Vec& x, const Vec& p, const Vec& u) const;  // D_x H
  Vec d2(const Vec& x, const Vec& p, const Vec& u) const;  // D_p H = f
  Vec d3(const Vec& x, const Vec& p, const Vec& u) const;  // D_u H
  Mat d33(const Vec& x, const Vec& p, const Vec& u) const;
  Mat fx(const Vec& x, const Vec& u) const;
  Mat fu(const Vec& x, const Vec& u) const;

 private:
  const OptimalControlProblem* ocp_;
};

/// Discrete state, costate and control sequences: xs and ps have N + 1
/// entries, us has one control per interval.
struct DiscreteSolution {
  Geometry geometry = Geometry::Midpoint;
  double tau = 0.0;
  std::vector<Vec> xs, ps, us;
  Vec lambda0, lambda_n;
};

/// Stacked residuals: per interval the state, costate and stationarity
/// equations, then the boundary block (hard endpoints, or the constraints and
/// transversality relations). N = 0 gives an empty vector.
Vec dmp_residual(const OptimalControlProblem& ocp, Geometry geometry, const std::vector<Vec>& xs,
                 const std::vector<Vec>& ps, const std::vector<Vec>& us, double tau, const Vec& lambda0 = {},
                 const Vec& lambda_n = {});
Vec dmp_residual(const OptimalControlProblem& ocp, const DiscreteSolution& sol);

/// D_u H at every interval's quadrature node.
std::vector<Vec> stationarity_residuals(const OptimalControlProblem& ocp, const DiscreteSolution& sol);

class EliminationFailure : public Error {
 public:
  using Error::Error;
};

/// Control satisfying D_u H(x, p, u) = 0: the registered closed form, or
/// Newton in u from the problem's control guess.
Vec solve_stationary_control(const OptimalControlProblem& ocp, const Vec& x, const Vec& p);

/// Reduced Hamiltonian H(x, p, u(x, p)). Uses the registered form when
/// present; otherwise eliminates u numerically, with the gradient from the
/// envelope identity.
HamiltonianSystem eliminate_control(const OptimalControlProblem& ocp, Geometry geometry);

/// One step of the eliminated system: symplectic Euler on the reduced
/// Hamiltonian for Stormer, implicit midpoint for the midpoint geometry.
PhaseState dmhp_step(const HamiltonianSystem& hbar, Geometry geometry, const PhaseState& z, const StepperConfig& cfg);
Mat dmhp_tangent_map(const HamiltonianSystem& hbar, Geometry geometry, const PhaseState& from, const PhaseState& to,
                     double tau);

/// One step of the full discrete conditions with the control as an unknown:
/// Newton on (x+, p+, u). Optionally returns the control.
PhaseState dmp_step(const OptimalControlProblem& ocp, Geometry geometry, const PhaseState& z, double tau,
                    const StepperConfig& newton = {}, Vec* control = nullptr);

struct ShootConfig {
  double shoot_tol = 1e-10;
  int max_iter = 30;
  int segments = 1;
  StepperConfig newton{};
};

struct ShootReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // || x_N - x_T ||_inf (plus continuity defects)
};

class ShootingFailure : public Error {
 public:
  ShootingFailure(const std::string& what, ShootReport report, bool singular)
      : Error(what), report_(report), singular_(singular) {}
  const ShootReport& report() const { return report_; }
  bool singular_sensitivity() const { return singular_; }

 private:
  ShootReport report_;
  bool singular_;
};

struct ShootResult {
  DiscreteSolution solution;
  Vec p0;
  ShootReport report;
};

/// Newton on p0 so that the eliminated flow reaches x_T, with sensitivities
/// from exact tangent maps. segments > 1 selects multiple shooting.
ShootResult shoot(const OptimalControlProblem& ocp, Geometry geometry, const Vec& p0_guess,
                  const ShootConfig& cfg = {});

struct DmpSolveConfig {
  double tol = 1e-12;
  int max_iter = 40;
  StepperConfig newton{};
};

/// Newton on all of (x, p, u[, lambda]) for the stacked discrete conditions,
/// with a finite-difference Jacobian.
DiscreteSolution solve_dmp(const OptimalControlProblem& ocp, Geometry geometry,
                           const DiscreteSolution* guess = nullptr, const DmpSolveConfig& cfg = {});

/// sum_k g(node_k, u_k) tau, nodes at the left end (Stormer) or interval
/// averages (midpoint).
double cost_of(const OptimalControlProblem& ocp, Geometry geometry, const std::vector<Vec>& xs,
               const std::vector<Vec>& us, double tau);

/// States generated by a control sequence from x_initial.
std::vector<Vec> simulate(const OptimalControlProblem& ocp, Geometry geometry, const std::vector<Vec>& us, double tau,
                          const StepperConfig& newton = {});

/// Multipliers reproducing p_0 and p_N through the transversality relations
/// (least squares).
std::pair<Vec, Vec> recover_multipliers(const OptimalControlProblem& ocp, const DiscreteSolution& sol);

struct DiagramReport {
  double max_state_gap = 0.0;
  double max_costate_gap = 0.0;
  double max_control_gap = 0.0;
  double discrepancy() const;
};

/// Solves the instance by shooting on the reduced Hamiltonian and by the full
/// discrete conditions, and compares the two pointwise.
DiagramReport verify_commutative_diagram(const OptimalControlProblem& ocp, Geometry geometry,
                                         const ShootConfig& cfg = {});

struct PerturbationReport {
  double base_cost = 0.0;
  double min_cost = 0.0;
  int samples = 0;
  int feasible = 0;
  int not_worse = 0;  // feasible samples whose cost is >= base_cost
  std::vector<double> costs;  // NaN where feasibility could not be restored
};

/// Random control perturbations of relative size `scale`, each pulled back
/// onto the target by a Newton correction along the problem's correction
/// basis; reports the perturbed costs. Evaluated in parallel.
PerturbationReport perturbation_oracle(const OptimalControlProblem& ocp, const DiscreteSolution& sol, int samples,
                                       double scale, std::uint64_t seed);
PerturbationReport perturbation_oracle_serial(const OptimalControlProblem& ocp, const DiscreteSolution& sol,
                                              int samples, double scale, std::uint64_t seed);

/// f = u, g = |u|^2 / 2 in n dimensions with hard endpoints.
OptimalControlProblem make_integrator_plant(const Vec& x_initial, const Vec& x_target, double horizon, int steps);

/// Heisenberg problem: f = (u1, u2, u1 y - u2 x), g = |u|^2 / 2, from the
/// origin to (a, 0, 0), or to (0, 0, a) when z_target is set.
OptimalControlProblem make_heisenberg_problem(double a = 1.0, double horizon = 1.0, int steps = 100,
                                              bool z_target = false);

}  // namespace dvi

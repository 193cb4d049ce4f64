#pragma once

#include "dvi/systems.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dvi {

struct StepperConfig {
  double tau = 0.01;
  double newton_tol = 1e-12;
  int newton_max_iter = 50;

  void validate() const;
};

/// Per-step solver record. h is the physical time increment of the step.
struct StepMeta {
  int newton_iters = 0;
  double residual = 0.0;
  double h = 0.0;
};

enum class Scheme { Stormer, StormerH, Verlet, Newmark, Midpoint, Rk4 };

struct Trajectory {
  std::vector<double> times;
  std::vector<PhaseState> states;
  std::vector<StepMeta> meta;  // meta[0] describes the initial sample
  std::optional<Scheme> scheme;

  std::size_t size() const { return states.size(); }
  void push(double t, PhaseState s, StepMeta m);
};

/// Two-step position recurrence q+ = 2q - q- - tau^2 M^{-1} grad V(q).
Vec stormer_step(const SeparableSystem& sys, const Vec& q_prev, const Vec& q_curr, const StepperConfig& cfg);

/// p+ = p - tau grad V(q), q+ = q + tau M^{-1} p+.
PhaseState stormer_hamiltonian_step(const SeparableSystem& sys, const PhaseState& s, const StepperConfig& cfg);

/// Kick-drift-kick velocity Verlet.
PhaseState velocity_verlet_step(const SeparableSystem& sys, const PhaseState& s, const StepperConfig& cfg);

struct NewmarkState {
  Vec q;
  Vec qdot;
};

/// Newmark with gamma = 1/2; Newton on q+ when beta > 0.
NewmarkState newmark_step(const SeparableSystem& sys, const NewmarkState& s, double beta,
                          const StepperConfig& cfg, StepMeta* meta = nullptr);

/// Coordinates in which the Newmark map is the symplectic Euler map:
/// q~ = q + beta tau^2 M^{-1} grad V(q), p~ = M qdot + (tau/2) grad V(q).
/// The input state carries p = M qdot.
PhaseState newmark_chart(const SeparableSystem& sys, const PhaseState& s, double beta, double tau);
Mat newmark_chart_jacobian(const SeparableSystem& sys, const PhaseState& s, double beta, double tau);

/// Implicit midpoint rule solved by Newton from an explicit Euler predictor.
PhaseState midpoint_step(const HamiltonianSystem& sys, const PhaseState& s, const StepperConfig& cfg,
                         StepMeta* meta = nullptr);

/// Exact Jacobian of a converged midpoint step from `from` to `to`.
Mat midpoint_tangent_map(const HamiltonianSystem& sys, const PhaseState& from, const PhaseState& to, double tau);

/// Symplectic Euler for a general H: p+ = p - tau D_q H(q, p+), q+ = q + tau D_p H(q, p+).
PhaseState symplectic_euler_step(const HamiltonianSystem& sys, const PhaseState& s, const StepperConfig& cfg,
                                 StepMeta* meta = nullptr);
Mat symplectic_euler_tangent_map(const HamiltonianSystem& sys, const PhaseState& from, const PhaseState& to,
                                 double tau);

/// z1 - z0 - tau J grad H((z0 + z1) / 2).
Vec midpoint_residual(const HamiltonianSystem& sys, const PhaseState& z0, const PhaseState& z1, double tau);

PhaseState rk4_step(const HamiltonianSystem& sys, const PhaseState& s, const StepperConfig& cfg);

Scheme parse_scheme(std::string_view key);
std::string scheme_key(Scheme s);
std::vector<std::string> scheme_keys();
bool needs_separable(Scheme s);

/// One-step map on (q, p). For Newmark p = M qdot; for the two-step Stormer
/// recurrence p is the discrete Legendre momentum M (q_k - q_{k-1}) / tau.
using StepMap = std::function<PhaseState(const PhaseState&)>;

struct SchemeOptions {
  double newmark_beta = 0.25;
};

StepMap make_step_map(Scheme scheme, const CatalogSystem& sys, const StepperConfig& cfg,
                      const SchemeOptions& opt = {});

/// Applies the scheme n_steps times. Step failures are rethrown with the
/// failing step index set.
Trajectory integrate(Scheme scheme, const CatalogSystem& sys, const PhaseState& initial, long n_steps,
                     const StepperConfig& cfg, const SchemeOptions& opt = {});

}  // namespace dvi

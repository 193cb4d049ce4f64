#pragma once

#include "dvi/integrators.hpp"

#include <vector>

namespace dvi {

/// The energy-step Newton system became singular (typically near a turning
/// point of the level set).
class SingularStepJacobian : public StepFailure {
 public:
  using StepFailure::StepFailure;
};

struct ExtendedStepRecord {
  ExtendedPhaseState state;
  double h_k = 0.0;
  int root_iters = 0;
};

enum class ExtendedScheme { Stormer, Midpoint };

/// Starting point for an extended run: t = 0 and e fixed by one plain step of
/// size tau. For Stormer e = -H(q0, p1); for midpoint e = -H((z0 + z1)/2).
ExtendedPhaseState extended_initial_state(ExtendedScheme scheme, const CatalogSystem& sys, const PhaseState& z0,
                                          const StepperConfig& cfg);

/// p+ = p - h grad V(q), q+ = q + h M^{-1} p+, with h > 0 chosen so that
/// H(q, p+) = -e. The constraint is quadratic in h; the root nearest tau is taken.
ExtendedStepRecord extended_stormer_step(const SeparableSystem& sys, const ExtendedPhaseState& s,
                                         const StepperConfig& cfg);

/// z+ = z + h J grad H(m), m = (z + z+)/2, with h > 0 chosen so that H(m) = -e.
ExtendedStepRecord extended_midpoint_step(const HamiltonianSystem& sys, const ExtendedPhaseState& s,
                                          const StepperConfig& cfg);

ExtendedStepRecord extended_step(ExtendedScheme scheme, const CatalogSystem& sys, const ExtendedPhaseState& s,
                                 const StepperConfig& cfg);

/// Discrete energy realised by the step from `a` to `b`: H(q_k, p_{k+1}) for
/// Stormer, H at the midpoint for the midpoint scheme.
double extended_step_energy(ExtendedScheme scheme, const CatalogSystem& sys, const ExtendedPhaseState& a,
                            const ExtendedPhaseState& b);

/// (q, p) map with e held fixed.
StepMap extended_step_map(ExtendedScheme scheme, const CatalogSystem& sys, const StepperConfig& cfg, double e);

/// Map on the packed (q, t, p, e) vector.
std::function<Vec(const Vec&)> extended_packed_map(ExtendedScheme scheme, const CatalogSystem& sys,
                                                   const StepperConfig& cfg);

/// Exact Jacobian of the packed (q, t, p, e) map for a computed step, from the
/// implicit function theorem applied to the step equations and the energy
/// constraint.
Mat extended_tangent_map(ExtendedScheme scheme, const CatalogSystem& sys, const ExtendedPhaseState& from,
                         const ExtendedStepRecord& step);

/// records[0] is the initial state with h_k = 0.
std::vector<ExtendedStepRecord> integrate_extended(ExtendedScheme scheme, const CatalogSystem& sys,
                                                   const PhaseState& z0, long n_steps, const StepperConfig& cfg);

ExtendedScheme parse_extended_scheme(std::string_view key);
std::string extended_scheme_key(ExtendedScheme s);

}  // namespace dvi

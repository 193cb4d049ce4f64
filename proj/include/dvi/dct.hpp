#pragma once

#include "dvi/integrators.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace dvi {

/// Per-step affine change of coordinates Z_k = A_k z_k + B_k.
struct CanonicalMap {
  int n = 1;  // degrees of freedom; A_k is 2n x 2n
  std::function<Mat(long)> a;
  std::function<Vec(long)> b;

  Vec apply(long k, const Vec& z) const { return a(k) * z + b(k); }
  Vec apply_inverse(long k, const Vec& big_z) const;
};

struct Certification {
  bool canonical = false;
  double max_defect = 0.0;     // max_k || A_k J A_k^T - J ||_inf
  double max_condition = 0.0;  // max_k cond_inf(A_k)
};

Certification certify_canonical(const CanonicalMap& map, long k_begin, long k_end, double tol = 1e-12);
Certification certify_canonical_serial(const CanonicalMap& map, long k_begin, long k_end, double tol = 1e-12);

CanonicalMap identity_map(int n);
CanonicalMap constant_map(Mat a, Vec b);
/// A_k = rotation of the (q, p) plane by k theta, B_k = 0.
CanonicalMap rotation_map(double theta = std::acos(0.99));
/// Z = outer_k(inner_k(z)).
CanonicalMap compose(const CanonicalMap& outer, const CanonicalMap& inner);
CanonicalMap inverse_map(const CanonicalMap& map);

/// Z_k = A_k z_k + B_k per sample. The map is certified over the trajectory's
/// index range first.
Trajectory pushforward_trajectory(const CanonicalMap& map, const Trajectory& traj);

/// K_k = H o f_k^{-1} for a fixed step index k.
HamiltonianSystem transformed_hamiltonian(const CanonicalMap& map, long k, const HamiltonianSystem& sys);

/// Energy error K_k(Z_k) - K_0(Z_0) of the pushed-forward midpoint trajectory,
/// with K evaluated by composing H with f_k^{-1}.
std::vector<double> transformed_energy_error(const CanonicalMap& map, const Trajectory& traj,
                                             const HamiltonianSystem& sys);

}  // namespace dvi

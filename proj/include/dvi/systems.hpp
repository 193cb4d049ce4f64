#pragma once

#include "dvi/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dvi {

using ScalarFn = std::function<double(const Vec&)>;
using VectorFn = std::function<Vec(const Vec&)>;
using MatrixFn = std::function<Mat(const Vec&)>;

/// H(z) on a 2n-dimensional phase space with gradient and Hessian.
/// Missing derivatives fall back to central differences with step
/// h_fd * max(1, |z_i|).
class HamiltonianSystem {
 public:
  HamiltonianSystem(int n, ScalarFn energy, VectorFn gradient = {}, MatrixFn hessian = {},
                    double h_fd = 1e-6);

  int dof() const { return n_; }
  int phase_dim() const { return 2 * n_; }
  double fd_step() const { return h_fd_; }
  bool has_analytic_gradient() const { return static_cast<bool>(grad_); }
  bool has_analytic_hessian() const { return static_cast<bool>(hess_); }

  double energy(const Vec& z) const;
  double energy(const PhaseState& s) const { return energy(s.packed()); }
  Vec gradient(const Vec& z) const;
  Mat hessian(const Vec& z) const;

  /// Central differences of energy(), regardless of any registered gradient.
  Vec fd_gradient(const Vec& z) const;
  /// Central differences of gradient(), symmetrised.
  Mat fd_hessian(const Vec& z) const;

 private:
  void check(const Vec& z) const;

  int n_;
  ScalarFn h_;
  VectorFn grad_;
  MatrixFn hess_;
  double h_fd_;
};

/// H(q, p) = p^T M^{-1} p / 2 + V(q).
class SeparableSystem {
 public:
  SeparableSystem(Mat mass, ScalarFn potential, VectorFn potential_gradient,
                  MatrixFn potential_hessian = {}, double h_fd = 1e-6);

  int dof() const { return static_cast<int>(parts_->mass.rows()); }
  const Mat& mass() const { return parts_->mass; }
  const Mat& inverse_mass() const { return parts_->inv_mass; }

  double potential(const Vec& q) const;
  Vec potential_gradient(const Vec& q) const;
  Mat potential_hessian(const Vec& q) const;
  Vec apply_inverse_mass(const Vec& p) const { return parts_->inv_mass * p; }
  double kinetic(const Vec& p) const;
  double energy(const Vec& q, const Vec& p) const;
  double energy(const PhaseState& s) const { return energy(s.q, s.p); }

  /// The same H viewed through the generic interface.
  const HamiltonianSystem& hamiltonian() const { return *ham_; }

 private:
  struct Parts {
    Mat mass;
    Mat inv_mass;
    ScalarFn v;
    VectorFn grad_v;
    MatrixFn hess_v;
    double h_fd;
  };
  std::shared_ptr<const Parts> parts_;
  std::shared_ptr<const HamiltonianSystem> ham_;
};

SeparableSystem make_harmonic_oscillator(double m = 1.0, double k = 1.0);
SeparableSystem make_double_well();

struct EarthConstants {
  double j2 = 1.082626675e-3;
  double j3 = 2.532436e-6;
  double radius_km = 6378.137;
  double r0_km = 7000.0;
};

/// Normalised two-body problem with J2 and J3 zonal terms; unit mass, so it is
/// separable with M = I.
SeparableSystem make_earth_j2j3(const EarthConstants& c = {});
/// Initial condition of the e = 0.3, i = pi/3 test orbit.
PhaseState earth_initial_state();

/// Reduced Hamiltonian of the Heisenberg (nonholonomic integrator) problem,
/// obtained by substituting the stationary control back into
/// H(x, p, u) = |u|^2 / 2 + <p, f(x, u)>, f = (u1, u2, u1 y - u2 x).
HamiltonianSystem make_heisenberg_reduced();
/// Control making D_u H vanish: u = -(px + pz y, py - pz x).
Eigen::Vector2d heisenberg_stationary_control(const Vec& x, const Vec& p);
/// The 3x3 momentum Hessian block as printed with the published reduced
/// Hamiltonian, [[-1, 0, -y], [0, -1, x], [-y, x, 0]]; determinant x^2 + y^2.
Eigen::Matrix3d heisenberg_printed_hessian_block(double x, double y);

/// A catalog entry: the generic Hamiltonian, the separable structure when
/// available, and a default initial state.
struct CatalogSystem {
  std::string key;
  HamiltonianSystem hamiltonian;
  std::optional<SeparableSystem> separable;
  PhaseState initial;
};

CatalogSystem make_system(std::string_view key);
std::vector<std::string> system_keys();

}  // namespace dvi

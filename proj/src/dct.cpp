#include "dvi/dct.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace dvi {

namespace {

double inf_norm(const Mat& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

struct StepCheck {
  double defect;
  double condition;
};

StepCheck check_step(const CanonicalMap& map, long k) {
  const Mat a = map.a(k);
  if (a.rows() != 2 * map.n || a.cols() != 2 * map.n) throw DimensionError("canonical map matrix has the wrong size");
  const Mat j = symplectic_j(map.n);
  const double defect = inf_norm(a * j * a.transpose() - j);
  Eigen::FullPivLU<Mat> lu(a);
  const double cond = lu.isInvertible() ? inf_norm(a) * inf_norm(lu.inverse()) : std::numeric_limits<double>::infinity();
  return {defect, cond};
}

}  // namespace

Vec CanonicalMap::apply_inverse(long k, const Vec& big_z) const {
  return a(k).partialPivLu().solve(big_z - b(k));
}

Certification certify_canonical_serial(const CanonicalMap& map, long k_begin, long k_end, double tol) {
  Certification c;
  for (long k = k_begin; k <= k_end; ++k) {
    const StepCheck s = check_step(map, k);
    c.max_defect = std::max(c.max_defect, s.defect);
    c.max_condition = std::max(c.max_condition, s.condition);
  }
  c.canonical = c.max_defect <= tol;
  return c;
}

Certification certify_canonical(const CanonicalMap& map, long k_begin, long k_end, double tol) {
  double worst = 0.0, cond = 0.0;
#pragma omp parallel for reduction(max : worst, cond) schedule(static)
  for (long k = k_begin; k <= k_end; ++k) {
    const StepCheck s = check_step(map, k);
    worst = std::max(worst, s.defect);
    cond = std::max(cond, s.condition);
  }
  return {worst <= tol, worst, cond};
}

CanonicalMap identity_map(int n) {
  const int m = 2 * n;
  return {n, [m](long) { return Mat(Mat::Identity(m, m)); }, [m](long) { return Vec(Vec::Zero(m)); }};
}

CanonicalMap constant_map(Mat a, Vec b) {
  if (a.rows() != a.cols() || a.rows() % 2 != 0 || b.size() != a.rows())
    throw DimensionError("constant map needs a square even-sized A and matching B");
  const int n = static_cast<int>(a.rows() / 2);
  return {n, [a](long) { return a; }, [b](long) { return b; }};
}

CanonicalMap rotation_map(double theta) {
  return {1,
          [theta](long k) {
            const double c = std::cos(k * theta), s = std::sin(k * theta);
            Mat a(2, 2);
            a << c, -s, s, c;
            return a;
          },
          [](long) { return Vec(Vec::Zero(2)); }};
}

CanonicalMap compose(const CanonicalMap& outer, const CanonicalMap& inner) {
  if (outer.n != inner.n) throw DimensionError("composed maps must act on the same phase space");
  return {outer.n, [outer, inner](long k) { return Mat(outer.a(k) * inner.a(k)); },
          [outer, inner](long k) { return Vec(outer.a(k) * inner.b(k) + outer.b(k)); }};
}

CanonicalMap inverse_map(const CanonicalMap& map) {
  return {map.n, [map](long k) { return Mat(map.a(k).inverse()); },
          [map](long k) { return Vec(-map.a(k).partialPivLu().solve(map.b(k))); }};
}

Trajectory pushforward_trajectory(const CanonicalMap& map, const Trajectory& traj) {
  if (traj.states.empty()) return traj;
  if (traj.states.front().dim() != map.n) throw DimensionError("map and trajectory dimensions differ");
  const long last = static_cast<long>(traj.size()) - 1;
  const Certification cert = certify_canonical(map, 0, last);
  if (!cert.canonical) {
    std::ostringstream os;
    os << "map is not canonical over the trajectory (defect " << cert.max_defect << ")";
    throw Error(os.str());
  }
  Trajectory out;
  out.scheme = traj.scheme;
  out.times = traj.times;
  out.meta = traj.meta;
  out.states.resize(traj.size());
#pragma omp parallel for schedule(static)
  for (long k = 0; k <= last; ++k) out.states[k] = PhaseState::unpack(map.apply(k, traj.states[k].packed()));
  return out;
}

HamiltonianSystem transformed_hamiltonian(const CanonicalMap& map, long k, const HamiltonianSystem& sys) {
  const Mat a = map.a(k);
  const Vec b = map.b(k);
  const Mat a_inv = a.inverse();
  return HamiltonianSystem(
      sys.dof(), [sys, a_inv, b](const Vec& z) { return sys.energy(Vec(a_inv * (z - b))); },
      [sys, a_inv, b](const Vec& z) { return Vec(a_inv.transpose() * sys.gradient(Vec(a_inv * (z - b)))); },
      [sys, a_inv, b](const Vec& z) {
        return Mat(a_inv.transpose() * sys.hessian(Vec(a_inv * (z - b))) * a_inv);
      },
      sys.fd_step());
}

std::vector<double> transformed_energy_error(const CanonicalMap& map, const Trajectory& traj,
                                             const HamiltonianSystem& sys) {
  if (traj.scheme != Scheme::Midpoint)
    throw Error("discrete canonical maps are defined for midpoint trajectories only");
  if (traj.states.empty()) throw Error("energy error series needs a nonempty trajectory");
  const Trajectory moved = pushforward_trajectory(map, traj);
  const long count = static_cast<long>(moved.size());
  std::vector<double> k_values(count);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < count; ++k) k_values[k] = sys.energy(map.apply_inverse(k, moved.states[k].packed()));
  std::vector<double> out(count);
  for (long k = 0; k < count; ++k) out[k] = k_values[k] - k_values[0];
  return out;
}

}  // namespace dvi

#include "dvi/systems.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace dvi {

namespace {

double fd_width(double h_fd, double x) { return h_fd * std::max(1.0, std::abs(x)); }

Vec central_gradient(const ScalarFn& f, const Vec& z, double h_fd) {
  Vec g(z.size());
  Vec zp = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double h = fd_width(h_fd, z(i));
    zp(i) = z(i) + h;
    const double fp = f(zp);
    zp(i) = z(i) - h;
    const double fm = f(zp);
    zp(i) = z(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Mat central_jacobian_sym(const VectorFn& g, const Vec& z, double h_fd) {
  const auto m = z.size();
  Mat hess(m, m);
  Vec zp = z;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double h = fd_width(h_fd, z(i));
    zp(i) = z(i) + h;
    const Vec gp = g(zp);
    zp(i) = z(i) - h;
    const Vec gm = g(zp);
    zp(i) = z(i);
    hess.col(i) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

void require_dim(const Vec& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << what << ": expected dimension " << n << ", got " << v.size();
    throw DimensionError(os.str());
  }
}

}  // namespace

HamiltonianSystem::HamiltonianSystem(int n, ScalarFn energy, VectorFn gradient, MatrixFn hessian,
                                     double h_fd)
    : n_(n), h_(std::move(energy)), grad_(std::move(gradient)), hess_(std::move(hessian)), h_fd_(h_fd) {
  if (n_ < 1) throw DimensionError("Hamiltonian system needs n >= 1");
  if (!h_) throw Error("Hamiltonian system needs an energy function");
  if (!(h_fd_ > 0.0)) throw Error("finite-difference step must be positive");
}

void HamiltonianSystem::check(const Vec& z) const { require_dim(z, 2 * n_, "Hamiltonian argument"); }

double HamiltonianSystem::energy(const Vec& z) const {
  check(z);
  return h_(z);
}

Vec HamiltonianSystem::gradient(const Vec& z) const {
  check(z);
  if (grad_) return grad_(z);
  return central_gradient(h_, z, h_fd_);
}

Mat HamiltonianSystem::hessian(const Vec& z) const {
  check(z);
  if (hess_) return hess_(z);
  if (grad_) return central_jacobian_sym(grad_, z, h_fd_);
  // Second differences of H directly; a wider step keeps roundoff in check.
  const double h2 = std::cbrt(h_fd_) * 1e-2;
  const auto m = z.size();
  Mat hess(m, m);
  Vec w = z;
  const double h0 = h_(z);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double hi = fd_width(h2, z(i));
    w(i) = z(i) + hi;
    const double fp = h_(w);
    w(i) = z(i) - hi;
    const double fm = h_(w);
    w(i) = z(i);
    hess(i, i) = (fp - 2.0 * h0 + fm) / (hi * hi);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double hj = fd_width(h2, z(j));
      double acc = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          w(i) = z(i) + si * hi;
          w(j) = z(j) + sj * hj;
          acc += si * sj * h_(w);
        }
      }
      w(i) = z(i);
      w(j) = z(j);
      hess(i, j) = hess(j, i) = acc / (4.0 * hi * hj);
    }
  }
  return hess;
}

Vec HamiltonianSystem::fd_gradient(const Vec& z) const {
  check(z);
  return central_gradient(h_, z, h_fd_);
}

Mat HamiltonianSystem::fd_hessian(const Vec& z) const {
  check(z);
  return central_jacobian_sym([this](const Vec& w) { return gradient(w); }, z, h_fd_);
}

SeparableSystem::SeparableSystem(Mat mass, ScalarFn potential, VectorFn potential_gradient,
                                 MatrixFn potential_hessian, double h_fd) {
  if (mass.rows() < 1 || mass.rows() != mass.cols()) throw DimensionError("mass matrix must be square, n >= 1");
  if (!(mass - mass.transpose()).isZero(1e-14 * std::max(1.0, mass.cwiseAbs().maxCoeff())))
    throw Error("mass matrix must be symmetric");
  Eigen::LLT<Mat> llt(mass);
  if (llt.info() != Eigen::Success) throw Error("mass matrix must be positive definite");
  if (!potential || !potential_gradient) throw Error("separable system needs V and grad V");
  auto parts = std::make_shared<Parts>();
  const auto n = mass.rows();
  parts->inv_mass = llt.solve(Mat::Identity(n, n));
  parts->inv_mass = 0.5 * (parts->inv_mass + parts->inv_mass.transpose()).eval();
  parts->mass = std::move(mass);
  parts->v = std::move(potential);
  parts->grad_v = std::move(potential_gradient);
  parts->hess_v = std::move(potential_hessian);
  parts->h_fd = h_fd;
  parts_ = parts;

  const auto ni = static_cast<int>(n);
  ham_ = std::make_shared<HamiltonianSystem>(
      ni,
      [parts, n](const Vec& z) {
        const Vec p = z.tail(n);
        return 0.5 * p.dot(parts->inv_mass * p) + parts->v(z.head(n));
      },
      [parts, n](const Vec& z) {
        Vec g(2 * n);
        g.head(n) = parts->grad_v(z.head(n));
        g.tail(n) = parts->inv_mass * z.tail(n);
        return g;
      },
      [parts, n](const Vec& z) {
        const Vec q = z.head(n);
        Mat hz = Mat::Zero(2 * n, 2 * n);
        hz.topLeftCorner(n, n) = parts->hess_v ? parts->hess_v(q) : central_jacobian_sym(parts->grad_v, q, parts->h_fd);
        hz.bottomRightCorner(n, n) = parts->inv_mass;
        return hz;
      },
      h_fd);
}

double SeparableSystem::potential(const Vec& q) const {
  require_dim(q, dof(), "potential argument");
  return parts_->v(q);
}

Vec SeparableSystem::potential_gradient(const Vec& q) const {
  require_dim(q, dof(), "potential argument");
  return parts_->grad_v(q);
}

Mat SeparableSystem::potential_hessian(const Vec& q) const {
  require_dim(q, dof(), "potential argument");
  if (parts_->hess_v) return parts_->hess_v(q);
  return central_jacobian_sym(parts_->grad_v, q, parts_->h_fd);
}

double SeparableSystem::kinetic(const Vec& p) const {
  require_dim(p, dof(), "momentum");
  return 0.5 * p.dot(parts_->inv_mass * p);
}

double SeparableSystem::energy(const Vec& q, const Vec& p) const {
  require_dim(q, dof(), "position");
  require_dim(p, dof(), "momentum");
  return 0.5 * p.dot(parts_->inv_mass * p) + parts_->v(q);
}

SeparableSystem make_harmonic_oscillator(double m, double k) {
  if (!(m > 0.0)) throw Error("harmonic oscillator needs m > 0");
  if (!(k >= 0.0)) throw Error("harmonic oscillator needs k >= 0");
  Mat mass(1, 1);
  mass(0, 0) = m;
  return SeparableSystem(
      mass, [k](const Vec& q) { return 0.5 * k * q(0) * q(0); },
      [k](const Vec& q) { return Vec::Constant(1, k * q(0)); },
      [k](const Vec&) { return Mat::Constant(1, 1, k); });
}

SeparableSystem make_double_well() {
  return SeparableSystem(
      Mat::Identity(1, 1),
      [](const Vec& q) {
        const double x2 = q(0) * q(0);
        return 0.5 * (x2 * x2 - x2);
      },
      [](const Vec& q) { return Vec::Constant(1, 2.0 * q(0) * q(0) * q(0) - q(0)); },
      [](const Vec& q) { return Mat::Constant(1, 1, 6.0 * q(0) * q(0) - 1.0); });
}

SeparableSystem make_earth_j2j3(const EarthConstants& c) {
  const double ratio = c.radius_km / c.r0_km;
  const double a2 = 0.5 * c.j2 * ratio * ratio;
  const double a3 = 0.5 * c.j3 * ratio * ratio * ratio;
  auto radius_sq = [](const Vec& q) {
    const double s = q.squaredNorm();
    if (!(s > 0.0)) throw SingularityError("earth potential evaluated at r = 0");
    return s;
  };
  auto potential = [a2, a3, radius_sq](const Vec& q) {
    const double s = radius_sq(q);
    const double z = q(2);
    const double r = std::sqrt(s);
    const double r3 = s * r, r5 = r3 * s, r7 = r5 * s;
    return -1.0 / r + a2 * (3.0 * z * z / r5 - 1.0 / r3) + a3 * (5.0 * z * z * z / r7 - 3.0 * z / r5);
  };
  auto gradient = [a2, a3, radius_sq](const Vec& q) {
    const double s = radius_sq(q);
    const double z = q(2);
    const double r = std::sqrt(s);
    const double r3 = s * r, r5 = r3 * s, r7 = r5 * s, r9 = r7 * s;
    const double radial = 1.0 / r3 + a2 * (-15.0 * z * z / r7 + 3.0 / r5) +
                          a3 * (-35.0 * z * z * z / r9 + 15.0 * z / r7);
    Vec g = radial * q;
    g(2) += a2 * 6.0 * z / r5 + a3 * (15.0 * z * z / r7 - 3.0 / r5);
    return g;
  };
  return SeparableSystem(Mat::Identity(3, 3), potential, gradient);
}

PhaseState earth_initial_state() {
  const double v = std::sqrt(1.3);
  const double inc = std::numbers::pi / 3.0;
  Vec q = Vec::Zero(3);
  Vec p = Vec::Zero(3);
  q(0) = 1.0;
  p(1) = v * std::cos(inc);
  p(2) = v * std::sin(inc);
  return {q, p};
}

Eigen::Vector2d heisenberg_stationary_control(const Vec& x, const Vec& p) {
  require_dim(x, 3, "Heisenberg state");
  require_dim(p, 3, "Heisenberg costate");
  return {-(p(0) + p(2) * x(1)), -(p(1) - p(2) * x(0))};
}

HamiltonianSystem make_heisenberg_reduced() {
  return HamiltonianSystem(
      3,
      [](const Vec& z) {
        const double a = z(3) + z(5) * z(1);
        const double b = z(4) - z(5) * z(0);
        return -0.5 * (a * a + b * b);
      },
      [](const Vec& z) {
        const double x = z(0), y = z(1), pz = z(5);
        const double a = z(3) + pz * y;
        const double b = z(4) - pz * x;
        Vec g(6);
        g << b * pz, -a * pz, 0.0, -a, -b, -a * y + b * x;
        return g;
      },
      [](const Vec& z) {
        const double x = z(0), y = z(1), px = z(3), py = z(4), pz = z(5);
        const double a = px + pz * y;
        const double b = py - pz * x;
        Mat h = Mat::Zero(6, 6);
        // Rows/columns ordered (x, y, z, px, py, pz); H = -(a^2 + b^2)/2.
        h(0, 0) = -pz * pz;
        h(1, 1) = -pz * pz;
        h(0, 4) = h(4, 0) = pz;
        h(0, 5) = h(5, 0) = b - pz * x;
        h(1, 3) = h(3, 1) = -pz;
        h(1, 5) = h(5, 1) = -a - pz * y;
        h(3, 3) = -1.0;
        h(4, 4) = -1.0;
        h(3, 5) = h(5, 3) = -y;
        h(4, 5) = h(5, 4) = x;
        h(5, 5) = -(y * y + x * x);
        return h;
      });
}

Eigen::Matrix3d heisenberg_printed_hessian_block(double x, double y) {
  Eigen::Matrix3d b;
  b << -1.0, 0.0, -y, 0.0, -1.0, x, -y, x, 0.0;
  return b;
}

CatalogSystem make_system(std::string_view key) {
  if (key == "harmonic") {
    auto s = make_harmonic_oscillator(1.0, 1.0);
    return {std::string(key), s.hamiltonian(), s, PhaseState(Vec::Ones(1), Vec::Zero(1))};
  }
  if (key == "double-well") {
    auto s = make_double_well();
    return {std::string(key), s.hamiltonian(), s, PhaseState(Vec::Ones(1), Vec::Constant(1, 0.05))};
  }
  if (key == "earth-j2j3") {
    auto s = make_earth_j2j3();
    return {std::string(key), s.hamiltonian(), s, earth_initial_state()};
  }
  if (key == "heisenberg") {
    Vec x(3), p(3);
    x << 0.1, 0.2, 0.0;
    p << -1.0, 0.5, 0.3;
    return {std::string(key), make_heisenberg_reduced(), std::nullopt, PhaseState(x, p)};
  }
  std::ostringstream os;
  os << "unknown system '" << key << "'; valid keys:";
  for (const auto& k : system_keys()) os << ' ' << k;
  throw Error(os.str());
}

std::vector<std::string> system_keys() { return {"harmonic", "double-well", "earth-j2j3", "heisenberg"}; }

}  // namespace dvi

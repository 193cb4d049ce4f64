#include <doctest.h>

#include "dvi/systems.hpp"

#include <cmath>
#include <random>

using namespace dvi;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Central differences with a step independent of the library's.
Vec oracle_gradient(const HamiltonianSystem& h, const Vec& z) {
  Vec g(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double d = 1e-5 * std::max(1.0, std::abs(z(i)));
    Vec a = z, b = z;
    a(i) += d;
    b(i) -= d;
    g(i) = (h.energy(a) - h.energy(b)) / (2 * d);
  }
  return g;
}

}  // namespace

TEST_CASE("phase state packing and validation") {
  PhaseState s(vec({1, 2}), vec({3, 4}));
  CHECK(s.dim() == 2);
  CHECK(s.packed() == vec({1, 2, 3, 4}));
  PhaseState u = PhaseState::unpack(vec({5, 6, 7, 8}));
  CHECK(u.q == vec({5, 6}));
  CHECK(u.p == vec({7, 8}));
  CHECK_THROWS_AS(PhaseState(vec({1}), vec({1, 2})), DimensionError);
  CHECK_THROWS_AS(PhaseState::unpack(vec({1, 2, 3})), DimensionError);

  ExtendedPhaseState e;
  e.q = vec({1});
  e.t = 2;
  e.p = vec({3});
  e.e = 4;
  CHECK(e.packed() == vec({1, 2, 3, 4}));
  ExtendedPhaseState back = ExtendedPhaseState::unpack(e.packed());
  CHECK(back.t == 2);
  CHECK(back.e == 4);
}

TEST_CASE("symplectic J and defect") {
  Mat j = symplectic_j(2);
  CHECK((j.transpose() * j - Mat::Identity(4, 4)).norm() == 0.0);
  CHECK(symplectic_defect_of(Mat::Identity(4, 4)) == 0.0);
  Mat scale = Mat::Identity(2, 2);
  scale(0, 0) = 2;
  CHECK(symplectic_defect_of(scale) == doctest::Approx(1.0));
}

TEST_CASE("harmonic oscillator") {
  SeparableSystem unit = make_harmonic_oscillator();
  CHECK(unit.energy(vec({1}), vec({0})) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(unit.energy(vec({0.6}), vec({0.8})) == doctest::Approx(0.5).epsilon(1e-15));

  SeparableSystem h = make_harmonic_oscillator(2.0, 3.0);
  Vec g = h.hamiltonian().gradient(vec({1, 1}));
  CHECK(g(0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(g(1) == doctest::Approx(0.5).epsilon(1e-15));

  SeparableSystem free = make_harmonic_oscillator(1.0, 0.0);
  CHECK(free.energy(vec({7}), vec({2})) == doctest::Approx(2.0));

  CHECK_THROWS(make_harmonic_oscillator(0.0, 1.0));
  CHECK_THROWS(make_harmonic_oscillator(-1.0, 1.0));
}

TEST_CASE("double well") {
  SeparableSystem dw = make_double_well();
  CHECK(dw.energy(vec({1}), vec({0.05})) == doctest::Approx(0.00125).epsilon(1e-12));
  CHECK(dw.energy(vec({0}), vec({0})) == doctest::Approx(0.0));
  CHECK(dw.potential_gradient(vec({1}))(0) == doctest::Approx(1.0));
  // V = (q^4 - q^2) / 2, V'' = 6q^2 - 1
  CHECK(dw.potential(vec({2})) == doctest::Approx(6.0));
  CHECK(dw.potential_hessian(vec({0.5}))(0, 0) == doctest::Approx(6 * 0.25 - 1).epsilon(1e-12));
}

TEST_CASE("earth zonal problem") {
  EarthConstants kepler;
  kepler.j2 = 0;
  kepler.j3 = 0;
  SeparableSystem two_body = make_earth_j2j3(kepler);
  CHECK(two_body.energy(vec({1, 0, 0}), vec({0, 1, 0})) == doctest::Approx(-0.5).epsilon(1e-15));

  SeparableSystem earth = make_earth_j2j3();
  PhaseState z0 = earth_initial_state();
  CHECK(z0.dim() == 3);
  CHECK(std::isfinite(earth.energy(z0)));
  CHECK(earth.energy(z0) < 0);
  Vec g = earth.hamiltonian().gradient(z0.packed());
  Vec fd = oracle_gradient(earth.hamiltonian(), z0.packed());
  CHECK((g - fd).lpNorm<Eigen::Infinity>() <= 1e-8);

  CHECK_THROWS_AS(earth.potential(Vec::Zero(3)), SingularityError);
}

TEST_CASE("heisenberg reduced hamiltonian") {
  HamiltonianSystem h = make_heisenberg_reduced();
  CHECK(h.dof() == 3);
  // pz = 0 reduces to -(px^2 + py^2)/2
  CHECK(h.energy(vec({0.3, -0.7, 2.0, 1.5, -0.5, 0.0})) == doctest::Approx(-0.5 * (2.25 + 0.25)));

  CHECK(heisenberg_printed_hessian_block(3, 4).determinant() == doctest::Approx(25.0));
  CHECK(std::abs(heisenberg_printed_hessian_block(0, 0).determinant()) == 0.0);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 100; ++trial) {
    Vec x = vec({u(rng), u(rng), u(rng)});
    Vec p = vec({u(rng), u(rng), u(rng)});
    Eigen::Vector2d c = heisenberg_stationary_control(x, p);
    // D_u H = u + f_u^T p with f_u = [[1, 0], [0, 1], [y, -x]]
    const double r1 = c(0) + p(0) + p(2) * x(1);
    const double r2 = c(1) + p(1) - p(2) * x(0);
    CHECK(std::max(std::abs(r1), std::abs(r2)) <= 1e-12);
    // substitute back into H(x, p, u)
    const double full = 0.5 * c.squaredNorm() + p(0) * c(0) + p(1) * c(1) + p(2) * (c(0) * x(1) - c(1) * x(0));
    Vec z(6);
    z << x, p;
    CHECK(std::abs(h.energy(z) - full) <= 1e-14 * std::max(1.0, std::abs(full)));
  }
}

TEST_CASE("catalog gradients agree with differences") {
  for (const std::string& key : system_keys()) {
    CAPTURE(key);
    CatalogSystem sys = make_system(key);
    CHECK(sys.hamiltonian.dof() == sys.initial.dim());
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
      Vec z = sys.initial.packed();
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) += u(rng);
      Vec g = sys.hamiltonian.gradient(z);
      Vec fd = oracle_gradient(sys.hamiltonian, z);
      CHECK((g - fd).lpNorm<Eigen::Infinity>() <= 1e-7 * std::max(1.0, g.lpNorm<Eigen::Infinity>()));
      Mat hess = sys.hamiltonian.hessian(z);
      CHECK((hess - hess.transpose()).lpNorm<Eigen::Infinity>() <= 1e-8);
      if (sys.separable) {
        PhaseState s = PhaseState::unpack(z);
        CHECK(sys.separable->energy(s) == doctest::Approx(sys.hamiltonian.energy(z)).epsilon(1e-15));
      }
    }
  }
  CHECK(system_keys().size() == 4);
  CHECK_THROWS(make_system("pendulum"));
}

TEST_CASE("energy-only system falls back to differences") {
  HamiltonianSystem h(1, [](const Vec& z) { return 0.5 * z(1) * z(1) + std::cos(z(0)); });
  CHECK_FALSE(h.has_analytic_gradient());
  Vec z = vec({0.4, -1.2});
  Vec g = h.gradient(z);
  CHECK(g(0) == doctest::Approx(-std::sin(0.4)).epsilon(1e-8));
  CHECK(g(1) == doctest::Approx(-1.2).epsilon(1e-8));
  Mat hess = h.hessian(z);
  CHECK(hess(0, 0) == doctest::Approx(-std::cos(0.4)).epsilon(1e-5));
  CHECK(hess(1, 1) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK_THROWS_AS(h.energy(vec({1, 2, 3})), DimensionError);
}

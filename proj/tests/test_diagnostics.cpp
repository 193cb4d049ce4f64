#include <doctest.h>

#include "dvi/diagnostics.hpp"

#include <cmath>
#include <cstring>

using namespace dvi;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

StepperConfig with_tau(double tau) {
  StepperConfig c;
  c.tau = tau;
  return c;
}

}  // namespace

TEST_CASE("jacobian of the identity map") {
  StepMap id = [](const PhaseState& z) { return z; };
  Mat j = step_jacobian(id, PhaseState(vec({0.3, -4}), vec({2, 0.1})));
  CHECK((j - Mat::Identity(4, 4)).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("midpoint on the harmonic oscillator is the Cayley transform") {
  CatalogSystem h = make_system("harmonic");
  const double tau = 0.1;
  StepMap step = make_step_map(Scheme::Midpoint, h, with_tau(tau));
  Mat a(2, 2);
  a << 0, 1, -1, 0;
  const Mat id = Mat::Identity(2, 2);
  const Mat cayley = (id - 0.5 * tau * a).inverse() * (id + 0.5 * tau * a);
  for (const PhaseState& z : sample_probes(h.initial, 1.0, 10, 2))
    CHECK((step_jacobian(step, z) - cayley).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("rk4 jacobian determinant differs from one") {
  CatalogSystem h = make_system("harmonic");
  StepMap step = make_step_map(Scheme::Rk4, h, with_tau(0.1));
  // exact: |R(i tau)|^2 with R the degree-4 Taylor polynomial of exp
  const double t = 0.1;
  const double re = 1 - t * t / 2 + t * t * t * t / 24, im = t - t * t * t / 6;
  const double det = re * re + im * im;
  CHECK(std::abs(det - 1) > 1e-12);
  CHECK(step_jacobian(step, h.initial).determinant() == doctest::Approx(det).epsilon(1e-9));
}

TEST_CASE("symplectic defect per scheme") {
  CatalogSystem dw = make_system("double-well");
  CatalogSystem h = make_system("harmonic");
  StepperConfig c = with_tau(0.1);

  auto mid = symplectic_defect(make_step_map(Scheme::Midpoint, dw, c), {dw.initial});
  REQUIRE(mid.size() == 1);
  CHECK(mid[0].defect <= 1e-9);
  CHECK(mid[0].jacobian_method == JacobianMethod::CentralFd);

  auto vv = symplectic_defect(make_step_map(Scheme::Verlet, h, c), sample_probes(h.initial, 1.0, 50, 9));
  CHECK(max_defect(vv) <= 1e-10);

  auto rk = symplectic_defect(make_step_map(Scheme::Rk4, dw, c), {dw.initial});
  CHECK(rk[0].defect >= 1e-8);

  for (const auto& r : vv) CHECK(r.defect >= 0);
}

TEST_CASE("exact tangent maps give analytic defect reports") {
  CatalogSystem dw = make_system("double-well");
  StepperConfig c = with_tau(0.1);
  TangentMap tangent = [&](const PhaseState& z) {
    return midpoint_tangent_map(dw.hamiltonian, z, midpoint_step(dw.hamiltonian, z, c), c.tau);
  };
  auto reports = symplectic_defect_analytic(tangent, sample_probes(dw.initial, 0.5, 20, 4));
  CHECK(reports.size() == 20);
  for (const auto& r : reports) CHECK(r.jacobian_method == JacobianMethod::Analytic);
  CHECK(max_defect(reports) <= 1e-12);
  CHECK(std::strcmp(jacobian_method_name(JacobianMethod::Analytic), "analytic") == 0);
  CHECK(std::strcmp(jacobian_method_name(JacobianMethod::CentralFd), "central-fd") == 0);
}

TEST_CASE("defect is unchanged by conjugation with a constant symplectic map") {
  CatalogSystem dw = make_system("double-well");
  StepMap step = make_step_map(Scheme::Verlet, dw, with_tau(0.1));
  Mat s(2, 2);
  s << 1.0, 0.0, 0.5, 1.0;  // shear, det 1
  const Mat s_inv = s.inverse();
  StepMap conj = [&](const PhaseState& z) {
    return PhaseState::unpack(s * step(PhaseState::unpack(s_inv * z.packed())).packed());
  };
  std::vector<PhaseState> probes = sample_probes(dw.initial, 0.5, 30, 12);
  std::vector<PhaseState> pulled;
  for (const PhaseState& z : probes) pulled.push_back(PhaseState::unpack(s * z.packed()));
  auto a = symplectic_defect(step, probes);
  auto b = symplectic_defect(conj, pulled);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i].defect - b[i].defect) <= 2e-10);

  // a non-symplectic map stays visibly non-symplectic after conjugation
  StepMap rk = make_step_map(Scheme::Rk4, dw, with_tau(0.1));
  StepMap rk_conj = [&](const PhaseState& z) {
    return PhaseState::unpack(s * rk(PhaseState::unpack(s_inv * z.packed())).packed());
  };
  CHECK(max_defect(symplectic_defect(rk_conj, pulled)) > 1e-8);
}

TEST_CASE("parallel and serial defect sweeps agree") {
  CatalogSystem earth = make_system("earth-j2j3");
  StepMap step = make_step_map(Scheme::Midpoint, earth, with_tau(0.05));
  std::vector<PhaseState> probes = sample_probes(earth.initial, 0.05, 64, 21);
  auto par = symplectic_defect(step, probes);
  auto ser = symplectic_defect_serial(step, probes);
  REQUIRE(par.size() == ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i].defect == ser[i].defect);
    CHECK(par[i].probe.packed() == probes[i].packed());
  }
}

TEST_CASE("energy error series") {
  CatalogSystem h = make_system("harmonic");
  Trajectory still;
  for (int k = 0; k < 5; ++k) still.push(k, h.initial, {});
  for (double e : energy_error_series(still, h.hamiltonian)) CHECK(e == 0.0);

  Trajectory mp = integrate(Scheme::Midpoint, h, h.initial, 2000, with_tau(0.05));
  for (double e : energy_error_series(mp, h.hamiltonian)) CHECK(std::abs(e) <= 1e-12);

  CatalogSystem dw = make_system("double-well");
  Trajectory mw = integrate(Scheme::Midpoint, dw, dw.initial, 5000, with_tau(0.05));
  std::vector<double> series = energy_error_series(mw, dw.hamiltonian);
  CHECK(series.front() == 0.0);
  double lo = 0, hi = 0;
  for (double e : series) {
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  CHECK(hi - lo > 1e-8);  // the midpoint rule does not conserve a quartic H
  CHECK(hi - lo < 1e-2);

  Trajectory empty;
  CHECK_THROWS(energy_error_series(empty, h.hamiltonian));
}

TEST_CASE("probe sampling") {
  PhaseState c(vec({1, -1}), vec({0, 2}));
  std::vector<PhaseState> a = sample_probes(c, 0.25, 40, 77);
  std::vector<PhaseState> b = sample_probes(c, 0.25, 40, 77);
  std::vector<PhaseState> d = sample_probes(c, 0.25, 40, 78);
  REQUIRE(a.size() == 40);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].packed() == b[i].packed());
    CHECK((a[i].packed() - c.packed()).lpNorm<Eigen::Infinity>() <= 0.25);
    differs = differs || a[i].packed() != d[i].packed();
  }
  CHECK(differs);
}

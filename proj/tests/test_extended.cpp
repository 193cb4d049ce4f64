#include <doctest.h>

#include "dvi/diagnostics.hpp"
#include "dvi/extended.hpp"

#include <cmath>

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

ExtendedPhaseState ext(const PhaseState& z, double t, double e) {
  ExtendedPhaseState s;
  s.q = z.q;
  s.p = z.p;
  s.t = t;
  s.e = e;
  return s;
}

}  // namespace

TEST_CASE("free particle keeps the nominal step") {
  CatalogSystem free{"free", make_harmonic_oscillator(1.0, 0.0).hamiltonian(), make_harmonic_oscillator(1.0, 0.0),
                     PhaseState(vec({0}), vec({2}))};
  StepperConfig c = with_tau(0.1);
  ExtendedPhaseState s0 = extended_initial_state(ExtendedScheme::Stormer, free, free.initial, c);
  CHECK(s0.e == doctest::Approx(-2.0));
  ExtendedStepRecord r = extended_stormer_step(*free.separable, s0, c);
  CHECK(r.h_k == 0.1);
  CHECK(r.state.q(0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(r.state.t == doctest::Approx(0.1));
}

TEST_CASE("constant hamiltonian: midpoint stays put while time advances") {
  HamiltonianSystem flat(1, [](const Vec&) { return 3.0; }, [](const Vec& z) { return Vec::Zero(z.size()); },
                         [](const Vec& z) { return Mat::Zero(z.size(), z.size()); });
  ExtendedPhaseState s = ext(PhaseState(vec({0.4}), vec({-1})), 0.0, -3.0);
  ExtendedStepRecord r = extended_midpoint_step(flat, s, with_tau(0.1));
  CHECK(r.state.q(0) == 0.4);
  CHECK(r.state.p(0) == -1.0);
  CHECK(r.h_k == doctest::Approx(0.1));
  CHECK(r.state.t == doctest::Approx(0.1));
}

TEST_CASE("extended stormer on the harmonic oscillator matches a bisection root") {
  CatalogSystem h = make_system("harmonic");
  StepperConfig c = with_tau(0.1);
  ExtendedPhaseState s = extended_initial_state(ExtendedScheme::Stormer, h, PhaseState(vec({1}), vec({0})), c);
  for (int k = 0; k < 20; ++k) {
    ExtendedStepRecord r = extended_stormer_step(*h.separable, s, c);
    CHECK(std::isfinite(r.h_k));
    CHECK(r.h_k > 0);
    CHECK(std::abs(r.state.e - s.e) <= 1e-12);

    // H(q, p - h q) + e = 0 for h in (0, 4 tau]; take the sign change nearest tau.
    const double q = s.q(0), p = s.p(0), e = s.e;
    auto g = [&](double hh) { return 0.5 * (p - hh * q) * (p - hh * q) + 0.5 * q * q + e; };
    double best = NAN;
    const int cells = 4000;
    for (int i = 0; i < cells; ++i) {
      double lo = 4 * c.tau * i / cells + 1e-15, hi = 4 * c.tau * (i + 1) / cells;
      if (g(lo) == 0) { best = lo; break; }
      if ((g(lo) < 0) == (g(hi) < 0)) continue;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        ((g(lo) < 0) == (g(mid) < 0) ? lo : hi) = mid;
      }
      const double root = 0.5 * (lo + hi);
      if (std::isnan(best) || std::abs(root - c.tau) < std::abs(best - c.tau)) best = root;
    }
    REQUIRE(std::isfinite(best));
    CHECK(r.h_k == doctest::Approx(best).epsilon(1e-9));
    CHECK(std::abs(extended_step_energy(ExtendedScheme::Stormer, h, s, r.state) + s.e) <= 1e-12);
    s = r.state;
  }
}

TEST_CASE("extended midpoint follows the plain midpoint on linear systems") {
  CatalogSystem h = make_system("harmonic");
  StepperConfig c = with_tau(0.01);
  const PhaseState z0(vec({1}), vec({0}));
  std::vector<ExtendedStepRecord> ext_run = integrate_extended(ExtendedScheme::Midpoint, h, z0, 100, c);
  Trajectory plain = integrate(Scheme::Midpoint, h, z0, 100, c);
  REQUIRE(ext_run.size() == plain.size());
  double gap = 0, step_gap = 0;
  for (std::size_t k = 0; k < plain.size(); ++k) {
    gap = std::max(gap, (ext_run[k].state.phase().packed() - plain.states[k].packed()).lpNorm<Eigen::Infinity>());
    if (k > 0) step_gap = std::max(step_gap, std::abs(ext_run[k].h_k - c.tau));
  }
  CHECK(gap <= 1e-8);
  CHECK(step_gap <= c.tau * c.tau * c.tau);
  CHECK(ext_run[0].h_k == 0.0);
}

TEST_CASE("energy momentum stays constant along extended runs") {
  StepperConfig c = with_tau(0.01);
  for (const std::string& key : system_keys()) {
    CAPTURE(key);
    CatalogSystem sys = make_system(key);
    for (ExtendedScheme scheme : {ExtendedScheme::Stormer, ExtendedScheme::Midpoint}) {
      if (scheme == ExtendedScheme::Stormer && !sys.separable) {
        CHECK_THROWS(integrate_extended(scheme, sys, sys.initial, 1, c));
        continue;
      }
      std::vector<ExtendedStepRecord> run = integrate_extended(scheme, sys, sys.initial, 2, c);
      for (std::size_t k = 1; k < run.size(); ++k) {
        CHECK(std::abs(run[k].state.e - run[0].state.e) <= 1e-12);
        CHECK(run[k].h_k > 0);
        CHECK(run[k].state.t > run[k - 1].state.t);
        CHECK(std::abs(extended_step_energy(scheme, sys, run[k - 1].state, run[k].state) + run[0].state.e) <=
              1e-11);
      }
    }
  }
}

TEST_CASE("exact tangent of the packed map") {
  CatalogSystem dw = make_system("double-well");
  StepperConfig c = with_tau(0.01);
  for (ExtendedScheme scheme : {ExtendedScheme::Stormer, ExtendedScheme::Midpoint}) {
    CAPTURE(extended_scheme_key(scheme));
    ExtendedPhaseState s = extended_initial_state(scheme, dw, dw.initial, c);
    ExtendedStepRecord r = extended_step(scheme, dw, s, c);
    Mat tangent = extended_tangent_map(scheme, dw, s, r);
    CHECK(tangent.rows() == 4);
    CHECK(symplectic_defect_of(tangent) <= 1e-9);
    if (scheme == ExtendedScheme::Stormer) {
      // dh/dz is about 25 here, so the difference quotient needs a small step
      Mat fd = vector_map_jacobian(extended_packed_map(scheme, dw, c), s.packed(), 1e-7);
      CHECK((fd - tangent).lpNorm<Eigen::Infinity>() <= 1e-6);
    }
  }
}

TEST_CASE("fixed-energy map on the phase space") {
  CatalogSystem h = make_system("harmonic");
  StepperConfig c = with_tau(0.1);
  ExtendedPhaseState s = extended_initial_state(ExtendedScheme::Stormer, h, h.initial, c);
  StepMap step = extended_step_map(ExtendedScheme::Stormer, h, c, s.e);
  PhaseState a = step(s.phase());
  ExtendedStepRecord r = extended_stormer_step(*h.separable, s, c);
  CHECK((a.packed() - r.state.phase().packed()).lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("unreachable energy level is reported as a step failure") {
  // Momentum chosen so that H(q, p+) = -e has no root for any h > 0.
  CatalogSystem h = make_system("harmonic");
  ExtendedPhaseState s = ext(PhaseState(vec({1}), vec({0})), 0.0, -0.1);
  CHECK_THROWS_AS(extended_stormer_step(*h.separable, s, with_tau(0.1)), StepFailure);
  CHECK_THROWS_AS(extended_midpoint_step(h.hamiltonian, s, with_tau(0.1)), StepFailure);
}

TEST_CASE("extended scheme keys") {
  for (ExtendedScheme s : {ExtendedScheme::Stormer, ExtendedScheme::Midpoint})
    CHECK(parse_extended_scheme(extended_scheme_key(s)) == s);
  CHECK_THROWS(parse_extended_scheme("rk4"));
}

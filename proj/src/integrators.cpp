#include "dvi/integrators.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace dvi {

namespace {

void require_dim(const Vec& v, int n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << what << ": expected dimension " << n << ", got " << v.size();
    throw DimensionError(os.str());
  }
}

void require_state(const PhaseState& s, int n, const char* what) {
  require_dim(s.q, n, what);
  require_dim(s.p, n, what);
}

Vec flow_field(const HamiltonianSystem& sys, const Vec& z) {
  const Vec g = sys.gradient(z);
  const int n = sys.dof();
  Vec f(2 * n);
  f.head(n) = g.tail(n);
  f.tail(n) = -g.head(n);
  return f;
}

// J * A for J = [[0, I], [-I, 0]].
Mat apply_j(const Mat& a) {
  const auto n = a.rows() / 2;
  Mat out(a.rows(), a.cols());
  out.topRows(n) = a.bottomRows(n);
  out.bottomRows(n) = -a.topRows(n);
  return out;
}

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

void StepperConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error("tau must be positive and finite");
  if (!(newton_tol > 0.0)) throw Error("newton_tol must be positive");
  if (newton_max_iter < 1) throw Error("newton_max_iter must be at least 1");
}

void Trajectory::push(double t, PhaseState s, StepMeta m) {
  if (!times.empty() && !(t > times.back())) throw Error("trajectory times must increase strictly");
  require_finite(s, "trajectory sample");
  times.push_back(t);
  states.push_back(std::move(s));
  meta.push_back(m);
}

Vec stormer_step(const SeparableSystem& sys, const Vec& q_prev, const Vec& q_curr, const StepperConfig& cfg) {
  require_dim(q_prev, sys.dof(), "stormer_step q_prev");
  require_dim(q_curr, sys.dof(), "stormer_step q_curr");
  const double t2 = cfg.tau * cfg.tau;
  return 2.0 * q_curr - q_prev - t2 * sys.apply_inverse_mass(sys.potential_gradient(q_curr));
}

PhaseState stormer_hamiltonian_step(const SeparableSystem& sys, const PhaseState& s, const StepperConfig& cfg) {
  require_state(s, sys.dof(), "stormer_hamiltonian_step");
  Vec p1 = s.p - cfg.tau * sys.potential_gradient(s.q);
  Vec q1 = s.q + cfg.tau * sys.apply_inverse_mass(p1);
  return {std::move(q1), std::move(p1)};
}

PhaseState velocity_verlet_step(const SeparableSystem& sys, const PhaseState& s, const StepperConfig& cfg) {
  require_state(s, sys.dof(), "velocity_verlet_step");
  const double h = cfg.tau;
  const Vec half = s.p - 0.5 * h * sys.potential_gradient(s.q);
  Vec q1 = s.q + h * sys.apply_inverse_mass(half);
  Vec p1 = half - 0.5 * h * sys.potential_gradient(q1);
  return {std::move(q1), std::move(p1)};
}

NewmarkState newmark_step(const SeparableSystem& sys, const NewmarkState& s, double beta, const StepperConfig& cfg,
                          StepMeta* meta) {
  require_dim(s.q, sys.dof(), "newmark_step q");
  require_dim(s.qdot, sys.dof(), "newmark_step qdot");
  if (!(beta >= 0.0 && beta <= 0.5)) throw Error("newmark beta must lie in [0, 1/2]");
  const double h = cfg.tau;
  const double h2 = h * h;
  const int n = sys.dof();
  const Vec a0 = -sys.apply_inverse_mass(sys.potential_gradient(s.q));
  const Vec base = s.q + h * s.qdot + 0.5 * h2 * (1.0 - 2.0 * beta) * a0;

  Vec q1 = base + beta * h2 * a0;
  Vec a1 = -sys.apply_inverse_mass(sys.potential_gradient(q1));
  int iters = 0;
  double res = 0.0;
  if (beta > 0.0) {
    Vec r = q1 - base - beta * h2 * a1;
    res = inf_norm(r);
    bool polished = false;
    while (res > cfg.newton_tol || !polished) {
      if (res <= cfg.newton_tol) polished = true;
      if (res == 0.0) break;
      if (iters >= cfg.newton_max_iter) {
        if (res <= cfg.newton_tol) break;
        throw StepFailure("newmark Newton did not converge", res, iters);
      }
      const Mat jac = Mat::Identity(n, n) + beta * h2 * sys.inverse_mass() * sys.potential_hessian(q1);
      q1 -= jac.partialPivLu().solve(r);
      ++iters;
      a1 = -sys.apply_inverse_mass(sys.potential_gradient(q1));
      r = q1 - base - beta * h2 * a1;
      res = inf_norm(r);
      if (!std::isfinite(res)) throw StepFailure("newmark Newton diverged", res, iters);
    }
  } else {
    q1 = base;
    a1 = -sys.apply_inverse_mass(sys.potential_gradient(q1));
  }
  if (meta) {
    meta->newton_iters = iters;
    meta->residual = res;
    meta->h = h;
  }
  Vec v1 = s.qdot + 0.5 * h * (a0 + a1);
  return {std::move(q1), std::move(v1)};
}

PhaseState newmark_chart(const SeparableSystem& sys, const PhaseState& s, double beta, double tau) {
  const Vec g = sys.potential_gradient(s.q);
  return {s.q + beta * tau * tau * sys.apply_inverse_mass(g), s.p + 0.5 * tau * g};
}

Mat newmark_chart_jacobian(const SeparableSystem& sys, const PhaseState& s, double beta, double tau) {
  const int n = sys.dof();
  const Mat k = sys.potential_hessian(s.q);
  Mat c = Mat::Identity(2 * n, 2 * n);
  c.topLeftCorner(n, n) += beta * tau * tau * sys.inverse_mass() * k;
  c.bottomLeftCorner(n, n) = 0.5 * tau * k;
  return c;
}

PhaseState midpoint_step(const HamiltonianSystem& sys, const PhaseState& s, const StepperConfig& cfg,
                         StepMeta* meta) {
  require_state(s, sys.dof(), "midpoint_step");
  const double h = cfg.tau;
  const int m = sys.phase_dim();
  const Vec z0 = s.packed();
  Vec z1 = z0 + h * flow_field(sys, z0);
  Vec r = z1 - z0 - h * flow_field(sys, 0.5 * (z0 + z1));
  double res = inf_norm(r);
  int iters = 0;
  bool polished = false;
  while (res > cfg.newton_tol || !polished) {
    // One correction past the tolerance drives the root to roundoff, so that
    // the step map is smooth enough to difference.
    if (res <= cfg.newton_tol) polished = true;
    if (res == 0.0) break;
    if (iters >= cfg.newton_max_iter) {
      if (res <= cfg.newton_tol) break;
      throw StepFailure("midpoint Newton did not converge", res, iters);
    }
    const Mat jac = Mat::Identity(m, m) - 0.5 * h * apply_j(sys.hessian(0.5 * (z0 + z1)));
    z1 -= jac.partialPivLu().solve(r);
    ++iters;
    r = z1 - z0 - h * flow_field(sys, 0.5 * (z0 + z1));
    res = inf_norm(r);
    if (!std::isfinite(res)) throw StepFailure("midpoint Newton diverged", res, iters);
  }
  if (meta) {
    meta->newton_iters = iters;
    meta->residual = res;
    meta->h = h;
  }
  return PhaseState::unpack(z1);
}

Mat midpoint_tangent_map(const HamiltonianSystem& sys, const PhaseState& from, const PhaseState& to, double tau) {
  const int m = sys.phase_dim();
  const Mat js = apply_j(sys.hessian(0.5 * (from.packed() + to.packed())));
  const Mat id = Mat::Identity(m, m);
  return (id - 0.5 * tau * js).partialPivLu().solve(id + 0.5 * tau * js);
}

PhaseState symplectic_euler_step(const HamiltonianSystem& sys, const PhaseState& s, const StepperConfig& cfg,
                                 StepMeta* meta) {
  require_state(s, sys.dof(), "symplectic_euler_step");
  const int n = sys.dof();
  const double h = cfg.tau;
  Vec z(2 * n);
  z.head(n) = s.q;
  z.tail(n) = s.p - h * sys.gradient(s.packed()).head(n);
  Vec g = sys.gradient(z);
  Vec r = z.tail(n) - s.p + h * g.head(n);
  double res = inf_norm(r);
  int iters = 0;
  bool polished = false;
  while (res > cfg.newton_tol || !polished) {
    if (res <= cfg.newton_tol) polished = true;
    if (res == 0.0) break;
    if (iters >= cfg.newton_max_iter) {
      if (res <= cfg.newton_tol) break;
      throw StepFailure("symplectic Euler Newton did not converge", res, iters);
    }
    const Mat hz = sys.hessian(z);
    const Mat jac = Mat::Identity(n, n) + h * hz.topRightCorner(n, n);
    z.tail(n) -= jac.partialPivLu().solve(r);
    ++iters;
    g = sys.gradient(z);
    r = z.tail(n) - s.p + h * g.head(n);
    res = inf_norm(r);
    if (!std::isfinite(res)) throw StepFailure("symplectic Euler Newton diverged", res, iters);
  }
  if (meta) {
    meta->newton_iters = iters;
    meta->residual = res;
    meta->h = h;
  }
  Vec q1 = s.q + h * g.tail(n);
  return {std::move(q1), z.tail(n)};
}

Mat symplectic_euler_tangent_map(const HamiltonianSystem& sys, const PhaseState& from, const PhaseState& to,
                                 double tau) {
  const int n = sys.dof();
  Vec z(2 * n);
  z << from.q, to.p;
  const Mat hz = sys.hessian(z);
  const Mat hqq = hz.topLeftCorner(n, n);
  const Mat hqp = hz.topRightCorner(n, n);
  const Mat hpq = hz.bottomLeftCorner(n, n);
  const Mat hpp = hz.bottomRightCorner(n, n);
  const Mat id = Mat::Identity(n, n);
  const auto lu = (id + tau * hqp).partialPivLu();
  const Mat dp_dq = lu.solve(-tau * hqq);
  const Mat dp_dp = lu.solve(id);
  Mat phi(2 * n, 2 * n);
  phi.topLeftCorner(n, n) = id + tau * (hpq + hpp * dp_dq);
  phi.topRightCorner(n, n) = tau * hpp * dp_dp;
  phi.bottomLeftCorner(n, n) = dp_dq;
  phi.bottomRightCorner(n, n) = dp_dp;
  return phi;
}

Vec midpoint_residual(const HamiltonianSystem& sys, const PhaseState& z0, const PhaseState& z1, double tau) {
  const Vec a = z0.packed();
  const Vec b = z1.packed();
  return b - a - tau * flow_field(sys, 0.5 * (a + b));
}

PhaseState rk4_step(const HamiltonianSystem& sys, const PhaseState& s, const StepperConfig& cfg) {
  require_state(s, sys.dof(), "rk4_step");
  const double h = cfg.tau;
  const Vec z = s.packed();
  const Vec k1 = flow_field(sys, z);
  const Vec k2 = flow_field(sys, z + 0.5 * h * k1);
  const Vec k3 = flow_field(sys, z + 0.5 * h * k2);
  const Vec k4 = flow_field(sys, z + h * k3);
  return PhaseState::unpack(z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

Scheme parse_scheme(std::string_view key) {
  if (key == "stormer") return Scheme::Stormer;
  if (key == "stormer-h") return Scheme::StormerH;
  if (key == "verlet") return Scheme::Verlet;
  if (key == "newmark") return Scheme::Newmark;
  if (key == "midpoint") return Scheme::Midpoint;
  if (key == "rk4") return Scheme::Rk4;
  std::ostringstream os;
  os << "unknown scheme '" << key << "'; valid keys:";
  for (const auto& k : scheme_keys()) os << ' ' << k;
  throw Error(os.str());
}

std::string scheme_key(Scheme s) {
  switch (s) {
    case Scheme::Stormer: return "stormer";
    case Scheme::StormerH: return "stormer-h";
    case Scheme::Verlet: return "verlet";
    case Scheme::Newmark: return "newmark";
    case Scheme::Midpoint: return "midpoint";
    case Scheme::Rk4: return "rk4";
  }
  return "?";
}

std::vector<std::string> scheme_keys() { return {"stormer", "stormer-h", "verlet", "newmark", "midpoint", "rk4"}; }

bool needs_separable(Scheme s) { return s != Scheme::Midpoint && s != Scheme::Rk4; }

namespace {

const SeparableSystem& separable_or_throw(Scheme scheme, const CatalogSystem& sys) {
  if (!sys.separable) throw Error("scheme '" + scheme_key(scheme) + "' needs a separable system; '" + sys.key + "' is not");
  return *sys.separable;
}

}  // namespace

StepMap make_step_map(Scheme scheme, const CatalogSystem& sys, const StepperConfig& cfg, const SchemeOptions& opt) {
  cfg.validate();
  switch (scheme) {
    case Scheme::Stormer: {
      const auto& sep = separable_or_throw(scheme, sys);
      return [sep, cfg](const PhaseState& s) {
        const Vec q_prev = s.q - cfg.tau * sep.apply_inverse_mass(s.p);
        Vec q1 = stormer_step(sep, q_prev, s.q, cfg);
        Vec p1 = sep.mass() * (q1 - s.q) / cfg.tau;
        return PhaseState(std::move(q1), std::move(p1));
      };
    }
    case Scheme::StormerH: {
      const auto& sep = separable_or_throw(scheme, sys);
      return [sep, cfg](const PhaseState& s) { return stormer_hamiltonian_step(sep, s, cfg); };
    }
    case Scheme::Verlet: {
      const auto& sep = separable_or_throw(scheme, sys);
      return [sep, cfg](const PhaseState& s) { return velocity_verlet_step(sep, s, cfg); };
    }
    case Scheme::Newmark: {
      const auto& sep = separable_or_throw(scheme, sys);
      const double beta = opt.newmark_beta;
      return [sep, cfg, beta](const PhaseState& s) {
        const NewmarkState out = newmark_step(sep, {s.q, sep.apply_inverse_mass(s.p)}, beta, cfg);
        return PhaseState(out.q, sep.mass() * out.qdot);
      };
    }
    case Scheme::Midpoint: {
      const auto ham = sys.hamiltonian;
      return [ham, cfg](const PhaseState& s) { return midpoint_step(ham, s, cfg); };
    }
    case Scheme::Rk4: {
      const auto ham = sys.hamiltonian;
      return [ham, cfg](const PhaseState& s) { return rk4_step(ham, s, cfg); };
    }
  }
  throw Error("unhandled scheme");
}

Trajectory integrate(Scheme scheme, const CatalogSystem& sys, const PhaseState& initial, long n_steps,
                     const StepperConfig& cfg, const SchemeOptions& opt) {
  cfg.validate();
  if (n_steps < 0) throw Error("n_steps must be nonnegative");
  require_state(initial, sys.hamiltonian.dof(), "integrate initial state");
  Trajectory traj;
  traj.scheme = scheme;
  traj.times.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.meta.reserve(n_steps + 1);
  traj.push(0.0, initial, StepMeta{});

  const SeparableSystem* sep = needs_separable(scheme) ? &separable_or_throw(scheme, sys) : nullptr;
  Vec q_prev;
  Vec qdot;
  if (scheme == Scheme::Stormer) q_prev = initial.q - cfg.tau * sep->apply_inverse_mass(initial.p);
  if (scheme == Scheme::Newmark) qdot = sep->apply_inverse_mass(initial.p);

  PhaseState s = initial;
  for (long k = 0; k < n_steps; ++k) {
    StepMeta meta;
    meta.h = cfg.tau;
    try {
      switch (scheme) {
        case Scheme::Stormer: {
          Vec q1 = stormer_step(*sep, q_prev, s.q, cfg);
          Vec p1 = sep->mass() * (q1 - s.q) / cfg.tau;
          q_prev = s.q;
          s = PhaseState(std::move(q1), std::move(p1));
          break;
        }
        case Scheme::StormerH: s = stormer_hamiltonian_step(*sep, s, cfg); break;
        case Scheme::Verlet: s = velocity_verlet_step(*sep, s, cfg); break;
        case Scheme::Newmark: {
          const NewmarkState out = newmark_step(*sep, {s.q, qdot}, opt.newmark_beta, cfg, &meta);
          qdot = out.qdot;
          s = PhaseState(out.q, sep->mass() * out.qdot);
          break;
        }
        case Scheme::Midpoint: s = midpoint_step(sys.hamiltonian, s, cfg, &meta); break;
        case Scheme::Rk4: s = rk4_step(sys.hamiltonian, s, cfg); break;
      }
      require_finite(s, "integrate");
    } catch (StepFailure& f) {
      f.set_step_index(k);
      throw;
    } catch (const SingularityError& e) {
      StepFailure f(e.what(), std::numeric_limits<double>::infinity(), 0);
      f.set_step_index(k);
      throw f;
    }
    traj.push(static_cast<double>(k + 1) * cfg.tau, s, meta);
  }
  return traj;
}

}  // namespace dvi

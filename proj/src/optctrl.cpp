#include "dvi/optctrl.hpp"

#include "dvi/systems.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace dvi {

namespace {

double fd_width(double x) { return 1e-6 * std::max(1.0, std::abs(x)); }

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

template <class F>
Mat fd_jacobian(F&& fun, const Vec& at, Eigen::Index rows) {
  Mat jac(rows, at.size());
  Vec w = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double h = fd_width(at(i));
    w(i) = at(i) + h;
    const Vec fp = fun(w);
    w(i) = at(i) - h;
    const Vec fm = fun(w);
    w(i) = at(i);
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

template <class F>
Vec fd_gradient(F&& fun, const Vec& at) {
  Vec g(at.size());
  Vec w = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double h = fd_width(at(i));
    w(i) = at(i) + h;
    const double fp = fun(w);
    w(i) = at(i) - h;
    const double fm = fun(w);
    w(i) = at(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct Node {
  Vec x, p;
};

// Quadrature node of interval k for each geometry.
Node node_of(Geometry geometry, const std::vector<Vec>& xs, const std::vector<Vec>& ps, std::size_t k) {
  if (geometry == Geometry::Stormer) return {xs[k], ps[k + 1]};
  return {0.5 * (xs[k] + xs[k + 1]), 0.5 * (ps[k] + ps[k + 1])};
}

Vec control_basis_value(const OptimalControlProblem& ocp, int i, double t) {
  if (!ocp.correction_basis.empty()) return ocp.correction_basis.at(i)(t);
  Vec b = Vec::Zero(ocp.m);
  b(i % ocp.m) = std::cos(std::numbers::pi * (i / ocp.m) * t / ocp.horizon);
  return b;
}

}  // namespace

Geometry parse_geometry(std::string_view key) {
  if (key == "stormer") return Geometry::Stormer;
  if (key == "midpoint") return Geometry::Midpoint;
  throw Error("unknown geometry '" + std::string(key) + "'; valid keys: stormer midpoint");
}

std::string geometry_key(Geometry g) { return g == Geometry::Stormer ? "stormer" : "midpoint"; }

void OptimalControlProblem::validate() const {
  if (n < 1 || m < 0) throw DimensionError("control problem needs n >= 1 and m >= 0");
  if (!f || !g) throw Error("control problem needs dynamics f and running cost g");
  if (steps < 0) throw Error("control problem needs steps >= 0");
  if (!(horizon > 0.0)) throw Error("control problem needs a positive horizon");
  if (boundary == BoundaryMode::HardEndpoints) {
    if (x_initial.size() != n || x_target.size() != n) throw DimensionError("boundary states must have dimension n");
  } else {
    if (!phi0 || !phi_n || !dphi0 || !dphi_n) throw Error("transversality mode needs phi0, phi_n and their Jacobians");
  }
}

ControlHamiltonian::ControlHamiltonian(const OptimalControlProblem& ocp) : ocp_(&ocp) {}

double ControlHamiltonian::value(const Vec& x, const Vec& p, const Vec& u) const {
  return ocp_->g(x, u) + p.dot(ocp_->f(x, u));
}

Mat ControlHamiltonian::fx(const Vec& x, const Vec& u) const {
  if (ocp_->f_x) return ocp_->f_x(x, u);
  return fd_jacobian([&](const Vec& w) { return ocp_->f(w, u); }, x, ocp_->n);
}

Mat ControlHamiltonian::fu(const Vec& x, const Vec& u) const {
  if (ocp_->f_u) return ocp_->f_u(x, u);
  if (ocp_->m == 0) return Mat(ocp_->n, 0);
  return fd_jacobian([&](const Vec& w) { return ocp_->f(x, w); }, u, ocp_->n);
}

Vec ControlHamiltonian::d1(const Vec& x, const Vec& p, const Vec& u) const {
  const Vec gx = ocp_->g_x ? ocp_->g_x(x, u) : fd_gradient([&](const Vec& w) { return ocp_->g(w, u); }, x);
  return gx + fx(x, u).transpose() * p;
}

Vec ControlHamiltonian::d2(const Vec& x, const Vec&, const Vec& u) const { return ocp_->f(x, u); }

Vec ControlHamiltonian::d3(const Vec& x, const Vec& p, const Vec& u) const {
  if (ocp_->m == 0) return Vec(0);
  const Vec gu = ocp_->g_u ? ocp_->g_u(x, u) : fd_gradient([&](const Vec& w) { return ocp_->g(x, w); }, u);
  return gu + fu(x, u).transpose() * p;
}

Mat ControlHamiltonian::d33(const Vec& x, const Vec& p, const Vec& u) const {
  const Mat j = fd_jacobian([&](const Vec& w) { return d3(x, p, w); }, u, ocp_->m);
  return 0.5 * (j + j.transpose());
}

Vec dmp_residual(const OptimalControlProblem& ocp, Geometry geometry, const std::vector<Vec>& xs,
                 const std::vector<Vec>& ps, const std::vector<Vec>& us, double tau, const Vec& lambda0,
                 const Vec& lambda_n) {
  const std::size_t steps = us.size();
  if (xs.size() != steps + 1 || ps.size() != steps + 1)
    throw DimensionError("dmp_residual: xs and ps need one more entry than us");
  if (steps == 0) return Vec(0);
  const int n = ocp.n, m = ocp.m;
  const ControlHamiltonian ham(ocp);
  const bool hard = ocp.boundary == BoundaryMode::HardEndpoints;
  Eigen::Index boundary_rows = 2 * n;
  Vec c0, cn;
  if (!hard) {
    c0 = ocp.phi0(xs.front());
    cn = ocp.phi_n(xs.back());
    boundary_rows += c0.size() + cn.size();
  }
  Vec r(static_cast<Eigen::Index>(steps) * (2 * n + m) + boundary_rows);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < steps; ++k) {
    const Node nd = node_of(geometry, xs, ps, k);
    r.segment(row, n) = xs[k + 1] - xs[k] - tau * ham.d2(nd.x, nd.p, us[k]);
    r.segment(row + n, n) = ps[k + 1] - ps[k] + tau * ham.d1(nd.x, nd.p, us[k]);
    if (m > 0) r.segment(row + 2 * n, m) = ham.d3(nd.x, nd.p, us[k]);
    row += 2 * n + m;
  }
  if (hard) {
    r.segment(row, n) = xs.front() - ocp.x_initial;
    r.segment(row + n, n) = xs.back() - ocp.x_target;
  } else {
    if (lambda0.size() != c0.size() || lambda_n.size() != cn.size())
      throw DimensionError("dmp_residual: multipliers must match the boundary constraints");
    r.segment(row, c0.size()) = c0;
    row += c0.size();
    r.segment(row, cn.size()) = cn;
    row += cn.size();
    // Stormer: p0 = -Dphi0^T l0, pN = DphiN^T lN; the midpoint pairing flips both signs.
    const double s = geometry == Geometry::Stormer ? 1.0 : -1.0;
    r.segment(row, n) = ps.front() + s * ocp.dphi0(xs.front()).transpose() * lambda0;
    r.segment(row + n, n) = ps.back() - s * ocp.dphi_n(xs.back()).transpose() * lambda_n;
  }
  return r;
}

Vec dmp_residual(const OptimalControlProblem& ocp, const DiscreteSolution& sol) {
  return dmp_residual(ocp, sol.geometry, sol.xs, sol.ps, sol.us, sol.tau, sol.lambda0, sol.lambda_n);
}

std::vector<Vec> stationarity_residuals(const OptimalControlProblem& ocp, const DiscreteSolution& sol) {
  const ControlHamiltonian ham(ocp);
  std::vector<Vec> out;
  out.reserve(sol.us.size());
  for (std::size_t k = 0; k < sol.us.size(); ++k) {
    const Node nd = node_of(sol.geometry, sol.xs, sol.ps, k);
    out.push_back(ham.d3(nd.x, nd.p, sol.us[k]));
  }
  return out;
}

Vec solve_stationary_control(const OptimalControlProblem& ocp, const Vec& x, const Vec& p) {
  if (ocp.m == 0) return Vec(0);
  if (ocp.stationary_control) return ocp.stationary_control(x, p);
  const ControlHamiltonian ham(ocp);
  Vec u = ocp.control_guess.size() == ocp.m ? ocp.control_guess : Vec(Vec::Zero(ocp.m));
  Vec r = ham.d3(x, p, u);
  double res = inf_norm(r);
  bool polished = false;
  for (int it = 0; it < 50; ++it) {
    if (res <= 1e-13) {
      if (polished || res == 0.0) return u;
      polished = true;
    }
    const Mat h = ham.d33(x, p, u);
    Eigen::FullPivLU<Mat> lu(h);
    if (!lu.isInvertible()) throw EliminationFailure("control elimination: D_uu H is rank deficient");
    u -= lu.solve(r);
    r = ham.d3(x, p, u);
    res = inf_norm(r);
    if (!std::isfinite(res)) break;
  }
  if (res <= 1e-13) return u;
  std::ostringstream os;
  os << "control elimination: Newton in u did not converge (residual " << res << ")";
  throw EliminationFailure(os.str());
}

HamiltonianSystem eliminate_control(const OptimalControlProblem& ocp, Geometry) {
  ocp.validate();
  if (ocp.reduced) return *ocp.reduced;
  const int n = ocp.n;
  const auto problem = std::make_shared<OptimalControlProblem>(ocp);
  return HamiltonianSystem(
      n,
      [problem, n](const Vec& z) {
        const Vec x = z.head(n), p = z.tail(n);
        const Vec u = solve_stationary_control(*problem, x, p);
        return ControlHamiltonian(*problem).value(x, p, u);
      },
      [problem, n](const Vec& z) {
        const Vec x = z.head(n), p = z.tail(n);
        const Vec u = solve_stationary_control(*problem, x, p);
        const ControlHamiltonian ham(*problem);
        Vec g(2 * n);
        // D_u H = 0 at u(x, p), so only the explicit partials survive.
        g.head(n) = ham.d1(x, p, u);
        g.tail(n) = ham.d2(x, p, u);
        return g;
      });
}

PhaseState dmhp_step(const HamiltonianSystem& hbar, Geometry geometry, const PhaseState& z, const StepperConfig& cfg) {
  if (geometry == Geometry::Stormer) return symplectic_euler_step(hbar, z, cfg);
  return midpoint_step(hbar, z, cfg);
}

Mat dmhp_tangent_map(const HamiltonianSystem& hbar, Geometry geometry, const PhaseState& from, const PhaseState& to,
                     double tau) {
  if (geometry == Geometry::Stormer) return symplectic_euler_tangent_map(hbar, from, to, tau);
  return midpoint_tangent_map(hbar, from, to, tau);
}

PhaseState dmp_step(const OptimalControlProblem& ocp, Geometry geometry, const PhaseState& z, double tau,
                    const StepperConfig& newton, Vec* control) {
  const int n = ocp.n, m = ocp.m;
  const ControlHamiltonian ham(ocp);
  auto residual = [&](const Vec& w) {
    const Vec x1 = w.head(n), p1 = w.segment(n, n), u = w.tail(m);
    Vec xn, pn;
    if (geometry == Geometry::Stormer) {
      xn = z.q;
      pn = p1;
    } else {
      xn = 0.5 * (z.q + x1);
      pn = 0.5 * (z.p + p1);
    }
    Vec r(2 * n + m);
    r.head(n) = x1 - z.q - tau * ham.d2(xn, pn, u);
    r.segment(n, n) = p1 - z.p + tau * ham.d1(xn, pn, u);
    if (m > 0) r.tail(m) = ham.d3(xn, pn, u);
    return r;
  };
  Vec w(2 * n + m);
  const Vec u0 = m > 0 ? solve_stationary_control(ocp, z.q, z.p) : Vec(0);
  w.head(n) = z.q + tau * ham.d2(z.q, z.p, u0);
  w.segment(n, n) = z.p;
  if (m > 0) w.tail(m) = u0;
  Vec r = residual(w);
  double res = inf_norm(r);
  int iters = 0;
  bool polished = false;
  for (;;) {
    if (res <= newton.newton_tol) {
      if (polished || res == 0.0) break;
      polished = true;
    }
    if (iters >= newton.newton_max_iter) {
      if (res <= newton.newton_tol) break;
      throw StepFailure("discrete maximum principle step did not converge", res, iters);
    }
    const Mat jac = fd_jacobian(residual, w, 2 * n + m);
    w -= jac.partialPivLu().solve(r);
    ++iters;
    r = residual(w);
    res = inf_norm(r);
    if (!std::isfinite(res)) throw StepFailure("discrete maximum principle step diverged", res, iters);
  }
  if (control) *control = w.tail(m);
  return {w.head(n), w.segment(n, n)};
}

namespace {

DiscreteSolution assemble_from_states(const OptimalControlProblem& ocp, Geometry geometry, double tau,
                                      std::vector<Vec> xs, std::vector<Vec> ps) {
  DiscreteSolution sol;
  sol.geometry = geometry;
  sol.tau = tau;
  sol.xs = std::move(xs);
  sol.ps = std::move(ps);
  const std::size_t steps = sol.xs.size() - 1;
  sol.us.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const Node nd = node_of(geometry, sol.xs, sol.ps, k);
    sol.us.push_back(solve_stationary_control(ocp, nd.x, nd.p));
  }
  return sol;
}

}  // namespace

ShootResult shoot(const OptimalControlProblem& ocp, Geometry geometry, const Vec& p0_guess, const ShootConfig& cfg) {
  ocp.validate();
  if (ocp.boundary != BoundaryMode::HardEndpoints) throw Error("shooting needs hard endpoint data");
  if (p0_guess.size() != ocp.n) throw DimensionError("p0 guess must have dimension n");
  if (cfg.segments < 1 || cfg.segments > std::max(1, ocp.steps)) throw Error("segment count must lie in [1, N]");
  const int n = ocp.n;
  const int steps = ocp.steps;
  const int segs = cfg.segments;
  const double tau = ocp.tau();
  StepperConfig step_cfg = cfg.newton;
  step_cfg.tau = tau;
  const HamiltonianSystem hbar = eliminate_control(ocp, geometry);

  std::vector<int> bounds(segs + 1);
  for (int j = 0; j <= segs; ++j) bounds[j] = static_cast<int>(std::llround(static_cast<double>(j) * steps / segs));

  // Unknowns: p0, then (x_j, p_j) at each interior segment start.
  const Eigen::Index dim = n + 2 * n * (segs - 1);
  Vec unknowns(dim);
  unknowns.head(n) = p0_guess;

  struct Segment {
    std::vector<PhaseState> states;
    Mat tangent;
  };
  auto start_of = [&](const Vec& w, int j) {
    if (j == 0) return PhaseState(ocp.x_initial, w.head(n));
    const Eigen::Index off = n + 2 * n * (j - 1);
    return PhaseState(w.segment(off, n), w.segment(off + n, n));
  };
  auto run_segment = [&](const PhaseState& start, int j) {
    Segment s;
    s.states.push_back(start);
    s.tangent = Mat::Identity(2 * n, 2 * n);
    for (int k = bounds[j]; k < bounds[j + 1]; ++k) {
      PhaseState next;
      try {
        next = dmhp_step(hbar, geometry, s.states.back(), step_cfg);
      } catch (StepFailure& f) {
        f.set_step_index(k);
        throw;
      }
      s.tangent = dmhp_tangent_map(hbar, geometry, s.states.back(), next, tau) * s.tangent;
      s.states.push_back(std::move(next));
    }
    return s;
  };

  // Interior starts from one pass of the guess so the first iterate is continuous.
  if (segs > 1) {
    PhaseState z(ocp.x_initial, p0_guess);
    for (int j = 0; j + 1 < segs; ++j) {
      z = run_segment(z, j).states.back();
      const Eigen::Index off = n + 2 * n * j;
      unknowns.segment(off, n) = z.q;
      unknowns.segment(off + n, n) = z.p;
    }
  }

  auto evaluate = [&](const Vec& w, std::vector<Segment>& segments_out, Vec& r, Mat* jac) {
    segments_out.clear();
    r.resize(dim);
    if (jac) jac->setZero(dim, dim);
    for (int j = 0; j < segs; ++j) {
      segments_out.push_back(run_segment(start_of(w, j), j));
      const Segment& s = segments_out.back();
      const Eigen::Index row = 2 * n * j;
      const bool last = j + 1 == segs;
      if (!last) {
        const PhaseState next_start = start_of(w, j + 1);
        r.segment(row, n) = s.states.back().q - next_start.q;
        r.segment(row + n, n) = s.states.back().p - next_start.p;
      } else {
        r.segment(row, n) = s.states.back().q - ocp.x_target;
      }
      if (jac) {
        const Eigen::Index rows = last ? n : 2 * n;
        if (j == 0) {
          jac->block(row, 0, rows, n) = s.tangent.block(0, n, rows, n);
        } else {
          const Eigen::Index col = n + 2 * n * (j - 1);
          jac->block(row, col, rows, 2 * n) = s.tangent.topRows(rows);
        }
        if (!last) {
          const Eigen::Index col = n + 2 * n * j;
          jac->block(row, col, 2 * n, 2 * n) -= Mat::Identity(2 * n, 2 * n);
        }
      }
    }
  };

  ShootReport report;
  std::vector<Segment> segments;
  Vec r;
  Mat jac;
  evaluate(unknowns, segments, r, &jac);
  report.residual = inf_norm(r);
  bool polished = false;
  while (report.residual > cfg.shoot_tol || !polished) {
    if (report.residual <= cfg.shoot_tol) polished = true;
    if (report.residual == 0.0) break;
    if (report.iterations >= cfg.max_iter) {
      if (report.residual <= cfg.shoot_tol) break;
      std::ostringstream os;
      os << "shooting did not converge after " << report.iterations << " iterations (residual " << report.residual
         << ")";
      throw ShootingFailure(os.str(), report, false);
    }
    Eigen::FullPivLU<Mat> lu(jac);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
      if (polished) break;
      throw ShootingFailure("shooting sensitivity is singular (conjugate point or degenerate guess)", report, true);
    }
    const Vec trial = unknowns - lu.solve(r);
    std::vector<Segment> trial_segments;
    Vec trial_r;
    Mat trial_jac;
    evaluate(trial, trial_segments, trial_r, &trial_jac);
    const double trial_res = inf_norm(trial_r);
    if (polished && !(trial_res < report.residual)) break;
    ++report.iterations;
    unknowns = trial;
    segments = std::move(trial_segments);
    r = std::move(trial_r);
    jac = std::move(trial_jac);
    report.residual = trial_res;
    if (!std::isfinite(report.residual)) throw ShootingFailure("shooting diverged", report, false);
  }
  report.converged = true;

  std::vector<Vec> xs, ps;
  xs.reserve(steps + 1);
  ps.reserve(steps + 1);
  for (int j = 0; j < segs; ++j) {
    const auto& st = segments[j].states;
    for (std::size_t i = 0; i + (j + 1 < segs ? 1 : 0) < st.size(); ++i) {
      xs.push_back(st[i].q);
      ps.push_back(st[i].p);
    }
  }
  ShootResult out;
  out.solution = assemble_from_states(ocp, geometry, tau, std::move(xs), std::move(ps));
  out.p0 = unknowns.head(n);
  out.report = report;
  return out;
}

namespace {

struct Packing {
  int n, m, steps;
  Eigen::Index r0 = 0, rn = 0;
  Eigen::Index size() const { return 2 * static_cast<Eigen::Index>(steps + 1) * n + steps * m + r0 + rn; }
  Eigen::Index x_off(int k) const { return static_cast<Eigen::Index>(k) * n; }
  Eigen::Index p_off(int k) const { return static_cast<Eigen::Index>(steps + 1) * n + k * n; }
  Eigen::Index u_off(int k) const { return 2 * static_cast<Eigen::Index>(steps + 1) * n + k * m; }
  Eigen::Index l0_off() const { return 2 * static_cast<Eigen::Index>(steps + 1) * n + steps * m; }
  Eigen::Index ln_off() const { return l0_off() + r0; }

  Vec pack(const DiscreteSolution& s) const {
    Vec w(size());
    for (int k = 0; k <= steps; ++k) {
      w.segment(x_off(k), n) = s.xs[k];
      w.segment(p_off(k), n) = s.ps[k];
    }
    for (int k = 0; k < steps; ++k) w.segment(u_off(k), m) = s.us[k];
    if (r0) w.segment(l0_off(), r0) = s.lambda0;
    if (rn) w.segment(ln_off(), rn) = s.lambda_n;
    return w;
  }
  void unpack(const Vec& w, DiscreteSolution& s) const {
    s.xs.resize(steps + 1);
    s.ps.resize(steps + 1);
    s.us.resize(steps);
    for (int k = 0; k <= steps; ++k) {
      s.xs[k] = w.segment(x_off(k), n);
      s.ps[k] = w.segment(p_off(k), n);
    }
    for (int k = 0; k < steps; ++k) s.us[k] = w.segment(u_off(k), m);
    s.lambda0 = w.segment(l0_off(), r0);
    s.lambda_n = w.segment(ln_off(), rn);
  }
};

}  // namespace

DiscreteSolution solve_dmp(const OptimalControlProblem& ocp, Geometry geometry, const DiscreteSolution* guess,
                           const DmpSolveConfig& cfg) {
  ocp.validate();
  const int n = ocp.n, m = ocp.m, steps = ocp.steps;
  const double tau = ocp.tau();
  DiscreteSolution sol;
  sol.geometry = geometry;
  sol.tau = tau;
  if (guess) {
    sol = *guess;
    sol.geometry = geometry;
    sol.tau = tau;
  } else {
    const Vec xa = ocp.boundary == BoundaryMode::HardEndpoints ? ocp.x_initial : Vec(Vec::Zero(n));
    const Vec xb = ocp.boundary == BoundaryMode::HardEndpoints ? ocp.x_target : Vec(Vec::Zero(n));
    const Vec p_guess = ocp.default_p0_guess.size() == n ? ocp.default_p0_guess : Vec(Vec::Zero(n));
    for (int k = 0; k <= steps; ++k) {
      const double s = steps == 0 ? 0.0 : static_cast<double>(k) / steps;
      sol.xs.push_back((1.0 - s) * xa + s * xb);
      sol.ps.push_back(p_guess);
    }
    for (int k = 0; k < steps; ++k) {
      const Node nd = node_of(geometry, sol.xs, sol.ps, k);
      sol.us.push_back(m > 0 ? solve_stationary_control(ocp, nd.x, nd.p) : Vec(0));
    }
    if (ocp.boundary == BoundaryMode::Transversality) {
      sol.lambda0 = Vec::Zero(ocp.phi0(sol.xs.front()).size());
      sol.lambda_n = Vec::Zero(ocp.phi_n(sol.xs.back()).size());
    }
  }
  if (steps == 0) return sol;

  Packing pk{n, m, steps, sol.lambda0.size(), sol.lambda_n.size()};
  Vec w = pk.pack(sol);
  auto residual = [&](const Vec& v) {
    DiscreteSolution s;
    pk.unpack(v, s);
    return dmp_residual(ocp, geometry, s.xs, s.ps, s.us, tau, s.lambda0, s.lambda_n);
  };
  Vec r = residual(w);
  if (r.size() != w.size()) throw DimensionError("discrete conditions are not square for these boundary data");
  double res = inf_norm(r);
  int iters = 0;
  bool polished = false;
  for (;;) {
    if (res <= cfg.tol) {
      if (polished || res == 0.0) break;
      polished = true;
    }
    if (iters >= cfg.max_iter) {
      if (res <= cfg.tol) break;
      std::ostringstream os;
      os << "discrete maximum principle solve did not converge (residual " << res << ")";
      throw StepFailure(os.str(), res, iters);
    }
    const Mat jac = fd_jacobian(residual, w, w.size());
    Eigen::PartialPivLU<Mat> lu(jac);
    const Vec trial = w - lu.solve(r);
    const Vec trial_r = residual(trial);
    const double trial_res = inf_norm(trial_r);
    if (polished && !(trial_res < res)) break;
    w = trial;
    r = trial_r;
    res = trial_res;
    ++iters;
    if (!std::isfinite(res)) throw StepFailure("discrete maximum principle solve diverged", res, iters);
  }
  pk.unpack(w, sol);
  return sol;
}

double cost_of(const OptimalControlProblem& ocp, Geometry geometry, const std::vector<Vec>& xs,
               const std::vector<Vec>& us, double tau) {
  if (xs.size() != us.size() + 1) throw DimensionError("cost_of: xs needs one more entry than us");
  double j = 0.0;
  for (std::size_t k = 0; k < us.size(); ++k) {
    const Vec node = geometry == Geometry::Stormer ? xs[k] : Vec(0.5 * (xs[k] + xs[k + 1]));
    j += ocp.g(node, us[k]) * tau;
  }
  return j;
}

std::vector<Vec> simulate(const OptimalControlProblem& ocp, Geometry geometry, const std::vector<Vec>& us, double tau,
                          const StepperConfig& newton) {
  const ControlHamiltonian ham(ocp);
  std::vector<Vec> xs;
  xs.reserve(us.size() + 1);
  xs.push_back(ocp.x_initial);
  const int n = ocp.n;
  for (std::size_t k = 0; k < us.size(); ++k) {
    const Vec& x0 = xs.back();
    if (geometry == Geometry::Stormer) {
      xs.push_back(x0 + tau * ocp.f(x0, us[k]));
      continue;
    }
    Vec x1 = x0 + tau * ocp.f(x0, us[k]);
    Vec r = x1 - x0 - tau * ocp.f(0.5 * (x0 + x1), us[k]);
    double res = inf_norm(r);
    int it = 0;
    bool polished = false;
    for (;;) {
      if (res <= newton.newton_tol) {
        if (polished || res == 0.0) break;
        polished = true;
      }
      if (it >= newton.newton_max_iter) {
        if (res <= newton.newton_tol) break;
        StepFailure f("controlled midpoint state update did not converge", res, it);
        f.set_step_index(static_cast<long>(k));
        throw f;
      }
      const Mat jac = Mat::Identity(n, n) - 0.5 * tau * ham.fx(0.5 * (x0 + x1), us[k]);
      x1 -= jac.partialPivLu().solve(r);
      r = x1 - x0 - tau * ocp.f(0.5 * (x0 + x1), us[k]);
      res = inf_norm(r);
      ++it;
    }
    xs.push_back(std::move(x1));
  }
  return xs;
}

std::pair<Vec, Vec> recover_multipliers(const OptimalControlProblem& ocp, const DiscreteSolution& sol) {
  if (ocp.boundary != BoundaryMode::Transversality) throw Error("multipliers exist only for constraint boundaries");
  const double s = sol.geometry == Geometry::Stormer ? 1.0 : -1.0;
  const Mat d0 = ocp.dphi0(sol.xs.front()).transpose();
  const Mat dn = ocp.dphi_n(sol.xs.back()).transpose();
  const Vec l0 = d0.colPivHouseholderQr().solve(Vec(-s * sol.ps.front()));
  const Vec ln = dn.colPivHouseholderQr().solve(Vec(s * sol.ps.back()));
  return {l0, ln};
}

double DiagramReport::discrepancy() const { return std::max({max_state_gap, max_costate_gap, max_control_gap}); }

DiagramReport verify_commutative_diagram(const OptimalControlProblem& ocp, Geometry geometry, const ShootConfig& cfg) {
  const Vec guess = ocp.default_p0_guess.size() == ocp.n ? ocp.default_p0_guess : Vec(Vec::Zero(ocp.n));
  const ShootResult a = shoot(ocp, geometry, guess, cfg);
  DmpSolveConfig dcfg;
  dcfg.newton = cfg.newton;
  const DiscreteSolution b = solve_dmp(ocp, geometry, nullptr, dcfg);
  DiagramReport rep;
  for (std::size_t k = 0; k < a.solution.xs.size(); ++k) {
    rep.max_state_gap = std::max(rep.max_state_gap, inf_norm(a.solution.xs[k] - b.xs[k]));
    rep.max_costate_gap = std::max(rep.max_costate_gap, inf_norm(a.solution.ps[k] - b.ps[k]));
  }
  for (std::size_t k = 0; k < a.solution.us.size(); ++k)
    rep.max_control_gap = std::max(rep.max_control_gap, inf_norm(a.solution.us[k] - b.us[k]));
  return rep;
}

namespace {

double perturbed_cost(const OptimalControlProblem& ocp, const DiscreteSolution& sol, int index, double scale,
                      std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t steps = sol.us.size();
  double umax = 1.0;
  for (const auto& u : sol.us) umax = std::max(umax, inf_norm(u));
  std::vector<Vec> base = sol.us;
  for (auto& u : base)
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) += scale * umax * normal(rng);

  const int n = ocp.n;
  std::vector<std::vector<Vec>> basis(n);
  for (int i = 0; i < n; ++i)
    for (std::size_t k = 0; k < steps; ++k) basis[i].push_back(control_basis_value(ocp, i, (k + 0.5) * sol.tau));

  auto controls = [&](const Vec& c) {
    std::vector<Vec> us = base;
    for (std::size_t k = 0; k < steps; ++k)
      for (int i = 0; i < n; ++i) us[k] += c(i) * basis[i][k];
    return us;
  };
  auto miss = [&](const Vec& c) { return Vec(simulate(ocp, sol.geometry, controls(c), sol.tau).back() - ocp.x_target); };

  Vec c = Vec::Zero(n);
  Vec r = miss(c);
  for (int it = 0; it < 30 && inf_norm(r) > 1e-12; ++it) {
    const Mat jac = fd_jacobian(miss, c, n);
    Eigen::FullPivLU<Mat> lu(jac);
    if (!lu.isInvertible()) return std::numeric_limits<double>::quiet_NaN();
    c -= lu.solve(r);
    r = miss(c);
  }
  if (!(inf_norm(r) <= 1e-12)) return std::numeric_limits<double>::quiet_NaN();
  const auto us = controls(c);
  return cost_of(ocp, sol.geometry, simulate(ocp, sol.geometry, us, sol.tau), us, sol.tau);
}

PerturbationReport summarise(const OptimalControlProblem& ocp, const DiscreteSolution& sol,
                             std::vector<double> costs) {
  PerturbationReport rep;
  rep.base_cost = cost_of(ocp, sol.geometry, sol.xs, sol.us, sol.tau);
  rep.samples = static_cast<int>(costs.size());
  rep.min_cost = std::numeric_limits<double>::infinity();
  for (double c : costs) {
    if (!std::isfinite(c)) continue;
    ++rep.feasible;
    if (c >= rep.base_cost) ++rep.not_worse;
    rep.min_cost = std::min(rep.min_cost, c);
  }
  rep.costs = std::move(costs);
  return rep;
}

}  // namespace

PerturbationReport perturbation_oracle_serial(const OptimalControlProblem& ocp, const DiscreteSolution& sol,
                                              int samples, double scale, std::uint64_t seed) {
  std::vector<double> costs(samples);
  for (int i = 0; i < samples; ++i) costs[i] = perturbed_cost(ocp, sol, i, scale, seed);
  return summarise(ocp, sol, std::move(costs));
}

PerturbationReport perturbation_oracle(const OptimalControlProblem& ocp, const DiscreteSolution& sol, int samples,
                                       double scale, std::uint64_t seed) {
  std::vector<double> costs(samples);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < samples; ++i) {
    try {
      costs[i] = perturbed_cost(ocp, sol, i, scale, seed);
    } catch (...) {
#pragma omp critical(dvi_perturbation_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return summarise(ocp, sol, std::move(costs));
}

OptimalControlProblem make_integrator_plant(const Vec& x_initial, const Vec& x_target, double horizon, int steps) {
  const int n = static_cast<int>(x_initial.size());
  OptimalControlProblem ocp;
  ocp.n = n;
  ocp.m = n;
  ocp.horizon = horizon;
  ocp.steps = steps;
  ocp.f = [](const Vec&, const Vec& u) { return u; };
  ocp.g = [](const Vec&, const Vec& u) { return 0.5 * u.squaredNorm(); };
  ocp.f_x = [n](const Vec&, const Vec&) { return Mat(Mat::Zero(n, n)); };
  ocp.f_u = [n](const Vec&, const Vec&) { return Mat(Mat::Identity(n, n)); };
  ocp.g_x = [n](const Vec&, const Vec&) { return Vec(Vec::Zero(n)); };
  ocp.g_u = [](const Vec&, const Vec& u) { return u; };
  ocp.x_initial = x_initial;
  ocp.x_target = x_target;
  ocp.stationary_control = [](const Vec&, const Vec& p) { return Vec(-p); };
  ocp.reduced = HamiltonianSystem(
      n, [n](const Vec& z) { return -0.5 * z.tail(n).squaredNorm(); },
      [n](const Vec& z) {
        Vec g = Vec::Zero(2 * n);
        g.tail(n) = -z.tail(n);
        return g;
      },
      [n](const Vec&) {
        Mat h = Mat::Zero(2 * n, 2 * n);
        h.bottomRightCorner(n, n) = -Mat::Identity(n, n);
        return h;
      });
  ocp.default_p0_guess = Vec::Zero(n);
  return ocp;
}

OptimalControlProblem make_heisenberg_problem(double a, double horizon, int steps, bool z_target) {
  OptimalControlProblem ocp;
  ocp.n = 3;
  ocp.m = 2;
  ocp.horizon = horizon;
  ocp.steps = steps;
  ocp.f = [](const Vec& x, const Vec& u) {
    Vec d(3);
    d << u(0), u(1), u(0) * x(1) - u(1) * x(0);
    return d;
  };
  ocp.g = [](const Vec&, const Vec& u) { return 0.5 * u.squaredNorm(); };
  ocp.f_x = [](const Vec&, const Vec& u) {
    Mat j = Mat::Zero(3, 3);
    j(2, 0) = -u(1);
    j(2, 1) = u(0);
    return j;
  };
  ocp.f_u = [](const Vec& x, const Vec&) {
    Mat j = Mat::Zero(3, 2);
    j(0, 0) = 1.0;
    j(1, 1) = 1.0;
    j(2, 0) = x(1);
    j(2, 1) = -x(0);
    return j;
  };
  ocp.g_x = [](const Vec&, const Vec&) { return Vec(Vec::Zero(3)); };
  ocp.g_u = [](const Vec&, const Vec& u) { return u; };
  ocp.x_initial = Vec::Zero(3);
  ocp.x_target = Vec::Zero(3);
  ocp.x_target(z_target ? 2 : 0) = a;
  ocp.stationary_control = [](const Vec& x, const Vec& p) { return Vec(heisenberg_stationary_control(x, p)); };
  ocp.reduced = make_heisenberg_reduced();
  ocp.default_p0_guess = Vec(3);
  if (z_target) {
    // Single circular loop with |z| = 2 * area = a: cost pi a, speed sqrt(2 pi a) / T.
    // Larger |pz| converges to multi-loop extremals.
    const double w = std::numbers::pi / horizon;
    ocp.default_p0_guess << 0.0, -std::sqrt(2.0 * std::numbers::pi * std::abs(a)) / horizon, -w;
  } else {
    ocp.default_p0_guess << -0.5 * a / horizon, 0.1, 0.1;
  }
  const double t_end = horizon;
  ocp.correction_basis = {
      [](double) { return Vec(Eigen::Vector2d(1.0, 0.0)); },
      [](double) { return Vec(Eigen::Vector2d(0.0, 1.0)); },
      [t_end](double t) { return Vec(Eigen::Vector2d(0.0, std::cos(std::numbers::pi * t / t_end))); },
  };
  return ocp;
}

}  // namespace dvi

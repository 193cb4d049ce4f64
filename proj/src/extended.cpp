#include "dvi/extended.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace dvi {

namespace {

const SeparableSystem& separable_of(const CatalogSystem& sys) {
  if (!sys.separable) throw Error("extended Stormer needs a separable system; '" + sys.key + "' is not");
  return *sys.separable;
}

double inf_norm(const Vec& v) { return v.cwiseAbs().maxCoeff(); }

Mat apply_j(const Mat& a) {
  const auto n = a.rows() / 2;
  Mat out(a.rows(), a.cols());
  out.topRows(n) = a.bottomRows(n);
  out.bottomRows(n) = -a.topRows(n);
  return out;
}

struct MidpointProbe {
  PhaseState next;
  double mismatch;  // H(midpoint) - E
};

std::optional<MidpointProbe> probe_midpoint(const HamiltonianSystem& sys, const PhaseState& s, double h, double energy,
                                            const StepperConfig& cfg, int& evals) {
  StepperConfig c = cfg;
  c.tau = h;
  ++evals;
  try {
    PhaseState next = midpoint_step(sys, s, c);
    const double mismatch = sys.energy(0.5 * (s.packed() + next.packed())) - energy;
    if (!std::isfinite(mismatch)) return std::nullopt;
    return MidpointProbe{std::move(next), mismatch};
  } catch (const StepFailure&) {
    return std::nullopt;
  } catch (const SingularityError&) {
    return std::nullopt;
  }
}

}  // namespace

ExtendedPhaseState extended_initial_state(ExtendedScheme scheme, const CatalogSystem& sys, const PhaseState& z0,
                                          const StepperConfig& cfg) {
  cfg.validate();
  ExtendedPhaseState s;
  s.q = z0.q;
  s.p = z0.p;
  s.t = 0.0;
  if (scheme == ExtendedScheme::Stormer) {
    const auto& sep = separable_of(sys);
    const Vec p1 = z0.p - cfg.tau * sep.potential_gradient(z0.q);
    s.e = -sep.energy(z0.q, p1);
  } else {
    const PhaseState z1 = midpoint_step(sys.hamiltonian, z0, cfg);
    s.e = -sys.hamiltonian.energy(0.5 * (z0.packed() + z1.packed()));
  }
  return s;
}

ExtendedStepRecord extended_stormer_step(const SeparableSystem& sys, const ExtendedPhaseState& s,
                                         const StepperConfig& cfg) {
  cfg.validate();
  if (s.q.size() != sys.dof() || s.p.size() != sys.dof()) throw DimensionError("extended_stormer_step: dimension mismatch");
  const double tau = cfg.tau;
  const Vec g = sys.potential_gradient(s.q);
  const Vec w = sys.apply_inverse_mass(g);
  // H(q, p - h g) = -e  <=>  a h^2 - 2 b h + c = 0.
  const double a = g.dot(w);
  const double b = s.p.dot(w);
  const double c = 2.0 * sys.kinetic(s.p) + 2.0 * sys.potential(s.q) + 2.0 * s.e;

  double h = tau;
  int iters = 0;
  if (a > 0.0) {
    const double disc = b * b - a * c;
    if (disc < 0.0) {
      std::ostringstream os;
      os << "extended Stormer: no real step size meets the energy constraint (discriminant " << disc << ")";
      throw StepFailure(os.str(), std::abs(c), 0);
    }
    const double sq = std::sqrt(disc);
    // Cancellation-free pair of roots.
    const double big = b >= 0.0 ? b + sq : b - sq;
    const double r1 = big / a;
    const double r2 = big != 0.0 ? c / big : r1;
    double best = std::numeric_limits<double>::quiet_NaN();
    for (double r : {r1, r2}) {
      if (r > 0.0 && r <= 4.0 * tau && (std::isnan(best) || std::abs(r - tau) < std::abs(best - tau))) best = r;
    }
    if (std::isnan(best)) {
      std::ostringstream os;
      os << "extended Stormer: no root in (0, 4 tau]; roots " << r1 << ", " << r2;
      throw StepFailure(os.str(), std::abs(c), 0);
    }
    h = best;
    for (int k = 0; k < 2; ++k) {
      const double f = (a * h - 2.0 * b) * h + c;
      const double df = 2.0 * (a * h - b);
      if (df == 0.0) break;
      h -= f / df;
      ++iters;
    }
  }

  ExtendedStepRecord rec;
  rec.state.p = s.p - h * g;
  rec.state.q = s.q + h * sys.apply_inverse_mass(rec.state.p);
  rec.state.t = s.t + h;
  rec.state.e = s.e;
  rec.h_k = h;
  rec.root_iters = iters;
  return rec;
}

ExtendedStepRecord extended_midpoint_step(const HamiltonianSystem& sys, const ExtendedPhaseState& s,
                                          const StepperConfig& cfg) {
  cfg.validate();
  if (s.q.size() != sys.dof() || s.p.size() != sys.dof()) throw DimensionError("extended_midpoint_step: dimension mismatch");
  const double tau = cfg.tau;
  const double energy = -s.e;
  const PhaseState z0s = s.phase();
  int evals = 0;

  auto at_tau = probe_midpoint(sys, z0s, tau, energy, cfg, evals);
  double h = tau;
  Vec z1;
  if (at_tau && std::abs(at_tau->mismatch) <= cfg.newton_tol) {
    z1 = at_tau->next.packed();
  } else {
    // Walk outward from tau for the nearest sign change in (0, 4 tau].
    const double dh = tau / 16.0;
    std::optional<MidpointProbe> up_prev = at_tau, dn_prev = at_tau;
    double up_h = tau, dn_h = tau;
    bool up_open = at_tau.has_value(), dn_open = at_tau.has_value();
    double lo = 0.0, hi = 0.0, f_lo = 0.0;
    bool bracketed = false;
    for (int j = 1; !bracketed && (up_open || dn_open); ++j) {
      if (up_open) {
        const double hn = tau + j * dh;
        if (hn > 4.0 * tau * (1.0 + 1e-15)) {
          up_open = false;
        } else {
          auto pr = probe_midpoint(sys, z0s, hn, energy, cfg, evals);
          if (!pr) {
            up_open = false;
          } else if ((pr->mismatch > 0.0) != (up_prev->mismatch > 0.0)) {
            lo = up_h, f_lo = up_prev->mismatch, hi = hn;
            bracketed = true;
          } else {
            up_prev = pr;
            up_h = hn;
          }
        }
      }
      if (!bracketed && dn_open) {
        const double hn = tau - j * dh;
        if (hn <= 0.0) {
          dn_open = false;
        } else {
          auto pr = probe_midpoint(sys, z0s, hn, energy, cfg, evals);
          if (!pr) {
            dn_open = false;
          } else if ((pr->mismatch > 0.0) != (dn_prev->mismatch > 0.0)) {
            lo = hn, f_lo = pr->mismatch, hi = dn_h;
            bracketed = true;
          } else {
            dn_prev = pr;
            dn_h = hn;
          }
        }
      }
    }
    if (!bracketed) {
      std::ostringstream os;
      os << "extended midpoint: no step size in (0, 4 tau] meets the energy constraint";
      throw StepFailure(os.str(), at_tau ? std::abs(at_tau->mismatch) : std::numeric_limits<double>::infinity(),
                        evals);
    }
    std::optional<MidpointProbe> mid;
    while (hi - lo > 1e-10 * tau) {
      const double hm = 0.5 * (lo + hi);
      mid = probe_midpoint(sys, z0s, hm, energy, cfg, evals);
      if (!mid) throw StepFailure("extended midpoint: inner solve failed during bisection", 0.0, evals);
      if (std::abs(mid->mismatch) <= cfg.newton_tol) {
        lo = hi = hm;
        break;
      }
      if ((mid->mismatch > 0.0) == (f_lo > 0.0)) {
        lo = hm;
        f_lo = mid->mismatch;
      } else {
        hi = hm;
      }
    }
    h = 0.5 * (lo + hi);
    auto fin = probe_midpoint(sys, z0s, h, energy, cfg, evals);
    if (!fin) throw StepFailure("extended midpoint: inner solve failed at the bracketed step", 0.0, evals);
    z1 = fin->next.packed();
  }

  // Coupled Newton on (z1, h) for the midpoint equations and the energy relation.
  const Vec z0 = z0s.packed();
  const int m = sys.phase_dim();
  int iters = 0;
  bool polished = false;
  for (;;) {
    const Vec mid = 0.5 * (z0 + z1);
    const Vec g = sys.gradient(mid);
    Vec jg(m);
    jg.head(m / 2) = g.tail(m / 2);
    jg.tail(m / 2) = -g.head(m / 2);
    const Vec r1 = z1 - z0 - h * jg;
    const double r2 = sys.energy(mid) - energy;
    const double res = std::max(inf_norm(r1), std::abs(r2));
    if (res <= cfg.newton_tol) {
      if (polished || res == 0.0) break;
      polished = true;
    }
    if (iters >= cfg.newton_max_iter) {
      if (res <= cfg.newton_tol) break;
      throw StepFailure("extended midpoint Newton did not converge", res, evals + iters);
    }
    const Mat s_mid = sys.hessian(mid);
    const Mat a = Mat::Identity(m, m) - 0.5 * h * apply_j(s_mid);
    const auto lu = a.partialPivLu();
    const Vec ainv_r1 = lu.solve(r1);
    const Vec ainv_u = lu.solve(-jg);
    const double schur = 0.5 * g.dot(ainv_u);
    const double scale = h * g.squaredNorm() * std::max(1.0, s_mid.cwiseAbs().rowwise().sum().maxCoeff());
    if (!(std::abs(schur) > 1e-10 * scale)) {
      if (polished) break;
      throw SingularStepJacobian("extended midpoint: singular energy-step Jacobian", res, evals + iters);
    }
    const double dh = (r2 - 0.5 * g.dot(ainv_r1)) / schur;
    const Vec dz = -ainv_r1 - ainv_u * dh;
    z1 += dz;
    h += dh;
    ++iters;
    if (!std::isfinite(h) || !z1.allFinite()) throw StepFailure("extended midpoint Newton diverged", res, evals + iters);
  }
  if (!(h > 0.0)) throw StepFailure("extended midpoint: nonpositive step size", h, evals + iters);

  ExtendedStepRecord rec;
  const PhaseState next = PhaseState::unpack(z1);
  rec.state.q = next.q;
  rec.state.p = next.p;
  rec.state.t = s.t + h;
  rec.state.e = s.e;
  rec.h_k = h;
  rec.root_iters = evals + iters;
  return rec;
}

ExtendedStepRecord extended_step(ExtendedScheme scheme, const CatalogSystem& sys, const ExtendedPhaseState& s,
                                 const StepperConfig& cfg) {
  if (scheme == ExtendedScheme::Stormer) return extended_stormer_step(separable_of(sys), s, cfg);
  return extended_midpoint_step(sys.hamiltonian, s, cfg);
}

double extended_step_energy(ExtendedScheme scheme, const CatalogSystem& sys, const ExtendedPhaseState& a,
                            const ExtendedPhaseState& b) {
  if (scheme == ExtendedScheme::Stormer) return separable_of(sys).energy(a.q, b.p);
  return sys.hamiltonian.energy(0.5 * (a.phase().packed() + b.phase().packed()));
}

StepMap extended_step_map(ExtendedScheme scheme, const CatalogSystem& sys, const StepperConfig& cfg, double e) {
  return [scheme, sys, cfg, e](const PhaseState& z) {
    ExtendedPhaseState s;
    s.q = z.q;
    s.p = z.p;
    s.e = e;
    return extended_step(scheme, sys, s, cfg).state.phase();
  };
}

std::function<Vec(const Vec&)> extended_packed_map(ExtendedScheme scheme, const CatalogSystem& sys,
                                                   const StepperConfig& cfg) {
  return [scheme, sys, cfg](const Vec& w) {
    return extended_step(scheme, sys, ExtendedPhaseState::unpack(w), cfg).state.packed();
  };
}

Mat extended_tangent_map(ExtendedScheme scheme, const CatalogSystem& sys, const ExtendedPhaseState& from,
                         const ExtendedStepRecord& step) {
  const int n = from.dim();
  const double h = step.h_k;
  // Derivatives of (q+, h, p+) with respect to (q, p, e).
  Mat dq(n, 2 * n + 1), dp(n, 2 * n + 1);
  Eigen::RowVectorXd dh = Eigen::RowVectorXd::Zero(2 * n + 1);
  if (scheme == ExtendedScheme::Stormer) {
    const auto& sep = separable_of(sys);
    const Vec g = sep.potential_gradient(from.q);
    const Mat k = sep.potential_hessian(from.q);
    const Mat& minv = sep.inverse_mass();
    const Vec v = minv * step.state.p;
    if (g.dot(minv * g) > 0.0) {
      const double den = v.dot(g);
      if (den == 0.0) throw SingularStepJacobian("extended Stormer: step size is stationary in the constraint", 0.0, 0);
      dh.head(n) = (g - h * k * v).transpose() / den;
      dh.segment(n, n) = v.transpose() / den;
      dh(2 * n) = 1.0 / den;
    }
    dp = -g * dh;
    dp.leftCols(n) -= h * k;
    dp.middleCols(n, n) += Mat::Identity(n, n);
    dq = v * dh + h * minv * dp;
    dq.leftCols(n) += Mat::Identity(n, n);
  } else {
    const HamiltonianSystem& ham = sys.hamiltonian;
    const int m = 2 * n;
    const Vec z0 = from.phase().packed(), z1 = step.state.phase().packed();
    const Vec mid = 0.5 * (z0 + z1);
    const Vec g = ham.gradient(mid);
    const Mat js = apply_j(ham.hessian(mid));
    Vec jg(m);
    jg.head(n) = g.tail(n);
    jg.tail(n) = -g.head(n);
    Mat fy = Mat::Zero(m + 1, m + 1);
    fy.topLeftCorner(m, m) = Mat::Identity(m, m) - 0.5 * h * js;
    fy.topRightCorner(m, 1) = -jg;
    fy.bottomLeftCorner(1, m) = 0.5 * g.transpose();
    Mat fx = Mat::Zero(m + 1, m + 1);
    fx.topLeftCorner(m, m) = -Mat::Identity(m, m) - 0.5 * h * js;
    fx.bottomLeftCorner(1, m) = 0.5 * g.transpose();
    fx(m, m) = 1.0;
    Eigen::FullPivLU<Mat> lu(fy);
    if (!lu.isInvertible()) throw SingularStepJacobian("extended midpoint: singular energy-step Jacobian", 0.0, 0);
    const Mat dy = -lu.solve(fx);
    dq = dy.topRows(n);
    dp = dy.middleRows(n, n);
    dh = dy.row(m);
  }
  // Assemble in packed order (q, t, p, e); columns of dq/dp/dh are (q, p, e).
  const int w = 2 * n + 2;
  const auto col = [n](int c) { return c < n ? c : (c < 2 * n ? c + 1 : 2 * n + 1); };
  Mat a = Mat::Zero(w, w);
  for (int c = 0; c < 2 * n + 1; ++c) {
    a.block(0, col(c), n, 1) = dq.col(c);
    a(n, col(c)) = dh(c);
    a.block(n + 1, col(c), n, 1) = dp.col(c);
  }
  a(n, n) = 1.0;
  a(2 * n + 1, 2 * n + 1) = 1.0;
  return a;
}

std::vector<ExtendedStepRecord> integrate_extended(ExtendedScheme scheme, const CatalogSystem& sys,
                                                   const PhaseState& z0, long n_steps, const StepperConfig& cfg) {
  if (n_steps < 0) throw Error("n_steps must be nonnegative");
  std::vector<ExtendedStepRecord> out;
  out.reserve(n_steps + 1);
  out.push_back({extended_initial_state(scheme, sys, z0, cfg), 0.0, 0});
  for (long k = 0; k < n_steps; ++k) {
    try {
      out.push_back(extended_step(scheme, sys, out.back().state, cfg));
    } catch (StepFailure& f) {
      f.set_step_index(k);
      throw;
    }
  }
  return out;
}

ExtendedScheme parse_extended_scheme(std::string_view key) {
  if (key == "stormer" || key == "extended-stormer") return ExtendedScheme::Stormer;
  if (key == "midpoint" || key == "extended-midpoint") return ExtendedScheme::Midpoint;
  throw Error("unknown extended scheme '" + std::string(key) + "'; valid keys: stormer midpoint");
}

std::string extended_scheme_key(ExtendedScheme s) { return s == ExtendedScheme::Stormer ? "stormer" : "midpoint"; }

}  // namespace dvi

#include "dvi/diagnostics.hpp"

#include <cmath>
#include <exception>
#include <random>

namespace dvi {

const char* jacobian_method_name(JacobianMethod m) {
  return m == JacobianMethod::Analytic ? "analytic" : "central-fd";
}

Mat vector_map_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& w, double h_rel) {
  const auto m = w.size();
  Vec wp = w;
  Mat jac;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double h = h_rel * (1.0 + std::abs(w(i)));
    wp(i) = w(i) + h;
    const Vec fp = f(wp);
    wp(i) = w(i) - h;
    const Vec fm = f(wp);
    wp(i) = w(i);
    if (i == 0) jac.resize(fp.size(), m);
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

Mat step_jacobian(const StepMap& step, const PhaseState& state, double h_rel) {
  return vector_map_jacobian([&step](const Vec& z) { return step(PhaseState::unpack(z)).packed(); }, state.packed(),
                             h_rel);
}

namespace {

SymplecticDefectReport defect_at(const StepMap& step, const PhaseState& probe, const ChartJacobian& chart,
                                 double h_rel) {
  Mat d = step_jacobian(step, probe, h_rel);
  if (chart) {
    const PhaseState next = step(probe);
    d = chart(next) * d * chart(probe).inverse();
  }
  return {symplectic_defect_of(d), JacobianMethod::CentralFd, probe};
}

}  // namespace

std::vector<SymplecticDefectReport> symplectic_defect_serial(const StepMap& step,
                                                             const std::vector<PhaseState>& probes,
                                                             const ChartJacobian& chart, double h_rel) {
  std::vector<SymplecticDefectReport> out;
  out.reserve(probes.size());
  for (const auto& z : probes) out.push_back(defect_at(step, z, chart, h_rel));
  return out;
}

std::vector<SymplecticDefectReport> symplectic_defect(const StepMap& step, const std::vector<PhaseState>& probes,
                                                      const ChartJacobian& chart, double h_rel) {
  std::vector<SymplecticDefectReport> out(probes.size());
  std::exception_ptr failure;
  const long count = static_cast<long>(probes.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    try {
      out[i] = defect_at(step, probes[i], chart, h_rel);
    } catch (...) {
#pragma omp critical(dvi_defect_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<SymplecticDefectReport> symplectic_defect_analytic(const TangentMap& tangent,
                                                               const std::vector<PhaseState>& probes) {
  std::vector<SymplecticDefectReport> out;
  out.reserve(probes.size());
  for (const auto& z : probes) out.push_back({symplectic_defect_of(tangent(z)), JacobianMethod::Analytic, z});
  return out;
}

double max_defect(const std::vector<SymplecticDefectReport>& reports) {
  double m = 0.0;
  for (const auto& r : reports) m = std::max(m, r.defect);
  return m;
}

std::vector<double> energy_error_series(const Trajectory& traj, const HamiltonianSystem& sys) {
  if (traj.states.empty()) throw Error("energy error series needs a nonempty trajectory");
  const double h0 = sys.energy(traj.states.front());
  std::vector<double> out;
  out.reserve(traj.size());
  for (const auto& s : traj.states) out.push_back(sys.energy(s) - h0);
  return out;
}

std::vector<PhaseState> sample_probes(const PhaseState& center, double half_width, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half_width, half_width);
  std::vector<PhaseState> out;
  out.reserve(count);
  const int n = center.dim();
  for (int i = 0; i < count; ++i) {
    Vec q(n), p(n);
    for (int j = 0; j < n; ++j) q(j) = center.q(j) + u(rng);
    for (int j = 0; j < n; ++j) p(j) = center.p(j) + u(rng);
    out.emplace_back(q, p);
  }
  return out;
}

}  // namespace dvi

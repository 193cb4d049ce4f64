#pragma once

#include "dvi/integrators.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace dvi {

enum class JacobianMethod { Analytic, CentralFd };

const char* jacobian_method_name(JacobianMethod m);

struct SymplecticDefectReport {
  double defect = 0.0;
  JacobianMethod jacobian_method = JacobianMethod::CentralFd;
  PhaseState probe;
};

/// Jacobian of a one-step map by central differences, step h_rel * (1 + |z_i|).
Mat step_jacobian(const StepMap& step, const PhaseState& state, double h_rel = 1e-6);

/// The same for a map on plain vectors.
Mat vector_map_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& w, double h_rel = 1e-6);

/// Jacobian of a coordinate change at a state. When supplied, defects are
/// measured for C(z1) Dphi C(z0)^{-1}, the map read in those coordinates.
using ChartJacobian = std::function<Mat(const PhaseState&)>;
using TangentMap = std::function<Mat(const PhaseState&)>;

/// Defects at every probe, evaluated in parallel.
std::vector<SymplecticDefectReport> symplectic_defect(const StepMap& step, const std::vector<PhaseState>& probes,
                                                      const ChartJacobian& chart = {}, double h_rel = 1e-6);
/// Single-threaded reference for symplectic_defect.
std::vector<SymplecticDefectReport> symplectic_defect_serial(const StepMap& step,
                                                             const std::vector<PhaseState>& probes,
                                                             const ChartJacobian& chart = {}, double h_rel = 1e-6);
/// Defects of an exact tangent map.
std::vector<SymplecticDefectReport> symplectic_defect_analytic(const TangentMap& tangent,
                                                               const std::vector<PhaseState>& probes);

double max_defect(const std::vector<SymplecticDefectReport>& reports);

/// H(z_k) - H(z_0) per sample.
std::vector<double> energy_error_series(const Trajectory& traj, const HamiltonianSystem& sys);

/// Uniform probes in the box center +- half_width (per coordinate).
std::vector<PhaseState> sample_probes(const PhaseState& center, double half_width, int count, std::uint64_t seed);

}  // namespace dvi

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dvi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A point (q, p) of a 2n-dimensional phase space.
struct PhaseState {
  Vec q;
  Vec p;

  PhaseState() = default;
  PhaseState(Vec q_, Vec p_);

  int dim() const { return static_cast<int>(q.size()); }
  Vec packed() const;  // (q, p) stacked
  static PhaseState unpack(const Vec& z);
  bool finite() const;
};

/// Phase state with time as an extra coordinate and its conjugate momentum e.
struct ExtendedPhaseState {
  Vec q;
  double t = 0.0;
  Vec p;
  double e = 0.0;

  int dim() const { return static_cast<int>(q.size()); }
  PhaseState phase() const { return {q, p}; }
  /// Stacked as (q, t, p, e) so the canonical pairs line up with the standard J.
  Vec packed() const;
  static ExtendedPhaseState unpack(const Vec& w);
};

/// Standard symplectic matrix [[0, I], [-I, 0]] of size 2n.
Mat symplectic_j(int n);

/// Infinity norm of A^T J A - J.
double symplectic_defect_of(const Mat& a);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

/// A one-step map could not produce the next state.
class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, double residual, int iterations);

  double residual() const { return residual_; }
  int iterations() const { return iterations_; }
  long step_index() const { return step_index_; }
  void set_step_index(long k) { step_index_ = k; }

 private:
  double residual_;
  int iterations_;
  long step_index_ = -1;
};

void require_finite(const PhaseState& s, const char* where);

}  // namespace dvi

#include "dvi/types.hpp"

#include <limits>
#include <sstream>

namespace dvi {

PhaseState::PhaseState(Vec q_, Vec p_) : q(std::move(q_)), p(std::move(p_)) {
  if (q.size() != p.size() || q.size() < 1) {
    std::ostringstream os;
    os << "phase state needs q and p of equal dimension >= 1 (got " << q.size() << ", " << p.size() << ")";
    throw DimensionError(os.str());
  }
}

Vec PhaseState::packed() const {
  Vec z(q.size() + p.size());
  z << q, p;
  return z;
}

PhaseState PhaseState::unpack(const Vec& z) {
  if (z.size() % 2 != 0) throw DimensionError("packed phase vector has odd length");
  const auto n = z.size() / 2;
  return {z.head(n), z.tail(n)};
}

bool PhaseState::finite() const { return q.allFinite() && p.allFinite(); }

Vec ExtendedPhaseState::packed() const {
  const auto n = q.size();
  Vec w(2 * n + 2);
  w.head(n) = q;
  w(n) = t;
  w.segment(n + 1, n) = p;
  w(2 * n + 1) = e;
  return w;
}

ExtendedPhaseState ExtendedPhaseState::unpack(const Vec& w) {
  if (w.size() % 2 != 0 || w.size() < 4) throw DimensionError("packed extended vector has bad length");
  const auto n = w.size() / 2 - 1;
  ExtendedPhaseState s;
  s.q = w.head(n);
  s.t = w(n);
  s.p = w.segment(n + 1, n);
  s.e = w(2 * n + 1);
  return s;
}

Mat symplectic_j(int n) {
  Mat j = Mat::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n).setIdentity();
  j.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  return j;
}

double symplectic_defect_of(const Mat& a) {
  if (a.rows() != a.cols() || a.rows() % 2 != 0) throw DimensionError("symplectic defect needs a square even-sized matrix");
  const Mat j = symplectic_j(static_cast<int>(a.rows() / 2));
  return (a.transpose() * j * a - j).cwiseAbs().rowwise().sum().maxCoeff();
}

StepFailure::StepFailure(const std::string& what, double residual, int iterations)
    : Error(what), residual_(residual), iterations_(iterations) {}

void require_finite(const PhaseState& s, const char* where) {
  if (!s.finite()) throw StepFailure(std::string(where) + ": non-finite state", std::numeric_limits<double>::infinity(), 0);
}

}  // namespace dvi

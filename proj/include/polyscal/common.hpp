#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace polyscal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;

// Error taxonomy shared by all modules. Every failure carries a code so the
// CLI can map it to an exit status without string matching.
enum class ErrorCode {
  OutOfDomain,
  NotSPD,
  StencilClipped,
  DegenerateFace,
  InvalidDomain,
  BadAngle,
  NoSolution,
  Tangential,
  EmptySlice,
  DegenerateTriangle,
  OpenContactCurve,
  NotMinimal,
  NotAdmissible,
  ObstacleContact,
  InsufficientLevels,
  Incompatible,
  NoConvergence,
  NewtonDiverged,
  LeafLeftDomain,
  HypothesisFailed,
  SolverBreakdown,
  MissingBaseline,
  BadConfig,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

struct Box3 {
  Vec3 lo{-1.0, -1.0, -1.0};
  Vec3 hi{1.0, 1.0, 1.0};

  bool contains(const Vec3& x, double margin = 0.0) const {
    for (int k = 0; k < 3; ++k) {
      if (x[k] < lo[k] + margin || x[k] > hi[k] - margin) return false;
    }
    return true;
  }
  double diameter() const { return (hi - lo).norm(); }
  Box3 inflated(double pad) const {
    return Box3{lo - Vec3::Constant(pad), hi + Vec3::Constant(pad)};
  }
};

inline double clamp_cos(double c) { return std::max(-1.0, std::min(1.0, c)); }

// Angle between two vectors in the inner product given by SPD matrix G.
inline double angle_g(const Mat3& G, const Vec3& a, const Vec3& b) {
  const double na = std::sqrt(a.dot(G * a));
  const double nb = std::sqrt(b.dot(G * b));
  return std::acos(clamp_cos(a.dot(G * b) / (na * nb)));
}

inline double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace polyscal

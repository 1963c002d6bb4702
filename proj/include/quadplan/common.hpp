#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace quadplan {

inline constexpr int kLegCount = 4;
inline constexpr int kBaseDim = 12;
inline constexpr int kStateDim = kBaseDim + 3 * kLegCount;
inline constexpr int kInputDim = 6 * kLegCount;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using InputVector = Eigen::Matrix<double, kInputDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;
using InputMatrix = Eigen::Matrix<double, kStateDim, kInputDim>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Legs in the order used by every per-leg array: left/right front, left/right hind.
enum class Leg : int { LF = 0, RF = 1, LH = 2, RH = 3 };

inline constexpr std::array<Leg, kLegCount> kAllLegs{Leg::LF, Leg::RF, Leg::LH, Leg::RH};

constexpr int index(Leg leg) { return static_cast<int>(leg); }

constexpr std::string_view leg_name(Leg leg) {
  switch (leg) {
    case Leg::LF: return "LF";
    case Leg::RF: return "RF";
    case Leg::LH: return "LH";
    case Leg::RH: return "RH";
  }
  return "?";
}

enum class ErrorCode {
  kSingularOrientation,
  kInvalidArgument,
  kDimensionMismatch,
  kNoPlaneFound,
  kInvalidGeometry,
  kPhaseTooShort,
  kOutOfRange,
  kInfeasibleSubproblem,
  kFactorizationFailure,
  kNanDetected,
  kMaxIterations,
  kStepBelowMinimum,
  kUnknownObstacle,
  kConfig,
  kProtocol,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace quadplan

#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace snell {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntMatrix = Eigen::MatrixXi;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

/// Obstacle level used to encode "no barrier". Solver code paths stay uniform;
/// tests confirm the reflection process is identically zero in this regime.
inline constexpr double kInactiveObstacle = -1.0e9;

inline Vector vec1(double x) {
    Vector v(1);
    v(0) = x;
    return v;
}

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteCoefficient : Error { using Error::Error; };
struct UnknownProblem : Error { using Error::Error; };
struct InvalidParams : Error { using Error::Error; };
struct CFLViolation : Error { using Error::Error; };
struct DegenerateDomain : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct NonFiniteState : Error { using Error::Error; };
struct TerminalObstacleConflict : Error { using Error::Error; };
struct NonFiniteDriver : Error { using Error::Error; };
struct NonFiniteValue : Error { using Error::Error; };
struct SingularRegression : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct WindowMismatch : Error { using Error::Error; };
struct MisalignedWindow : Error { using Error::Error; };
struct ExplosionGuard : Error { using Error::Error; };
struct ConfigParseError : Error { using Error::Error; };
struct KeyMismatch : Error { using Error::Error; };

}  // namespace snell

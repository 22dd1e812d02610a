#ifndef EIVAR_COMMON_HPP
#define EIVAR_COMMON_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace eivar {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// Rectangular support of the parameter space; one row per dimension.
struct Bounds {
    Vector lower;
    Vector upper;

    Bounds() = default;
    Bounds(Vector lo, Vector hi);

    [[nodiscard]] Index dim() const { return lower.size(); }
    [[nodiscard]] Vector width() const { return upper - lower; }
    [[nodiscard]] bool contains(const Vector& theta, double slack = 0.0) const;
    [[nodiscard]] double volume() const;
    /// Affine map of theta onto the unit hypercube.
    [[nodiscard]] Vector to_unit(const Vector& theta) const;
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failures.
class NumericalError : public Error {
public:
    using Error::Error;
};
class CholeskyFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};
class NotPositiveDefinite : public NumericalError {
public:
    using NumericalError::NumericalError;
};
class DegenerateData : public NumericalError {
public:
    using NumericalError::NumericalError;
};
class OptimFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Contract violations by the caller.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};
class LengthMismatch : public Error {
public:
    using Error::Error;
};
class UnsupportedDimension : public Error {
public:
    using Error::Error;
};
class EmptyCandidates : public Error {
public:
    using Error::Error;
};
class EmptyHistory : public Error {
public:
    using Error::Error;
};
class OutOfBounds : public Error {
public:
    using Error::Error;
};
class ConfigInvalid : public Error {
public:
    using Error::Error;
};

// Simulator failures.
class SimulatorFailure : public Error {
public:
    using Error::Error;
};
class Timeout : public SimulatorFailure {
public:
    using SimulatorFailure::SimulatorFailure;
};
class ProtocolViolation : public SimulatorFailure {
public:
    using SimulatorFailure::SimulatorFailure;
};
class NonzeroExit : public SimulatorFailure {
public:
    using SimulatorFailure::SimulatorFailure;
};

// Scheduler failures.
class PoolClosed : public Error {
public:
    using Error::Error;
};
class Deadlock : public Error {
public:
    using Error::Error;
};

/// Derives an independent 64-bit seed from a base seed and a stream tag.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                        std::uint64_t index = 0);

}  // namespace eivar

#endif

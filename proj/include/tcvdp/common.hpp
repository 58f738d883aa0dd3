#ifndef TCVDP_COMMON_HPP
#define TCVDP_COMMON_HPP

#include <complex>
#include <stdexcept>
#include <string>

namespace tcvdp {

using cplx = std::complex<double>;

constexpr double pi = 3.14159265358979323846;

/// Invalid or inconsistent configuration (bad parameter, index out of range,
/// malformed config file). Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure (eigensolver non-convergence, step-control failure,
/// sizing overflow). Maps to CLI exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A stochastic trajectory left the stability envelope or produced a
/// non-finite amplitude.
struct DivergenceError : NumericalError {
    DivergenceError(long traj, double time)
        : NumericalError("trajectory " + std::to_string(traj) +
                         " diverged at t=" + std::to_string(time)),
          trajectory(traj), time(time) {}
    long trajectory;
    double time;
};

/// Decay-rate fit could not be performed (window too short, amplitude
/// below the noise floor).
struct FitError : NumericalError {
    using NumericalError::NumericalError;
};

/// Too many trajectories with near-zero modulus; arg(a) is meaningless.
struct PhaseUndefinedError : NumericalError {
    using NumericalError::NumericalError;
};

/// Requested Liouvillian exceeds the configured memory budget.
struct SizingError : ConfigError {
    SizingError(const std::string& msg, std::size_t dim)
        : ConfigError(msg), dimension(dim) {}
    std::size_t dimension;
};

/// The Liouvillian null space is degenerate; there is no unique steady
/// state (physically meaningful, e.g. a symmetry sector).
struct DegenerateSteadyStateError : NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace tcvdp

#endif

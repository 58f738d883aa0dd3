#ifndef TCVDP_MODEL_HPP
#define TCVDP_MODEL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "tcvdp/common.hpp"
#include "tcvdp/config.hpp"

namespace tcvdp {

/// Physical rates of one van der Pol oscillator. Frequencies are in units
/// of the reference frequency omega_m, times in 1/omega_m.
struct OscillatorParams {
    double omega = 1.0;    ///< angular frequency
    double kappa1 = 0.1;   ///< linear gain rate
    double kappa2 = 0.005; ///< nonlinear two-quantum loss rate
    cplx drive = 0.0;      ///< complex driving amplitude

    void validate() const {
        if (!(kappa1 >= 0.0))
            throw ConfigError("oscillator.kappa1 must be >= 0");
        if (!(kappa2 > 0.0))
            throw ConfigError("oscillator.kappa2 must be > 0 (nonlinear loss "
                              "is required for a limit cycle)");
        if (!std::isfinite(omega) || !std::isfinite(drive.real()) ||
            !std::isfinite(drive.imag()))
            throw ConfigError("oscillator parameters must be finite");
    }

    /// Deterministic limit-cycle radius sqrt(kappa1 / (2 kappa2)).
    double limit_cycle_radius() const { return std::sqrt(kappa1 / (2.0 * kappa2)); }
};

enum class Topology { ring };

/// Dissipative coupling law on a periodic ring: off-diagonal entries decay
/// exponentially with lattice distance, mu_mn = mu * exp(-gamma (d_mn - 1)).
struct CouplingSpec {
    double mu = 0.3;
    double gamma = 0.0;
    Topology topology = Topology::ring;

    void validate() const {
        if (!(mu >= 0.0)) throw ConfigError("coupling.mu must be >= 0");
        if (!(gamma >= 0.0)) throw ConfigError("coupling.gamma must be >= 0");
        if (topology != Topology::ring)
            throw ConfigError("only the ring topology is supported");
    }
};

/// Shortest path between sites m and n on a periodic ring of N sites.
/// Site indices are 1-based.
inline long ring_distance(long m, long n, long N) {
    if (N < 1) throw ConfigError("ring_distance: N must be >= 1");
    if (m < 1 || m > N || n < 1 || n > N)
        throw ConfigError("ring_distance: site index out of range");
    long d = std::abs(m - n);
    return std::min(d, N - d);
}

/// Attenuation factor lambda_mn(gamma) = (1 - delta_mn) exp(-gamma (d_mn - 1)).
inline double attenuation(const CouplingSpec& spec, long m, long n, long N) {
    if (m == n) return 0.0;
    return std::exp(-spec.gamma * (double(ring_distance(m, n, N)) - 1.0));
}

/// Full N x N coupling matrix mu_mn. Symmetric with zero diagonal; entries
/// depend only on the ring distance, so symmetry is bitwise.
inline Eigen::MatrixXd coupling_matrix(const CouplingSpec& spec, long N) {
    spec.validate();
    if (N < 1) throw ConfigError("coupling_matrix: N must be >= 1");
    Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(N, N);
    for (long m = 1; m <= N; ++m)
        for (long n = 1; n <= N; ++n)
            if (m != n) mu(m - 1, n - 1) = spec.mu * attenuation(spec, m, n, N);
    return mu;
}

/// Normalization factor calN(gamma) = sum_m lambda_1m + 1. The self-term is
/// excluded from the sum by the (1 - delta) factor and restored by the +1,
/// so calN(0) = N exactly.
inline double normalization(const CouplingSpec& spec, long N) {
    spec.validate();
    if (N < 1) throw ConfigError("normalization: N must be >= 1");
    double s = 1.0;
    for (long m = 2; m <= N; ++m) s += attenuation(spec, 1, m, N);
    return s;
}

/// Ensemble run geometry: oscillator count, trajectory count, time grid,
/// RNG seed and recording stride.
struct EnsembleConfig {
    long n_osc = 10;
    long n_traj = 1000;
    double dt = 0.05;
    double t_final = 1000.0;
    std::uint64_t seed = 1;
    long record_stride = 20;

    void validate(const OscillatorParams& p, const CouplingSpec& c) const {
        if (n_osc < 1) throw ConfigError("ensemble.n_osc must be >= 1");
        if (n_traj < 1) throw ConfigError("ensemble.n_traj must be >= 1");
        if (!(dt > 0.0)) throw ConfigError("ensemble.dt must be > 0");
        if (!(t_final >= dt)) throw ConfigError("ensemble.t_final must be >= dt");
        if (record_stride < 1) throw ConfigError("ensemble.record_stride must be >= 1");
        // Stability guard; <|a|^2> is estimated by the limit-cycle value.
        double amp2 = p.kappa1 / (2.0 * p.kappa2);
        double rate = std::max({std::abs(p.omega), p.kappa1, p.kappa2 * amp2, c.mu});
        if (dt * rate > 0.05 * (1.0 + 1e-12))
            throw ConfigError("ensemble.dt too large: dt * max rate = " +
                              format_double(dt * rate) + " exceeds 0.05");
    }

    long n_steps() const { return long(std::llround(t_final / dt)); }
};

/// Bundle of everything a simulation needs, loadable from one config file.
struct SimConfig {
    OscillatorParams osc;
    CouplingSpec coupling;
    EnsembleConfig ensemble;

    void validate() const {
        osc.validate();
        coupling.validate();
        ensemble.validate(osc, coupling);
    }

    static SimConfig from_settings(const Settings& s) {
        SimConfig c;
        c.osc.omega = s.get_double("oscillator.omega", 1.0);
        c.osc.kappa1 = s.get_double("oscillator.kappa1", 0.1);
        c.osc.kappa2 = s.get_double("oscillator.kappa2", 0.005);
        c.osc.drive = cplx(s.get_double("oscillator.drive_re", 0.0),
                           s.get_double("oscillator.drive_im", 0.0));
        c.coupling.mu = s.get_double("coupling.mu", 0.3);
        c.coupling.gamma = s.get_double("coupling.gamma", 0.0);
        std::string topo = s.get_str("coupling.topology", "ring");
        if (topo != "ring")
            throw ConfigError("coupling.topology: unsupported value: " + topo);
        c.ensemble.n_osc = s.get_long("ensemble.n_osc", 10);
        c.ensemble.n_traj = s.get_long("ensemble.n_traj", 1000);
        c.ensemble.dt = s.get_double("ensemble.dt", 0.05);
        c.ensemble.t_final = s.get_double("ensemble.t_final", 1000.0);
        c.ensemble.seed = std::uint64_t(s.get_long("ensemble.seed", 1));
        c.ensemble.record_stride = s.get_long("ensemble.record_stride", 20);
        c.validate();
        return c;
    }

    void to_settings(Settings& s) const {
        s.set("oscillator.omega", osc.omega);
        s.set("oscillator.kappa1", osc.kappa1);
        s.set("oscillator.kappa2", osc.kappa2);
        s.set("oscillator.drive_re", osc.drive.real());
        s.set("oscillator.drive_im", osc.drive.imag());
        s.set("coupling.mu", coupling.mu);
        s.set("coupling.gamma", coupling.gamma);
        s.set("coupling.topology", std::string("ring"));
        s.set("ensemble.n_osc", ensemble.n_osc);
        s.set("ensemble.n_traj", ensemble.n_traj);
        s.set("ensemble.dt", ensemble.dt);
        s.set("ensemble.t_final", ensemble.t_final);
        s.set("ensemble.seed", long(ensemble.seed));
        s.set("ensemble.record_stride", ensemble.record_stride);
    }
};

}  // namespace tcvdp

#endif

#ifndef TCVDP_ORACLE_HPP
#define TCVDP_ORACLE_HPP

#include <Eigen/Dense>
#include <cmath>
#include "json.hpp"
#include <string>
#include <vector>

#include "tcvdp/common.hpp"
#include "tcvdp/liouvillian.hpp"
#include "tcvdp/model.hpp"
#include "tcvdp/sde.hpp"

namespace tcvdp {

/// One independent cross-check with its verdict.
struct OracleReport {
    std::string name;
    double expected = 0;
    double observed = 0;
    double tolerance = 0;
    bool pass = false;
    std::string detail;

    static OracleReport make(std::string name, double expected, double observed,
                             double tolerance, std::string detail = "") {
        if (!(tolerance > 0)) throw ConfigError("oracle tolerance must be > 0");
        OracleReport r;
        r.name = std::move(name);
        r.expected = expected;
        r.observed = observed;
        r.tolerance = tolerance;
        r.pass = std::abs(observed - expected) <= tolerance;
        r.detail = std::move(detail);
        return r;
    }

    nlohmann::json to_json() const {
        return {{"name", name},         {"expected", expected},
                {"observed", observed}, {"tolerance", tolerance},
                {"pass", pass},         {"detail", detail}};
    }
};

/// Terminal |a| of the noiseless single-oscillator amplitude equation
/// da/dt = -i omega a - i conj(drive) + a (kappa1 - 2 kappa2 |a|^2),
/// integrated by classic fixed-step RK4 from a = 0.1. Deliberately shares no
/// code with the stochastic engine.
inline double deterministic_limit_cycle(const OscillatorParams& p) {
    p.validate();
    auto f = [&](cplx a) {
        return cplx(0.0, -1.0) * (p.omega * a + std::conj(p.drive)) +
               a * (p.kappa1 - 2.0 * p.kappa2 * std::norm(a));
    };
    cplx a(0.1, 0.0);
    const double dt = 0.01;
    double prev = std::abs(a);
    double t = 0.0;
    while (t < 1e4) {
        for (int s = 0; s < 1000; ++s) {
            cplx k1 = f(a);
            cplx k2 = f(a + 0.5 * dt * k1);
            cplx k3 = f(a + 0.5 * dt * k2);
            cplx k4 = f(a + dt * k3);
            a += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        t += 1000 * dt;
        double cur = std::abs(a);
        if (std::abs(cur - prev) < 1e-10) return cur;
        prev = cur;
    }
    throw NumericalError("limit-cycle integration did not converge by t = 1e4");
}

/// Fock populations of the single-oscillator steady state from the diagonal
/// (population) sector alone: a d-dimensional classical rate equation whose
/// fluxes follow from the truncated jump operators. Independent of the
/// superoperator assembly by construction.
inline Eigen::VectorXd single_vdp_steady_distribution(const OscillatorParams& p,
                                                      long d) {
    p.validate();
    if (d < 2) throw ConfigError("cutoff must be >= 2");
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
    for (long n = 0; n + 1 < d; ++n) {
        // single-quantum gain n -> n+1; the top level has no gain out-flux
        // because the truncated raising operator annihilates it
        double rate = 2.0 * p.kappa1 * double(n + 1);
        M(n + 1, n) += rate;
        M(n, n) -= rate;
    }
    for (long n = 2; n < d; ++n) {
        double rate = 2.0 * p.kappa2 * double(n) * double(n - 1);
        M(n - 2, n) += rate;
        M(n, n) -= rate;
    }
    // null space via trace-row substitution
    Eigen::MatrixXd A = M;
    A.row(0).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    rhs[0] = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible())
        throw NumericalError("population rate matrix is rank deficient");
    Eigen::VectorXd pops = lu.solve(rhs);
    return pops;
}

/// Semiclassical correspondence check: steady <a'a> from direct quantum
/// evolution vs ensemble-mean |a|^2 from the Langevin engine.
inline OracleReport cross_engine_check(const OscillatorParams& p,
                                       const CouplingSpec& c, long N,
                                       std::uint64_t seed = 7,
                                       long n_traj = 400) {
    p.validate();
    if (N < 1 || N > 2)
        throw ConfigError("cross_engine_check: N must be 1 or 2");
    if (p.kappa1 < 10.0 * p.kappa2)
        throw ConfigError("cross_engine_check requires kappa1/kappa2 >= 10 "
                          "(semiclassical regime)");

    // quantum side: evolve the vacuum to stationarity at an adequate cutoff
    long d = choose_cutoff(p);
    FockConfig fock{d, N};
    Liouvillian L = build_liouvillian(p, c, fock);
    long D = fock.dim();
    Eigen::MatrixXcd rho0 = Eigen::MatrixXcd::Zero(D, D);
    rho0(0, 0) = 1.0;
    std::vector<double> grid = {500.0, 600.0};
    auto rhos = evolve_rho(rho0, L, grid, 1e-11, 1e-12);

    SparseC a1 = annihilation(d);
    SparseC num1 = SparseC(a1.adjoint()) * a1;
    auto occupation = [&](const Eigen::MatrixXcd& rho) {
        double tot = 0.0;
        for (long m = 0; m < N; ++m) {
            Eigen::MatrixXcd nm(embed_mode(num1, m, N, d));
            tot += (nm * rho).trace().real();
        }
        return tot / double(N);
    };
    double n_early = occupation(rhos[0]);
    double n_qm = occupation(rhos[1]);
    if (std::abs(n_qm - n_early) > 1e-6 * std::max(1.0, n_qm))
        throw NumericalError("quantum occupation not stationary by t = 600");

    // stochastic side
    SimConfig sim;
    sim.osc = p;
    sim.coupling = c;
    sim.ensemble.n_osc = N;
    sim.ensemble.n_traj = n_traj;
    sim.ensemble.dt = 0.05;
    sim.ensemble.t_final = 400.0;
    sim.ensemble.seed = seed;
    sim.ensemble.record_stride = 20;
    sim.validate();
    EnsembleRecord rec = simulate_ensemble(sim);

    // average |a|^2 over the stationary tail, with a crude standard error
    // from batch means
    long i0 = rec.times.size() / 2;
    std::vector<double> samples;
    for (long i = i0; i < rec.times.size(); ++i)
        samples.push_back(rec.site_abs2[i]);  // already site-averaged
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= double(samples.size());
    long n_batch = 8;
    std::vector<double> bsum(n_batch, 0.0);
    std::vector<long> bcount(n_batch, 0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        long b = long(i * std::size_t(n_batch) / samples.size());
        bsum[b] += samples[i];
        ++bcount[b];
    }
    double var = 0.0;
    for (long b = 0; b < n_batch; ++b) {
        double bm = bsum[b] / double(bcount[b]);
        var += (bm - mean) * (bm - mean);
    }
    double stderr_ = std::sqrt(var / double(n_batch - 1) / double(n_batch));
    if (stderr_ > 0.02 * mean)
        throw NumericalError("Langevin ensemble not converged: stderr " +
                             format_double(stderr_) + " vs mean " +
                             format_double(mean));

    return OracleReport::make("cross_engine_occupation_N" + std::to_string(N),
                              n_qm, mean, 0.15 * n_qm,
                              "quantum cutoff d=" + std::to_string(d) +
                                  ", Langevin stderr " + format_double(stderr_));
}

}  // namespace tcvdp

#endif

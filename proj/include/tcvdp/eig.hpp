#ifndef TCVDP_EIG_HPP
#define TCVDP_EIG_HPP

// Internal header: included by liouvillian.hpp after the Liouvillian and
// SpectrumResult types are defined. Do not include directly.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <lapacke.h>

namespace tcvdp {

/// Knobs for the large-dimension eigensolver. The solver exploits that with
/// zero drive the coherent part of the generator is diagonal and commutes
/// with the dissipative part, whose slow modes sit near the right edge of a
/// real spectral interval: block subspace iteration with a Chebyshev filter
/// on the dissipative part, and Rayleigh-Ritz projection of the full
/// generator onto the filtered block.
struct IterativeEigOptions {
    long block_extra = 8;        ///< subspace size = k + block_extra
    long filter_degree = 160;
    double filter_lower = 0.0;   ///< 0 = Gershgorin bound
    double filter_upper = 0.0;   ///< 0 = filter_lower / 100
    double rotation_time = 1.0;  ///< coherent rotation splitting phase sectors
    double tol = 1e-8;           ///< residual ||L x - lambda x||, unit-norm x
    int max_iterations = 50;
    std::uint64_t start_seed = 0x5eed;
};

namespace detail {

inline SpectrumResult dense_spectrum(const Liouvillian& L, long k) {
    long n = L.superop_dim();
    Eigen::MatrixXcd A(L.matrix);
    Eigen::VectorXcd w(n);
    Eigen::MatrixXcd vr(n, n);
    // std::complex<double> is layout-compatible with the C complex type
    auto* ap = reinterpret_cast<lapack_complex_double*>(A.data());
    auto* wp = reinterpret_cast<lapack_complex_double*>(w.data());
    auto* vp = reinterpret_cast<lapack_complex_double*>(vr.data());
    lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'V', lapack_int(n),
                                    ap, lapack_int(n), wp, nullptr, 1, vp,
                                    lapack_int(n));
    if (info != 0)
        throw NumericalError("zgeev failed with info = " + std::to_string(info));

    std::vector<long> idx(n);
    std::iota(idx.begin(), idx.end(), 0L);
    std::sort(idx.begin(), idx.end(), [&](long a, long b) {
        if (w[a].real() != w[b].real()) return w[a].real() > w[b].real();
        return w[a].imag() > w[b].imag();
    });

    SpectrumResult res;
    res.method = "dense-zgeev";
    res.eigenvalues.resize(k);
    res.residuals.resize(k);
    res.eigenvectors.resize(n, k);
    for (long i = 0; i < k; ++i) {
        res.eigenvalues[i] = w[idx[i]];
        Eigen::VectorXcd x = vr.col(idx[i]);
        x /= x.norm();
        res.eigenvectors.col(i) = x;
        res.residuals[i] = (L.matrix * x - res.eigenvalues[i] * x).norm();
    }
    return res;
}

inline SpectrumResult iterative_spectrum(const Liouvillian& L, long k,
                                         const IterativeEigOptions& opts) {
    if (!L.hamiltonian_diagonal())
        throw NumericalError(
            "iterative eigensolver requires zero drive (diagonal Hamiltonian); "
            "use a dense-sized cutoff instead");
    long n = L.superop_dim();

    // Gershgorin estimate of the dissipative part's real spectral interval.
    double lower = opts.filter_lower;
    if (lower == 0.0) {
        Eigen::VectorXd diag_re = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd row_abs = Eigen::VectorXd::Zero(n);
        for (int c = 0; c < L.matrix.outerSize(); ++c)
            for (SparseC::InnerIterator it(L.matrix, c); it; ++it) {
                if (it.row() == c)
                    diag_re[it.row()] = it.value().real();
                else
                    row_abs[it.row()] += std::abs(it.value());
            }
        lower = (diag_re - row_abs).minCoeff();
    }
    // Coherent rotation splitting the phase sectors that the (purely real)
    // filter leaves degenerate.
    Eigen::VectorXcd phase(n);
    for (long i = 0; i < n; ++i) {
        double th = -L.ham_diag[i] * opts.rotation_time;
        phase[i] = cplx(std::cos(th), std::sin(th));
    }

    struct Mode {
        cplx value;
        Eigen::VectorXcd vec;
        double residual;
    };
    const long p = std::min(n, k + std::max<long>(2, opts.block_extra));
    long best_found = 0;

    // The filter edge must sit left of the k-th slowest mode or the block can
    // never resolve k distinct modes; since that eigenvalue is unknown up
    // front, retry with a progressively deeper edge if the count stalls.
    std::vector<double> edges;
    if (opts.filter_upper != 0.0)
        edges = {opts.filter_upper};
    else
        edges = {lower / 100.0, lower / 20.0, lower / 5.0};

    for (double upper : edges) {
        if (!(upper > lower) || !(upper < 0.0))
            throw NumericalError("invalid filter interval [" +
                                 format_double(lower) + ", " +
                                 format_double(upper) + "]");
        double alpha = 2.0 / (upper - lower);
        double beta = -(upper + lower) / (upper - lower);

        // M v = R T_deg(S(L_diss)) v with S mapping [lower, upper] to [-1, 1];
        // modes right of `upper` are amplified exponentially in deg. Linear in
        // v (no per-column normalization) so block projections stay consistent.
        auto apply_m = [&](const Eigen::VectorXcd& v) {
            Eigen::VectorXcd t0 = v;
            Eigen::VectorXcd t1 = alpha * L.apply_dissipative(v) + beta * v;
            for (long j = 1; j < opts.filter_degree; ++j) {
                Eigen::VectorXcd t2 =
                    2.0 * (alpha * L.apply_dissipative(t1) + beta * t1) - t0;
                t0.swap(t1);
                t1.swap(t2);
            }
            if (!t1.allFinite())
                throw NumericalError("chebyshev filter overflow; reduce degree");
            return Eigen::VectorXcd(phase.array() * t1.array());
        };

        // Block orthogonal iteration on M: the subspace converges to the span
        // of the modes with the slowest dissipation, and the small projected
        // problem B = Q' M Q resolves individual modes. Eigenvalues of the
        // actual generator are recovered per mode by a Rayleigh quotient.
        std::mt19937_64 gen(opts.start_seed);
        std::normal_distribution<double> nd;
        Eigen::MatrixXcd Q(n, p);
        for (long j = 0; j < p; ++j)
            for (long i = 0; i < n; ++i) Q(i, j) = cplx(nd(gen), nd(gen));
        {
            Eigen::HouseholderQR<Eigen::MatrixXcd> qr(Q);
            Q = qr.householderQ() * Eigen::MatrixXcd::Identity(n, p);
        }

        long last_count = -1;
        int stalled = 0;
        for (int iter = 0; iter < opts.max_iterations; ++iter) {
            Eigen::MatrixXcd Z(n, p);
            for (long j = 0; j < p; ++j) Z.col(j) = apply_m(Q.col(j));
            Eigen::MatrixXcd B = Q.adjoint() * Z;
            Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(B);
            if (ces.info() != Eigen::Success)
                throw NumericalError("projected eigenproblem failed to converge");

            std::vector<Mode> modes;
            for (long j = 0; j < p; ++j) {
                Eigen::VectorXcd x = Q * ces.eigenvectors().col(j);
                double nrm = x.norm();
                if (!(nrm > 1e-12)) continue;
                x /= nrm;
                cplx lam = x.dot(L.matrix * x);
                double res = (L.matrix * x - lam * x).norm();
                if (res < opts.tol) modes.push_back({lam, x, res});
            }
            // deduplicate (projected problem can repeat a mode across sectors)
            std::sort(modes.begin(), modes.end(),
                      [](const Mode& a, const Mode& b) {
                          if (a.value.real() != b.value.real())
                              return a.value.real() > b.value.real();
                          return a.value.imag() > b.value.imag();
                      });
            std::vector<Mode> uniq;
            for (auto& m : modes) {
                bool dup = false;
                for (const auto& u : uniq)
                    if (std::abs(m.value - u.value) <
                            1e-7 * std::max(1.0, std::abs(m.value)) &&
                        std::abs(u.vec.dot(m.vec)) > 0.5)
                        dup = true;
                if (!dup) uniq.push_back(std::move(m));
            }
            if (long(uniq.size()) >= k) {
                SpectrumResult res;
                res.method = "chebyshev-subspace";
                res.eigenvalues.resize(k);
                res.residuals.resize(k);
                res.eigenvectors.resize(n, k);
                for (long j = 0; j < k; ++j) {
                    res.eigenvalues[j] = uniq[j].value;
                    res.residuals[j] = uniq[j].residual;
                    res.eigenvectors.col(j) = uniq[j].vec;
                }
                return res;
            }
            best_found = std::max(best_found, long(uniq.size()));

            // converged-mode count stuck below k: the edge is too shallow
            // and no further iterations can surface new modes
            if (long(uniq.size()) == last_count && ++stalled >= 5) break;
            if (long(uniq.size()) != last_count) {
                last_count = long(uniq.size());
                stalled = 0;
            }

            Eigen::HouseholderQR<Eigen::MatrixXcd> qr(Z);
            Q = qr.householderQ() * Eigen::MatrixXcd::Identity(n, p);
        }
    }
    throw NumericalError("iterative eigensolver converged only " +
                         std::to_string(best_found) + " of " +
                         std::to_string(k) +
                         " requested modes (residual tol " +
                         format_double(opts.tol) + ")");
}

}  // namespace detail
}  // namespace tcvdp

#endif

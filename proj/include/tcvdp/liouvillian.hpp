#ifndef TCVDP_LIOUVILLIAN_HPP
#define TCVDP_LIOUVILLIAN_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tcvdp/common.hpp"
#include "tcvdp/fock.hpp"
#include "tcvdp/model.hpp"

namespace tcvdp {

/// Truncated Fock-space geometry for the quantum engine.
struct FockConfig {
    long cutoff = 8;    ///< per-mode dimension d
    long n_modes = 1;   ///< N
    double mem_budget_bytes = 3.5e9;

    void validate() const {
        if (cutoff < 2) throw ConfigError("fock.cutoff must be >= 2");
        if (n_modes < 1) throw ConfigError("fock.n_modes must be >= 1");
        if (!(mem_budget_bytes > 0))
            throw ConfigError("fock.mem_budget_bytes must be > 0");
        // overflow guard before anyone multiplies dimensions
        double dim = std::pow(double(cutoff), double(n_modes));
        if (dim * dim > 9e15)
            throw SizingError("fock dimension overflows addressable range",
                              long(std::min(dim, 9e15)));
    }

    long dim() const {
        long d = 1;
        for (long k = 0; k < n_modes; ++k) d *= cutoff;
        return d;
    }

    long superop_dim() const { return dim() * dim(); }
};

/// Size estimate, computed and reportable before any large allocation.
struct LiouvillianSizing {
    long hilbert_dim = 0;
    long superop_dim = 0;
    long est_nonzeros = 0;
    double est_bytes = 0;
};

namespace detail {

/// Rate checks for the quantum builders. Unlike the stochastic engine, the
/// master equation is well defined with kappa2 = 0 (pure Hamiltonian or
/// gain-only generators), so only nonnegativity and finiteness are required.
inline void validate_rates(const OscillatorParams& p) {
    if (!(p.kappa1 >= 0.0)) throw ConfigError("oscillator.kappa1 must be >= 0");
    if (!(p.kappa2 >= 0.0)) throw ConfigError("oscillator.kappa2 must be >= 0");
    if (!std::isfinite(p.omega) || !std::isfinite(p.drive.real()) ||
        !std::isfinite(p.drive.imag()))
        throw ConfigError("oscillator parameters must be finite");
}

/// Appends triplets of scale * kron(A, B) to trip.
inline void add_kron(std::vector<Eigen::Triplet<cplx>>& trip, const SparseC& A,
                     const SparseC& B, cplx scale) {
    for (int ka = 0; ka < A.outerSize(); ++ka)
        for (SparseC::InnerIterator ia(A, ka); ia; ++ia)
            for (int kb = 0; kb < B.outerSize(); ++kb)
                for (SparseC::InnerIterator ib(B, kb); ib; ++ib)
                    trip.emplace_back(ia.row() * B.rows() + ib.row(),
                                      ia.col() * B.cols() + ib.col(),
                                      scale * ia.value() * ib.value());
}

/// Appends the superoperator of a single dissipation channel,
/// rate * (2 conj(o) (x) o - I (x) o'o - (o'o)^T (x) I),
/// in the column-stacking convention vec(A rho B) = (B^T (x) A) vec(rho).
inline void add_dissipator(std::vector<Eigen::Triplet<cplx>>& trip,
                           const SparseC& o, double rate) {
    long D = o.rows();
    SparseC oc = o.conjugate();
    SparseC odo = SparseC(o.adjoint()) * o;
    SparseC I = sparse_identity(D);
    add_kron(trip, oc, o, 2.0 * rate);
    add_kron(trip, I, odo, -rate);
    add_kron(trip, SparseC(odo.transpose()), I, -rate);
}

}  // namespace detail

/// Lindblad dissipator as a standalone superoperator. This codebase's
/// convention includes the overall factor 2:
/// D[o] rho = 2 o rho o' - o'o rho - rho o'o.
inline SparseC dissipator(const SparseC& o) {
    if (o.rows() != o.cols())
        throw ConfigError("dissipator: jump operator must be square");
    std::vector<Eigen::Triplet<cplx>> trip;
    detail::add_dissipator(trip, o, 1.0);
    SparseC out(o.rows() * o.rows(), o.rows() * o.rows());
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

/// H = sum_n (omega a'_n a_n + drive a_n + conj(drive) a'_n).
inline SparseC build_hamiltonian(const OscillatorParams& p, const FockConfig& fock) {
    detail::validate_rates(p);
    fock.validate();
    SparseC a1 = annihilation(fock.cutoff);
    SparseC n1 = SparseC(a1.adjoint()) * a1;
    SparseC h1 = SparseC(p.omega * n1) + SparseC(p.drive * a1) +
                 SparseC(std::conj(p.drive) * SparseC(a1.adjoint()));
    SparseC H(fock.dim(), fock.dim());
    for (long m = 0; m < fock.n_modes; ++m)
        H = H + embed_mode(h1, m, fock.n_modes, fock.cutoff);
    H.makeCompressed();
    return H;
}

/// Vectorized generator of the master equation. `matrix` acts on
/// column-stacked density matrices: vec index j*dim + i addresses rho(i, j).
struct Liouvillian {
    FockConfig fock;
    OscillatorParams params;
    CouplingSpec coupling;
    SparseC matrix;
    std::string vectorization = "column-stacking";
    /// When the Hamiltonian is diagonal (drive == 0) the coherent part of
    /// `matrix` is -i * diag(ham_diag); empty otherwise.
    Eigen::VectorXd ham_diag;

    bool hamiltonian_diagonal() const { return ham_diag.size() > 0; }
    long dim() const { return fock.dim(); }
    long superop_dim() const { return fock.superop_dim(); }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const { return matrix * v; }

    /// Dissipative part alone (coherent diagonal removed). Only valid when
    /// the Hamiltonian is diagonal.
    Eigen::VectorXcd apply_dissipative(const Eigen::VectorXcd& v) const {
        if (!hamiltonian_diagonal())
            throw NumericalError("dissipative split requires a diagonal Hamiltonian");
        Eigen::VectorXcd w = matrix * v;
        w.array() += cplx(0.0, 1.0) * ham_diag.array() * v.array();
        return w;
    }

    /// Max column sum of absolute values (induced 1-norm).
    double one_norm() const {
        double best = 0.0;
        for (int k = 0; k < matrix.outerSize(); ++k) {
            double s = 0.0;
            for (SparseC::InnerIterator it(matrix, k); it; ++it)
                s += std::abs(it.value());
            best = std::max(best, s);
        }
        return best;
    }
};

inline LiouvillianSizing estimate_sizing(const OscillatorParams& p,
                                         const CouplingSpec& c,
                                         const FockConfig& fock) {
    fock.validate();
    LiouvillianSizing s;
    s.hilbert_dim = fock.dim();
    s.superop_dim = fock.superop_dim();
    long d = fock.cutoff, N = fock.n_modes, D = s.hilbert_dim;
    // Count triplets from the Hilbert-space factors before any
    // superoperator-sized allocation: D[o] vectorizes to
    // 2 conj(o) (x) o - I (x) o'o - (o'o)^T (x) I, i.e.
    // nnz(o)^2 + 2 D nnz(o'o) entries, and the coherent part to 2 D nnz(H).
    SparseC a1 = annihilation(d);
    auto diss_nnz = [D](const SparseC& o) {
        SparseC oo = SparseC(o.adjoint() * o).pruned();
        return o.nonZeros() * o.nonZeros() + 2 * D * oo.nonZeros();
    };
    long nnz = 0;
    for (long m = 0; m < N; ++m) {
        SparseC am = embed_mode(a1, m, N, d);
        nnz += diss_nnz(SparseC(am.adjoint()));  // gain
        nnz += diss_nnz(SparseC(am * am));       // two-quantum loss
    }
    if (N > 1 && c.mu > 0.0)
        for (long m = 0; m < N; ++m)
            for (long nn = m + 1; nn < N; ++nn)
                nnz += diss_nnz(SparseC(embed_mode(a1, m, N, d) -
                                        embed_mode(a1, nn, N, d)));
    nnz += 2 * D * build_hamiltonian(p, fock).nonZeros();
    s.est_nonzeros = nnz;
    // triplet buffer (24 B) coexists with the compressed matrix (~20 B/entry)
    s.est_bytes = double(s.est_nonzeros) * 44.0;
    return s;
}

inline Liouvillian build_liouvillian(const OscillatorParams& p,
                                     const CouplingSpec& c,
                                     const FockConfig& fock) {
    detail::validate_rates(p);
    c.validate();
    fock.validate();
    LiouvillianSizing sz = estimate_sizing(p, c, fock);
    if (sz.est_bytes > fock.mem_budget_bytes)
        throw SizingError("liouvillian estimated at " +
                              format_double(sz.est_bytes) + " bytes, budget " +
                              format_double(fock.mem_budget_bytes),
                          sz.superop_dim);

    long D = fock.dim();
    long N = fock.n_modes, d = fock.cutoff;
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(std::size_t(sz.est_nonzeros));

    SparseC a1 = annihilation(d);
    SparseC I = sparse_identity(D);

    // coherent part: -i (I (x) H - H^T (x) I)
    SparseC H = build_hamiltonian(p, fock);
    detail::add_kron(trip, I, H, cplx(0.0, -1.0));
    detail::add_kron(trip, SparseC(H.transpose()), I, cplx(0.0, 1.0));

    // local gain and two-quantum loss
    for (long m = 0; m < N; ++m) {
        SparseC am = embed_mode(a1, m, N, d);
        detail::add_dissipator(trip, SparseC(am.adjoint()), p.kappa1);
        detail::add_dissipator(trip, SparseC(am * am), p.kappa2);
    }

    // pairwise dissipative coupling, rate mu_mn / calN
    if (N > 1 && c.mu > 0.0) {
        Eigen::MatrixXd mu = coupling_matrix(c, N);
        double norm = normalization(c, N);
        for (long m = 0; m < N; ++m)
            for (long n = m + 1; n < N; ++n) {
                SparseC jump = SparseC(embed_mode(a1, m, N, d) -
                                       embed_mode(a1, n, N, d));
                detail::add_dissipator(trip, jump, mu(m, n) / norm);
            }
    }

    Liouvillian L;
    L.fock = fock;
    L.params = p;
    L.coupling = c;
    L.matrix.resize(D * D, D * D);
    L.matrix.setFromTriplets(trip.begin(), trip.end());
    L.matrix.makeCompressed();

    if (p.drive == cplx(0.0)) {
        // total occupation of the multi-index Fock state at Hilbert index i
        Eigen::VectorXd occ(D);
        for (long i = 0; i < D; ++i) {
            long rest = i, tot = 0;
            for (long m = 0; m < N; ++m) {
                tot += rest % d;
                rest /= d;
            }
            occ[i] = double(tot);
        }
        L.ham_diag.resize(D * D);
        for (long j = 0; j < D; ++j)
            for (long i = 0; i < D; ++i)
                L.ham_diag[j * D + i] = p.omega * (occ[i] - occ[j]);
    }
    return L;
}

/// Eigenvalues sorted by descending real part, with residuals ||L x - lambda x||
/// for the returned unit-norm eigenvectors.
struct SpectrumResult {
    Eigen::VectorXcd eigenvalues;
    Eigen::VectorXd residuals;
    Eigen::MatrixXcd eigenvectors;  ///< columns match eigenvalues; may be empty
    std::string method;
};

}  // namespace tcvdp

#include "tcvdp/eig.hpp"

namespace tcvdp {

/// Eigensolver entry point. Dense below superoperator dimension 4096,
/// filtered-Arnoldi iteration above (requires a diagonal Hamiltonian).
inline SpectrumResult spectrum(const Liouvillian& L, long k,
                               IterativeEigOptions opts = {}) {
    if (k < 1) throw ConfigError("spectrum: k must be >= 1");
    long n = L.superop_dim();
    k = std::min(k, n);
    if (n <= 4096) return detail::dense_spectrum(L, k);
    return detail::iterative_spectrum(L, k, opts);
}

/// Reshape a superoperator-space vector into the density matrix it stacks.
inline Eigen::MatrixXcd unstack(const Eigen::VectorXcd& v, long dim) {
    if (v.size() != dim * dim)
        throw NumericalError("unstack: vector length does not match dimension");
    return Eigen::Map<const Eigen::MatrixXcd>(v.data(), dim, dim);
}

namespace detail {

/// Fast steady-state solve: replace the d/dt rho(0,0) row of L with the
/// trace-normalization row and solve the resulting nonsingular system.
/// No degeneracy diagnostics; used where only the state is needed.
inline Eigen::MatrixXcd steady_state_solve(const Liouvillian& L) {
    long D = L.dim(), n = L.superop_dim();
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(std::size_t(L.matrix.nonZeros()) + std::size_t(D));
    for (int k = 0; k < L.matrix.outerSize(); ++k)
        for (SparseC::InnerIterator it(L.matrix, k); it; ++it)
            if (it.row() != 0) trip.emplace_back(it.row(), it.col(), it.value());
    for (long i = 0; i < D; ++i) trip.emplace_back(0, i * D + i, cplx(1.0));
    SparseC A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    Eigen::SparseLU<SparseC> lu(A);
    if (lu.info() != Eigen::Success)
        throw NumericalError("steady-state linear solve failed (singular system)");
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n);
    rhs[0] = 1.0;
    Eigen::VectorXcd v = lu.solve(rhs);
    Eigen::MatrixXcd rho = unstack(v, D);
    rho = 0.5 * (rho + rho.adjoint().eval());
    rho /= rho.trace().real();
    return rho;
}

}  // namespace detail

/// Null vector of L as a physical density matrix: Hermitized, trace one,
/// positive semidefinite to 1e-10. Throws DegenerateSteadyStateError when
/// the kernel is not one-dimensional.
inline Eigen::MatrixXcd steady_state(const Liouvillian& L,
                                     IterativeEigOptions opts = {}) {
    long n = L.superop_dim();
    long k = std::min<long>(6, n);
    SpectrumResult sp = spectrum(L, k, opts);
    double scale = std::max(1.0, L.one_norm());
    long null_count = 0;
    long best = -1;
    for (long i = 0; i < sp.eigenvalues.size(); ++i)
        if (std::abs(sp.eigenvalues[i]) < 1e-9 * scale) {
            ++null_count;
            if (best < 0) best = i;
        }
    if (null_count == 0)
        throw NumericalError("no zero eigenvalue found (closest " +
                             format_double(std::abs(sp.eigenvalues[0])) + ")");
    if (null_count > 1)
        throw DegenerateSteadyStateError(
            "degenerate null space: " + std::to_string(null_count) +
            " eigenvalues within tolerance of zero");
    Eigen::MatrixXcd rho = unstack(sp.eigenvectors.col(best), L.dim());
    rho = 0.5 * (rho + rho.adjoint().eval());
    cplx tr = rho.trace();
    if (std::abs(tr) < 1e-12)
        throw NumericalError("null vector has vanishing trace");
    rho /= tr;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho,
                                                       Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw NumericalError("steady state not positive semidefinite: min "
                             "eigenvalue " +
                             format_double(es.eigenvalues().minCoeff()));
    return rho;
}

/// Integrates d(rho)/dt = L rho with an embedded Dormand-Prince 5(4) pair
/// and PI step-size control, returning rho at each requested time. Grid
/// points are hit exactly (no dense output interpolation).
inline std::vector<Eigen::MatrixXcd> evolve_rho(const Eigen::MatrixXcd& rho0,
                                                const Liouvillian& L,
                                                const std::vector<double>& t_grid,
                                                double rtol = 1e-12,
                                                double atol = 1e-13) {
    long D = L.dim();
    if (rho0.rows() != D || rho0.cols() != D)
        throw ConfigError("evolve_rho: initial state dimension mismatch");
    if (std::abs(rho0.trace() - cplx(1.0)) > 1e-8)
        throw ConfigError("evolve_rho: initial state must have unit trace");
    if ((rho0 - rho0.adjoint()).norm() > 1e-8)
        throw ConfigError("evolve_rho: initial state must be Hermitian");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1]))
            throw ConfigError("evolve_rho: time grid must be strictly increasing");

    Eigen::VectorXcd y = Eigen::Map<const Eigen::VectorXcd>(rho0.data(), D * D);
    double t = 0.0;
    double scale = std::max(1.0, L.one_norm());
    double h = std::min(0.1, 0.1 / scale);

    // Dormand-Prince RK5(4)7M tableau
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                        a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 35.0 / 384 - 5179.0 / 57600,
                        e3 = 500.0 / 1113 - 7571.0 / 16695,
                        e4 = 125.0 / 192 - 393.0 / 640,
                        e5 = -2187.0 / 6784 + 92097.0 / 339200,
                        e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

    std::vector<Eigen::MatrixXcd> out;
    out.reserve(t_grid.size());
    Eigen::VectorXcd k1 = L.apply(y);

    for (double target : t_grid) {
        if (target <= t + 1e-14 * std::max(1.0, t)) {
            if (std::abs(target - t) > 1e-10)
                throw ConfigError("evolve_rho: non-monotone target time");
            out.push_back(unstack(y, D));
            continue;
        }
        while (t < target) {
            bool clipped = false;
            if (t + h >= target) {
                h = target - t;
                clipped = true;
            }
            Eigen::VectorXcd k2 = L.apply(y + h * (a21 * k1));
            Eigen::VectorXcd k3 = L.apply(y + h * (a31 * k1 + a32 * k2));
            Eigen::VectorXcd k4 = L.apply(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
            Eigen::VectorXcd k5 =
                L.apply(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
            Eigen::VectorXcd k6 = L.apply(
                y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
            Eigen::VectorXcd ynew =
                y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            Eigen::VectorXcd k7 = L.apply(ynew);
            Eigen::VectorXcd err =
                h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            double tol = atol + rtol * std::max(y.norm(), ynew.norm());
            double ratio = err.norm() / tol;
            if (ratio <= 1.0) {
                t = clipped ? target : t + h;
                y = ynew;
                k1 = k7;  // first-same-as-last
            }
            double grow = (ratio > 0.0) ? 0.9 * std::pow(ratio, -0.2) : 5.0;
            h *= std::clamp(grow, 0.2, 5.0);
            if (h < 1e-12 * std::max(1.0, std::abs(t)))
                throw NumericalError("evolve_rho: step control failed at t = " +
                                     format_double(t));
        }
        out.push_back(unstack(y, D));
    }
    return out;
}

/// Cutoff adequacy report: terminal-level population of the single-mode
/// steady state at cutoff d, and its trace distance to the steady state
/// recomputed at cutoff d+4.
struct CutoffReport {
    long cutoff = 0;
    double terminal_population = 0;
    double drift = 0;
    bool adequate = false;
};

inline double trace_distance(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A - B,
                                                       Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline CutoffReport validate_cutoff(const OscillatorParams& p, long d) {
    CutoffReport rep;
    rep.cutoff = d;
    CouplingSpec none;
    none.mu = 0.0;
    if (p.kappa1 == 0.0) {
        // pure loss: vacuum steady state at any cutoff
        rep.adequate = d >= 2;
        return rep;
    }
    FockConfig f1{d, 1};
    FockConfig f2{d + 4, 1};
    Eigen::MatrixXcd r1 = detail::steady_state_solve(build_liouvillian(p, none, f1));
    Eigen::MatrixXcd r2 = detail::steady_state_solve(build_liouvillian(p, none, f2));
    rep.terminal_population = r1(d - 1, d - 1).real();
    Eigen::MatrixXcd r1pad = Eigen::MatrixXcd::Zero(d + 4, d + 4);
    r1pad.topLeftCorner(d, d) = r1;
    rep.drift = trace_distance(r1pad, r2);
    rep.adequate = rep.terminal_population < 1e-6 && rep.drift < 1e-8;
    return rep;
}

/// Smallest adequate cutoff in [d_min, d_max].
inline long choose_cutoff(const OscillatorParams& p, long d_min = 4,
                          long d_max = 64) {
    for (long d = d_min; d <= d_max; ++d)
        if (validate_cutoff(p, d).adequate) return d;
    throw SizingError("no adequate Fock cutoff found below limit", d_max);
}

}  // namespace tcvdp

#endif

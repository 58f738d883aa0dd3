#ifndef TCVDP_FOCK_HPP
#define TCVDP_FOCK_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>

#include "tcvdp/common.hpp"

namespace tcvdp {

using SparseC = Eigen::SparseMatrix<cplx>;

/// Bosonic annihilation operator truncated to d Fock levels: entries
/// sqrt(k) at (k-1, k), 0-based.
inline SparseC annihilation(long d) {
    if (d < 2) throw ConfigError("annihilation: cutoff must be >= 2");
    SparseC a(d, d);
    a.reserve(Eigen::VectorXi::Constant(d, 1));
    for (long k = 1; k < d; ++k) a.insert(k - 1, k) = std::sqrt(double(k));
    a.makeCompressed();
    return a;
}

inline Eigen::MatrixXcd annihilation_dense(long d) {
    return Eigen::MatrixXcd(annihilation(d));
}

/// Kronecker product, A as the most significant factor.
inline SparseC kron(const SparseC& A, const SparseC& B) {
    SparseC out(A.rows() * B.rows(), A.cols() * B.cols());
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(std::size_t(A.nonZeros()) * std::size_t(B.nonZeros()));
    for (int ka = 0; ka < A.outerSize(); ++ka)
        for (SparseC::InnerIterator ia(A, ka); ia; ++ia)
            for (int kb = 0; kb < B.outerSize(); ++kb)
                for (SparseC::InnerIterator ib(B, kb); ib; ++ib)
                    trip.emplace_back(ia.row() * B.rows() + ib.row(),
                                      ia.col() * B.cols() + ib.col(),
                                      ia.value() * ib.value());
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

inline SparseC sparse_identity(long n) {
    SparseC I(n, n);
    I.setIdentity();
    return I;
}

/// Embeds a single-mode operator at tensor slot `mode` (0-based, mode 0 is
/// the most significant index) of an N-mode space with per-mode dimension d.
inline SparseC embed_mode(const SparseC& op, long mode, long n_modes, long d) {
    if (mode < 0 || mode >= n_modes)
        throw ConfigError("embed_mode: mode index out of range");
    long left = 1, right = 1;
    for (long k = 0; k < mode; ++k) left *= d;
    for (long k = mode + 1; k < n_modes; ++k) right *= d;
    SparseC out = op;
    if (left > 1) out = kron(sparse_identity(left), out);
    if (right > 1) out = kron(out, sparse_identity(right));
    return out;
}

}  // namespace tcvdp

#endif

#ifndef TCVDP_SDE_HPP
#define TCVDP_SDE_HPP

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include "tcvdp/common.hpp"
#include "tcvdp/model.hpp"
#include "tcvdp/rng.hpp"

namespace tcvdp {

/// Amplitudes of one stochastic trajectory at one instant.
struct TrajectoryState {
    Eigen::VectorXcd amplitudes;
    double time = 0.0;
};

/// Coupling matrix together with its normalization factor.
struct CouplingMatrix {
    Eigen::MatrixXd mu;  ///< mu_mn, zero diagonal, symmetric
    double norm = 1.0;   ///< calN(gamma)

    static CouplingMatrix build(const CouplingSpec& spec, long n_osc) {
        return {coupling_matrix(spec, n_osc), normalization(spec, n_osc)};
    }
};

/// Per-time ensemble statistics accumulated over trajectories. The error
/// mode is o_- = (o_1 - mean of the rest) / sqrt(2) for o in {q, p} with
/// q = sqrt(2) Re a, p = sqrt(2) Im a.
struct EnsembleRecord {
    Eigen::VectorXd times;
    Eigen::VectorXcd mean_field;     ///< <(1/N) sum_n a_n>_traj
    Eigen::VectorXcd a1_mean;        ///< <a_1>
    Eigen::VectorXd a1_abs2;         ///< <|a_1|^2>
    Eigen::VectorXcd a1_phase_mean;  ///< <exp(i arg a_1)>
    Eigen::VectorXd low_modulus_frac;
    Eigen::VectorXd err_q_mean, err_p_mean;
    Eigen::VectorXd err_q2, err_p2;  ///< second moments of the error mode
    Eigen::VectorXd err_q4, err_p4;
    Eigen::VectorXd site_abs2;       ///< site-averaged <|a_n|^2>
    Eigen::MatrixXcd site_mean;      ///< per-site <a_n>; empty unless requested
    std::vector<double> snapshot_times;
    std::vector<Eigen::MatrixXcd> snapshots;  ///< n_traj x N amplitude dumps
    long n_traj = 0;
    long n_osc = 0;
    long n_diverged = 0;

    long n_records() const { return times.size(); }

    /// Index of a recorded time, or error if t is off-grid.
    long time_index(double t) const {
        double dtr = times.size() > 1 ? times[1] - times[0] : 1.0;
        for (long i = 0; i < times.size(); ++i)
            if (std::abs(times[i] - t) <= 1e-9 * std::max(1.0, std::abs(dtr)))
                return i;
        throw ConfigError("time " + format_double(t) + " is not on the recorded grid");
    }
};

/// Knobs that are not part of the physical configuration.
struct SdeOptions {
    int workers = 1;
    bool record_per_site = false;
    bool disable_noise = false;      ///< deterministic-limit diagnostics
    double test_noise_amp = 0.0;     ///< extra calibration noise channel
    std::vector<double> snapshot_times;
    std::vector<std::uint32_t> channel_perm;  ///< diagnostic channel relabeling
    long block_size = 32;            ///< trajectories per reduction block
    double max_diverged_fraction = 1e-3;
};

constexpr std::uint32_t kTestNoiseChannelBase = 1u << 30;

/// Langevin integrator for the coupled van der Pol array.
///
/// Scheme: Euler-Maruyama on the gain/loss/coupling part combined with an
/// exact phase rotation exp(-i omega dt) applied after each step. The
/// rotation commutes with the rest of the drift statistics, and splitting
/// it out removes the O(omega^2 dt) amplitude bias of the plain explicit
/// update at the default step size. The noise is additive, so the scheme
/// retains strong order 1.
class Integrator {
public:
    Integrator(const OscillatorParams& params, const CouplingMatrix& coupling,
               const EnsembleConfig& cfg, SdeOptions opts = {})
        : p_(params), cpl_(coupling), cfg_(cfg), opts_(std::move(opts)),
          rng_(cfg.seed) {
        p_.validate();
        n_ = cfg_.n_osc;
        if (cpl_.mu.rows() != n_ || cpl_.mu.cols() != n_)
            throw ConfigError("coupling matrix size does not match n_osc");
        rot_ = std::exp(cplx(0.0, -p_.omega * cfg_.dt));
        sigma_local_ = std::sqrt(3.0 * p_.kappa1 + 2.0 * p_.kappa2);
        uniform_ = true;
        double w0 = n_ > 1 ? cpl_.mu(0, 1) : 0.0;
        for (long m = 0; m < n_ && uniform_; ++m)
            for (long k = 0; k < n_; ++k)
                if (m != k && std::abs(cpl_.mu(m, k) - w0) > 1e-14 * (1.0 + w0))
                    uniform_ = false;
        if (uniform_) {
            w_ = w0 / cpl_.norm;
            double c2 = w_ * double(n_) / 4.0;  // collapsed pair-noise variance
            noise_a_ = std::sqrt(sigma_local_ * sigma_local_ + c2);
            noise_b_ = sigma_local_ - noise_a_;
        } else {
            for (long m = 0; m < n_; ++m)
                for (long k = m + 1; k < n_; ++k)
                    if (cpl_.mu(m, k) > 0.0)
                        pairs_.push_back({m, k, std::sqrt(cpl_.mu(m, k) / cpl_.norm)});
            if (!opts_.channel_perm.empty())
                throw ConfigError("channel_perm requires a uniform coupling matrix");
        }
        if (!opts_.channel_perm.empty() &&
            long(opts_.channel_perm.size()) != n_)
            throw ConfigError("channel_perm size must equal n_osc");
        double r0 = p_.limit_cycle_radius();
        divergence_threshold_ = 100.0 * std::max(r0, 1.0);
    }

    /// Deterministic part of Eq.-of-motion for each oscillator:
    /// -i omega a_n - i conj(drive) + a_n (k1 - 2 k2 |a_n|^2)
    /// + sum_m (mu_mn / calN) (a_m - a_n).
    Eigen::VectorXcd drift(const TrajectoryState& s) const {
        Eigen::VectorXcd g = gain_loss_coupling(s.amplitudes);
        g -= cplx(0.0, p_.omega) * s.amplitudes;
        return g;
    }

    /// One stochastic step. The random increments are addressed by
    /// (seed, traj, step_index, channel); channels 0..N-1 carry the local
    /// plus collapsed pair noise (uniform coupling) or the local noise only
    /// (general coupling, pair channels follow at N, N+1, ...).
    void step(TrajectoryState& s, std::uint64_t traj, std::uint64_t step_index,
              Eigen::VectorXcd& scratch) const {
        const double dt = cfg_.dt;
        scratch = gain_loss_coupling(s.amplitudes);
        s.amplitudes += dt * scratch;
        if (!opts_.disable_noise) add_noise(s.amplitudes, traj, step_index);
        if (opts_.test_noise_amp != 0.0) {
            double amp = opts_.test_noise_amp * std::sqrt(dt);
            for (long i = 0; i < n_; ++i)
                s.amplitudes[i] += amp * rng_.complex_normal(
                    traj, step_index, kTestNoiseChannelBase + std::uint32_t(i));
        }
        s.amplitudes *= rot_;
        s.time = double(step_index + 1) * dt;
        for (long i = 0; i < n_; ++i) {
            double m2 = std::norm(s.amplitudes[i]);
            if (!std::isfinite(m2) || m2 > divergence_threshold_ * divergence_threshold_)
                throw DivergenceError(long(traj), s.time);
        }
    }

    /// Synchronized limit-cycle initial condition: a_n(0) = R0 for every
    /// oscillator and every trajectory, so |r(0)| is maximal and its decay
    /// is measurable.
    TrajectoryState initial_state() const {
        TrajectoryState s;
        s.amplitudes = Eigen::VectorXcd::Constant(n_, cplx(p_.limit_cycle_radius(), 0.0));
        s.time = 0.0;
        return s;
    }

    /// Integrates one trajectory, returning states at the recording stride
    /// (t = 0 included).
    std::vector<TrajectoryState> simulate_trajectory(std::uint64_t traj) const {
        std::vector<TrajectoryState> out;
        TrajectoryState s = initial_state();
        out.push_back(s);
        long steps = cfg_.n_steps();
        Eigen::VectorXcd scratch(n_);
        for (long k = 0; k < steps; ++k) {
            step(s, traj, std::uint64_t(k), scratch);
            if ((k + 1) % cfg_.record_stride == 0 || k + 1 == steps)
                out.push_back(s);
        }
        return out;
    }

    EnsembleRecord simulate_ensemble() const;

    long n_osc() const { return n_; }
    const EnsembleConfig& config() const { return cfg_; }
    const OscillatorParams& params() const { return p_; }
    double divergence_threshold() const { return divergence_threshold_; }

private:
    Eigen::VectorXcd gain_loss_coupling(const Eigen::VectorXcd& a) const {
        Eigen::VectorXcd g(n_);
        const cplx drive_term = cplx(0.0, -1.0) * std::conj(p_.drive);
        if (uniform_) {
            cplx sum = a.sum();
            for (long i = 0; i < n_; ++i) {
                double m2 = std::norm(a[i]);
                g[i] = drive_term + a[i] * (p_.kappa1 - 2.0 * p_.kappa2 * m2) +
                       w_ * (sum - double(n_) * a[i]);
            }
        } else {
            for (long i = 0; i < n_; ++i) {
                double m2 = std::norm(a[i]);
                cplx c = 0.0;
                for (long m = 0; m < n_; ++m)
                    if (m != i) c += cpl_.mu(m, i) / cpl_.norm * (a[m] - a[i]);
                g[i] = drive_term + a[i] * (p_.kappa1 - 2.0 * p_.kappa2 * m2) + c;
            }
        }
        return g;
    }

    void add_noise(Eigen::VectorXcd& a, std::uint64_t traj,
                   std::uint64_t step_index) const {
        const double sq = std::sqrt(cfg_.dt);
        if (uniform_) {
            // Local and pair noise drawn as one channel per oscillator:
            // A eta_n + B etabar reproduces the exact joint law of
            // sigma_local dW_n + sum_pairs +-sqrt(mu/calN) dZ / 2.
            cplx mean = 0.0;
            Eigen::VectorXcd eta(n_);
            for (long i = 0; i < n_; ++i) {
                std::uint32_t ch = opts_.channel_perm.empty()
                                       ? std::uint32_t(i)
                                       : opts_.channel_perm[i];
                eta[i] = sq * rng_.complex_normal(traj, step_index, ch);
                mean += eta[i];
            }
            mean /= double(n_);
            for (long i = 0; i < n_; ++i)
                a[i] += noise_a_ * eta[i] + noise_b_ * mean;
        } else {
            for (long i = 0; i < n_; ++i)
                a[i] += sigma_local_ * sq *
                        rng_.complex_normal(traj, step_index, std::uint32_t(i));
            for (std::size_t k = 0; k < pairs_.size(); ++k) {
                const auto& pr = pairs_[k];
                cplx dz = sq * rng_.complex_normal(traj, step_index,
                                                   std::uint32_t(n_ + long(k)));
                // antisymmetric injection: +dZ/2 into n, -dZ/2 into m (m<n)
                a[pr.n] += 0.5 * pr.amp * dz;
                a[pr.m] -= 0.5 * pr.amp * dz;
            }
        }
    }

    struct Pair {
        long m, n;
        double amp;  ///< sqrt(mu_mn / calN)
    };

    OscillatorParams p_;
    CouplingMatrix cpl_;
    EnsembleConfig cfg_;
    SdeOptions opts_;
    NoiseStream rng_;
    long n_ = 0;
    cplx rot_;
    double sigma_local_ = 0.0;
    bool uniform_ = true;
    double w_ = 0.0;
    double noise_a_ = 0.0, noise_b_ = 0.0;
    std::vector<Pair> pairs_;
    double divergence_threshold_ = 0.0;
};

namespace detail {

/// Per-block partial sums; merged in block order so the reduction is
/// independent of the worker count.
struct BlockAccumulator {
    Eigen::VectorXcd mean_field, a1, phase;
    Eigen::VectorXd a1_abs2, low_count, site_abs2;
    Eigen::VectorXd eq, ep, eq2, ep2, eq4, ep4;
    Eigen::MatrixXcd site_mean;
    long n_ok = 0, n_diverged = 0;

    void init(long n_rec, long n_osc, bool per_site) {
        mean_field = Eigen::VectorXcd::Zero(n_rec);
        a1 = Eigen::VectorXcd::Zero(n_rec);
        phase = Eigen::VectorXcd::Zero(n_rec);
        a1_abs2 = Eigen::VectorXd::Zero(n_rec);
        low_count = Eigen::VectorXd::Zero(n_rec);
        site_abs2 = Eigen::VectorXd::Zero(n_rec);
        eq = ep = eq2 = ep2 = eq4 = ep4 = Eigen::VectorXd::Zero(n_rec);
        if (per_site) site_mean = Eigen::MatrixXcd::Zero(n_rec, n_osc);
    }
};

}  // namespace detail

inline EnsembleRecord Integrator::simulate_ensemble() const {
    const long n_traj = cfg_.n_traj;
    const long steps = cfg_.n_steps();
    const long stride = cfg_.record_stride;
    std::vector<long> rec_steps;  // step indices that get recorded
    rec_steps.push_back(0);
    for (long k = stride; k < steps; k += stride) rec_steps.push_back(k);
    rec_steps.push_back(steps);
    const long n_rec = long(rec_steps.size());

    EnsembleRecord rec;
    rec.n_traj = n_traj;
    rec.n_osc = n_;
    rec.times.resize(n_rec);
    for (long i = 0; i < n_rec; ++i) rec.times[i] = rec_steps[i] * cfg_.dt;

    // Map snapshot times onto the recorded grid.
    std::vector<long> snap_idx;
    for (double t : opts_.snapshot_times) {
        long best = 0;
        for (long i = 0; i < n_rec; ++i)
            if (std::abs(rec.times[i] - t) < std::abs(rec.times[best] - t)) best = i;
        snap_idx.push_back(best);
        rec.snapshot_times.push_back(rec.times[best]);
        rec.snapshots.emplace_back(Eigen::MatrixXcd::Zero(n_traj, n_));
    }

    const long block = std::max<long>(1, opts_.block_size);
    const long n_blocks = (n_traj + block - 1) / block;
    std::vector<detail::BlockAccumulator> acc(n_blocks);

    const double low_threshold = 1e-3 * std::max(p_.limit_cycle_radius(), 1e-6);

    auto run_block = [&](long b) {
        detail::BlockAccumulator& A = acc[b];
        A.init(n_rec, n_, opts_.record_per_site);
        const long t0 = b * block, t1 = std::min(n_traj, (b + 1) * block);
        Eigen::VectorXcd scratch(n_);
        // Scratch rows: one trajectory's contribution per recorded time,
        // committed only if the trajectory stays finite.
        Eigen::MatrixXcd c_cplx(n_rec, 3);             // mean field, a1, phase
        Eigen::MatrixXd c_real(n_rec, 9);
        Eigen::MatrixXcd c_site;
        if (opts_.record_per_site) c_site.resize(n_rec, n_);
        std::vector<Eigen::VectorXcd> c_snap(snap_idx.size());

        for (long traj = t0; traj < t1; ++traj) {
            TrajectoryState s = initial_state();
            bool ok = true;
            long r = 0;
            auto record_row = [&](long ri) {
                const auto& a = s.amplitudes;
                cplx mf = a.sum() / double(n_);
                c_cplx(ri, 0) = mf;
                c_cplx(ri, 1) = a[0];
                double m1 = std::abs(a[0]);
                bool low = m1 < low_threshold;
                c_cplx(ri, 2) = low ? cplx(0, 0) : a[0] / m1;
                c_real(ri, 0) = std::norm(a[0]);
                c_real(ri, 1) = low ? 1.0 : 0.0;
                c_real(ri, 2) = a.squaredNorm() / double(n_);
                if (n_ >= 2) {
                    // (q_1 - mean rest)/sqrt(2) with q = sqrt(2) Re a: the
                    // sqrt(2) factors cancel.
                    cplx rest = (a.sum() - a[0]) / double(n_ - 1);
                    double qe = a[0].real() - rest.real();
                    double pe = a[0].imag() - rest.imag();
                    c_real(ri, 3) = qe;
                    c_real(ri, 4) = pe;
                    c_real(ri, 5) = qe * qe;
                    c_real(ri, 6) = pe * pe;
                    c_real(ri, 7) = qe * qe * qe * qe;
                    c_real(ri, 8) = pe * pe * pe * pe;
                } else {
                    c_real.row(ri).segment(3, 6).setZero();
                }
                if (opts_.record_per_site) c_site.row(ri) = a.transpose();
                for (std::size_t si = 0; si < snap_idx.size(); ++si)
                    if (snap_idx[si] == ri) c_snap[si] = a;
            };
            try {
                record_row(r++);
                for (long k = 0; k < steps; ++k) {
                    step(s, std::uint64_t(traj), std::uint64_t(k), scratch);
                    if (r < n_rec && k + 1 == rec_steps[r]) record_row(r++);
                }
            } catch (const DivergenceError&) {
                ok = false;
            }
            if (!ok) {
                ++A.n_diverged;
                continue;
            }
            ++A.n_ok;
            A.mean_field += c_cplx.col(0);
            A.a1 += c_cplx.col(1);
            A.phase += c_cplx.col(2);
            A.a1_abs2 += c_real.col(0);
            A.low_count += c_real.col(1);
            A.site_abs2 += c_real.col(2);
            A.eq += c_real.col(3);
            A.ep += c_real.col(4);
            A.eq2 += c_real.col(5);
            A.ep2 += c_real.col(6);
            A.eq4 += c_real.col(7);
            A.ep4 += c_real.col(8);
            if (opts_.record_per_site) A.site_mean += c_site;
            for (std::size_t si = 0; si < snap_idx.size(); ++si)
                rec.snapshots[si].row(traj) = c_snap[si].transpose();
        }
    };

    int workers = std::max(1, opts_.workers);
    if (workers == 1) {
        for (long b = 0; b < n_blocks; ++b) run_block(b);
    } else {
        std::atomic<long> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (long b; (b = next.fetch_add(1)) < n_blocks;) run_block(b);
            });
        for (auto& th : pool) th.join();
    }

    detail::BlockAccumulator total;
    total.init(n_rec, n_, opts_.record_per_site);
    for (const auto& A : acc) {  // fixed merge order: reproducible reduction
        total.mean_field += A.mean_field;
        total.a1 += A.a1;
        total.phase += A.phase;
        total.a1_abs2 += A.a1_abs2;
        total.low_count += A.low_count;
        total.site_abs2 += A.site_abs2;
        total.eq += A.eq;
        total.ep += A.ep;
        total.eq2 += A.eq2;
        total.ep2 += A.ep2;
        total.eq4 += A.eq4;
        total.ep4 += A.ep4;
        if (opts_.record_per_site) total.site_mean += A.site_mean;
        total.n_ok += A.n_ok;
        total.n_diverged += A.n_diverged;
    }

    rec.n_diverged = total.n_diverged;
    if (double(total.n_diverged) > opts_.max_diverged_fraction * double(n_traj) ||
        total.n_ok == 0)
        throw NumericalError(std::to_string(total.n_diverged) + " of " +
                             std::to_string(n_traj) + " trajectories diverged");

    const double inv = 1.0 / double(total.n_ok);
    rec.mean_field = total.mean_field * inv;
    rec.a1_mean = total.a1 * inv;
    rec.a1_phase_mean = total.phase * inv;
    rec.a1_abs2 = total.a1_abs2 * inv;
    rec.low_modulus_frac = total.low_count * inv;
    rec.site_abs2 = total.site_abs2 * inv;
    rec.err_q_mean = total.eq * inv;
    rec.err_p_mean = total.ep * inv;
    rec.err_q2 = total.eq2 * inv;
    rec.err_p2 = total.ep2 * inv;
    rec.err_q4 = total.eq4 * inv;
    rec.err_p4 = total.ep4 * inv;
    if (opts_.record_per_site) rec.site_mean = total.site_mean * inv;
    return rec;
}

/// Convenience wrapper: build the integrator from a full SimConfig and run.
inline EnsembleRecord simulate_ensemble(const SimConfig& cfg, SdeOptions opts = {}) {
    cfg.validate();
    Integrator integ(cfg.osc, CouplingMatrix::build(cfg.coupling, cfg.ensemble.n_osc),
                     cfg.ensemble, std::move(opts));
    return integ.simulate_ensemble();
}

}  // namespace tcvdp

#endif

#ifndef TCVDP_OBSERVABLES_HPP
#define TCVDP_OBSERVABLES_HPP

#include <Eigen/Dense>
#include <fftw3.h>
#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <vector>

#include "tcvdp/common.hpp"
#include "tcvdp/sde.hpp"

namespace tcvdp {

/// Trajectory-averaged, site-averaged mean field r(t) at a recorded time.
inline cplx order_parameter(const EnsembleRecord& rec, double t) {
    return rec.mean_field[rec.time_index(t)];
}

/// Result of an exponential decay fit |r| ~ exp(-Gamma t).
struct DecayFit {
    double gamma_eff = 0.0;
    double r_squared = 0.0;
    double t_start = 0.0, t_end = 0.0;
    long n_points = 0;
};

/// Least-squares line fit of ln|r| against t over [t_start, t_end].
/// Gamma is minus the slope. Requires at least 10 samples in the window
/// and |r| above `floor` throughout.
inline DecayFit fit_gamma(const Eigen::VectorXd& times,
                          const Eigen::VectorXd& abs_r, double t_start,
                          double t_end, double floor = 0.0) {
    if (times.size() != abs_r.size())
        throw ConfigError("fit_gamma: length mismatch");
    std::vector<double> x, y;
    for (long i = 0; i < times.size(); ++i) {
        if (times[i] < t_start || times[i] > t_end) continue;
        if (!(abs_r[i] > 0.0))
            throw FitError("fit_gamma: nonpositive amplitude in window");
        if (abs_r[i] < floor)
            throw FitError("fit_gamma: amplitude below noise floor at t=" +
                           format_double(times[i]));
        x.push_back(times[i]);
        y.push_back(std::log(abs_r[i]));
    }
    if (x.size() < 10)
        throw FitError("fit_gamma: window holds only " +
                       std::to_string(x.size()) + " samples (need >= 10)");
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i]; sy += y[i];
        sxx += x[i] * x[i]; sxy += x[i] * y[i]; syy += y[i] * y[i];
    }
    double vxx = sxx - sx * sx / n;
    double vxy = sxy - sx * sy / n;
    double vyy = syy - sy * sy / n;
    if (!(vxx > 0.0)) throw FitError("fit_gamma: degenerate time window");
    double slope = vxy / vxx;
    DecayFit f;
    f.gamma_eff = -slope;
    f.r_squared = vyy > 0.0 ? (vxy * vxy) / (vxx * vyy) : 1.0;
    f.t_start = x.front();
    f.t_end = x.back();
    f.n_points = long(x.size());
    return f;
}

enum class SpectralWindow { hann, rectangular };

struct PowerSpectrum {
    Eigen::VectorXd freq;   ///< angular frequency grid (units of omega_m)
    Eigen::VectorXd power;  ///< |X_k|^2 / n^2
    double peak_freq = 0.0;
    double peak_power = 0.0;
    double fwhm = 0.0;
    double total_power = 0.0;     ///< sum of power bins
    double mean_sq_signal = 0.0;  ///< (1/n) sum |w_j x_j|^2, Parseval partner
};

/// DFT magnitude-squared of the complex order-parameter series. The series
/// must be uniformly sampled; frequencies are reported as angular
/// frequencies, centered (negative to positive). Hann windowing by default
/// to control leakage.
inline PowerSpectrum power_spectrum(const Eigen::VectorXd& times,
                                    const Eigen::VectorXcd& series,
                                    SpectralWindow window = SpectralWindow::hann) {
    const long n = series.size();
    if (n < 64) throw ConfigError("power_spectrum: need at least 64 samples");
    if (times.size() != n) throw ConfigError("power_spectrum: length mismatch");
    const double dt = times[1] - times[0];
    for (long i = 1; i < n; ++i)
        if (std::abs((times[i] - times[i - 1]) - dt) > 1e-9 * std::max(dt, 1.0))
            throw ConfigError("power_spectrum: non-uniform time grid");

    std::vector<cplx> in(n), out(n);
    for (long i = 0; i < n; ++i) {
        double w = window == SpectralWindow::hann
                       ? 0.5 * (1.0 - std::cos(2.0 * pi * double(i) / double(n - 1)))
                       : 1.0;
        in[i] = w * series[i];
    }

    {
        static std::mutex plan_mutex;  // FFTW planning is not thread safe
        std::lock_guard<std::mutex> lock(plan_mutex);
        fftw_plan plan = fftw_plan_dft_1d(
            int(n), reinterpret_cast<fftw_complex*>(in.data()),
            reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
            FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }

    PowerSpectrum ps;
    ps.freq.resize(n);
    ps.power.resize(n);
    const double dw = 2.0 * pi / (double(n) * dt);
    // fftshift: bin k holds angular frequency k dw, wrapped to (-pi/dt, pi/dt].
    // The series ~ e^{-i w0 t} puts its peak at negative DFT frequency; we
    // report the physical (positive) rotation frequency by negating the axis.
    for (long i = 0; i < n; ++i) {
        long k = i - (i >= (n + 1) / 2 ? n : 0);  // signed bin
        long j = (i + n / 2) % n;                 // shifted position
        ps.freq[j] = -double(k) * dw;
        ps.power[j] = std::norm(out[std::size_t(i)]) / (double(n) * double(n));
    }
    // negating the axis reverses the order; re-sort ascending
    std::vector<long> idx(n);
    for (long i = 0; i < n; ++i) idx[i] = i;
    Eigen::VectorXd f2(n), p2(n);
    std::sort(idx.begin(), idx.end(),
              [&](long a, long b) { return ps.freq[a] < ps.freq[b]; });
    for (long i = 0; i < n; ++i) {
        f2[i] = ps.freq[idx[i]];
        p2[i] = ps.power[idx[i]];
    }
    ps.freq = f2;
    ps.power = p2;

    long pk = 0;
    for (long i = 1; i < n; ++i)
        if (ps.power[i] > ps.power[pk]) pk = i;
    ps.peak_freq = ps.freq[pk];
    ps.peak_power = ps.power[pk];

    // FWHM by linear interpolation of the half-maximum crossings.
    const double half = 0.5 * ps.peak_power;
    double lo = ps.freq[0], hi = ps.freq[n - 1];
    for (long i = pk; i > 0; --i)
        if (ps.power[i - 1] < half) {
            double frac = (ps.power[i] - half) / (ps.power[i] - ps.power[i - 1]);
            lo = ps.freq[i] - frac * (ps.freq[i] - ps.freq[i - 1]);
            break;
        }
    for (long i = pk; i < n - 1; ++i)
        if (ps.power[i + 1] < half) {
            double frac = (ps.power[i] - half) / (ps.power[i] - ps.power[i + 1]);
            hi = ps.freq[i] + frac * (ps.freq[i + 1] - ps.freq[i]);
            break;
        }
    ps.fwhm = hi - lo;

    ps.total_power = ps.power.sum();
    double ms = 0.0;
    for (long i = 0; i < n; ++i) ms += std::norm(in[std::size_t(i)]);
    ps.mean_sq_signal = ms / double(n);
    return ps;
}

/// Circular phase-fluctuation statistic <delta^2 theta> = -2 ln|<e^{i theta}>|
/// for theta = arg a_1. Well defined under phase wrapping; reduces to the
/// ordinary variance for small spread. A fully dephased ensemble maps to
/// +infinity.
inline double phase_fluctuation(const EnsembleRecord& rec, double t) {
    long i = rec.time_index(t);
    if (rec.low_modulus_frac[i] > 0.01)
        throw PhaseUndefinedError(
            "phase_fluctuation: " + format_double(100 * rec.low_modulus_frac[i]) +
            "% of trajectories have near-zero |a_1| at t=" + format_double(t));
    double m = std::abs(rec.a1_phase_mean[i]);
    if (m <= 0.0) return std::numeric_limits<double>::infinity();
    return -2.0 * std::log(m);
}

/// Generalized Mari synchronization measure S_c(N, t).
struct SyncMeasure {
    double value = 0.0;
    double t = 0.0;
    long n_osc = 0;
    bool infinite = false;  ///< error-mode variance was exactly zero
};

/// S_c = 1 / <q_-^2 + p_-^2> over trajectories, with the error mode
/// o_- = (o_1 - mean of the rest)/sqrt(2). The semiclassical engine does
/// not enforce the quantum bound; the statistic is reported as-is.
inline SyncMeasure sync_measure(const EnsembleRecord& rec, double t) {
    if (rec.n_osc < 2) throw ConfigError("sync_measure: needs N >= 2");
    long i = rec.time_index(t);
    SyncMeasure s;
    s.t = rec.times[i];
    s.n_osc = rec.n_osc;
    double var = rec.err_q2[i] + rec.err_p2[i];
    if (var <= 0.0) {
        s.infinite = true;
        s.value = std::numeric_limits<double>::infinity();
    } else {
        s.value = 1.0 / var;
    }
    return s;
}

/// Excess kurtosis <x^4>/<x^2>^2 - 3 of the error-mode marginals at a
/// recorded time (q first, p second).
inline std::pair<double, double> error_mode_kurtosis(const EnsembleRecord& rec,
                                                     double t) {
    long i = rec.time_index(t);
    if (!(rec.err_q2[i] > 0.0) || !(rec.err_p2[i] > 0.0))
        throw NumericalError("error_mode_kurtosis: zero variance");
    return {rec.err_q4[i] / (rec.err_q2[i] * rec.err_q2[i]) - 3.0,
            rec.err_p4[i] / (rec.err_p2[i] * rec.err_p2[i]) - 3.0};
}

enum class HistogramMode { oscillator1, error_mode };

/// Normalized 2D phase-space histogram over (q, p) with q = sqrt(2) Re a,
/// p = sqrt(2) Im a (for the error mode the quadratures are used directly).
struct PhaseSpaceHistogram {
    Eigen::VectorXd q_centers, p_centers;
    Eigen::MatrixXd density;  ///< sums to 1
    long n_samples = 0;
    std::string axes = "q = sqrt(2) Re a, p = sqrt(2) Im a";
};

inline PhaseSpaceHistogram phase_space_histogram(const Eigen::MatrixXcd& snapshot,
                                                 HistogramMode mode, long bins,
                                                 double half_range) {
    if (snapshot.rows() == 0) throw ConfigError("phase_space_histogram: empty snapshot");
    if (bins < 1 || !(half_range > 0.0))
        throw ConfigError("phase_space_histogram: bad bins/range");
    const long n_traj = snapshot.rows();
    const long n_osc = snapshot.cols();
    if (mode == HistogramMode::error_mode && n_osc < 2)
        throw ConfigError("phase_space_histogram: error mode needs N >= 2");

    PhaseSpaceHistogram h;
    h.q_centers.resize(bins);
    h.p_centers.resize(bins);
    const double bw = 2.0 * half_range / double(bins);
    for (long i = 0; i < bins; ++i)
        h.q_centers[i] = h.p_centers[i] = -half_range + (double(i) + 0.5) * bw;
    h.density = Eigen::MatrixXd::Zero(bins, bins);

    const double s2 = std::sqrt(2.0);
    long count = 0;
    for (long tr = 0; tr < n_traj; ++tr) {
        double q, p;
        if (mode == HistogramMode::oscillator1) {
            q = s2 * snapshot(tr, 0).real();
            p = s2 * snapshot(tr, 0).imag();
        } else {
            cplx rest = (snapshot.row(tr).sum() - snapshot(tr, 0)) / double(n_osc - 1);
            q = snapshot(tr, 0).real() - rest.real();
            p = snapshot(tr, 0).imag() - rest.imag();
        }
        long qi = long(std::floor((q + half_range) / bw));
        long pi_ = long(std::floor((p + half_range) / bw));
        if (qi < 0 || qi >= bins || pi_ < 0 || pi_ >= bins) continue;  // clipped
        h.density(qi, pi_) += 1.0;
        ++count;
    }
    if (count == 0) throw NumericalError("phase_space_histogram: all samples out of range");
    h.density /= double(count);
    h.n_samples = count;
    return h;
}

}  // namespace tcvdp

#endif

// Acceptance gate for the shipped phenomenology: one line per criterion.
// Runs the full desk-scale workloads; expect roughly an hour on one core.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tcvdp/experiments.hpp"

using namespace tcvdp;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool evaluated = false;
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

OscillatorParams reference_params() {
    OscillatorParams p;  // omega = 1, kappa1 = 0.1, kappa2 = 0.005
    return p;
}

SimConfig decay_config(long N, long n_traj, double t_final, std::uint64_t seed) {
    SimConfig c;
    c.osc = reference_params();
    c.coupling.mu = 0.3;
    c.ensemble.n_osc = N;
    c.ensemble.n_traj = n_traj;
    c.ensemble.dt = 0.05;
    c.ensemble.t_final = t_final;
    c.ensemble.seed = seed;
    c.ensemble.record_stride = 20;
    return c;
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             t0)
            .count();
    }
};

struct BatchedDecay {
    Eigen::VectorXd times;
    Eigen::VectorXd abs_r;             // |mean over all batches of r(t)|
    std::vector<double> phase_stats;   // per-batch <delta^2 theta> at t=5000
};

/// Criterion 1/3 workload for one N: the 2000 trajectories are split into 8
/// disjoint seed batches so the phase statistic comes with an honest
/// batch-spread standard error.
BatchedDecay run_decay_batches(long N) {
    const long n_batches = 8, per_batch = 250;
    BatchedDecay out;
    Eigen::VectorXcd sum;
    for (long b = 0; b < n_batches; ++b) {
        SimConfig cfg =
            decay_config(N, per_batch, 5000.0,
                         std::uint64_t(1 + 131 * N + b));
        EnsembleRecord rec = simulate_ensemble(cfg);
        if (b == 0) {
            out.times = rec.times;
            sum = Eigen::VectorXcd::Zero(rec.times.size());
        }
        sum += rec.mean_field;
        try {
            out.phase_stats.push_back(phase_fluctuation(rec, 5000.0));
        } catch (const PhaseUndefinedError&) {
            out.phase_stats.push_back(
                std::numeric_limits<double>::quiet_NaN());
        }
        std::cerr << "  N=" << N << " batch " << (b + 1) << "/" << n_batches
                  << "\n";
    }
    out.abs_r = (sum / double(n_batches)).cwiseAbs();
    return out;
}

bool files_identical(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::string ca((std::istreambuf_iterator<char>(fa)),
                   std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)),
                   std::istreambuf_iterator<char>());
    return !ca.empty() && ca == cb;
}

}  // namespace

int main() {
    std::vector<Verdict> v(10);  // 1-based
    OscillatorParams p = reference_params();
    CouplingSpec coupling;
    coupling.mu = 0.3;
    Stopwatch total;

    // ---- criterion 7: oracle suite (gates 1-6) -------------------------
    {
        Verdict& c = v[7];
        c.evaluated = true;
        try {
            std::vector<std::string> parts;
            bool ok = true;

            double r_expect = p.limit_cycle_radius();
            double r_obs = deterministic_limit_cycle(p);
            bool ok_r = std::abs(r_obs - r_expect) <= 1e-6;
            ok = ok && ok_r;
            parts.push_back("limit cycle " + fmt(r_obs) + " vs " +
                            fmt(r_expect) + (ok_r ? " ok" : " MISMATCH"));

            OscillatorParams pq = p;
            pq.kappa2 = 0.2;
            long d = 8;
            Eigen::VectorXd pops = single_vdp_steady_distribution(pq, d);
            CouplingSpec none;
            none.mu = 0.0;
            Eigen::MatrixXcd rho =
                steady_state(build_liouvillian(pq, none, FockConfig{d, 1}));
            double max_diff = 0.0;
            for (long n = 0; n < d; ++n)
                max_diff =
                    std::max(max_diff, std::abs(pops[n] - rho(n, n).real()));
            bool ok_d = max_diff < 1e-8;
            ok = ok && ok_d;
            parts.push_back("diagonal sector max diff " + fmt(max_diff));

            OracleReport rep = cross_engine_check(p, coupling, 1);
            ok = ok && rep.pass;
            parts.push_back("cross-engine " + fmt(rep.observed) + " vs " +
                            fmt(rep.expected) + " (tol 15%)");

            c.pass = ok;
            std::string d_all;
            for (const auto& s : parts) d_all += (d_all.empty() ? "" : "; ") + s;
            c.detail = d_all;
        } catch (const std::exception& e) {
            c.pass = false;
            c.detail = std::string("exception: ") + e.what();
        }
        std::cerr << "criterion 7 done (" << fmt(total.elapsed()) << " s)\n";
    }

    const bool gate = v[7].pass;

    // ---- criteria 1 and 3: decay sweep with batched phase statistics ---
    if (gate) {
        try {
            const std::vector<long> n_list = {4, 8, 16, 32};
            std::vector<double> invn, g_over_k1;
            std::vector<double> phase_mean, phase_se;
            for (long N : n_list) {
                BatchedDecay bd = run_decay_batches(N);
                double floor =
                    5.0 * p.limit_cycle_radius() / std::sqrt(2000.0);
                double t_end = bd.times[bd.times.size() - 1];
                for (long i = 0; i < bd.times.size(); ++i)
                    if (bd.times[i] > 50.0 && bd.abs_r[i] < floor) {
                        t_end = bd.times[i];
                        break;
                    }
                DecayFit fit = fit_gamma(bd.times, bd.abs_r, 50.0, t_end);
                invn.push_back(1.0 / double(N));
                g_over_k1.push_back(fit.gamma_eff / p.kappa1);

                double m = 0, m2 = 0;
                long k = 0;
                for (double x : bd.phase_stats)
                    if (std::isfinite(x)) {
                        m += x;
                        m2 += x * x;
                        ++k;
                    }
                m /= double(k);
                double var = (m2 - double(k) * m * m) / double(k - 1);
                phase_mean.push_back(m);
                phase_se.push_back(std::sqrt(var / double(k)));
            }

            auto lf = detail::linear_fit(invn, g_over_k1);
            Verdict& c1 = v[1];
            c1.evaluated = true;
            c1.pass = std::abs(lf.slope - 0.1) <= 0.03 &&
                      std::abs(lf.intercept) < 5e-3;
            c1.detail = "slope " + fmt(lf.slope) + " (need 0.1 +- 0.03), " +
                        "intercept " + fmt(lf.intercept) +
                        " (need |c| < 5e-3), r^2 " + fmt(lf.r_squared);

            Verdict& c3 = v[3];
            c3.evaluated = true;
            c3.pass = true;
            std::string d3;
            for (std::size_t i = 0; i < n_list.size(); ++i) {
                d3 += "N=" + std::to_string(n_list[i]) + ": " +
                      fmt(phase_mean[i]) + "+-" + fmt(phase_se[i]) + " ";
                if (i > 0) {
                    double drop = phase_mean[i - 1] - phase_mean[i];
                    double comb = std::sqrt(phase_se[i - 1] * phase_se[i - 1] +
                                            phase_se[i] * phase_se[i]);
                    if (!(drop > comb)) c3.pass = false;
                }
            }
            c3.detail = d3 + "(each pairwise drop must exceed combined SE; "
                             "the statistic saturates at the Monte Carlo "
                             "floor ~ln(n_traj) for strongly dephased "
                             "ensembles)";
        } catch (const std::exception& e) {
            v[1].evaluated = v[3].evaluated = true;
            v[1].pass = v[3].pass = false;
            v[1].detail = v[3].detail = std::string("exception: ") + e.what();
        }
        std::cerr << "criteria 1/3 done (" << fmt(total.elapsed()) << " s)\n";
    }

    // ---- criteria 2 and 8b: spectra ------------------------------------
    std::vector<PowerSpectrum> c2_spectra;
    if (gate) {
        try {
            std::vector<double> fwhm;
            for (long N : {4L, 32L}) {
                SimConfig cfg = decay_config(N, 1000, 5000.0, 2);
                EnsembleRecord rec = simulate_ensemble(cfg);
                // rectangular window: the order parameter is a decaying
                // transient, not a stationary tone, and a taper suppresses
                // the early-time signal relative to the late-time Monte
                // Carlo noise floor, leaving a noise-spiked peak whose
                // half-maximum crossings are meaningless
                PowerSpectrum ps = power_spectrum(rec.times, rec.mean_field,
                                                  SpectralWindow::rectangular);
                c2_spectra.push_back(ps);
                fwhm.push_back(ps.fwhm);
                std::cerr << "  spectrum N=" << N << " fwhm=" << ps.fwhm
                          << " peak=" << ps.peak_freq << "\n";
            }
            Verdict& c2 = v[2];
            c2.evaluated = true;
            c2.pass = fwhm[1] < fwhm[0] &&
                      (fwhm[0] - fwhm[1]) >= 0.2 * fwhm[0];
            c2.detail = "FWHM N=4: " + fmt(fwhm[0]) + ", N=32: " + fmt(fwhm[1]) +
                        " (need >= 20% separation)";
        } catch (const std::exception& e) {
            v[2].evaluated = true;
            v[2].pass = false;
            v[2].detail = std::string("exception: ") + e.what();
        }
        std::cerr << "criterion 2 done (" << fmt(total.elapsed()) << " s)\n";
    }

    // ---- criteria 4 and 5: synchronization sweep -----------------------
    if (gate) {
        try {
            const std::vector<long> n_list = {2, 5, 10, 20, 50};
            std::vector<double> invn, sc;
            double spread2 = 0, spread50 = 0, kq50 = 0, kp50 = 0;
            for (long N : n_list) {
                SimConfig cfg = decay_config(N, 600, 10000.0,
                                             std::uint64_t(3 + N));
                cfg.ensemble.record_stride = 200;
                EnsembleRecord rec = simulate_ensemble(cfg);
                SyncMeasure m = sync_measure(rec, 10000.0);
                invn.push_back(1.0 / double(N));
                sc.push_back(m.value);
                long i = rec.time_index(10000.0);
                double spread = rec.err_q2[i] + rec.err_p2[i];
                if (N == 2) spread2 = spread;
                if (N == 50) {
                    spread50 = spread;
                    auto [kq, kp] = error_mode_kurtosis(rec, 10000.0);
                    kq50 = kq;
                    kp50 = kp;
                }
                std::cerr << "  sync N=" << N << " S_c=" << m.value << "\n";
            }
            auto lf = detail::linear_fit(invn, sc);
            Verdict& c4 = v[4];
            c4.evaluated = true;
            c4.pass = lf.r_squared > 0.9 && lf.intercept > sc[0];
            c4.detail = "r^2 " + fmt(lf.r_squared) + " (need > 0.9), beta " +
                        fmt(lf.intercept) + " vs S_c(N=2) " + fmt(sc[0]) +
                        "; quantum-limit bound 2 shown for comparison only";

            Verdict& c5 = v[5];
            c5.evaluated = true;
            c5.pass = std::abs(kq50) <= 0.5 && std::abs(kp50) <= 0.5 &&
                      spread50 < spread2;
            c5.detail = "excess kurtosis N=50 q/p: " + fmt(kq50) + "/" +
                        fmt(kp50) + " (need within +-0.5); spread N=50 " +
                        fmt(spread50) + " < N=2 " + fmt(spread2);
        } catch (const std::exception& e) {
            v[4].evaluated = v[5].evaluated = true;
            v[4].pass = v[5].pass = false;
            v[4].detail = v[5].detail = std::string("exception: ") + e.what();
        }
        std::cerr << "criteria 4/5 done (" << fmt(total.elapsed()) << " s)\n";
    }

    // ---- criterion 6: Liouvillian zero mode and gap trend --------------
    if (gate) {
        try {
            OscillatorParams pq = p;
            pq.kappa2 = 0.2;
            long d_auto = choose_cutoff(pq);
            std::vector<double> gaps;
            bool ok = true;
            std::string d6;
            for (long N : {1L, 2L, 3L}) {
                long d = 2;
                while (std::pow(double(d + 1), 2.0 * double(N)) <= 1e5) ++d;
                d = std::min(d_auto, d);
                Liouvillian L =
                    build_liouvillian(pq, coupling, FockConfig{d, N});
                SpectrumResult sp = spectrum(L, 6);
                long n_zero = 0;
                double gap = std::numeric_limits<double>::infinity();
                for (long i = 0; i < sp.eigenvalues.size(); ++i) {
                    if (std::abs(sp.eigenvalues[i]) < 1e-9)
                        ++n_zero;
                    else {
                        if (!(sp.eigenvalues[i].real() < 0.0)) ok = false;
                        gap = std::min(gap, -sp.eigenvalues[i].real());
                    }
                }
                if (n_zero != 1) ok = false;
                gaps.push_back(gap);
                d6 += "N=" + std::to_string(N) + " (d=" + std::to_string(d) +
                      "): gap " + fmt(gap) + ", zeros " +
                      std::to_string(n_zero) + "; ";
                std::cerr << "  liouville N=" << N << " gap=" << gap << "\n";
            }
            ok = ok && gaps[1] < gaps[0] && gaps[2] < gaps[1];
            Verdict& c6 = v[6];
            c6.evaluated = true;
            c6.pass = ok;
            c6.detail = d6 + "(need exactly one zero each, strictly "
                             "decreasing gap)";
        } catch (const std::exception& e) {
            v[6].evaluated = true;
            v[6].pass = false;
            v[6].detail = std::string("exception: ") + e.what();
        }
        std::cerr << "criterion 6 done (" << fmt(total.elapsed()) << " s)\n";
    }

    // ---- criterion 8: conservation properties --------------------------
    {
        Verdict& c8 = v[8];
        c8.evaluated = true;
        try {
            OscillatorParams pq = p;
            pq.kappa2 = 0.2;
            CouplingSpec none;
            none.mu = 0.0;
            long d = 8;
            Liouvillian L = build_liouvillian(pq, none, FockConfig{d, 1});
            std::mt19937_64 gen(99);
            std::normal_distribution<double> nd;
            double worst_tr = 0, worst_h = 0;
            for (int rep = 0; rep < 20; ++rep) {
                Eigen::MatrixXcd G(d, d);
                for (long i = 0; i < d; ++i)
                    for (long j = 0; j < d; ++j)
                        G(i, j) = cplx(nd(gen), nd(gen));
                Eigen::MatrixXcd rho0 = G * G.adjoint();
                rho0 /= rho0.trace();
                auto rhos = evolve_rho(rho0, L, {100.0 / pq.kappa1});
                worst_tr = std::max(worst_tr,
                                    std::abs(rhos.back().trace() - cplx(1.0)));
                worst_h = std::max(
                    worst_h, (rhos.back() - rhos.back().adjoint()).norm());
            }
            bool ok = worst_tr <= 1e-9 && worst_h <= 1e-9;
            double worst_parseval = 0;
            if (c2_spectra.size() == 2) {
                for (const auto& ps : c2_spectra)
                    worst_parseval = std::max(
                        worst_parseval,
                        std::abs(ps.total_power - ps.mean_sq_signal) /
                            ps.mean_sq_signal);
                ok = ok && worst_parseval <= 1e-10;
            } else {
                ok = false;
            }
            c8.pass = ok;
            c8.detail = "worst |tr-1| " + fmt(worst_tr) + ", hermiticity " +
                        fmt(worst_h) + " (need <= 1e-9); worst Parseval " +
                        fmt(worst_parseval) + " (need <= 1e-10" +
                        (c2_spectra.size() == 2 ? ")"
                                                : "; criterion-2 spectra "
                                                  "unavailable)");
        } catch (const std::exception& e) {
            c8.pass = false;
            c8.detail = std::string("exception: ") + e.what();
        }
        std::cerr << "criterion 8 done (" << fmt(total.elapsed()) << " s)\n";
    }

    // ---- criterion 9: worker-count determinism -------------------------
    {
        Verdict& c9 = v[9];
        c9.evaluated = true;
        try {
            fs::path tmp = fs::temp_directory_path() / "tcvdp_acceptance_c9";
            fs::remove_all(tmp);
            fs::create_directories(tmp);
            SimConfig cfg = decay_config(8, 2000, 5000.0, 1);
            for (int workers : {1, 3}) {
                SdeOptions opts;
                opts.workers = workers;
                EnsembleRecord rec = simulate_ensemble(cfg, opts);
                write_order_parameter(
                    (tmp / ("order_parameter_w" + std::to_string(workers) +
                            ".csv"))
                        .string(),
                    rec);
                std::cerr << "  determinism run with " << workers
                          << " workers done\n";
            }
            c9.pass = files_identical(tmp / "order_parameter_w1.csv",
                                      tmp / "order_parameter_w3.csv");
            c9.detail = c9.pass ? "bitwise-identical order_parameter.csv for "
                                  "1 and 3 workers"
                                : "files differ between worker counts";
            fs::remove_all(tmp);
        } catch (const std::exception& e) {
            c9.pass = false;
            c9.detail = std::string("exception: ") + e.what();
        }
        std::cerr << "criterion 9 done (" << fmt(total.elapsed()) << " s)\n";
    }

    // ---- report --------------------------------------------------------
    int failures = 0;
    for (int i = 1; i <= 9; ++i) {
        std::string status;
        if (!v[i].evaluated) {
            status = "FAIL (not evaluated: oracle gate failed)";
            ++failures;
        } else if (v[i].pass) {
            status = "PASS";
        } else {
            status = "FAIL";
            ++failures;
        }
        std::cout << "criterion " << i << ": " << status
                  << (v[i].detail.empty() ? "" : " -- " + v[i].detail) << "\n";
    }
    std::cout << "acceptance: " << (9 - failures) << "/9 criteria passed in "
              << fmt(total.elapsed()) << " s\n";
    return failures;
}

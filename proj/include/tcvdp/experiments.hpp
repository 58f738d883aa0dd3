#ifndef TCVDP_EXPERIMENTS_HPP
#define TCVDP_EXPERIMENTS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvdp/csv.hpp"
#include "tcvdp/liouvillian.hpp"
#include "tcvdp/model.hpp"
#include "tcvdp/observables.hpp"
#include "tcvdp/oracle.hpp"
#include "tcvdp/sde.hpp"

#ifndef TCVDP_GIT_DESCRIBE
#define TCVDP_GIT_DESCRIBE "unknown"
#endif

namespace tcvdp {

using ojson = nlohmann::ordered_json;

/// One experiment invocation, as assembled by the CLI.
struct ExperimentSpec {
    std::string kind;
    std::string config_path;  ///< empty = defaults only
    std::string out_dir;
    std::vector<std::string> overrides;
    int workers = 1;
    bool force = false;
    bool dry_run = false;
};

struct RunOutcome {
    bool partial = false;  ///< some sweep cells failed; exit code 4
    ojson summary;         ///< machine-readable result for stdout
};

namespace detail {

struct LineFit {
    double slope = 0, intercept = 0, r_squared = 0;
};

inline LineFit linear_fit(const std::vector<double>& x,
                          const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw FitError("linear_fit: need at least two points");
    double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    double vxx = sxx - sx * sx / n, vxy = sxy - sx * sy / n,
           vyy = syy - sy * sy / n;
    if (!(vxx > 0)) throw FitError("linear_fit: degenerate abscissa");
    LineFit f;
    f.slope = vxy / vxx;
    f.intercept = (sy - f.slope * sx) / n;
    f.r_squared = vyy > 0 ? vxy * vxy / (vxx * vyy) : 1.0;
    return f;
}

inline Settings resolve_settings(const ExperimentSpec& spec) {
    Settings s = spec.config_path.empty() ? Settings()
                                          : Settings::load(spec.config_path);
    for (const auto& kv : spec.overrides) s.apply_override(kv);
    return s;
}

/// Creates the output directory; the final path component is created with
/// one atomic mkdir. An existing directory is rejected unless --force.
inline void prepare_out_dir(const ExperimentSpec& spec) {
    namespace fs = std::filesystem;
    if (spec.out_dir.empty()) throw ConfigError("--out directory is required");
    fs::path out(spec.out_dir);
    if (fs::exists(out)) {
        if (!spec.force)
            throw ConfigError("output directory exists (use --force): " +
                              spec.out_dir);
        return;
    }
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::error_code ec;
    if (!fs::create_directory(out, ec))
        throw ConfigError("cannot create output directory " + spec.out_dir +
                          ": " + ec.message());
}

inline std::string out_path(const ExperimentSpec& spec, const std::string& name) {
    return (std::filesystem::path(spec.out_dir) / name).string();
}

inline void write_manifest(const ExperimentSpec& spec, const Settings& resolved,
                           std::uint64_t seed, double duration_s,
                           const std::vector<std::string>& outputs) {
    ojson m;
    m["kind"] = spec.kind;
    m["build"] = TCVDP_GIT_DESCRIBE;
    m["seed"] = seed;
    m["workers"] = spec.workers;
    m["duration_seconds"] = duration_s;
    ojson cfg = ojson::object();
    for (const auto& [k, v] : resolved.entries()) cfg[k] = v;
    m["config"] = cfg;
    m["outputs"] = outputs;
    std::ofstream f(out_path(spec, "manifest.json"));
    if (!f) throw ConfigError("cannot write manifest.json");
    f << m.dump(2) << "\n";
}

inline std::vector<long> n_list_or(const Settings& s, std::vector<long> dflt) {
    return s.has("sweep.n_list") ? s.get_long_list("sweep.n_list")
                                 : std::move(dflt);
}

inline SimConfig config_for_n(const Settings& s, long N) {
    Settings t = s;
    t.set("ensemble.n_osc", N);
    return SimConfig::from_settings(t);
}

}  // namespace detail

/// Order-parameter decay sweep: one ensemble per N, exponential-decay fit,
/// and the aggregate Gamma/kappa1 vs 1/N line.
inline RunOutcome run_langevin_decay(const ExperimentSpec& spec,
                                     const Settings& settings) {
    auto n_list = detail::n_list_or(settings, {4, 8, 16, 32});
    if (n_list.empty()) throw ConfigError("sweep.n_list is empty");
    double t_start = settings.get_double("fit.t_start", 50.0);
    double t_end_cfg = settings.get_double("fit.t_end", 0.0);
    double floor_mult = settings.get_double("fit.floor_mult", 5.0);

    RunOutcome out;
    std::vector<GammaFitRow> rows;
    ojson cells = ojson::array();
    long failed = 0;
    for (long N : n_list) {
        SimConfig cfg = detail::config_for_n(settings, N);
        if (cfg.ensemble.n_traj < 100)
            throw ConfigError("gamma fitting needs ensemble.n_traj >= 100");
        if (spec.dry_run) {
            cells.push_back({{"N", N}, {"dry_run", true}});
            continue;
        }
        SdeOptions opts;
        opts.workers = spec.workers;
        EnsembleRecord rec = simulate_ensemble(cfg, opts);
        std::string fname = "order_parameter_N" + std::to_string(N) + ".csv";
        write_order_parameter(detail::out_path(spec, fname), rec);
        if (n_list.size() == 1)
            write_order_parameter(detail::out_path(spec, "order_parameter.csv"),
                                  rec);
        try {
            Eigen::VectorXd abs_r = rec.mean_field.cwiseAbs();
            double floor = floor_mult * cfg.osc.limit_cycle_radius() /
                           std::sqrt(double(cfg.ensemble.n_traj));
            double t_end = t_end_cfg > 0 ? t_end_cfg : cfg.ensemble.t_final;
            if (t_end_cfg <= 0) {
                // stop the window where |r| first hits the Monte Carlo floor
                for (long i = 0; i < rec.times.size(); ++i)
                    if (rec.times[i] > t_start && abs_r[i] < floor) {
                        t_end = rec.times[i];
                        break;
                    }
            }
            DecayFit fit = fit_gamma(rec.times, abs_r, t_start, t_end);
            rows.push_back({N, fit.gamma_eff, fit.gamma_eff / cfg.osc.kappa1,
                            fit.r_squared});
            cells.push_back({{"N", N},
                             {"gamma", fit.gamma_eff},
                             {"gamma_over_kappa1", fit.gamma_eff / cfg.osc.kappa1},
                             {"r_squared", fit.r_squared},
                             {"fit_window", {fit.t_start, fit.t_end}},
                             {"n_points", fit.n_points}});
        } catch (const FitError& e) {
            std::cerr << "warning: N=" << N << ": " << e.what() << "\n";
            cells.push_back({{"N", N}, {"error", e.what()}});
            ++failed;
        }
    }
    out.summary["cells"] = cells;
    if (!spec.dry_run) {
        if (2 * failed > long(n_list.size()))
            throw NumericalError("decay fit failed for " +
                                 std::to_string(failed) + " of " +
                                 std::to_string(n_list.size()) + " N values");
        out.partial = failed > 0;
        write_gamma_fits(detail::out_path(spec, "gamma_fits.csv"), rows);
        if (rows.size() >= 2) {
            std::vector<double> invn, g;
            for (const auto& r : rows) {
                invn.push_back(1.0 / double(r.n_osc));
                g.push_back(r.gamma_over_kappa1);
            }
            auto lf = detail::linear_fit(invn, g);
            out.summary["gamma_scaling"] = {{"slope", lf.slope},
                                            {"intercept", lf.intercept},
                                            {"r_squared", lf.r_squared}};
        }
    }
    return out;
}

/// Power spectrum of the order parameter per N.
inline RunOutcome run_spectrum(const ExperimentSpec& spec,
                               const Settings& settings) {
    auto n_list = detail::n_list_or(settings, {4, 32});
    std::string wname = settings.get_str("spectrum.window", "hann");
    SpectralWindow window;
    if (wname == "hann")
        window = SpectralWindow::hann;
    else if (wname == "rectangular")
        window = SpectralWindow::rectangular;
    else
        throw ConfigError("spectrum.window must be hann or rectangular");

    RunOutcome out;
    ojson cells = ojson::array();
    for (long N : n_list) {
        SimConfig cfg = detail::config_for_n(settings, N);
        if (spec.dry_run) {
            cells.push_back({{"N", N}, {"dry_run", true}});
            continue;
        }
        SdeOptions opts;
        opts.workers = spec.workers;
        EnsembleRecord rec = simulate_ensemble(cfg, opts);
        PowerSpectrum ps = power_spectrum(rec.times, rec.mean_field, window);
        std::string fname = n_list.size() == 1
                                ? "spectrum.csv"
                                : "spectrum_N" + std::to_string(N) + ".csv";
        write_spectrum(detail::out_path(spec, fname), ps);
        cells.push_back({{"N", N},
                         {"peak_freq", ps.peak_freq},
                         {"peak_power", ps.peak_power},
                         {"fwhm", ps.fwhm},
                         {"total_power", ps.total_power},
                         {"mean_sq_signal", ps.mean_sq_signal}});
    }
    out.summary["cells"] = cells;
    return out;
}

/// Synchronization measure S_c(N, t) over the N-list, with the 1/N line at
/// the final evaluation time.
inline RunOutcome run_sync_sweep(const ExperimentSpec& spec,
                                 const Settings& settings) {
    auto n_list = detail::n_list_or(settings, {2, 5, 10, 20, 50});
    std::vector<double> times = settings.has("sync.times")
                                    ? settings.get_double_list("sync.times")
                                    : std::vector<double>{10000.0};
    if (times.empty()) throw ConfigError("sync.times is empty");
    double t_max = *std::max_element(times.begin(), times.end());

    RunOutcome out;
    std::vector<SyncRow> rows;
    ojson cells = ojson::array();
    std::vector<double> invn, sc_final;
    for (long N : n_list) {
        if (N < 2) throw ConfigError("sync sweep needs N >= 2");
        Settings t = settings;
        t.set("ensemble.t_final", t_max);
        SimConfig cfg = detail::config_for_n(t, N);
        if (spec.dry_run) {
            cells.push_back({{"N", N}, {"dry_run", true}});
            continue;
        }
        SdeOptions opts;
        opts.workers = spec.workers;
        EnsembleRecord rec = simulate_ensemble(cfg, opts);
        ojson cell = {{"N", N}};
        ojson vals = ojson::array();
        for (double tv : times) {
            SyncMeasure m = sync_measure(rec, tv);
            rows.push_back({N, m.t, m.value});
            vals.push_back({{"t", m.t},
                            {"s_c", m.infinite ? -1.0 : m.value},
                            {"infinite", m.infinite}});
            if (tv == t_max && !m.infinite) {
                invn.push_back(1.0 / double(N));
                sc_final.push_back(m.value);
            }
        }
        cell["values"] = vals;
        cells.push_back(cell);
    }
    out.summary["cells"] = cells;
    if (!spec.dry_run) {
        write_sync(detail::out_path(spec, "sync.csv"), rows);
        if (invn.size() >= 2) {
            auto lf = detail::linear_fit(invn, sc_final);
            out.summary["sync_scaling"] = {{"slope", lf.slope},
                                           {"intercept", lf.intercept},
                                           {"r_squared", lf.r_squared}};
        }
    }
    return out;
}

/// Phase-space histograms of oscillator 1 and of the error mode at a
/// configured snapshot time.
inline RunOutcome run_histograms(const ExperimentSpec& spec,
                                 const Settings& settings) {
    auto n_list = detail::n_list_or(settings, {2, 50});
    long bins = settings.get_long("hist.bins", 101);
    RunOutcome out;
    ojson cells = ojson::array();
    for (long N : n_list) {
        SimConfig cfg = detail::config_for_n(settings, N);
        double t_snap = settings.get_double("hist.t", cfg.ensemble.t_final);
        double range_osc = settings.get_double(
            "hist.half_range_osc",
            2.0 * std::sqrt(2.0) * cfg.osc.limit_cycle_radius());
        double range_err = settings.get_double("hist.half_range_err", 3.0);
        if (spec.dry_run) {
            cells.push_back({{"N", N}, {"dry_run", true}});
            continue;
        }
        SdeOptions opts;
        opts.workers = spec.workers;
        opts.snapshot_times = {t_snap};
        EnsembleRecord rec = simulate_ensemble(cfg, opts);
        const Eigen::MatrixXcd& snap = rec.snapshots.at(0);
        ojson cell = {{"N", N}, {"t", rec.snapshot_times.at(0)}};
        {
            auto h = phase_space_histogram(snap, HistogramMode::oscillator1,
                                           bins, range_osc);
            write_histogram(detail::out_path(spec, "hist_osc1_N" +
                                                       std::to_string(N) + ".csv"),
                            h);
            cell["osc1_samples"] = h.n_samples;
        }
        if (N >= 2) {
            auto h = phase_space_histogram(snap, HistogramMode::error_mode, bins,
                                           range_err);
            write_histogram(detail::out_path(spec, "hist_err_N" +
                                                       std::to_string(N) + ".csv"),
                            h);
            cell["err_samples"] = h.n_samples;
        }
        cells.push_back(cell);
    }
    out.summary["cells"] = cells;
    return out;
}

/// Liouvillian spectra over the N-list. The per-N Fock cutoff defaults to
/// the validated single-mode cutoff, capped so the superoperator stays
/// within the iterative solver's practical range.
inline RunOutcome run_liouville_spectrum(const ExperimentSpec& spec,
                                         const Settings& settings) {
    Settings t = settings;
    if (!t.has("coupling.gamma")) t.set("coupling.gamma", 0.0);
    SimConfig base = SimConfig::from_settings(t);
    OscillatorParams p = base.osc;
    CouplingSpec c = base.coupling;

    std::vector<long> n_list = settings.has("liouville.n_list")
                                   ? settings.get_long_list("liouville.n_list")
                                   : std::vector<long>{1, 2, 3};
    std::vector<long> cutoff_list;
    if (settings.has("liouville.cutoff_list")) {
        cutoff_list = settings.get_long_list("liouville.cutoff_list");
        if (cutoff_list.size() != n_list.size())
            throw ConfigError("liouville.cutoff_list length must match n_list");
    } else {
        long d_auto = choose_cutoff(p);
        long max_superop = settings.get_long("liouville.max_superop", 100000);
        for (long N : n_list) {
            long d = 2;
            while (std::pow(double(d + 1), 2.0 * double(N)) <= double(max_superop))
                ++d;
            cutoff_list.push_back(std::min(d_auto, d));
        }
    }
    long k = settings.get_long("liouville.k", 6);

    IterativeEigOptions eopts;
    eopts.filter_degree = settings.get_long("liouville.filter_degree", 160);
    eopts.block_extra = settings.get_long("liouville.block_extra", 8);
    eopts.tol = settings.get_double("liouville.tol", 1e-8);

    RunOutcome out;
    ojson cells = ojson::array();
    for (std::size_t i = 0; i < n_list.size(); ++i) {
        long N = n_list[i], d = cutoff_list[i];
        FockConfig fock{d, N};
        LiouvillianSizing sz = estimate_sizing(p, c, fock);
        ojson cell = {{"N", N},
                      {"cutoff", d},
                      {"hilbert_dim", sz.hilbert_dim},
                      {"superop_dim", sz.superop_dim},
                      {"est_nonzeros", sz.est_nonzeros},
                      {"est_bytes", sz.est_bytes}};
        if (spec.dry_run) {
            cell["dry_run"] = true;
            cells.push_back(cell);
            continue;
        }
        std::cerr << "liouville N=" << N << " d=" << d
                  << " superop_dim=" << sz.superop_dim << "...\n";
        Liouvillian L = build_liouvillian(p, c, fock);
        SpectrumResult sp = spectrum(L, k, eopts);
        write_eigenvalues(detail::out_path(spec, "eigenvalues_N" +
                                                     std::to_string(N) + ".csv"),
                          sp);
        // spectral gap: |Re| of the slowest nonzero eigenvalue
        long zero_idx = -1;
        double best_re = -std::numeric_limits<double>::infinity();
        for (long j = 0; j < sp.eigenvalues.size(); ++j) {
            if (std::abs(sp.eigenvalues[j]) < 1e-9) {
                if (zero_idx < 0) zero_idx = j;
            } else {
                best_re = std::max(best_re, sp.eigenvalues[j].real());
            }
        }
        double gap = -best_re;
        if (zero_idx >= 0) {
            Eigen::MatrixXcd rho = unstack(sp.eigenvectors.col(zero_idx), L.dim());
            rho = 0.5 * (rho + rho.adjoint().eval());
            rho /= rho.trace().real();
            write_steady_state(detail::out_path(spec, "steady_state_N" +
                                                          std::to_string(N) +
                                                          ".csv"),
                               rho);
        }
        cell["method"] = sp.method;
        cell["gap"] = gap;
        cell["zero_mode_found"] = zero_idx >= 0;
        cells.push_back(cell);
    }
    out.summary["cells"] = cells;
    return out;
}

/// The calibration suite: independent brute-force checks that gate the main
/// engines. Writes oracle_report.json.
inline RunOutcome run_oracle_suite(const ExperimentSpec& spec,
                                   const Settings& settings) {
    SimConfig base = SimConfig::from_settings(settings);
    OscillatorParams p = base.osc;
    std::vector<OracleReport> reports;

    if (!spec.dry_run) {
        // 1. classical limit-cycle radius against the analytic fixed point
        double expected_r = p.limit_cycle_radius();
        double observed_r = deterministic_limit_cycle(p);
        reports.push_back(OracleReport::make("deterministic_limit_cycle",
                                             expected_r, observed_r, 1e-6));

        // 2. diagonal-sector rate equation vs full null-space steady state
        OscillatorParams pq = p;
        pq.kappa2 = settings.get_double("oracle.kappa2_quantum", 0.2);
        long d = settings.get_long("oracle.cutoff", 8);
        Eigen::VectorXd pops = single_vdp_steady_distribution(pq, d);
        CouplingSpec none;
        none.mu = 0.0;
        Liouvillian L = build_liouvillian(pq, none, FockConfig{d, 1});
        Eigen::MatrixXcd rho = detail::steady_state_solve(L);
        // kernel membership certifies this as the steady state
        Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(rho.data(), d * d);
        double kernel_res = (L.matrix * v).norm() / std::max(1.0, L.one_norm());
        double max_diff = 0.0, mean_o = 0.0, mean_q = 0.0;
        for (long n = 0; n < d; ++n) {
            max_diff = std::max(max_diff,
                                std::abs(pops[n] - rho(n, n).real()));
            mean_o += double(n) * pops[n];
            mean_q += double(n) * rho(n, n).real();
        }
        reports.push_back(OracleReport::make(
            "diagonal_sector_max_population_diff", 0.0, max_diff, 1e-8,
            "kernel residual " + format_double(kernel_res)));
        reports.push_back(OracleReport::make("diagonal_sector_mean_occupation",
                                             mean_o, mean_q, 1e-8));

        // 3. quantum vs Langevin occupation in the semiclassical regime
        CouplingSpec c0 = base.coupling;
        reports.push_back(cross_engine_check(p, c0, 1, base.ensemble.seed));
    }

    RunOutcome out;
    nlohmann::json arr = nlohmann::json::array();
    bool all_pass = true;
    for (const auto& r : reports) {
        arr.push_back(r.to_json());
        all_pass = all_pass && r.pass;
    }
    if (!spec.dry_run) {
        std::ofstream f(detail::out_path(spec, "oracle_report.json"));
        if (!f) throw ConfigError("cannot write oracle_report.json");
        f << arr.dump(2) << "\n";
    }
    out.summary["reports"] = arr;
    out.summary["all_pass"] = all_pass;
    if (!all_pass && !spec.dry_run)
        throw NumericalError("oracle suite failed; see oracle_report.json");
    return out;
}

/// Dispatch + output-directory and manifest plumbing shared by all runners.
inline RunOutcome run_experiment(const ExperimentSpec& spec) {
    Settings settings = detail::resolve_settings(spec);
    if (!spec.dry_run) detail::prepare_out_dir(spec);
    auto t0 = std::chrono::steady_clock::now();

    RunOutcome out;
    if (spec.kind == "langevin-decay")
        out = run_langevin_decay(spec, settings);
    else if (spec.kind == "spectrum")
        out = run_spectrum(spec, settings);
    else if (spec.kind == "sync-sweep")
        out = run_sync_sweep(spec, settings);
    else if (spec.kind == "histograms")
        out = run_histograms(spec, settings);
    else if (spec.kind == "liouville-spectrum")
        out = run_liouville_spectrum(spec, settings);
    else if (spec.kind == "oracle-suite")
        out = run_oracle_suite(spec, settings);
    else
        throw ConfigError("unknown experiment kind: " + spec.kind);

    if (!spec.dry_run) {
        double dur = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
        std::vector<std::string> outputs;
        for (const auto& e :
             std::filesystem::directory_iterator(spec.out_dir)) {
            std::string name = e.path().filename().string();
            if (name != "manifest.json") outputs.push_back(name);
        }
        std::sort(outputs.begin(), outputs.end());
        std::uint64_t seed =
            std::uint64_t(settings.has("ensemble.seed")
                              ? settings.get_long("ensemble.seed")
                              : 1);
        detail::write_manifest(spec, settings, seed, dur, outputs);
    }
    return out;
}

}  // namespace tcvdp

#endif

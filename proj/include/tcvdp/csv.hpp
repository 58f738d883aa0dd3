#ifndef TCVDP_CSV_HPP
#define TCVDP_CSV_HPP

#include <Eigen/Dense>
#include <fstream>
#include <string>
#include <vector>

#include "tcvdp/common.hpp"
#include "tcvdp/config.hpp"
#include "tcvdp/liouvillian.hpp"
#include "tcvdp/observables.hpp"
#include "tcvdp/sde.hpp"

namespace tcvdp {

/// Minimal CSV emitter: UTF-8, header row, '.' decimal, doubles at 17
/// significant digits so files round-trip bit-exactly.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw ConfigError("cannot open for writing: " + path);
        out_.exceptions(std::ios::failbit | std::ios::badbit);
    }

    void header(const std::vector<std::string>& cols) {
        for (std::size_t i = 0; i < cols.size(); ++i)
            out_ << (i ? "," : "") << cols[i];
        out_ << "\n";
    }

    CsvWriter& field(double v) {
        sep();
        out_ << format_double(v);
        return *this;
    }
    CsvWriter& field(long v) {
        sep();
        out_ << v;
        return *this;
    }
    void endrow() {
        out_ << "\n";
        first_ = true;
    }

private:
    void sep() {
        if (!first_) out_ << ",";
        first_ = false;
    }
    std::ofstream out_;
    bool first_ = true;
};

inline void write_order_parameter(const std::string& path,
                                  const EnsembleRecord& rec) {
    CsvWriter w(path);
    w.header({"t", "re_r", "im_r", "abs_r"});
    for (long i = 0; i < rec.times.size(); ++i) {
        cplx r = rec.mean_field[i];
        w.field(rec.times[i]).field(r.real()).field(r.imag()).field(std::abs(r));
        w.endrow();
    }
}

inline void write_spectrum(const std::string& path, const PowerSpectrum& sp) {
    CsvWriter w(path);
    w.header({"freq", "power"});
    for (long i = 0; i < sp.freq.size(); ++i) {
        w.field(sp.freq[i]).field(sp.power[i]);
        w.endrow();
    }
}

struct GammaFitRow {
    long n_osc;
    double gamma;
    double gamma_over_kappa1;
    double r_squared;
};

inline void write_gamma_fits(const std::string& path,
                             const std::vector<GammaFitRow>& rows) {
    CsvWriter w(path);
    w.header({"N", "gamma", "gamma_over_kappa1", "r_squared"});
    for (const auto& r : rows) {
        w.field(r.n_osc).field(r.gamma).field(r.gamma_over_kappa1).field(r.r_squared);
        w.endrow();
    }
}

struct SyncRow {
    long n_osc;
    double t;
    double s_c;
};

inline void write_sync(const std::string& path, const std::vector<SyncRow>& rows) {
    CsvWriter w(path);
    w.header({"N", "t", "s_c"});
    for (const auto& r : rows) {
        w.field(r.n_osc).field(r.t).field(r.s_c);
        w.endrow();
    }
}

inline void write_histogram(const std::string& path,
                            const PhaseSpaceHistogram& h) {
    CsvWriter w(path);
    w.header({"q_bin_center", "p_bin_center", "density"});
    for (long i = 0; i < h.density.rows(); ++i)
        for (long j = 0; j < h.density.cols(); ++j) {
            w.field(h.q_centers[i]).field(h.p_centers[j]).field(h.density(i, j));
            w.endrow();
        }
}

inline void write_eigenvalues(const std::string& path, const SpectrumResult& sp) {
    CsvWriter w(path);
    w.header({"index", "re_lambda", "im_lambda", "residual"});
    for (long i = 0; i < sp.eigenvalues.size(); ++i) {
        w.field(i)
            .field(sp.eigenvalues[i].real())
            .field(sp.eigenvalues[i].imag())
            .field(sp.residuals[i]);
        w.endrow();
    }
}

inline void write_steady_state(const std::string& path,
                               const Eigen::MatrixXcd& rho) {
    CsvWriter w(path);
    w.header({"row", "col", "re", "im"});
    for (long i = 0; i < rho.rows(); ++i)
        for (long j = 0; j < rho.cols(); ++j) {
            w.field(i).field(j).field(rho(i, j).real()).field(rho(i, j).imag());
            w.endrow();
        }
}

}  // namespace tcvdp

#endif

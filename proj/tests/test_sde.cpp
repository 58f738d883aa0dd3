#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "tcvdp/sde.hpp"

using namespace tcvdp;

namespace {

SimConfig base_config(long N, long n_traj, double t_final) {
    SimConfig c;
    c.ensemble.n_osc = N;
    c.ensemble.n_traj = n_traj;
    c.ensemble.dt = 0.05;
    c.ensemble.t_final = t_final;
    c.ensemble.seed = 42;
    c.ensemble.record_stride = 10;
    return c;
}

}  // namespace

TEST_CASE("drift matches the equation of motion term by term") {
    OscillatorParams p;
    p.omega = 0.8;
    p.kappa1 = 0.2;
    p.kappa2 = 0.01;
    p.drive = cplx(0.05, -0.02);
    CouplingSpec cs;
    cs.mu = 0.4;
    cs.gamma = 0.3;
    long N = 5;
    CouplingMatrix cm = CouplingMatrix::build(cs, N);
    EnsembleConfig e;
    e.n_osc = N;
    e.dt = 0.05;
    Integrator integ(p, cm, e);

    TrajectoryState s;
    s.amplitudes.resize(N);
    for (long i = 0; i < N; ++i)
        s.amplitudes[i] = cplx(0.3 * double(i) - 0.5, 0.1 * double(i * i) - 0.2);

    Eigen::VectorXcd g = integ.drift(s);
    for (long i = 0; i < N; ++i) {
        cplx a = s.amplitudes[i];
        cplx expect = cplx(0.0, -1.0) * (p.omega * a + std::conj(p.drive)) +
                      a * (p.kappa1 - 2.0 * p.kappa2 * std::norm(a));
        for (long m = 0; m < N; ++m)
            if (m != i)
                expect += cm.mu(m, i) / cm.norm * (s.amplitudes[m] - a);
        CHECK(std::abs(g[i] - expect) < 1e-14);
    }

    // origin is a fixed point without drive
    p.drive = 0.0;
    Integrator integ0(p, cm, e);
    s.amplitudes.setZero();
    CHECK(integ0.drift(s).norm() == 0.0);

    // identical amplitudes: coupling contributes nothing
    s.amplitudes.setConstant(cplx(0.7, -0.4));
    Eigen::VectorXcd gi = integ0.drift(s);
    for (long i = 1; i < N; ++i) CHECK(std::abs(gi[i] - gi[0]) < 1e-15);
}

TEST_CASE("noiseless dynamics: limit cycle is invariant, rotation is exact") {
    SimConfig c = base_config(3, 2, 50.0);
    SdeOptions opts;
    opts.disable_noise = true;
    EnsembleRecord rec = simulate_ensemble(c, opts);
    double r0 = c.osc.limit_cycle_radius();
    for (long i = 0; i < rec.times.size(); ++i) {
        // starting exactly on the limit cycle, the gain/loss term vanishes
        // and only the (exact) rotation acts
        CHECK(std::abs(rec.mean_field[i]) == doctest::Approx(r0).epsilon(1e-13));
        double expected_phase = -c.osc.omega * rec.times[i];
        cplx expect = r0 * cplx(std::cos(expected_phase), std::sin(expected_phase));
        CHECK(std::abs(rec.mean_field[i] - expect) < 1e-10 * r0);
    }
}

TEST_CASE("noiseless convergence to the limit-cycle radius from a perturbed start") {
    OscillatorParams p;  // kappa1 = 0.1, kappa2 = 0.005
    CouplingSpec cs;
    cs.mu = 0.0;
    EnsembleConfig e;
    e.n_osc = 1;
    e.dt = 0.05;
    e.t_final = 200.0 / p.kappa1;
    SdeOptions opts;
    opts.disable_noise = true;
    Integrator integ(p, CouplingMatrix::build(cs, 1), e, opts);

    TrajectoryState s;
    s.amplitudes = Eigen::VectorXcd::Constant(1, cplx(0.1, 0.0));
    Eigen::VectorXcd scratch(1);
    long steps = e.n_steps();
    for (long k = 0; k < steps; ++k) integ.step(s, 0, std::uint64_t(k), scratch);
    CHECK(std::abs(s.amplitudes[0]) ==
          doctest::Approx(p.limit_cycle_radius()).epsilon(1e-6));
}

TEST_CASE("trajectory recording grid and stream separation") {
    SimConfig c = base_config(2, 4, 2.0);
    c.ensemble.record_stride = 8;  // 40 steps -> records at 0, .4, .8, ..., 2.0
    Integrator integ(c.osc, CouplingMatrix::build(c.coupling, 2), c.ensemble);
    auto t0 = integ.simulate_trajectory(0);
    auto t1 = integ.simulate_trajectory(1);
    CHECK(t0.size() == 6);
    CHECK(t0[0].time == 0.0);
    CHECK(t0[1].time == doctest::Approx(0.4));
    CHECK(t0.back().time == doctest::Approx(2.0));
    // different trajectory indices draw different noise
    CHECK(t0[1].amplitudes != t1[1].amplitudes);
    // same index is bitwise reproducible
    auto t0b = integ.simulate_trajectory(0);
    for (std::size_t i = 0; i < t0.size(); ++i)
        CHECK(t0[i].amplitudes == t0b[i].amplitudes);
}

TEST_CASE("ensemble statistics for a single trajectory reduce to that trajectory") {
    SimConfig c = base_config(3, 1, 5.0);
    Integrator integ(c.osc, CouplingMatrix::build(c.coupling, 3), c.ensemble);
    auto traj = integ.simulate_trajectory(0);
    EnsembleRecord rec = simulate_ensemble(c);
    REQUIRE(rec.n_records() == long(traj.size()));
    for (std::size_t i = 0; i < traj.size(); ++i) {
        cplx mf = traj[i].amplitudes.sum() / 3.0;
        CHECK(rec.mean_field[long(i)] == mf);
        CHECK(rec.a1_mean[long(i)] == traj[i].amplitudes[0]);
    }
}

TEST_CASE("worker count does not change the result") {
    SimConfig c = base_config(4, 150, 20.0);
    SdeOptions one;
    one.workers = 1;
    SdeOptions three;
    three.workers = 3;
    EnsembleRecord r1 = simulate_ensemble(c, one);
    EnsembleRecord r3 = simulate_ensemble(c, three);
    for (long i = 0; i < r1.times.size(); ++i) {
        CHECK(r1.mean_field[i] == r3.mean_field[i]);
        CHECK(r1.err_q2[i] == r3.err_q2[i]);
        CHECK(r1.site_abs2[i] == r3.site_abs2[i]);
    }
}

TEST_CASE("test-channel noise injects the advertised diffusion") {
    // gain off (kappa1 = 0 -> R0 = 0 start), physical noise off: only the
    // calibration channel acts and E|a|^2 grows as amp^2 t exactly
    SimConfig c = base_config(1, 2000, 10.0);
    c.osc.kappa1 = 0.0;
    c.osc.kappa2 = 1e-8;
    c.ensemble.dt = 0.01;
    c.ensemble.record_stride = 100;
    SdeOptions opts;
    opts.disable_noise = true;
    opts.test_noise_amp = 0.7;
    EnsembleRecord rec = simulate_ensemble(c, opts);
    long i = rec.time_index(10.0);
    CHECK(rec.a1_abs2[i] == doctest::Approx(0.49 * 10.0).epsilon(0.08));
}

TEST_CASE("local noise amplitude sqrt(3 kappa1 + 2 kappa2)") {
    // short-time diffusion from the origin; drift is O(|a|^3) and negligible
    SimConfig c = base_config(1, 4000, 0.1);
    c.osc.kappa1 = 0.0;
    c.osc.kappa2 = 0.5;
    c.osc.omega = 0.0;
    c.ensemble.dt = 0.01;
    c.ensemble.record_stride = 10;
    EnsembleRecord rec = simulate_ensemble(c);
    // sigma^2 = 3*0 + 2*0.5 = 1
    CHECK(rec.a1_abs2[rec.time_index(0.1)] ==
          doctest::Approx(0.1).epsilon(0.06));
}

TEST_CASE("collapsed pair noise reproduces the pairwise covariance structure") {
    // kappa ~ 0 so the joint law of the amplitudes after a short time is the
    // integrated noise: Var(a_i) = (sigma_L^2 + w(N-1)/4) t and
    // Cov(a_i, conj a_j) = -(w/4) t with w = mu / calN
    const long N = 4, M = 20000;
    const double t = 0.02, w = 0.3 / 4.0;
    SimConfig c = base_config(N, M, t);
    c.osc.kappa1 = 0.0;
    c.osc.kappa2 = 1e-6;
    c.osc.omega = 0.0;
    c.ensemble.dt = 0.002;
    c.ensemble.record_stride = 1;
    SdeOptions opts;
    opts.snapshot_times = {t};
    EnsembleRecord rec = simulate_ensemble(c, opts);
    const Eigen::MatrixXcd& snap = rec.snapshots.at(0);
    REQUIRE(snap.rows() == M);

    Eigen::MatrixXcd cov = (snap.adjoint() * snap) / double(M);
    double diag_expect = (w * double(N - 1) / 4.0) * t;
    double off_expect = -(w / 4.0) * t;
    for (long i = 0; i < N; ++i) {
        CHECK(cov(i, i).real() == doctest::Approx(diag_expect).epsilon(0.06));
        for (long j = 0; j < N; ++j)
            if (i != j) {
                CHECK(cov(i, j).real() ==
                      doctest::Approx(off_expect).epsilon(0.20));
                CHECK(std::abs(cov(i, j).imag()) < 4e-5);
            }
    }
    // the total (center-of-mass) noise is the local part only: the pair
    // channels are antisymmetric and cancel in the sum
    Eigen::VectorXcd com = snap.rowwise().sum() / double(N);
    double com_var = com.squaredNorm() / double(M);
    CHECK(com_var < 0.05 * diag_expect);
}

TEST_CASE("channel permutation relabels oscillators equivariantly") {
    const long N = 3;
    SimConfig c = base_config(N, 4, 5.0);
    SdeOptions base;
    base.snapshot_times = {5.0};
    SdeOptions perm;
    perm.snapshot_times = {5.0};
    perm.channel_perm = {1, 2, 0};
    EnsembleRecord rb = simulate_ensemble(c, base);
    EnsembleRecord rp = simulate_ensemble(c, perm);
    const auto& sb = rb.snapshots.at(0);
    const auto& sp = rp.snapshots.at(0);
    // uniform coupling + identical initial conditions: feeding oscillator i
    // the noise of channel P(i) must reproduce oscillator P(i) of the base
    // run (up to summation rounding in the shared mean field)
    for (long tr = 0; tr < 4; ++tr)
        for (long i = 0; i < N; ++i)
            CHECK(std::abs(sp(tr, i) - sb(tr, (i + 1) % N)) < 1e-10);
}

TEST_CASE("channel permutation is rejected for non-uniform coupling") {
    SimConfig c = base_config(4, 2, 1.0);
    c.coupling.gamma = 0.5;  // distance-dependent -> not uniform
    SdeOptions opts;
    opts.channel_perm = {1, 2, 3, 0};
    CHECK_THROWS_AS((void)simulate_ensemble(c, opts), ConfigError);
    c.coupling.gamma = 0.0;
    opts.channel_perm = {1, 0};  // wrong length
    CHECK_THROWS_AS((void)simulate_ensemble(c, opts), ConfigError);
}

TEST_CASE("divergent trajectories are detected and bounded") {
    SimConfig c = base_config(1, 50, 1.0);
    SdeOptions opts;
    opts.test_noise_amp = 1e7;  // guaranteed blow-up
    CHECK_THROWS_AS((void)simulate_ensemble(c, opts), NumericalError);

    Integrator integ(c.osc, CouplingMatrix::build(c.coupling, 1), c.ensemble,
                     opts);
    CHECK_THROWS_AS((void)integ.simulate_trajectory(0), DivergenceError);
}

TEST_CASE("independent oscillators dephase: mean field decays") {
    SimConfig c = base_config(2, 400, 400.0);
    c.coupling.mu = 0.0;
    c.ensemble.record_stride = 100;
    EnsembleRecord rec = simulate_ensemble(c);
    double r_start = std::abs(rec.mean_field[0]);
    double r_end = std::abs(rec.mean_field[rec.n_records() - 1]);
    CHECK(r_start == doctest::Approx(c.osc.limit_cycle_radius()).epsilon(1e-12));
    CHECK(r_end < 0.1 * r_start);
}

TEST_CASE("time index lookup") {
    SimConfig c = base_config(1, 2, 1.0);
    EnsembleRecord rec = simulate_ensemble(c);
    CHECK(rec.time_index(0.0) == 0);
    CHECK(rec.time_index(0.5) == 1);
    CHECK(rec.time_index(1.0) == 2);
    CHECK_THROWS_AS((void)rec.time_index(0.123), ConfigError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "sgdlab/engine.hpp"
#include "sgdlab/oracle.hpp"

using namespace sgdlab;

namespace {

void make_1d(ProblemSpec& s, NoiseModel& n, double mu, double noise_var) {
    s = ProblemSpec{};
    s.dim = 1;
    s.sigma_matrix = Eigen::MatrixXd::Constant(1, 1, mu);
    n = NoiseModel{};
    n.kind = NoiseKind::AdditiveGaussian;
    n.cov = Eigen::MatrixXd::Constant(1, 1, noise_var);
    finalize_problem(s, n);
}

}  // namespace

TEST_CASE("zero noise gives exact geometric decay") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 0.0);
    Eigen::VectorXd theta0 = Eigen::VectorXd::Ones(1);
    Trajectory traj = run_chain(s, n, 0.1, theta0, 60, 1);
    double x = 1.0;
    for (long t = 0; t <= 60; ++t) {
        CHECK(traj.at_time(t)[0] == x);  // identical float arithmetic
        CHECK(traj.at_time(t)[0] == doctest::Approx(std::pow(0.9, double(t))).epsilon(1e-12));
        x = x - 0.1 * x;
    }
}

TEST_CASE("zero step size freezes the chain") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(1, 2.5);
    Trajectory traj = run_chain(s, n, 0.0, theta0, 25, 3);
    for (long t = 0; t <= 25; ++t) CHECK(traj.at_time(t)[0] == 2.5);
}

TEST_CASE("stationary variance of the 1-d additive chain") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    InitSampler init = InitSampler::dirac(Eigen::VectorXd::Zero(1));
    Ensemble ens = run_ensemble(s, n, 0.1, init, 500, {500}, 100000, 2024);
    const Eigen::MatrixXd& snap = ens.at_time(500);
    double mean = snap.col(0).mean();
    double var = (snap.col(0).array() - mean).square().sum() / (snap.rows() - 1);
    double v = 0.1 / 1.9;  // beta sigma^2 / (mu (2 - beta mu))
    CHECK(std::abs(var - v) / v < 0.03);
}

TEST_CASE("huge ball radius makes projection a no-op") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    s.ball_radius = 1e9;
    Eigen::VectorXd theta0 = Eigen::VectorXd::Ones(1);
    Trajectory plain = run_chain(s, n, 0.1, theta0, 200, 77);
    Trajectory proj = run_projected_chain(s, n, 0.1, theta0, 200, 77);
    REQUIRE(plain.iterates.size() == proj.iterates.size());
    for (std::size_t i = 0; i < plain.iterates.size(); ++i)
        CHECK(plain.iterates[i] == proj.iterates[i]);
}

TEST_CASE("projection is radial") {
    // zero noise, one deterministic step lands at norm 2R and is pulled to R
    ProblemSpec s;
    s.dim = 2;
    s.sigma_matrix = Eigen::MatrixXd::Identity(2, 2);
    s.theta_star = Eigen::Vector2d(4.0, 0.0);
    s.ball_radius = 1.0;
    NoiseModel n;
    n.kind = NoiseKind::AdditiveGaussian;
    n.cov = Eigen::MatrixXd::Zero(2, 2);
    finalize_problem(s, n);
    Trajectory traj = run_projected_chain(s, n, 0.5, Eigen::VectorXd::Zero(2), 1, 0);
    CHECK(traj.at_time(1)[0] == 1.0);
    CHECK(traj.at_time(1)[1] == 0.0);
    for (const auto& th : traj.iterates) CHECK(th.norm() <= 1.0 + 1e-15);
}

TEST_CASE("batch size one is bitwise identical to the plain chain") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    Eigen::VectorXd theta0 = Eigen::VectorXd::Ones(1);
    Trajectory a = run_chain(s, n, 0.1, theta0, 300, 5);
    Trajectory b = run_minibatch_chain(s, n, 0.1, 1, theta0, 300, 5);
    REQUIRE(a.iterates.size() == b.iterates.size());
    for (std::size_t i = 0; i < a.iterates.size(); ++i) CHECK(a.iterates[i] == b.iterates[i]);
}

TEST_CASE("one-step variance scales inversely with the batch size") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    InitSampler init = InitSampler::dirac(Eigen::VectorXd::Zero(1));
    auto one_step_var = [&](int batch) {
        Ensemble ens = run_ensemble(s, n, 0.1, init, 1, {1}, 4000, 99, {}, batch);
        const Eigen::MatrixXd& snap = ens.at_time(1);
        double mean = snap.col(0).mean();
        return (snap.col(0).array() - mean).square().sum() / (snap.rows() - 1);
    };
    double v4 = one_step_var(4);
    double v8 = one_step_var(8);
    CHECK(std::abs(v4 / v8 - 2.0) < 0.2);  // halves when the batch doubles
}

TEST_CASE("small-batch regime keeps every iterate inside the target ball") {
    // additive noise: the batch-size condition reduces to
    // N >= (log(4T/delta) + 3d) * (24 K_xi / (mu C))^2 and beta <= 2/(mu+L)
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 0.09);
    const double t_hor = 50, delta = 0.05, c_ball = 1.0;
    const double k_xi = 0.3 / std::sqrt(2.0);
    const double need = (std::log(4.0 * t_hor / delta) + 3.0) *
                        std::pow(6.0 / s.mu * 4.0 * k_xi / c_ball, 2);
    const int batch = static_cast<int>(std::ceil(need));
    REQUIRE(batch >= 1);
    InitSampler init = InitSampler::dirac(Eigen::VectorXd::Zero(1));
    Ensemble ens = run_ensemble(s, n, 0.1, init, 50, {50}, 100, 31415, {}, batch);
    int escapes = 0;
    for (int r = 0; r < ens.n_replicas; ++r)
        if (ens.max_deviation[r] > c_ball) ++escapes;
    // 0.05 failure budget plus 3-sigma binomial slack on 100 replicas
    CHECK(escapes <= static_cast<int>(0.05 * 100 + 3.0 * std::sqrt(0.05 * 0.95 * 100)));
}

TEST_CASE("single-replica ensemble matches the plain chain") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(1, 0.7);
    Trajectory traj = run_chain(s, n, 0.1, theta0, 100, 4242);
    Ensemble ens = run_ensemble(s, n, 0.1, InitSampler::dirac(theta0), 100, {0, 50, 100}, 1, 4242);
    CHECK(ens.at_time(0)(0, 0) == traj.at_time(0)[0]);
    CHECK(ens.at_time(50)(0, 0) == traj.at_time(50)[0]);
    CHECK(ens.at_time(100)(0, 0) == traj.at_time(100)[0]);
}

TEST_CASE("ensembles are reproducible and thread-count independent") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    InitSampler init = InitSampler::gaussian(Eigen::VectorXd::Zero(1),
                                             Eigen::MatrixXd::Constant(1, 1, 0.5));
    RunOptions one_thread;
    one_thread.threads = 1;
    RunOptions four_threads;
    four_threads.threads = 4;
    Ensemble a = run_ensemble(s, n, 0.1, init, 50, {0, 50}, 64, 7, one_thread);
    Ensemble b = run_ensemble(s, n, 0.1, init, 50, {0, 50}, 64, 7, four_threads);
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) CHECK(a.snapshots[i] == b.snapshots[i]);
}

TEST_CASE("ensemble mean converges to the optimum for a linear gradient") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    s.theta_star = Eigen::VectorXd::Constant(1, -2.0);
    s.finalize();
    InitSampler init = InitSampler::dirac(Eigen::VectorXd::Zero(1));
    Ensemble ens = run_ensemble(s, n, 0.1, init, 200, {200}, 20000, 8);
    const Eigen::MatrixXd& snap = ens.at_time(200);
    double mean = snap.col(0).mean();
    double sd = std::sqrt((snap.col(0).array() - mean).square().sum() / (snap.rows() - 1));
    CHECK(std::abs(mean - (-2.0)) <= 4.0 * sd / std::sqrt(double(snap.rows())));
}

TEST_CASE("coupled pairs with identical inits stay glued") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    InitSampler init = InitSampler::dirac(Eigen::VectorXd::Ones(1));
    CouplingRun run = run_coupled_pair(s, n, 0.1, init, init, 50, 8, 3);
    CHECK(run.sq_dists.maxCoeff() == 0.0);
    CHECK(run.sq_dists.minCoeff() == 0.0);
}

TEST_CASE("coupled distance contracts deterministically without noise") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 0.0);
    InitSampler a = InitSampler::dirac(Eigen::VectorXd::Zero(1));
    InitSampler b = InitSampler::dirac(Eigen::VectorXd::Ones(1));
    CouplingRun run = run_coupled_pair(s, n, 0.1, a, b, 40, 1, 3);
    for (long t = 0; t <= 40; ++t)
        CHECK(run.sq_dists(t, 0) ==
              doctest::Approx(std::pow(0.81, double(t))).epsilon(1e-12));
}

TEST_CASE("shared additive noise cancels exactly in the coupled difference") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    InitSampler a = InitSampler::dirac(Eigen::VectorXd::Zero(1));
    InitSampler b = InitSampler::dirac(Eigen::VectorXd::Constant(1, 3.0));
    CouplingRun run = run_coupled_pair(s, n, 0.1, a, b, 100, 16, 12);
    for (long t = 0; t < 100; ++t) {
        double num = run.sq_dists.row(t + 1).mean();
        double den = run.sq_dists.row(t).mean();
        CHECK(num / den == doctest::Approx(0.81).epsilon(1e-10));
    }
}

TEST_CASE("inadmissible step size is rejected unless forced, and diverges loudly") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    Eigen::VectorXd theta0 = Eigen::VectorXd::Ones(1);
    CHECK_THROWS_AS(run_chain(s, n, 3.0, theta0, 10, 0), EngineError);
    RunOptions force;
    force.force_step_size = true;
    CHECK_THROWS_AS(run_chain(s, n, 3.0, theta0, 100000, 0, force), EngineError);
    // a forced but still-contractive step size runs fine
    force.force_step_size = true;
    Trajectory traj = run_chain(s, n, 1.5, theta0, 100, 0, force);
    CHECK(traj.final_iterate.allFinite());
}

TEST_CASE("long trajectories are strided to cap memory") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 0.0);
    s.dim = 2;
    s.sigma_matrix = Eigen::MatrixXd::Identity(2, 2);
    s.theta_star = Eigen::VectorXd();
    NoiseModel n2;
    n2.kind = NoiseKind::AdditiveGaussian;
    n2.cov = Eigen::MatrixXd::Zero(2, 2);
    ProblemSpec s2;
    s2.dim = 2;
    s2.sigma_matrix = Eigen::MatrixXd::Identity(2, 2);
    finalize_problem(s2, n2);
    const long t_hor = 6000000;
    Trajectory traj = run_chain(s2, n2, 0.1, Eigen::VectorXd::Ones(2), t_hor, 1);
    CHECK(traj.stride == 2);
    CHECK(traj.iterates.size() == static_cast<std::size_t>(t_hor / 2 + 1));
    CHECK(static_cast<double>(traj.iterates.size()) * 2 <= 1e7);
    CHECK(traj.final_iterate.size() == 2);
}

TEST_CASE("gradient norms bound the step length") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    RunOptions opts;
    opts.record_gradient_norms = true;
    Trajectory traj = run_chain(s, n, 0.1, Eigen::VectorXd::Ones(1), 200, 9, opts);
    REQUIRE(traj.gradient_norms.size() == 200);
    for (long t = 0; t < 200; ++t) {
        double step_len = (traj.at_time(t + 1) - traj.at_time(t)).norm();
        CHECK(step_len <= 0.1 * traj.gradient_norms[t] * (1.0 + 1e-12));
    }
}

TEST_CASE("snapshot and coupling csv round-trips are exact") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    ProblemSpec s2;
    s2.dim = 2;
    s2.sigma_matrix = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    NoiseModel n2;
    n2.kind = NoiseKind::AdditiveGaussian;
    n2.cov = Eigen::MatrixXd::Identity(2, 2);
    finalize_problem(s2, n2);
    Ensemble ens = run_ensemble(s2, n2, 0.1, InitSampler::dirac(Eigen::Vector2d(1.0, -1.0)), 20,
                                {0, 10, 20}, 7, 123);
    const char* path = "engine_roundtrip_snapshots.csv";
    write_snapshots_csv(path, ens);
    Ensemble back = read_snapshots_csv(path);
    REQUIRE(back.snapshot_times == ens.snapshot_times);
    REQUIRE(back.n_replicas == ens.n_replicas);
    for (std::size_t i = 0; i < ens.snapshots.size(); ++i)
        CHECK(back.snapshots[i] == ens.snapshots[i]);
    std::remove(path);

    CouplingRun run = run_coupled_pair(s, n, 0.1, InitSampler::dirac(Eigen::VectorXd::Zero(1)),
                                       InitSampler::dirac(Eigen::VectorXd::Ones(1)), 15, 3, 5);
    const char* cpath = "engine_roundtrip_coupling.csv";
    write_coupling_csv(cpath, run);
    CouplingRun back2 = read_coupling_csv(cpath);
    REQUIRE(back2.n_pairs == run.n_pairs);
    CHECK(back2.sq_dists == run.sq_dists);
    std::remove(cpath);
}

TEST_CASE("ensemble snapshots agree with the oracle law") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    OracleSolution sol = make_oracle(s, n, 0.1);
    Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(1, 2.0);
    GaussianLaw law = ar1_marginal_law(sol, theta0, 30);
    Ensemble ens = run_ensemble(s, n, 0.1, InitSampler::dirac(theta0), 30, {30}, 100000, 55);
    const Eigen::MatrixXd& snap = ens.at_time(30);
    double mean = snap.col(0).mean();
    double var = (snap.col(0).array() - mean).square().sum() / (snap.rows() - 1);
    CHECK(std::abs(mean - law.mean[0]) < 5.0 * std::sqrt(law.cov(0, 0) / snap.rows()));
    CHECK(std::abs(var - law.cov(0, 0)) / law.cov(0, 0) < 0.05);
}

TEST_CASE("tail averages match the closed-form averaged law") {
    ProblemSpec s;
    NoiseModel n;
    make_1d(s, n, 1.0, 1.0);
    OracleSolution sol = make_oracle(s, n, 0.1);
    Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(1, 1.0);
    GaussianLaw law = pr_average_law(sol, theta0, 10, 20);
    Eigen::MatrixXd avg =
        run_tail_averages(s, n, 0.1, InitSampler::dirac(theta0), 10, 20, 20000, 31);
    REQUIRE(avg.rows() == 20000);
    REQUIRE(avg.cols() == 1);
    double mean = avg.col(0).mean();
    double var = (avg.col(0).array() - mean).square().sum() / (avg.rows() - 1);
    CHECK(std::abs(mean - law.mean[0]) < 4.0 * std::sqrt(law.cov(0, 0) / avg.rows()));
    CHECK(std::abs(var - law.cov(0, 0)) / law.cov(0, 0) < 0.10);

    // n0 = 0, n = 1: the tail average is theta_1 itself
    Eigen::MatrixXd one =
        run_tail_averages(s, n, 0.1, InitSampler::dirac(theta0), 0, 1, 20000, 32);
    double m1 = one.col(0).mean();
    double v1 = (one.col(0).array() - m1).square().sum() / (one.rows() - 1);
    CHECK(std::abs(m1 - 0.9) < 4.0 * 0.1 / std::sqrt(20000.0));
    CHECK(std::abs(v1 - 0.01) / 0.01 < 0.10);

    CHECK_THROWS_AS(run_tail_averages(s, n, 0.1, InitSampler::dirac(theta0), -1, 5, 10, 1),
                    EngineError);
    CHECK_THROWS_AS(run_tail_averages(s, n, 0.1, InitSampler::dirac(theta0), 0, 0, 10, 1),
                    EngineError);
}

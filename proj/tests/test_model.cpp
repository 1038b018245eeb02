#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sgdlab/config.hpp"
#include "sgdlab/model.hpp"

using namespace sgdlab;

namespace {

ProblemSpec quad_spec(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& theta_star) {
    ProblemSpec s;
    s.dim = static_cast<int>(sigma.rows());
    s.objective = ObjectiveKind::Quadratic;
    s.sigma_matrix = sigma;
    s.theta_star = theta_star;
    return s;
}

NoiseModel gaussian_noise(const Eigen::MatrixXd& cov) {
    NoiseModel n;
    n.kind = NoiseKind::AdditiveGaussian;
    n.cov = cov;
    return n;
}

}  // namespace

TEST_CASE("quadratic gradient vanishes at the optimum") {
    Eigen::MatrixXd sigma(2, 2);
    sigma << 2.0, 0.5, 0.5, 1.0;
    Eigen::VectorXd star(2);
    star << -1.0, 3.0;
    ProblemSpec s = quad_spec(sigma, star);
    NoiseModel n = gaussian_noise(Eigen::MatrixXd::Identity(2, 2));
    finalize_problem(s, n);
    CHECK(gradient(s, star).norm() == 0.0);
}

TEST_CASE("quadratic gradient is sigma times the displacement") {
    Eigen::MatrixXd sigma = Eigen::Vector2d(1.0, 3.0).asDiagonal();
    ProblemSpec s = quad_spec(sigma, Eigen::VectorXd::Zero(2));
    NoiseModel n = gaussian_noise(Eigen::MatrixXd::Identity(2, 2));
    finalize_problem(s, n);
    Eigen::VectorXd theta = Eigen::VectorXd::Ones(2);
    Eigen::VectorXd g = gradient(s, theta);
    CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("logistic population gradient vanishes at the optimum") {
    ProblemSpec s;
    s.dim = 1;
    s.objective = ObjectiveKind::LogisticBall;
    s.sigma_matrix = Eigen::MatrixXd::Identity(1, 1);
    s.theta_star = Eigen::VectorXd::Constant(1, 0.5);
    s.mu = 0.05;
    s.big_l = 0.25;
    s.ball_radius = 2.0;
    NoiseModel n;
    n.kind = NoiseKind::RandomDesignGaussian;
    n.design_cov = Eigen::MatrixXd::Identity(1, 1);
    finalize_problem(s, n);
    CHECK(gradient(s, s.theta_star).norm() <= 1e-8);

    // multivariate case too
    ProblemSpec s2;
    s2.dim = 3;
    s2.objective = ObjectiveKind::LogisticBall;
    s2.sigma_matrix = Eigen::Vector3d(1.0, 2.0, 0.5).asDiagonal();
    s2.theta_star = Eigen::Vector3d(0.3, -0.2, 0.1);
    s2.mu = 0.01;
    s2.big_l = 0.5;
    s2.ball_radius = 1.0;
    NoiseModel n2;
    n2.kind = NoiseKind::RandomDesignGaussian;
    n2.design_cov = s2.sigma_matrix;
    finalize_problem(s2, n2);
    CHECK(gradient(s2, s2.theta_star).norm() <= 1e-8);
}

TEST_CASE("logistic sample gradient is unbiased for the population gradient") {
    ProblemSpec s;
    s.dim = 2;
    s.objective = ObjectiveKind::LogisticBall;
    s.sigma_matrix = Eigen::Vector2d(1.0, 0.5).asDiagonal();
    s.theta_star = Eigen::Vector2d(0.4, -0.3);
    s.mu = 0.02;
    s.big_l = 0.5;
    s.ball_radius = 1.5;
    NoiseModel n;
    n.kind = NoiseKind::RandomDesignGaussian;
    n.design_cov = s.sigma_matrix;
    finalize_problem(s, n);

    Eigen::VectorXd theta(2);
    theta << -0.6, 0.8;
    Eigen::VectorXd pop = gradient(s, theta);
    RngStream rng(7, 0);
    const int m = 1000000;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < m; ++i) acc += sample_gradient(s, n, theta, rng);
    acc /= m;
    // each gradient coordinate is bounded by |X|, so 4 sigma / sqrt(m) is generous
    double tol = 4.0 * std::sqrt(2.0) / std::sqrt(static_cast<double>(m));
    CHECK((acc - pop).norm() < tol);
}

TEST_CASE("additive sample gradient is unbiased") {
    Eigen::MatrixXd sigma = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    ProblemSpec s = quad_spec(sigma, Eigen::Vector2d(1.0, -1.0));
    NoiseModel n = gaussian_noise(0.5 * Eigen::MatrixXd::Identity(2, 2));
    finalize_problem(s, n);
    Eigen::VectorXd theta(2);
    theta << 2.0, 0.5;
    Eigen::VectorXd pop = gradient(s, theta);
    RngStream rng(11, 0);
    const int m = 1000000;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < m; ++i) acc += sample_gradient(s, n, theta, rng);
    acc /= m;
    double tol = 4.0 * std::sqrt(1.0) / std::sqrt(static_cast<double>(m));
    CHECK((acc - pop).norm() < tol);
}

TEST_CASE("random-design noise second moment obeys the growth bound") {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(2, 2);
    ProblemSpec s = quad_spec(sigma, Eigen::VectorXd::Zero(2));
    s.objective = ObjectiveKind::LeastSquaresRandomDesign;
    NoiseModel n;
    n.kind = NoiseKind::RandomDesignGaussian;
    n.design_cov = sigma;
    n.label_std = 1.0;
    finalize_problem(s, n);
    CHECK(s.sigma_sq == doctest::Approx(2.0));

    NoiseConstantEstimate est = estimate_noise_constants(s, n, 20000, 99);
    double l_sigma = est.l_sigma + 3.0 * est.l_sigma_stderr;

    // empirical E|eps(theta)|^2 at |theta - theta*| = 2
    Eigen::VectorXd theta(2);
    theta << 2.0, 0.0;
    Eigen::VectorXd pop = gradient(s, theta);
    RngStream rng(5, 1);
    const int m = 200000;
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += (sample_gradient(s, n, theta, rng) - pop).squaredNorm();
    acc /= m;
    CHECK(acc <= l_sigma * 4.0 + s.sigma_sq + 0.25);
}

TEST_CASE("bounded design matches its nominal second moment") {
    Eigen::MatrixXd sigma = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    ProblemSpec s = quad_spec(sigma, Eigen::VectorXd::Zero(2));
    s.objective = ObjectiveKind::LeastSquaresRandomDesign;
    NoiseModel n;
    n.kind = NoiseKind::RandomDesignBounded;
    n.design_cov = sigma;
    n.label_std = 0.5;
    finalize_problem(s, n);
    CHECK(n.second_moment.isApprox(sigma, 1e-12));

    RngStream rng(3, 0);
    NoiseDraw zeta;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(2, 2);
    const int m = 200000;
    double hw = n.support_half_width;
    for (int i = 0; i < m; ++i) {
        draw_noise(s, n, rng, zeta);
        CHECK(std::abs(zeta.vec[0]) <= hw * n.design_sqrt(0, 0) + 1e-12);
        acc += zeta.vec * zeta.vec.transpose();
    }
    acc /= m;
    CHECK((acc - sigma).norm() < 0.05);
}

TEST_CASE("student-t noise fills its closed-form variance") {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(1, 1);
    ProblemSpec s = quad_spec(sigma, Eigen::VectorXd::Zero(1));
    NoiseModel n;
    n.kind = NoiseKind::AdditiveStudentT;
    n.dof = 5.0;
    n.scale = 1.0;
    finalize_problem(s, n);
    CHECK(s.sigma_sq == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS([] {
        ProblemSpec bad;
        bad.dim = 1;
        bad.sigma_matrix = Eigen::MatrixXd::Identity(1, 1);
        NoiseModel nb;
        nb.kind = NoiseKind::AdditiveStudentT;
        nb.dof = 2.0;
        finalize_problem(bad, nb);
    }(), SpecError);
}

TEST_CASE("step-size validation reproduces the admissibility thresholds") {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(1, 1);
    ProblemSpec s = quad_spec(sigma, Eigen::VectorXd::Zero(1));
    NoiseModel n = gaussian_noise(Eigen::MatrixXd::Identity(1, 1));
    finalize_problem(s, n);

    StepSizeReport rep = validate_step_size(s, 0.5);
    CHECK(rep.threshold("tv_ergodicity") == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(rep.admissible("tv_ergodicity"));
    CHECK(rep.threshold("small_step_moments") == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(rep.admissible("small_step_moments"));
    CHECK(rep.threshold("grad_step_contraction") == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(rep.threshold("psi1_transfer") == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(rep.admissible("psi1_transfer"));  // 0.5 <= 0.5

    // multiplicative noise shrinks the threshold
    ProblemSpec s2 = quad_spec(sigma, Eigen::VectorXd::Zero(1));
    s2.mu = 1.0;
    s2.big_l = 1.0;
    s2.l_sigma = 3.0;
    s2.l_w = 3.0;
    s2.sigma_sq = 1.0;
    s2.finalize();
    StepSizeReport rep2 = validate_step_size(s2, 1.0);
    CHECK(rep2.threshold("tv_ergodicity") == doctest::Approx(0.5).epsilon(1e-14));
    CHECK_FALSE(rep2.admissible("tv_ergodicity"));
    CHECK(rep2.threshold("small_step_moments") == doctest::Approx(0.25).epsilon(1e-14));

    // j-th moment condition: additive noise means K = 0
    StepSizeReport rep3 = validate_step_size(s, 0.2, 4);
    CHECK(rep3.threshold("finite_moments_j") == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(rep3.admissible("finite_moments_j"));
}

TEST_CASE("finalize validates mu and l against the hessian spectrum") {
    Eigen::MatrixXd sigma = Eigen::Vector2d(1.0, 3.0).asDiagonal();
    ProblemSpec s = quad_spec(sigma, Eigen::VectorXd::Zero(2));
    NoiseModel n = gaussian_noise(Eigen::MatrixXd::Identity(2, 2));
    finalize_problem(s, n);
    CHECK(s.mu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.big_l == doctest::Approx(3.0).epsilon(1e-12));

    ProblemSpec bad = quad_spec(sigma, Eigen::VectorXd::Zero(2));
    bad.mu = 0.5;  // contradicts the spectrum
    bad.big_l = 3.0;
    NoiseModel n2 = gaussian_noise(Eigen::MatrixXd::Identity(2, 2));
    CHECK_THROWS_AS(finalize_problem(bad, n2), SpecError);
}

TEST_CASE("config round trip preserves the problem") {
    ProblemSpec s;
    s.id = "roundtrip";
    s.dim = 2;
    s.objective = ObjectiveKind::Quadratic;
    s.sigma_matrix = Eigen::Vector2d(1.0, 2.5).asDiagonal();
    s.theta_star = Eigen::Vector2d(0.25, -1.125);
    NoiseModel n = gaussian_noise(0.3 * Eigen::MatrixXd::Identity(2, 2));
    finalize_problem(s, n);

    std::string text = spec_to_config_text(s, n);
    ConfigMap cfg = parse_config_text(text);
    ProblemSpec s2 = spec_from_config(cfg);
    NoiseModel n2 = noise_from_config(cfg);
    finalize_problem(s2, n2);

    CHECK(s2.id == s.id);
    CHECK(s2.dim == s.dim);
    CHECK(s2.objective == s.objective);
    CHECK(s2.sigma_matrix.isApprox(s.sigma_matrix, 0.0));
    CHECK(s2.theta_star.isApprox(s.theta_star, 0.0));
    CHECK(s2.mu == s.mu);
    CHECK(s2.big_l == s.big_l);
    CHECK(s2.sigma_sq == s.sigma_sq);
    CHECK(n2.cov.isApprox(n.cov, 0.0));
}

TEST_CASE("mismatched design covariance is rejected") {
    Eigen::MatrixXd sigma = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    ProblemSpec s = quad_spec(sigma, Eigen::VectorXd::Zero(2));
    s.objective = ObjectiveKind::LeastSquaresRandomDesign;
    NoiseModel n;
    n.kind = NoiseKind::RandomDesignGaussian;
    n.design_cov = Eigen::MatrixXd::Identity(2, 2);  // != sigma_matrix
    n.label_std = 1.0;
    CHECK_THROWS_AS(finalize_problem(s, n), SpecError);

    ProblemSpec s2 = quad_spec(sigma, Eigen::VectorXd::Zero(2));
    s2.objective = ObjectiveKind::LeastSquaresRandomDesign;
    NoiseModel n2 = gaussian_noise(Eigen::MatrixXd::Identity(2, 2));
    CHECK_THROWS_AS(finalize_problem(s2, n2), SpecError);
}

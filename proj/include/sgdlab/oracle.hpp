#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "sgdlab/model.hpp"

namespace sgdlab {

struct OracleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GaussianLaw {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Exact distributional ground truth for the linear-gradient chain with
// additive gaussian noise: theta_{t+1} - theta* = A(theta_t - theta*) + beta w,
// A = I - beta*Sigma, w ~ N(0, C). Every marginal is gaussian, so means,
// covariances, Wasserstein and total-variation distances are all closed-form.
struct OracleSolution {
    Eigen::VectorXd theta_star;
    Eigen::MatrixXd transition;      // A
    Eigen::MatrixXd step_noise_cov;  // beta^2 C, injected each step
    Eigen::MatrixXd stationary_cov;  // V solving V = A V A^T + beta^2 C
    double beta = 0.0;
    double contraction_bound = 0.0;  // 1 - beta*mu for additive noise
    double lyapunov_residual = 0.0;  // |V - A V A^T - Q|_F

    GaussianLaw stationary_law() const { return {theta_star, stationary_cov}; }
};

// Requires a quadratic objective with additive gaussian noise and a
// contractive transition (spectral radius of A below one).
OracleSolution make_oracle(const ProblemSpec& spec, const NoiseModel& noise, double beta);

// Solves V = A V A^T + Q by LU on the vectorized fixed-point equation.
Eigen::MatrixXd solve_stationary_cov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q);

// Marginal law after t steps from a point mass or a gaussian initial law.
GaussianLaw ar1_marginal_law(const OracleSolution& sol, const Eigen::VectorXd& theta0, long t);
GaussianLaw ar1_marginal_law(const OracleSolution& sol, const GaussianLaw& init, long t);

// 2-Wasserstein distance between gaussian laws (Bures metric on covariances).
double gaussian_w2(const GaussianLaw& p, const GaussianLaw& q);

// Total variation between N(m1, v1) and N(m2, v2), adaptive-quadrature exact
// to 1e-8 (closed form when the variances coincide).
double tv_gaussian_1d(double m1, double v1, double m2, double v2);

// Law of the tail average (1/n) sum_{t=n0+1}^{n0+n} theta_t, which is gaussian
// with explicitly summable cross-covariances Cov(theta_s, theta_t) = A^{t-s} S_s.
GaussianLaw pr_average_law(const OracleSolution& sol, const GaussianLaw& init, long n0, long n);
GaussianLaw pr_average_law(const OracleSolution& sol, const Eigen::VectorXd& theta0, long n0,
                           long n);

}  // namespace sgdlab

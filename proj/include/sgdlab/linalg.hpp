#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace sgdlab {

// Largest singular value via power iteration on A^T A: 100 iterations,
// early exit at relative tolerance 1e-10.
double operator_norm(const Eigen::MatrixXd& a);

// PSD square root via symmetric eigendecomposition; eigenvalues below
// 1e-12 of the largest are clamped to zero before the root.
Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& s);

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

double spectral_radius(const Eigen::MatrixXd& a);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_stderr = 0.0;
    double intercept_stderr = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);
LineFit fit_line_weighted(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& w);

// Gauss-Hermite rule (weight e^{-x^2}) from the Jacobi matrix eigenproblem.
// E[f(Z)] for Z ~ N(0,1) is sum_i weights[i] * f(sqrt(2)*nodes[i]) / sqrt(pi).
struct GaussHermite {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
    explicit GaussHermite(int order);
    double expect_std_normal(const std::function<double(double)>& f) const;
};

}  // namespace sgdlab

#include "sgdlab/oracle.hpp"

#include <cmath>

#include "sgdlab/linalg.hpp"

namespace sgdlab {

Eigen::MatrixXd solve_stationary_cov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
    const Eigen::Index d = a.rows();
    if (a.cols() != d || q.rows() != d || q.cols() != d)
        throw OracleError("solve_stationary_cov: dimension mismatch");
    if (spectral_radius(a) >= 1.0 - 1e-14)
        throw OracleError("solve_stationary_cov: transition is not contractive");
    Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(d * d, d * d) - kron(a, a);
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(q.data(), d * d);
    Eigen::VectorXd v = sys.partialPivLu().solve(rhs);
    Eigen::MatrixXd out = Eigen::Map<const Eigen::MatrixXd>(v.data(), d, d);
    out = 0.5 * (out + out.transpose()).eval();
    return out;
}

OracleSolution make_oracle(const ProblemSpec& spec, const NoiseModel& noise, double beta) {
    if (spec.objective != ObjectiveKind::Quadratic)
        throw OracleError("closed-form law needs a quadratic objective");
    if (noise.kind != NoiseKind::AdditiveGaussian)
        throw OracleError("closed-form law needs additive gaussian noise");
    if (beta <= 0.0) throw OracleError("beta must be positive");
    OracleSolution sol;
    sol.beta = beta;
    sol.theta_star = spec.theta_star;
    const Eigen::Index d = spec.dim;
    sol.transition = Eigen::MatrixXd::Identity(d, d) - beta * spec.sigma_matrix;
    sol.step_noise_cov = beta * beta * noise.cov;
    sol.stationary_cov = solve_stationary_cov(sol.transition, sol.step_noise_cov);
    sol.contraction_bound = 1.0 - beta * spec.mu;
    sol.lyapunov_residual =
        (sol.stationary_cov -
         sol.transition * sol.stationary_cov * sol.transition.transpose() - sol.step_noise_cov)
            .norm();
    return sol;
}

GaussianLaw ar1_marginal_law(const OracleSolution& sol, const GaussianLaw& init, long t) {
    if (t < 0) throw OracleError("t must be nonnegative");
    GaussianLaw law;
    Eigen::VectorXd delta = init.mean - sol.theta_star;
    Eigen::MatrixXd cov = init.cov;
    const Eigen::MatrixXd& a = sol.transition;
    for (long s = 0; s < t; ++s) {
        delta = a * delta;
        cov = a * cov * a.transpose() + sol.step_noise_cov;
    }
    law.mean = sol.theta_star + delta;
    law.cov = 0.5 * (cov + cov.transpose());
    return law;
}

GaussianLaw ar1_marginal_law(const OracleSolution& sol, const Eigen::VectorXd& theta0, long t) {
    GaussianLaw init{theta0, Eigen::MatrixXd::Zero(theta0.size(), theta0.size())};
    return ar1_marginal_law(sol, init, t);
}

double gaussian_w2(const GaussianLaw& p, const GaussianLaw& q) {
    if (p.mean.size() != q.mean.size()) throw OracleError("gaussian_w2: dimension mismatch");
    Eigen::MatrixXd rq = sym_sqrt(q.cov);
    Eigen::MatrixXd inner = rq * p.cov * rq;
    inner = 0.5 * (inner + inner.transpose()).eval();
    Eigen::MatrixXd cross = sym_sqrt(inner);
    double bures = p.cov.trace() + q.cov.trace() - 2.0 * cross.trace();
    double d2 = (p.mean - q.mean).squaredNorm() + std::max(0.0, bures);
    return std::sqrt(d2);
}

namespace {

double normal_pdf(double x, double m, double v) {
    const double z = x - m;
    return std::exp(-0.5 * z * z / v) / std::sqrt(2.0 * M_PI * v);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace

double tv_gaussian_1d(double m1, double v1, double m2, double v2) {
    if (v1 <= 0.0 || v2 <= 0.0) throw OracleError("tv_gaussian_1d: variances must be positive");
    if (m1 == m2 && v1 == v2) return 0.0;
    if (v1 == v2) {
        // equal variances: the densities cross once, at the midpoint
        const double z = std::abs(m1 - m2) / (2.0 * std::sqrt(v1));
        return std::erf(z / std::sqrt(2.0));
    }
    const double s1 = std::sqrt(v1), s2 = std::sqrt(v2);
    const double lo = std::min(m1 - 12.0 * s1, m2 - 12.0 * s2);
    const double hi = std::max(m1 + 12.0 * s1, m2 + 12.0 * s2);
    auto f = [&](double x) { return std::abs(normal_pdf(x, m1, v1) - normal_pdf(x, m2, v2)); };
    return 0.5 * integrate(f, lo, hi, 1e-8);
}

GaussianLaw pr_average_law(const OracleSolution& sol, const GaussianLaw& init, long n0, long n) {
    if (n0 < 0 || n < 1) throw OracleError("pr_average_law: need n0 >= 0 and n >= 1");
    const Eigen::Index d = sol.theta_star.size();
    const Eigen::MatrixXd& a = sol.transition;
    Eigen::VectorXd delta = init.mean - sol.theta_star;
    Eigen::MatrixXd cov = init.cov;
    Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd running = Eigen::MatrixXd::Zero(d, d);  // sum_{s<=t in window} A^{t-s} S_s
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(d, d);
    for (long t = 1; t <= n0 + n; ++t) {
        delta = a * delta;
        cov = a * cov * a.transpose() + sol.step_noise_cov;
        if (t > n0) {
            running = a * running;
            running += cov;
            mean_acc += delta;
            total += running + running.transpose() - cov;
        }
    }
    GaussianLaw law;
    const double inv_n = 1.0 / static_cast<double>(n);
    law.mean = sol.theta_star + inv_n * mean_acc;
    law.cov = (inv_n * inv_n) * 0.5 * (total + total.transpose());
    return law;
}

GaussianLaw pr_average_law(const OracleSolution& sol, const Eigen::VectorXd& theta0, long n0,
                           long n) {
    GaussianLaw init{theta0, Eigen::MatrixXd::Zero(theta0.size(), theta0.size())};
    return pr_average_law(sol, init, n0, n);
}

}  // namespace sgdlab

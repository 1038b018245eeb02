#include "sgdlab/linalg.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace sgdlab {

double operator_norm(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return 0.0;
    if (a.rows() == 1 && a.cols() == 1) return std::abs(a(0, 0));
    const Eigen::Index n = a.cols();
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x[i] = 1.0 + 0.01 * static_cast<double>((i * 2654435761ULL) % 97) / 97.0;
    x.normalize();
    Eigen::VectorXd ax(a.rows());
    double sigma = 0.0;
    for (int it = 0; it < 100; ++it) {
        ax.noalias() = a * x;
        double s = ax.norm();
        if (s == 0.0) return 0.0;
        x.noalias() = a.transpose() * ax;
        double xn = x.norm();
        if (xn == 0.0) return s;
        x /= xn;
        if (std::abs(s - sigma) <= 1e-10 * std::max(1.0, s)) {
            sigma = s;
            break;
        }
        sigma = s;
    }
    return sigma;
}

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& s) {
    if (s.rows() != s.cols()) throw std::invalid_argument("sym_sqrt: matrix not square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
    Eigen::VectorXd ev = es.eigenvalues();
    const double clamp = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -clamp) throw std::invalid_argument("sym_sqrt: matrix not PSD");
        ev[i] = ev[i] > clamp ? std::sqrt(ev[i]) : 0.0;
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

double spectral_radius(const Eigen::MatrixXd& a) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> w(x.size(), 1.0);
    return fit_line_weighted(x, y, w);
}

LineFit fit_line_weighted(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& w) {
    if (x.size() != y.size() || x.size() != w.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need >= 2 points of equal length");
    double sw = 0, mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        mx += w[i] * x[i];
        my += w[i] * y[i];
    }
    mx /= sw;
    my /= sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
        syy += w[i] * (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    if (x.size() > 2) {
        double rss = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double r = y[i] - f.intercept - f.slope * x[i];
            rss += w[i] * r * r;
        }
        double dof = static_cast<double>(x.size()) - 2.0;
        double s2 = rss / dof;
        f.slope_stderr = std::sqrt(s2 / sxx);
        f.intercept_stderr = std::sqrt(s2 * (1.0 / sw + mx * mx / sxx));
    }
    return f;
}

GaussHermite::GaussHermite(int order) {
    if (order < 1) throw std::invalid_argument("GaussHermite: order must be positive");
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        double b = std::sqrt(k / 2.0);
        j(k, k - 1) = b;
        j(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    nodes = es.eigenvalues();
    weights.resize(order);
    const double sqrt_pi = std::sqrt(M_PI);
    for (int i = 0; i < order; ++i) {
        double v0 = es.eigenvectors()(0, i);
        weights[i] = sqrt_pi * v0 * v0;
    }
}

double GaussHermite::expect_std_normal(const std::function<double(double)>& f) const {
    const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
    const double sqrt2 = std::sqrt(2.0);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < nodes.size(); ++i)
        acc += weights[i] * f(sqrt2 * nodes[i]);
    return acc * inv_sqrt_pi;
}

}  // namespace sgdlab

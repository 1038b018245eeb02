#include "sgdlab/model.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "sgdlab/linalg.hpp"

namespace sgdlab {

namespace {

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const GaussHermite& gh64() {
    static const GaussHermite rule(64);
    return rule;
}

void check_square(const Eigen::MatrixXd& m, int dim, const char* name) {
    if (m.rows() != dim || m.cols() != dim)
        throw SpecError(std::string(name) + " must be " + std::to_string(dim) + "x" +
                        std::to_string(dim));
    if (!m.isApprox(m.transpose(), 1e-10))
        throw SpecError(std::string(name) + " must be symmetric");
}

}  // namespace

const char* to_string(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::Quadratic: return "quadratic";
        case ObjectiveKind::LeastSquaresRandomDesign: return "least_squares_random_design";
        case ObjectiveKind::LogisticBall: return "logistic_ball";
    }
    return "?";
}

const char* to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::AdditiveGaussian: return "additive_gaussian";
        case NoiseKind::AdditiveStudentT: return "additive_student_t";
        case NoiseKind::RandomDesignGaussian: return "random_design_gaussian";
        case NoiseKind::RandomDesignBounded: return "random_design_bounded";
    }
    return "?";
}

ObjectiveKind objective_kind_from_string(const std::string& s) {
    if (s == "quadratic") return ObjectiveKind::Quadratic;
    if (s == "least_squares_random_design") return ObjectiveKind::LeastSquaresRandomDesign;
    if (s == "logistic_ball") return ObjectiveKind::LogisticBall;
    throw SpecError("unknown objective kind '" + s + "'");
}

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "additive_gaussian") return NoiseKind::AdditiveGaussian;
    if (s == "additive_student_t") return NoiseKind::AdditiveStudentT;
    if (s == "random_design_gaussian") return NoiseKind::RandomDesignGaussian;
    if (s == "random_design_bounded") return NoiseKind::RandomDesignBounded;
    throw SpecError("unknown noise kind '" + s + "'");
}

void NoiseModel::finalize(int dim) {
    switch (kind) {
        case NoiseKind::AdditiveGaussian:
            if (cov.size() == 0) cov = Eigen::MatrixXd::Zero(dim, dim);
            check_square(cov, dim, "noise.cov");
            cov_sqrt = sym_sqrt(cov);
            break;
        case NoiseKind::AdditiveStudentT:
            if (dof <= 2.0)
                throw SpecError("noise.dof must exceed 2 (the chain needs a finite variance)");
            if (scale < 0.0) throw SpecError("noise.scale must be nonnegative");
            break;
        case NoiseKind::RandomDesignGaussian:
        case NoiseKind::RandomDesignBounded:
            if (design_cov.size() == 0)
                throw SpecError("noise.design_cov is required for random-design noise");
            check_square(design_cov, dim, "noise.design_cov");
            design_sqrt = sym_sqrt(design_cov);
            if (label_std < 0.0) throw SpecError("noise.label_std must be nonnegative");
            if (kind == NoiseKind::RandomDesignBounded) {
                if (support_half_width <= 0.0)
                    throw SpecError("noise.support_half_width must be positive");
                second_moment = (support_half_width * support_half_width / 3.0) * design_cov;
            } else {
                second_moment = design_cov;
            }
            break;
    }
}

void ProblemSpec::finalize() {
    if (dim < 1) throw SpecError("dim must be a positive integer");
    if (theta_star.size() == 0) theta_star = Eigen::VectorXd::Zero(dim);
    if (theta_star.size() != dim) throw SpecError("theta_star length must equal dim");
    if (sigma_matrix.size() == 0)
        throw SpecError("sigma_matrix is required");
    check_square(sigma_matrix, dim, "sigma_matrix");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_matrix);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0) throw SpecError("sigma_matrix must be positive definite");
    if (objective != ObjectiveKind::LogisticBall) {
        // mu and l are pinned to the extreme eigenvalues of the Hessian
        if (mu == 0.0) mu = lo;
        if (big_l == 0.0) big_l = hi;
        if (std::abs(mu - lo) > 1e-8 * hi || std::abs(big_l - hi) > 1e-8 * hi)
            throw SpecError("mu/l must equal the extreme eigenvalues of sigma_matrix (" +
                            fmt17(lo) + ", " + fmt17(hi) + ")");
    } else {
        if (mu <= 0.0) throw SpecError("mu must be positive (user-supplied for logistic_ball)");
        if (big_l <= 0.0) throw SpecError("l must be positive (user-supplied for logistic_ball)");
        if (!ball_radius) throw SpecError("ball_radius is required for logistic_ball");
        if (theta_star.norm() > *ball_radius)
            throw SpecError("theta_star must lie inside the projection ball");
    }
    if (mu > big_l) throw SpecError("mu must not exceed l");
    if (l_sigma < 0.0 || sigma_sq < 0.0 || l_w < 0.0)
        throw SpecError("l_sigma, sigma_sq, l_w must be nonnegative");
    if (ball_radius && *ball_radius <= 0.0) throw SpecError("ball_radius must be positive");
    if (k_bar && *k_bar < 0.0) throw SpecError("k_bar must be nonnegative");
    if (k_lip && *k_lip < 0.0) throw SpecError("k_lip must be nonnegative");
    sigma_sqrt = sym_sqrt(sigma_matrix);
}

void finalize_problem(ProblemSpec& spec, NoiseModel& noise) {
    spec.finalize();
    noise.finalize(spec.dim);

    if (spec.objective == ObjectiveKind::LeastSquaresRandomDesign && !noise.random_design())
        throw SpecError("least_squares_random_design requires a random-design noise kind");
    if (noise.random_design() && spec.objective != ObjectiveKind::LogisticBall) {
        if (!noise.second_moment.isApprox(spec.sigma_matrix, 1e-8))
            throw SpecError("random-design noise needs E[XX^T] equal to sigma_matrix "
                            "(scale design_cov or support_half_width accordingly)");
    }
    if (spec.objective == ObjectiveKind::LogisticBall) {
        if (noise.kind == NoiseKind::RandomDesignBounded)
            throw SpecError("logistic_ball supports gaussian design only");
        if (noise.kind == NoiseKind::RandomDesignGaussian &&
            !noise.design_cov.isApprox(spec.sigma_matrix, 1e-8))
            throw SpecError("logistic_ball design_cov must equal sigma_matrix");
    }

    // closed-form noise constants; user values are checked, zeros are filled
    double closed_sigma_sq = -1.0;
    switch (noise.kind) {
        case NoiseKind::AdditiveGaussian:
            closed_sigma_sq = noise.cov.trace();
            if (spec.l_sigma != 0.0 || spec.l_w != 0.0)
                throw SpecError("additive noise has l_sigma = l_w = 0 exactly");
            break;
        case NoiseKind::AdditiveStudentT:
            closed_sigma_sq =
                spec.dim * noise.scale * noise.scale * noise.dof / (noise.dof - 2.0);
            if (spec.l_sigma != 0.0 || spec.l_w != 0.0)
                throw SpecError("additive noise has l_sigma = l_w = 0 exactly");
            break;
        case NoiseKind::RandomDesignGaussian:
        case NoiseKind::RandomDesignBounded:
            if (spec.objective != ObjectiveKind::LogisticBall)
                closed_sigma_sq = noise.label_std * noise.label_std * noise.second_moment.trace();
            break;
    }
    if (closed_sigma_sq >= 0.0) {
        if (spec.sigma_sq == 0.0 && closed_sigma_sq > 0.0)
            spec.sigma_sq = closed_sigma_sq;
        else if (std::abs(spec.sigma_sq - closed_sigma_sq) >
                 1e-9 * std::max(1.0, closed_sigma_sq))
            throw SpecError("sigma_sq inconsistent with its closed form " + fmt17(closed_sigma_sq));
    }
}

void draw_noise(const ProblemSpec& spec, const NoiseModel& noise, RngStream& rng, NoiseDraw& out) {
    const int d = spec.dim;
    if (out.vec.size() != d) out.vec.resize(d);
    switch (noise.kind) {
        case NoiseKind::AdditiveGaussian: {
            if (d == 1) {
                out.vec[0] = noise.cov_sqrt(0, 0) * rng.normal();
            } else {
                static thread_local Eigen::VectorXd z;
                z.resize(d);
                rng.fill_normal(z.data(), d);
                out.vec.noalias() = noise.cov_sqrt * z;
            }
            break;
        }
        case NoiseKind::AdditiveStudentT: {
            std::student_t_distribution<double> st(noise.dof);
            for (int i = 0; i < d; ++i) out.vec[i] = noise.scale * st(rng);
            break;
        }
        case NoiseKind::RandomDesignGaussian: {
            if (d == 1) {
                out.vec[0] = noise.design_sqrt(0, 0) * rng.normal();
            } else {
                static thread_local Eigen::VectorXd z;
                z.resize(d);
                rng.fill_normal(z.data(), d);
                out.vec.noalias() = noise.design_sqrt * z;
            }
            if (spec.objective == ObjectiveKind::LogisticBall)
                out.label_u = rng.uniform01();
            else
                out.label_noise = noise.label_std * rng.normal();
            break;
        }
        case NoiseKind::RandomDesignBounded: {
            const double hw = noise.support_half_width;
            if (d == 1) {
                out.vec[0] = noise.design_sqrt(0, 0) * rng.uniform(-hw, hw);
            } else {
                static thread_local Eigen::VectorXd z;
                z.resize(d);
                for (int i = 0; i < d; ++i) z[i] = rng.uniform(-hw, hw);
                out.vec.noalias() = noise.design_sqrt * z;
            }
            const double b = 1.7320508075688772 * noise.label_std;
            out.label_noise = rng.uniform(-b, b);
            break;
        }
    }
}

namespace {

// Population gradient of the logistic log-loss over a Gaussian design:
// E[X (sigmoid(X'a) - sigmoid(X'b))] reduces to a 1- or 2-dimensional
// Gaussian expectation over the projections (X'a, X'b).
Eigen::VectorXd logistic_gradient(const ProblemSpec& spec, const Eigen::VectorXd& theta) {
    const Eigen::MatrixXd& sig = spec.sigma_matrix;
    const Eigen::VectorXd& b = spec.theta_star;
    const Eigen::VectorXd& a = theta;
    Eigen::VectorXd sig_a = sig * a;
    Eigen::VectorXd sig_b = sig * b;
    const double saa = a.dot(sig_a);
    const double sbb = b.dot(sig_b);
    const double sab = a.dot(sig_b);
    const double scale = std::max(saa, sbb);
    if (scale < 1e-300) return Eigen::VectorXd::Zero(spec.dim);

    const GaussHermite& gh = gh64();
    const double det = saa * sbb - sab * sab;
    if (det <= 1e-12 * scale * scale) {
        // projections are collinear: single direction carries everything
        if (saa >= sbb) {
            const double kappa = sab / saa;
            const double sd = std::sqrt(saa);
            double m = gh.expect_std_normal([&](double z) {
                double s = sd * z;
                return s * (sigmoid(s) - sigmoid(kappa * s));
            });
            return sig_a * (m / saa);
        }
        const double kappa = sab / sbb;
        const double sd = std::sqrt(sbb);
        double m = gh.expect_std_normal([&](double z) {
            double t = sd * z;
            return t * (sigmoid(kappa * t) - sigmoid(t));
        });
        return sig_b * (m / sbb);
    }

    // 2x2 Cholesky of the projection covariance
    const double l11 = std::sqrt(saa);
    const double l21 = sab / l11;
    const double l22 = std::sqrt(sbb - l21 * l21);
    const double inv_pi = 1.0 / M_PI;
    const double sqrt2 = std::sqrt(2.0);
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index i = 0; i < gh.nodes.size(); ++i) {
        const double z1 = sqrt2 * gh.nodes[i];
        const double s = l11 * z1;
        const double sig_s = sigmoid(s);
        for (Eigen::Index j = 0; j < gh.nodes.size(); ++j) {
            const double z2 = sqrt2 * gh.nodes[j];
            const double t = l21 * z1 + l22 * z2;
            const double w = gh.weights[i] * gh.weights[j];
            const double h = sig_s - sigmoid(t);
            m1 += w * s * h;
            m2 += w * t * h;
        }
    }
    m1 *= inv_pi;
    m2 *= inv_pi;
    // solve C c = m for the conditional-expectation coefficients
    const double c1 = (sbb * m1 - sab * m2) / det;
    const double c2 = (saa * m2 - sab * m1) / det;
    return c1 * sig_a + c2 * sig_b;
}

}  // namespace

void gradient_into(const ProblemSpec& spec, const Eigen::VectorXd& theta, Eigen::VectorXd& out) {
    if (theta.size() != spec.dim) throw SpecError("gradient: theta has wrong dimension");
    switch (spec.objective) {
        case ObjectiveKind::Quadratic:
        case ObjectiveKind::LeastSquaresRandomDesign:
            out.noalias() = spec.sigma_matrix * (theta - spec.theta_star);
            break;
        case ObjectiveKind::LogisticBall:
            if (theta.norm() > *spec.ball_radius * (1.0 + 1e-12))
                throw SpecError("gradient: theta outside the projection ball");
            out = logistic_gradient(spec, theta);
            break;
    }
}

Eigen::VectorXd gradient(const ProblemSpec& spec, const Eigen::VectorXd& theta) {
    Eigen::VectorXd out(spec.dim);
    gradient_into(spec, theta, out);
    return out;
}

void stochastic_gradient_into(const ProblemSpec& spec, const NoiseModel& noise,
                              const Eigen::VectorXd& theta, const NoiseDraw& zeta,
                              Eigen::VectorXd& out) {
    switch (noise.kind) {
        case NoiseKind::AdditiveGaussian:
        case NoiseKind::AdditiveStudentT:
            gradient_into(spec, theta, out);
            out += zeta.vec;
            break;
        case NoiseKind::RandomDesignGaussian:
        case NoiseKind::RandomDesignBounded:
            if (spec.objective == ObjectiveKind::LogisticBall) {
                const double s_star = zeta.vec.dot(spec.theta_star);
                const bool y_pos = zeta.label_u < sigmoid(s_star);
                const double s = zeta.vec.dot(theta);
                out = (sigmoid(s) - (y_pos ? 1.0 : 0.0)) * zeta.vec;
            } else {
                // least-squares sample gradient X(X'theta - Y), Y = X'theta* + xi
                const double r = zeta.vec.dot(theta - spec.theta_star) - zeta.label_noise;
                out = r * zeta.vec;
            }
            break;
    }
}

Eigen::VectorXd sample_gradient(const ProblemSpec& spec, const NoiseModel& noise,
                                const Eigen::VectorXd& theta, RngStream& rng) {
    if (theta.size() != spec.dim) throw SpecError("sample_gradient: theta has wrong dimension");
    NoiseDraw zeta;
    draw_noise(spec, noise, rng, zeta);
    Eigen::VectorXd out(spec.dim);
    stochastic_gradient_into(spec, noise, theta, zeta, out);
    return out;
}

const StepSizeCondition* StepSizeReport::find(const std::string& id) const {
    for (const auto& c : conditions)
        if (c.condition_id == id) return &c;
    return nullptr;
}

bool StepSizeReport::admissible(const std::string& id) const {
    const StepSizeCondition* c = find(id);
    if (!c) throw SpecError("unknown step-size condition '" + id + "'");
    return c->admissible;
}

double StepSizeReport::threshold(const std::string& id) const {
    const StepSizeCondition* c = find(id);
    if (!c) throw SpecError("unknown step-size condition '" + id + "'");
    return c->threshold;
}

StepSizeReport validate_step_size(const ProblemSpec& spec, double beta, std::optional<int> j) {
    if (beta <= 0.0) throw SpecError("beta must be positive");
    const double mu = spec.mu, l = spec.big_l;
    StepSizeReport rep;
    rep.beta = beta;
    auto add = [&](const std::string& id, double thr, bool strict) {
        bool ok = strict ? beta < thr : beta <= thr;
        rep.conditions.push_back({id, thr, strict, ok});
    };
    add("tv_ergodicity", 2.0 * mu / (mu * mu + std::max(mu * l, spec.l_sigma)), true);
    add("w2_contraction", 2.0 * mu / (mu * mu + std::max(spec.l_w, mu * l)), true);
    add("small_step_moments", mu / (mu * mu + spec.l_sigma), false);
    add("grad_step_contraction", 2.0 / (mu + l), false);
    add("psi1_transfer", 1.0 / (2.0 * mu), false);
    add("tail_average", std::min(2.0 * mu / (mu * mu + std::max(mu * l, spec.l_w)),
                                 mu / (mu * mu + spec.l_sigma)),
        true);
    if (j) {
        if (*j < 1) throw SpecError("j must be a positive integer");
        double k2 = 0.0;  // Lp growth constant of the noise; zero for additive kinds
        if (spec.l_sigma > 0.0) k2 = spec.l_sigma;
        add("finite_moments_j", mu / (static_cast<double>(*j) * (mu * mu + k2)), false);
    }
    return rep;
}

NoiseConstantEstimate estimate_noise_constants(const ProblemSpec& spec, const NoiseModel& noise,
                                               std::size_t n_draws, std::uint64_t seed) {
    NoiseConstantEstimate est;
    est.n_draws = n_draws;
    switch (noise.kind) {
        case NoiseKind::AdditiveGaussian:
            est.sigma_sq = noise.cov.trace();
            return est;
        case NoiseKind::AdditiveStudentT:
            est.sigma_sq = spec.dim * noise.scale * noise.scale * noise.dof / (noise.dof - 2.0);
            return est;
        default: break;
    }
    RngStream rng(seed, 0x6e6f697365ULL);
    NoiseDraw zeta;
    Eigen::MatrixXd dev(spec.dim, spec.dim);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n_draws; ++i) {
        draw_noise(spec, noise, rng, zeta);
        dev.noalias() = zeta.vec * zeta.vec.transpose();
        dev -= noise.second_moment;
        double s = operator_norm(dev);
        double v = s * s;
        sum += v;
        sumsq += v * v;
    }
    const double n = static_cast<double>(n_draws);
    est.l_sigma = est.l_w = sum / n;
    est.l_sigma_stderr = std::sqrt(std::max(0.0, sumsq / n - est.l_sigma * est.l_sigma) / n);
    if (spec.objective == ObjectiveKind::LogisticBall) {
        // second moment of the sample-gradient noise at the optimum
        Eigen::VectorXd g0 = gradient(spec, spec.theta_star);
        Eigen::VectorXd g(spec.dim);
        double acc = 0.0;
        for (std::size_t i = 0; i < n_draws; ++i) {
            draw_noise(spec, noise, rng, zeta);
            stochastic_gradient_into(spec, noise, spec.theta_star, zeta, g);
            acc += (g - g0).squaredNorm();
        }
        est.sigma_sq = acc / n;
        // 1-Lipschitz sigmoid derivative caps the multiplicative part
        est.l_sigma = est.l_w = est.l_sigma / 16.0 + noise.second_moment.operatorNorm();
    } else {
        est.sigma_sq = noise.label_std * noise.label_std * noise.second_moment.trace();
    }
    return est;
}

ProblemSpec spec_from_config(const ConfigMap& cfg, const std::string& prefix) {
    auto key = [&](const char* k) { return prefix.empty() ? std::string(k) : prefix + "." + k; };
    ProblemSpec spec;
    spec.id = cfg.get_string(key("id"), "spec");
    spec.dim = static_cast<int>(cfg.get_integer(key("dim")));
    spec.objective = objective_kind_from_string(cfg.get_string(key("objective")));
    if (cfg.has(key("theta_star"))) spec.theta_star = cfg.get_vector(key("theta_star"));
    if (cfg.has(key("sigma_matrix"))) spec.sigma_matrix = cfg.get_matrix(key("sigma_matrix"));
    spec.mu = cfg.get_number(key("mu"), 0.0);
    spec.big_l = cfg.get_number(key("l"), 0.0);
    spec.l_sigma = cfg.get_number(key("l_sigma"), 0.0);
    spec.sigma_sq = cfg.get_number(key("sigma_sq"), 0.0);
    spec.l_w = cfg.get_number(key("l_w"), 0.0);
    if (cfg.has(key("k_bar"))) spec.k_bar = cfg.get_number(key("k_bar"));
    if (cfg.has(key("k_lip"))) spec.k_lip = cfg.get_number(key("k_lip"));
    if (cfg.has(key("ball_radius"))) spec.ball_radius = cfg.get_number(key("ball_radius"));
    return spec;
}

NoiseModel noise_from_config(const ConfigMap& cfg, const std::string& prefix) {
    NoiseModel noise;
    noise.kind = noise_kind_from_string(cfg.get_string(prefix + ".kind"));
    if (cfg.has(prefix + ".cov")) noise.cov = cfg.get_matrix(prefix + ".cov");
    noise.dof = cfg.get_number(prefix + ".dof", 5.0);
    noise.scale = cfg.get_number(prefix + ".scale", 1.0);
    if (cfg.has(prefix + ".design_cov")) noise.design_cov = cfg.get_matrix(prefix + ".design_cov");
    noise.label_std = cfg.get_number(prefix + ".label_std", 0.0);
    noise.support_half_width =
        cfg.get_number(prefix + ".support_half_width", 1.7320508075688772);
    return noise;
}

namespace {

void emit_matrix(std::ostringstream& out, const std::string& key, const Eigen::MatrixXd& m) {
    out << key << " = [";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << "[";
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out << fmt17(m(i, j)) << (j + 1 < m.cols() ? ", " : "");
        out << "]" << (i + 1 < m.rows() ? ", " : "");
    }
    out << "]\n";
}

void emit_vector(std::ostringstream& out, const std::string& key, const Eigen::VectorXd& v) {
    out << key << " = [";
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out << fmt17(v[i]) << (i + 1 < v.size() ? ", " : "");
    out << "]\n";
}

}  // namespace

std::string spec_to_config_text(const ProblemSpec& spec, const NoiseModel& noise) {
    std::ostringstream out;
    out << "id = \"" << spec.id << "\"\n";
    out << "dim = " << spec.dim << "\n";
    out << "objective = " << to_string(spec.objective) << "\n";
    if (spec.theta_star.size()) emit_vector(out, "theta_star", spec.theta_star);
    if (spec.sigma_matrix.size()) emit_matrix(out, "sigma_matrix", spec.sigma_matrix);
    out << "mu = " << fmt17(spec.mu) << "\n";
    out << "l = " << fmt17(spec.big_l) << "\n";
    out << "l_sigma = " << fmt17(spec.l_sigma) << "\n";
    out << "sigma_sq = " << fmt17(spec.sigma_sq) << "\n";
    out << "l_w = " << fmt17(spec.l_w) << "\n";
    if (spec.k_bar) out << "k_bar = " << fmt17(*spec.k_bar) << "\n";
    if (spec.k_lip) out << "k_lip = " << fmt17(*spec.k_lip) << "\n";
    if (spec.ball_radius) out << "ball_radius = " << fmt17(*spec.ball_radius) << "\n";
    out << "noise.kind = " << to_string(noise.kind) << "\n";
    switch (noise.kind) {
        case NoiseKind::AdditiveGaussian:
            if (noise.cov.size()) emit_matrix(out, "noise.cov", noise.cov);
            break;
        case NoiseKind::AdditiveStudentT:
            out << "noise.dof = " << fmt17(noise.dof) << "\n";
            out << "noise.scale = " << fmt17(noise.scale) << "\n";
            break;
        case NoiseKind::RandomDesignGaussian:
        case NoiseKind::RandomDesignBounded:
            if (noise.design_cov.size()) emit_matrix(out, "noise.design_cov", noise.design_cov);
            out << "noise.label_std = " << fmt17(noise.label_std) << "\n";
            if (noise.kind == NoiseKind::RandomDesignBounded)
                out << "noise.support_half_width = " << fmt17(noise.support_half_width) << "\n";
            break;
    }
    return out.str();
}

}  // namespace sgdlab

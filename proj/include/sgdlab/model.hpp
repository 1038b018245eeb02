#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdlab/config.hpp"
#include "sgdlab/rng.hpp"

namespace sgdlab {

struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ObjectiveKind { Quadratic, LeastSquaresRandomDesign, LogisticBall };
enum class NoiseKind { AdditiveGaussian, AdditiveStudentT, RandomDesignGaussian, RandomDesignBounded };

const char* to_string(ObjectiveKind k);
const char* to_string(NoiseKind k);
ObjectiveKind objective_kind_from_string(const std::string& s);
NoiseKind noise_kind_from_string(const std::string& s);

// Gradient-noise distribution. For random-design kinds the effective design
// second moment is E[XX^T] = design_cov for the Gaussian kind and
// (support_half_width^2/3) * design_cov for the bounded kind, whose
// standardized coordinates are uniform on (-support_half_width, +support_half_width).
struct NoiseModel {
    NoiseKind kind = NoiseKind::AdditiveGaussian;

    Eigen::MatrixXd cov;        // AdditiveGaussian: noise covariance C
    double dof = 5.0;           // AdditiveStudentT: degrees of freedom
    double scale = 1.0;         // AdditiveStudentT: per-coordinate scale
    Eigen::MatrixXd design_cov; // RandomDesign*: design shape matrix
    double label_std = 0.0;     // RandomDesign*: label noise standard deviation
    double support_half_width = 1.7320508075688772;  // RandomDesignBounded

    // cached by finalize()
    Eigen::MatrixXd cov_sqrt;
    Eigen::MatrixXd design_sqrt;
    Eigen::MatrixXd second_moment;  // E[XX^T] for random-design kinds

    bool additive() const {
        return kind == NoiseKind::AdditiveGaussian || kind == NoiseKind::AdditiveStudentT;
    }
    bool random_design() const { return !additive(); }
    bool heavy_tailed() const { return kind == NoiseKind::AdditiveStudentT; }

    void finalize(int dim);
};

// A problem instance: objective shape, optimum, and the regularity constants
// every admissibility condition and bound is computed from.
struct ProblemSpec {
    std::string id = "spec";
    int dim = 1;
    ObjectiveKind objective = ObjectiveKind::Quadratic;
    Eigen::VectorXd theta_star;
    Eigen::MatrixXd sigma_matrix;  // Hessian (Quadratic) or E[XX^T] (regression, logistic design)
    double mu = 0.0;
    double big_l = 0.0;
    double l_sigma = 0.0;   // E|eps(theta)|^2 <= l_sigma*|theta-theta*|^2 + sigma_sq
    double sigma_sq = 0.0;
    double l_w = 0.0;       // E|eps(theta)-eps(theta')|^2 <= l_w*|theta-theta'|^2
    std::optional<double> k_bar;   // norm-noise sub-Gaussian constant
    std::optional<double> k_lip;   // Lipschitz-functional sub-Gaussian constant
    bool k_bar_is_mc = false;
    bool k_lip_is_mc = false;
    std::optional<double> ball_radius;  // projection domain |theta| <= R

    Eigen::MatrixXd sigma_sqrt;  // cached by finalize()

    void finalize();
};

// Validates the pair and fills cached factors plus closed-form noise constants
// (sigma_sq for additive kinds and for random-design label noise) when the
// user left them at zero.
void finalize_problem(ProblemSpec& spec, NoiseModel& noise);

// One primitive noise realization, drawn independently of theta so that
// synchronously coupled chains can share it.
struct NoiseDraw {
    Eigen::VectorXd vec;       // additive noise vector, or design vector X
    double label_noise = 0.0;  // regression label noise
    double label_u = 0.0;      // uniform deciding the logistic label
};

void draw_noise(const ProblemSpec& spec, const NoiseModel& noise, RngStream& rng, NoiseDraw& out);

Eigen::VectorXd gradient(const ProblemSpec& spec, const Eigen::VectorXd& theta);
void gradient_into(const ProblemSpec& spec, const Eigen::VectorXd& theta, Eigen::VectorXd& out);

// G(theta, zeta) = gradient + noise for a concrete realization.
void stochastic_gradient_into(const ProblemSpec& spec, const NoiseModel& noise,
                              const Eigen::VectorXd& theta, const NoiseDraw& zeta,
                              Eigen::VectorXd& out);

Eigen::VectorXd sample_gradient(const ProblemSpec& spec, const NoiseModel& noise,
                                const Eigen::VectorXd& theta, RngStream& rng);

struct StepSizeCondition {
    std::string condition_id;
    double threshold = 0.0;
    bool strict = true;  // strict '<' vs '<='
    bool admissible = false;
};

struct StepSizeReport {
    double beta = 0.0;
    std::vector<StepSizeCondition> conditions;
    const StepSizeCondition* find(const std::string& id) const;
    bool admissible(const std::string& id) const;
    double threshold(const std::string& id) const;
};

// Condition ids:
//   tv_ergodicity         beta <  2mu/(mu^2 + max(mu*L, L_sigma))
//   w2_contraction        beta <  2mu/(mu^2 + max(L_W, mu*L))
//   small_step_moments    beta <= mu/(mu^2 + L_sigma)
//   grad_step_contraction beta <= 2/(mu + L)
//   psi1_transfer         beta <= 1/(2mu)
//   tail_average          beta <  min(2mu/(mu^2 + max(mu*L, L_W)), mu/(mu^2 + L_sigma))
//   finite_moments_j      beta <= mu/(j(mu^2 + K^2)), K = 0 additive, sqrt(L_sigma) otherwise
StepSizeReport validate_step_size(const ProblemSpec& spec, double beta,
                                  std::optional<int> j = std::nullopt);

// Monte Carlo estimates of the multiplicative-noise constants
// l_sigma = l_w = E|XX^T - E XX^T|_2^2 and the exact sigma_sq; additive
// kinds return their closed forms with zero error.
struct NoiseConstantEstimate {
    double l_sigma = 0.0;
    double l_w = 0.0;
    double sigma_sq = 0.0;
    double l_sigma_stderr = 0.0;
    std::size_t n_draws = 0;
};

NoiseConstantEstimate estimate_noise_constants(const ProblemSpec& spec, const NoiseModel& noise,
                                               std::size_t n_draws, std::uint64_t seed);

// config text serialization (keys documented in the README)
ProblemSpec spec_from_config(const ConfigMap& cfg, const std::string& prefix = "");
NoiseModel noise_from_config(const ConfigMap& cfg, const std::string& prefix = "noise");
std::string spec_to_config_text(const ProblemSpec& spec, const NoiseModel& noise);

}  // namespace sgdlab

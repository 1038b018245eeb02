#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdlab/engine.hpp"
#include "sgdlab/oracle.hpp"

namespace sgdlab {

struct DiagnosticsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Concentration families:
//   SubGaussianTilde  E exp(l^2 X^2) <= exp(l^2 K^2) for 0 <= l <= 1/K
//   SubGaussian       E exp(l X)     <= exp(l^2 K^2) for all l
//   SubExpTilde       |X|_{L_p}      <= K p          for all p >= 1
//   SubExp            E exp(l X)     <= exp(l^2 K^2) for |l| <= 1/K
enum class PsiFamily { SubGaussianTilde, SubGaussian, SubExpTilde, SubExp };
enum class PsiMethod { MomentRatio, MgfGrid };
const char* to_string(PsiFamily f);
const char* to_string(PsiMethod m);

struct ConcentrationEstimate {
    PsiFamily family = PsiFamily::SubGaussianTilde;
    double constant = 0.0;
    PsiMethod method = PsiMethod::MgfGrid;
    std::size_t n_samples = 0;
    int p_max = 0;                    // MomentRatio
    std::vector<double> lambda_grid;  // MgfGrid, relative points c so that lambda = c/K
    double mc_error = 0.0;
    std::string label;                // which scalar quantity was measured
};

// One verified inequality. pass <=> empirical_value <= bound + mc_error, except
// for two-sided band checks which say so in the note.
struct BoundCheck {
    std::string claim_id;
    double empirical_value = 0.0;
    double bound = 0.0;
    double margin = 0.0;  // bound - empirical_value
    double mc_error = 0.0;
    bool pass = false;
    std::string note;
};

BoundCheck make_bound_check(const std::string& claim_id, double empirical, double bound,
                            double mc_error, const std::string& note = "");
BoundCheck make_band_check(const std::string& claim_id, double empirical, double lo, double hi,
                           const std::string& note = "");

struct ScalingFit {
    std::string claim_id;
    std::vector<double> log_x;
    std::vector<double> log_y;
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_stderr = 0.0;
};

struct ClaimInfo {
    std::string claim_id;
    std::string description;  // the inequality or quantity, spelled out
};

// Registry of every claim this toolkit can check. Parameterized instances
// append "@key=value" suffixes to a registered stem.
const std::vector<ClaimInfo>& claim_registry();
std::string describe_claim(const std::string& claim_id);  // throws on unknown stem

struct DiagnosticsReport {
    std::string spec_summary;
    double beta = 0.0;
    std::vector<BoundCheck> checks;
    std::vector<ConcentrationEstimate> estimates;
    std::vector<ScalingFit> fits;
    std::vector<std::string> provenance;  // seeds, replica counts, substitutions
    bool all_pass() const;
};

std::string report_to_json(const DiagnosticsReport& report, const std::string& timestamp = "");
std::string report_to_csv(const DiagnosticsReport& report);

struct MomentEstimate {
    int p = 0;
    double value = 0.0;      // M_p = (mean |theta - theta*|^p)^{1/p}
    double std_error = 0.0;  // jackknife
};

// pre: n >= 100 rows and p_max <= log2(n)
std::vector<MomentEstimate> estimate_moments(const Eigen::MatrixXd& samples,
                                             const Eigen::VectorXd& theta_star, int p_max);

// Var(theta) <= beta sigma^2 / (2mu - beta(mu^2 + L_sigma)), bias <= sqrt of
// that, and mean = theta* for linear gradients.
std::vector<BoundCheck> check_variance_bias_bounds(const Eigen::MatrixXd& samples,
                                                   const ProblemSpec& spec, double beta);

// Tilde-family estimators (moment based) and MGF-grid estimators. MGF
// estimators center the samples internally; tilde estimators use |X| as is.
ConcentrationEstimate estimate_psi2_tilde(const std::vector<double>& xs);
ConcentrationEstimate estimate_psi1_tilde(const std::vector<double>& xs);
ConcentrationEstimate estimate_psi2_mgf(const std::vector<double>& xs);
ConcentrationEstimate estimate_psi1_mgf(const std::vector<double>& xs);

struct TransferChecks {
    std::vector<BoundCheck> checks;
    std::vector<ConcentrationEstimate> estimates;
};

// Stationary-tail concentration: psi-tilde constants of |theta - theta*|
// against k_bar*sqrt(8 beta/mu) and 2 k_bar sqrt(beta/mu), and MGF psi
// constants of test 1-Lipschitz functionals against k_lip*sqrt(beta/mu).
TransferChecks check_concentration_transfer(const Eigen::MatrixXd& tail_samples,
                                            const ProblemSpec& spec, double beta,
                                            std::uint64_t direction_seed);

ScalingFit fit_sqrt_beta_scaling(const std::vector<double>& betas,
                                 const std::vector<double>& constants,
                                 const std::string& claim_id);
BoundCheck check_scaling_slope(const ScalingFit& fit, double lo = 0.4, double hi = 0.6);

// M_j stability across sample-size doublings (< 10% change when the j-th
// moment exists for admissible beta; heavier moments visibly drift).
BoundCheck check_finite_moments(const Eigen::MatrixXd& samples, const ProblemSpec& spec,
                                double beta, double k_noise, int j);

// Per-step mean contraction of synchronously coupled squared distances
// against (1-beta mu)^2 + beta^2 L_W.
BoundCheck check_coupling_contraction(const CouplingRun& run, const ProblemSpec& spec,
                                      double beta);

struct TvDecayResult {
    std::vector<long> times;
    std::vector<double> tv_analytic;   // empty without the closed-form law
    std::vector<double> tv_empirical;  // empty when n_replicas == 0
    double fitted_rate = 0.0;
    double rate_stderr = 0.0;
    double rho_bound = 0.0;
    double noise_floor = 0.0;
    BoundCheck rate_check;
    std::optional<BoundCheck> path_agreement;
};

// d = 1 only. Analytic path when the closed-form law applies; empirical path
// via 64-bin histogram distance against an independent long-run pool.
TvDecayResult check_tv_decay(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                             const InitSampler& init, const std::vector<long>& times,
                             int n_replicas, std::uint64_t seed, const RunOptions& opts = {});

// Exceedance of the four deviation radii at each delta:
//   subgaussian_norm   k_bar sqrt(8 beta log(e/delta)/mu)
//   subexponential     4e k_bar log(2/delta) sqrt(beta/mu)
//   split_sqrt         sqrt(beta sigma^2/mu) + 2 k_lip sqrt(beta log(1/delta)/mu)
//   split_mixed        sqrt(beta sigma^2/mu) + 2 k_lip (sqrt(...) v beta log(1/delta))
// The geometric-decay remainder uses the contraction bound for rho and M := 1,
// flagged in each note.
std::vector<BoundCheck> check_last_iterate_deviation(const Eigen::MatrixXd& snapshot,
                                                     const ProblemSpec& spec, double beta,
                                                     const std::vector<double>& delta_grid,
                                                     long t_snapshot = -1,
                                                     double init_sq_dev = 0.0);

// Stationary autocovariance per lag against 2(1-beta mu)^k (W2 term + Var
// bound); exact AR(1) pattern tr(A^k V) when the oracle applies. The window
// ensemble must hold consecutive snapshot times.
std::vector<BoundCheck> check_covariance_decay(const Ensemble& window, const ProblemSpec& spec,
                                               double beta,
                                               const OracleSolution* oracle = nullptr);

enum class TrajectoryFunctional { SumOfNorms, NormOfSum };

// MGF psi-2 constant of f(theta_1..theta_n) - E f over replicas against
// k_lip * C_W * sqrt(beta/mu + (n-1) beta^2), C_W = 1/(1 - alpha_W).
BoundCheck check_trajectory_lipschitz_concentration(const Ensemble& window,
                                                    const ProblemSpec& spec, double beta,
                                                    TrajectoryFunctional f_kind);

// Tail-average deviation radii (variance term + deviation term) at each
// delta; failure budget inflated to Upsilon*delta with M := 1 (flagged).
std::vector<BoundCheck> check_pr_average_bound(const Eigen::MatrixXd& averages,
                                               const ProblemSpec& spec, double beta, long n0,
                                               long n, const std::vector<double>& delta_grid,
                                               double w2_sq_nu_pi, double density_ratio_sup,
                                               double rho_bound);

// Generator contract: fill (Xi, xi) with one independent draw, Xi symmetric.
using MatrixNoiseGen = std::function<void(RngStream&, Eigen::MatrixXd&, Eigen::VectorXd&)>;

// The linear-noise decomposition eps(theta) = Xi (theta - theta*) + xi of a
// model's gradient noise (zero matrix part for additive kinds).
MatrixNoiseGen linear_noise_generator(const ProblemSpec& spec, const NoiseModel& noise);

// Averaged-noise concentration: exceedance of |mean Xi|_2 over
// 3 K_Xi phi((log(2/delta)+3d)/N) and |mean xi| over
// 4 K_xi phi((log(2/delta)+2d)/N), phi(x) = max(x, sqrt(x)).
std::vector<BoundCheck> check_matrix_concentration(const MatrixNoiseGen& gen, double k_xi_mat,
                                                   double k_xi_vec,
                                                   const std::vector<int>& n_grid, int dim,
                                                   double delta, int n_trials,
                                                   std::uint64_t seed, int threads = 0);

// Conditional-mean drift of V = 1 + |theta - theta*|^2 over one step: binned
// regression slope <= (1-beta mu)^2 + beta^2 L_sigma and intercept <=
// beta^2 sigma^2 + (1 - slope bound).
std::vector<BoundCheck> check_drift_condition(const Ensemble& window, const ProblemSpec& spec,
                                              double beta);

// Stationarity attestation: snapshot mean/variance at the two times agree
// within two standard errors.
BoundCheck attest_burn_in(const Eigen::MatrixXd& half_time, const Eigen::MatrixXd& full_time);

// Certified concentration constants of the gradient noise at theta*:
// k_bar = psi-2-tilde constant of |eps|, k_lip = worst directional MGF psi-2
// constant (closed form sqrt(opnorm(C)/2) for additive gaussian noise).
struct NoisePsiCertificate {
    double k_bar = 0.0;
    double k_bar_mc_error = 0.0;
    double k_lip = 0.0;
    double k_lip_mc_error = 0.0;
    bool k_lip_closed_form = false;
    std::size_t n_draws = 0;
    std::vector<ConcentrationEstimate> estimates;
};

NoisePsiCertificate certify_noise_psi_constants(const ProblemSpec& spec, const NoiseModel& noise,
                                                std::size_t n_draws, std::uint64_t seed);

// Sub-exponential constants of the linear-noise parts: worst quadratic-form
// MGF psi-1 constant of <u, Xi u> and directional constant of <u, xi>.
struct MatrixNoiseCertificate {
    double k_mat = 0.0;
    double k_vec = 0.0;
    std::size_t n_draws = 0;
};

MatrixNoiseCertificate certify_matrix_noise_psi1(const MatrixNoiseGen& gen, int dim,
                                                 std::size_t n_draws, int n_probes,
                                                 std::uint64_t seed);

// Closed-form bound C(n + (2a/(1-a))(n - (1-a^n)/(1-a))) on the double sum
// of C a^|i-j| over an n x n grid.
double geometric_sum_bound(double c, double alpha, long n);

// Exact identity sum_k trinomial(p; k, k+p-l, l-2k) 2^{l-2k} = binom(2p, l),
// negative-index terms dropped. Returns (lhs, rhs) in exact integers.
std::pair<unsigned long long, unsigned long long> trinomial_identity(int p, int l);

}  // namespace sgdlab

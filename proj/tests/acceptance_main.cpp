// Acceptance gate: one line per criterion, nonzero exit when any fails.
// Optional argv: criterion ids (e.g. "C4 C7") to run a subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgdlab/experiment.hpp"
#include "sgdlab/linalg.hpp"
#include "sgdlab/oracle.hpp"
#include "sgdlab/rng.hpp"

using namespace sgdlab;

namespace {

constexpr double kVarExact = 1.0 / 19.0;          // beta sigma^2/(mu(2 - beta mu)) at beta=0.1
constexpr double kHalfNormalTilde = 1.5208666797610026;  // psi-2-tilde constant of |N(0,1)|

struct Ctx {
    std::string detail;
    bool ok = true;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

void make_oracle_1d(ProblemSpec& spec, NoiseModel& noise) {
    spec = ProblemSpec{};
    spec.id = "oracle-1d";
    spec.dim = 1;
    spec.objective = ObjectiveKind::Quadratic;
    spec.sigma_matrix = Eigen::MatrixXd::Identity(1, 1);
    noise = NoiseModel{};
    noise.kind = NoiseKind::AdditiveGaussian;
    noise.cov = Eigen::MatrixXd::Identity(1, 1);
    finalize_problem(spec, noise);
}

void make_linreg(int d, ProblemSpec& spec, NoiseModel& noise) {
    spec = ProblemSpec{};
    spec.id = "linreg";
    spec.dim = d;
    spec.objective = ObjectiveKind::LeastSquaresRandomDesign;
    spec.sigma_matrix = Eigen::MatrixXd::Identity(d, d);
    noise = NoiseModel{};
    noise.kind = NoiseKind::RandomDesignGaussian;
    noise.design_cov = Eigen::MatrixXd::Identity(d, d);
    noise.label_std = 0.5;
    finalize_problem(spec, noise);
}

double column_variance(const Eigen::MatrixXd& snap) {
    const Eigen::VectorXd c = snap.col(0);
    const double m = c.mean();
    return (c.array() - m).square().sum() / static_cast<double>(c.size() - 1);
}

// per-step two-sided comparison of mean contraction ratios against `factor`
void check_ratios_two_sided(Ctx& t, const CouplingRun& run, double factor) {
    const double pairs = static_cast<double>(run.n_pairs);
    for (Eigen::Index s = 0; s + 1 < run.sq_dists.rows(); ++s) {
        const double m0 = run.sq_dists.row(s).mean();
        const double m1 = run.sq_dists.row(s + 1).mean();
        if (m0 <= 0.0) continue;
        const double ratio = m1 / m0;
        double ss = 0.0;
        for (Eigen::Index p = 0; p < run.sq_dists.cols(); ++p) {
            const double r = run.sq_dists(s + 1, p) - ratio * run.sq_dists(s, p);
            ss += r * r;
        }
        const double se = std::sqrt(ss / (pairs - 1.0)) / std::sqrt(pairs) / m0;
        if (std::abs(ratio - factor) > 3.0 * se + 1e-12) {
            t.expect(false, "step " + std::to_string(s) + " ratio " + std::to_string(ratio) +
                                " off " + std::to_string(factor) + " by > 3 se");
            return;
        }
    }
}

double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string drop_timestamp(const std::string& text) {
    std::string out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.find("\"timestamp\"") == std::string::npos) out += line + "\n";
    return out;
}

// ---- criteria ---------------------------------------------------------

// stationary variance matches the closed form and its bound is tight
void c1(Ctx& t) {
    ProblemSpec spec;
    NoiseModel noise;
    make_oracle_1d(spec, noise);
    RunOptions single;
    single.threads = 1;
    const auto start = std::chrono::steady_clock::now();
    Ensemble ens = run_ensemble(spec, noise, 0.1, InitSampler::dirac(spec.theta_star), 500,
                                {500}, 100000, 11, single);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double var = column_variance(ens.at_time(500));
    const double bound = 0.1 * 1.0 / (2.0 - 0.1);
    const double se = var * std::sqrt(2.0 / 1e5);
    t.expect(std::abs(var / kVarExact - 1.0) <= 0.03,
             "variance " + std::to_string(var) + " not within 3% of the closed form");
    t.expect(var <= bound + 3.0 * se, "variance exceeds the bound beyond Monte Carlo slack");
    t.expect(bound <= var * 1.03, "bound is not tight within 3%");
    t.expect(secs < 30.0, "took " + std::to_string(secs) + " s (budget 30)");
    t.detail = "var=" + std::to_string(var) + " exact=" + std::to_string(kVarExact) + " " +
               std::to_string(secs) + "s";
}

// coupled contraction: exact factor for additive noise, bounded factor with a
// Monte Carlo multiplicative constant for the random-design chain
void c2(Ctx& t) {
    const auto start = std::chrono::steady_clock::now();
    ProblemSpec spec;
    NoiseModel noise;
    make_oracle_1d(spec, noise);
    CouplingRun add = run_coupled_pair(spec, noise, 0.1, InitSampler::dirac(Eigen::VectorXd::Ones(1)),
                                       InitSampler::dirac(-Eigen::VectorXd::Ones(1)), 50, 10000,
                                       22, {});
    check_ratios_two_sided(t, add, 0.81);

    ProblemSpec rd;
    NoiseModel rdn;
    make_linreg(1, rd, rdn);
    NoiseConstantEstimate nc = estimate_noise_constants(rd, rdn, 200000, 23);
    rd.l_sigma = nc.l_sigma;
    rd.l_w = nc.l_w;
    CouplingRun mult = run_coupled_pair(rd, rdn, 0.1, InitSampler::dirac(Eigen::VectorXd::Ones(1)),
                                        InitSampler::dirac(-Eigen::VectorXd::Ones(1)), 25, 10000,
                                        24, {});
    BoundCheck chk = check_coupling_contraction(mult, rd, 0.1);
    t.expect(chk.pass, "random-design factor " + std::to_string(chk.empirical_value) +
                           " exceeds " + std::to_string(chk.bound));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    t.expect(secs < 60.0, "took " + std::to_string(secs) + " s (budget 60)");
    t.detail = "additive exact, rd " + std::to_string(chk.empirical_value) + " <= " +
               std::to_string(chk.bound) + " (l_w MC " + std::to_string(nc.l_w) + ")";
}

// total-variation decay: fitted analytic rate and empirical path agreement
void c3(Ctx& t) {
    ProblemSpec spec;
    NoiseModel noise;
    make_oracle_1d(spec, noise);
    std::vector<long> times;
    for (long s = 0; s <= 30; ++s) times.push_back(s);
    TvDecayResult tv = check_tv_decay(spec, noise, 0.1,
                                      InitSampler::dirac(Eigen::VectorXd::Ones(1)), times,
                                      200000, 33, {});
    t.expect(tv.rate_check.pass, "fitted rate " + std::to_string(tv.fitted_rate) +
                                     " above log(0.9) + 0.01");
    t.expect(tv.path_agreement.has_value(), "no empirical path");
    if (tv.path_agreement)
        t.expect(tv.path_agreement->pass, "sup-norm gap " +
                                              std::to_string(tv.path_agreement->empirical_value) +
                                              " > 0.03");
    t.detail = "rate=" + std::to_string(tv.fitted_rate) +
               " sup_gap=" + std::to_string(tv.path_agreement ? tv.path_agreement->empirical_value
                                                              : -1.0);
}

// sqrt(beta) scaling of the certified tail constants across a step grid
void c4(Ctx& t) {
    const auto start = std::chrono::steady_clock::now();
    ProblemSpec spec;
    NoiseModel noise;
    make_oracle_1d(spec, noise);
    NoisePsiCertificate cert = certify_noise_psi_constants(spec, noise, 100000, 4401);
    spec.k_bar = cert.k_bar;
    spec.k_bar_is_mc = true;
    spec.k_lip = cert.k_lip;
    spec.k_lip_is_mc = !cert.k_lip_closed_form;

    const std::vector<double> betas = {0.0125, 0.025, 0.05, 0.1};
    std::vector<double> constants;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        const double beta = betas[i];
        const long horizon = std::max<long>(300, static_cast<long>(std::ceil(8.0 / beta)));
        Ensemble ens = run_ensemble(spec, noise, beta, InitSampler::dirac(spec.theta_star),
                                    horizon, {horizon}, 100000, 4410 + static_cast<int>(i), {});
        TransferChecks tc =
            check_concentration_transfer(ens.at_time(horizon), spec, beta, 4402);
        bool norm_ok = false;
        for (const auto& c : tc.checks)
            if (c.claim_id == "norm_psi2_tilde_transfer") norm_ok = c.pass;
        t.expect(norm_ok, "norm constant above k_bar sqrt(8 beta/mu) at beta=" +
                              std::to_string(beta));
        for (const auto& e : tc.estimates)
            if (e.family == PsiFamily::SubGaussianTilde) {
                constants.push_back(e.constant);
                break;
            }
    }
    t.expect(constants.size() == betas.size(), "missing tail-constant estimates");
    if (constants.size() == betas.size()) {
        ScalingFit fit = fit_sqrt_beta_scaling(betas, constants, "psi_sqrt_beta_scaling");
        t.expect(fit.slope >= 0.4 && fit.slope <= 0.6,
                 "slope " + std::to_string(fit.slope) + " outside [0.4, 0.6]");
        t.detail = "slope=" + std::to_string(fit.slope) + " k_bar=" + std::to_string(cert.k_bar);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    t.expect(secs < 300.0, "took " + std::to_string(secs) + " s (budget 300)");
    t.detail += " " + std::to_string(secs) + "s";
}

// last-iterate deviation radii at every confidence level
void c5(Ctx& t) {
    ProblemSpec spec;
    NoiseModel noise;
    make_oracle_1d(spec, noise);
    spec.k_bar = kHalfNormalTilde;  // |N(0,1)| closed form
    spec.k_lip = std::sqrt(0.5);    // N(0,1) directional MGF closed form
    Eigen::VectorXd theta0 = spec.theta_star + Eigen::VectorXd::Ones(1);
    Ensemble ens =
        run_ensemble(spec, noise, 0.1, InitSampler::dirac(theta0), 300, {300}, 10000, 55, {});
    std::vector<BoundCheck> checks = check_last_iterate_deviation(
        ens.at_time(300), spec, 0.1, {0.02, 0.05, 0.1, 0.25}, 300, 1.0);
    int fails = 0;
    for (const auto& c : checks)
        if (!c.pass) ++fails;
    t.expect(fails == 0, std::to_string(fails) + " radii exceeded their budget");
    t.detail = std::to_string(checks.size()) + " exceedance checks";
}

// tail averages: exact RMS, 1/sqrt(n) scaling, and deviation radii
void c6(Ctx& t) {
    ProblemSpec spec;
    NoiseModel noise;
    make_oracle_1d(spec, noise);
    spec.k_bar = kHalfNormalTilde;
    spec.k_lip = std::sqrt(0.5);
    OracleSolution sol = make_oracle(spec, noise, 0.1);
    GaussianLaw nu{spec.theta_star, 0.5 * sol.stationary_cov};
    const double w2 = gaussian_w2(nu, sol.stationary_law());
    const double ratio_sup = std::pow(0.5, -0.5);  // sup dnu/dpi for the shrunk gaussian
    InitSampler init = InitSampler::gaussian(nu.mean, nu.cov);

    std::vector<double> log_n, log_rms;
    const std::vector<long> ns = {100, 1000, 10000};
    for (std::size_t i = 0; i < ns.size(); ++i) {
        Eigen::MatrixXd avg = run_tail_averages(spec, noise, 0.1, init, 200, ns[i], 2000,
                                                660 + static_cast<int>(i), {});
        GaussianLaw law = pr_average_law(sol, nu, 200, ns[i]);
        const double rms_exact = std::sqrt(law.cov.trace());
        double ms = 0.0;
        for (Eigen::Index r = 0; r < avg.rows(); ++r)
            ms += (avg.row(r).transpose() - spec.theta_star).squaredNorm();
        const double rms = std::sqrt(ms / static_cast<double>(avg.rows()));
        t.expect(std::abs(rms / rms_exact - 1.0) <= 0.05,
                 "rms off the averaged law by >5% at n=" + std::to_string(ns[i]));
        log_n.push_back(std::log(static_cast<double>(ns[i])));
        log_rms.push_back(std::log(rms));
        for (const auto& c : check_pr_average_bound(avg, spec, 0.1, 200, ns[i], {0.05}, w2 * w2,
                                                    ratio_sup, 0.9))
            t.expect(c.pass, c.claim_id + " failed at n=" + std::to_string(ns[i]));
    }
    const double slope = fit_slope(log_n, log_rms);
    t.expect(slope >= -0.55 && slope <= -0.45,
             "rms scaling slope " + std::to_string(slope) + " outside [-0.55, -0.45]");
    t.detail = "slope=" + std::to_string(slope);
}

// stationary autocovariance against the exact AR(1) pattern and its bound
void c7(Ctx& t) {
    ProblemSpec spec;
    NoiseModel noise;
    make_oracle_1d(spec, noise);
    OracleSolution sol = make_oracle(spec, noise, 0.1);
    std::vector<long> times;
    for (long s = 0; s <= 20; ++s) times.push_back(s);
    Ensemble win = run_ensemble(spec, noise, 0.1,
                                InitSampler::gaussian(sol.theta_star, sol.stationary_cov), 20,
                                times, 100000, 77, {});
    std::vector<BoundCheck> checks = check_covariance_decay(win, spec, 0.1, &sol);
    for (const auto& c : checks)
        t.expect(c.pass, c.claim_id + ": " + std::to_string(c.empirical_value) + " > " +
                             std::to_string(c.bound));
    t.detail = std::to_string(checks.size()) + " lag aggregates over lags 0..20";
}

// minibatch boundedness at an admissible (N, beta)
void c8(Ctx& t) {
    const auto start = std::chrono::steady_clock::now();
    ProblemSpec spec;
    NoiseModel noise;
    make_linreg(5, spec, noise);
    MatrixNoiseCertificate cert =
        certify_matrix_noise_psi1(linear_noise_generator(spec, noise), 5, 20000, 6, 88);
    const double delta = 0.05;
    const double need = std::log(4.0 * 100.0 / delta) + 15.0;
    const double ratio_req =
        std::max(1.0, std::pow(6.0 * std::max(3.0 * cert.k_mat, 4.0 * cert.k_vec), 2.0));
    const int batch = static_cast<int>(std::ceil(ratio_req * need)) + 1;
    const double beta = 0.5;
    const double cap =
        std::min(static_cast<double>(batch) / (54.0 * cert.k_mat * cert.k_mat * need),
                 2.0 / (1.0 + 1.0));
    t.expect(beta <= cap, "chosen beta not admissible for the certified constants");
    Ensemble ens = run_ensemble(spec, noise, beta, InitSampler::dirac(spec.theta_star), 100,
                                {100}, 400, 89, {}, batch);
    long escapes = 0;
    for (Eigen::Index r = 0; r < ens.max_deviation.size(); ++r)
        if (ens.max_deviation[r] > 1.0) ++escapes;
    const double freq = static_cast<double>(escapes) / 400.0;
    const double slack = 3.0 * std::sqrt(delta * (1.0 - delta) / 400.0);
    t.expect(freq <= delta + slack, "escape frequency " + std::to_string(freq) + " > " +
                                        std::to_string(delta + slack));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    t.detail = "N=" + std::to_string(batch) + " escapes=" + std::to_string(escapes) + "/400 " +
               std::to_string(secs) + "s";
}

// averaged-noise concentration radii for the linear decomposition
void c9(Ctx& t) {
    ProblemSpec spec;
    NoiseModel noise;
    make_linreg(5, spec, noise);
    MatrixNoiseGen gen = linear_noise_generator(spec, noise);
    MatrixNoiseCertificate cert = certify_matrix_noise_psi1(gen, 5, 20000, 6, 99);
    std::vector<BoundCheck> checks =
        check_matrix_concentration(gen, cert.k_mat, cert.k_vec, {100, 400}, 5, 0.05, 1000, 991);
    t.expect(checks.size() == 4, "expected 4 exceedance checks");
    for (const auto& c : checks)
        t.expect(c.pass, c.claim_id + " exceedance " + std::to_string(c.empirical_value));
    t.detail = "k_mat=" + std::to_string(cert.k_mat) + " k_vec=" + std::to_string(cert.k_vec);
}

// exact identities: combinatorial, geometric-sum, one-step contraction,
// stationary covariance residual, and the gaussian transport metric
void c10(Ctx& t) {
    for (int p = 1; p <= 12; ++p)
        for (int l = 2; l <= 2 * p; ++l) {
            auto [lhs, rhs] = trinomial_identity(p, l);
            if (lhs != rhs) {
                t.expect(false, "trinomial identity broke at p=" + std::to_string(p) +
                                    " l=" + std::to_string(l));
                return;
            }
        }

    RngStream rng(1010, 0);
    for (int k = 0; k < 1000; ++k) {
        const double c = 10.0 * rng.uniform01();
        const double a = 0.01 + 0.98 * rng.uniform01();
        const long n = 1 + static_cast<long>(rng.uniform01() * 59);
        double brute = 0.0;
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < n; ++j) brute += c * std::pow(a, std::abs(i - j));
        const double closed = geometric_sum_bound(c, a, n);
        if (std::abs(closed - brute) > 1e-9 * std::max(1.0, brute)) {
            t.expect(false, "geometric sum mismatch at instance " + std::to_string(k));
            return;
        }
    }

    for (int k = 0; k < 1000; ++k) {
        const int d = 1 + static_cast<int>(rng.uniform01() * 9);
        Eigen::MatrixXd g(d, d);
        rng.fill_normal(g.data(), static_cast<std::size_t>(g.size()));
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd q = qr.householderQ();
        Eigen::VectorXd eig(d);
        for (int i = 0; i < d; ++i) eig[i] = 0.5 + 2.5 * rng.uniform01();
        ProblemSpec spec;
        spec.id = "contract";
        spec.dim = d;
        spec.objective = ObjectiveKind::Quadratic;
        spec.sigma_matrix = q * eig.asDiagonal() * q.transpose();
        spec.sigma_matrix = 0.5 * (spec.sigma_matrix + spec.sigma_matrix.transpose());
        NoiseModel noise;
        noise.kind = NoiseKind::AdditiveGaussian;
        noise.cov = Eigen::MatrixXd::Identity(d, d);
        finalize_problem(spec, noise);
        const double beta = (0.2 + 0.8 * rng.uniform01()) * 2.0 / (spec.mu + spec.big_l);
        Eigen::VectorXd x(d), y(d);
        rng.fill_normal(x.data(), d);
        rng.fill_normal(y.data(), d);
        const Eigen::VectorXd gx = x - beta * gradient(spec, x);
        const Eigen::VectorXd gy = y - beta * gradient(spec, y);
        const double lhs = (gx - gy).norm();
        const double rhs = (1.0 - beta * spec.mu) * (x - y).norm();
        if (lhs > rhs * (1.0 + 1e-12) + 1e-14) {
            t.expect(false, "gradient-step contraction violated at instance " +
                                std::to_string(k) + " by " + std::to_string(lhs - rhs));
            return;
        }
    }

    for (int k = 0; k < 100; ++k) {
        const int d = 2 + static_cast<int>(rng.uniform01() * 18);
        Eigen::MatrixXd g(d, d);
        rng.fill_normal(g.data(), static_cast<std::size_t>(g.size()));
        const double rho = 0.1 + 0.85 * rng.uniform01();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
        Eigen::MatrixXd a = g * (rho / svd.singularValues()(0));
        Eigen::MatrixXd c(d, d);
        rng.fill_normal(c.data(), static_cast<std::size_t>(c.size()));
        Eigen::MatrixXd qmat = c * c.transpose() / static_cast<double>(d);
        Eigen::MatrixXd v = solve_stationary_cov(a, qmat);
        const double resid = (v - a * v * a.transpose() - qmat).norm();
        if (!(resid <= 1e-12 * std::max(1.0, v.norm()))) {
            t.expect(false, "stationary covariance residual " + std::to_string(resid) +
                                " at instance " + std::to_string(k));
            return;
        }
    }

    for (int k = 0; k < 1000; ++k) {
        const int d = 1 + static_cast<int>(rng.uniform01() * 4);
        GaussianLaw laws[3];
        for (auto& law : laws) {
            law.mean.resize(d);
            rng.fill_normal(law.mean.data(), d);
            Eigen::MatrixXd c(d, d);
            rng.fill_normal(c.data(), static_cast<std::size_t>(c.size()));
            law.cov = c * c.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
        }
        const double ab = gaussian_w2(laws[0], laws[1]);
        const double bc = gaussian_w2(laws[1], laws[2]);
        const double ac = gaussian_w2(laws[0], laws[2]);
        if (ac > ab + bc + 1e-9) {
            t.expect(false, "transport triangle inequality violated at instance " +
                                std::to_string(k));
            return;
        }
    }
    t.detail = "trinomial p<=12, 1000 geometric sums, 1000 contractions, 100 covariances, "
               "1000 triangles";
}

// identical configs and seeds give byte-identical artifacts
void c11(Ctx& t) {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "sgdlab_acceptance";
    fs::remove_all(base);
    std::string text =
        "id = \"oracle-1d\"\ndim = 1\nobjective = \"quadratic\"\nsigma_matrix = [[1.0]]\n"
        "noise.kind = \"additive_gaussian\"\nnoise.cov = [[1.0]]\n"
        "kind = \"full_suite\"\nbeta = 0.1\nt = 240\nreplicas = 12000\n"
        "n0 = 100\nn = 400\nbatch = 100\nmaster_seed = 6\nout = \"" +
        (base / "a").string() + "\"\n";
    ExperimentConfig cfg = experiment_from_config(parse_config_text(text));
    ExperimentResult ra = run_experiment(cfg);
    cfg.out_dir = (base / "b").string();
    ExperimentResult rb = run_experiment(cfg);
    t.expect(ra.exit_code == 0, "full suite run reported bound failures");
    t.expect(ra.exit_code == rb.exit_code, "exit codes differ between reruns");
    t.expect(drop_timestamp(slurp(base / "a" / "report.json")) ==
                 drop_timestamp(slurp(base / "b" / "report.json")),
             "report.json differs beyond the timestamp");
    for (const auto& name : ra.artifacts) {
        if (name == "report.json") continue;
        if (slurp(base / "a" / name) != slurp(base / "b" / name)) {
            t.expect(false, name + " differs between reruns");
            break;
        }
    }
    t.detail = std::to_string(ra.report.checks.size()) + " checks, " +
               std::to_string(ra.artifacts.size()) + " artifacts compared";
}

}  // namespace

int main(int argc, char** argv) {
    std::set<std::string> only;
    for (int i = 1; i < argc; ++i) only.insert(argv[i]);

    struct Criterion {
        const char* id;
        const char* what;
        std::function<void(Ctx&)> run;
    };
    const std::vector<Criterion> criteria = {
        {"C1", "stationary variance vs closed form", c1},
        {"C2", "coupled contraction factors", c2},
        {"C3", "total-variation decay", c3},
        {"C4", "sqrt(beta) tail-constant scaling", c4},
        {"C5", "last-iterate deviation radii", c5},
        {"C6", "tail-average law and radii", c6},
        {"C7", "stationary autocovariance decay", c7},
        {"C8", "minibatch boundedness", c8},
        {"C9", "averaged-noise concentration", c9},
        {"C10", "exact identities", c10},
        {"C11", "byte-identical reruns", c11},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        Ctx t;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.run(t);
        } catch (const std::exception& e) {
            t.ok = false;
            t.detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] %-4s %-38s (%.1fs) %s\n", t.ok ? "PASS" : "FAIL", c.id, c.what, secs,
                    t.detail.c_str());
        std::fflush(stdout);
        if (!t.ok) ++failures;
    }
    if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}

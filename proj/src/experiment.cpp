#include "sgdlab/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sgdlab/oracle.hpp"
#include "sgdlab/rng.hpp"

namespace sgdlab {

namespace {

std::string fmt_g(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", x);
    return buf;
}

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::uint64_t block_seed(std::uint64_t master, std::uint64_t tag) {
    return splitmix64(master ^ splitmix64(tag));
}

// fixed block tags so every experiment kind draws from its own stream family
constexpr std::uint64_t kTagCertify = 0x6365727469ULL;
constexpr std::uint64_t kTagStationary = 0x73746174ULL;
constexpr std::uint64_t kTagTv = 0x74764ULL;
constexpr std::uint64_t kTagCoupling = 0x636f7570ULL;
constexpr std::uint64_t kTagLastIter = 0x6c617374ULL;
constexpr std::uint64_t kTagPr = 0x7072ULL;
constexpr std::uint64_t kTagMinibatch = 0x6d696e69ULL;
constexpr std::uint64_t kTagMatrix = 0x6d617472ULL;

void progress(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ExperimentError("cannot write " + path.string());
    out << text;
    if (!out) throw ExperimentError("short write to " + path.string());
}

std::string iso_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

Eigen::VectorXd default_offset(const ProblemSpec& spec, double sign) {
    Eigen::VectorXd u = Eigen::VectorXd::Ones(spec.dim);
    u /= u.norm();
    return spec.theta_star + sign * u;
}

RunOptions run_options(const ExperimentConfig& cfg) {
    RunOptions opts;
    opts.force_step_size = cfg.force_step_size;
    opts.threads = cfg.threads;
    return opts;
}

// subset of consecutive snapshot times taken from an already-run ensemble
Ensemble window_of(const Ensemble& ens, const std::vector<long>& times) {
    Ensemble w = ens;
    w.snapshot_times = times;
    w.snapshots.clear();
    for (long t : times) w.snapshots.push_back(ens.at_time(t));
    return w;
}

std::string beta_suffix(const ExperimentConfig& cfg, double beta) {
    return cfg.betas.size() > 1 ? "@beta=" + fmt_g(beta) : "";
}

std::string beta_file_tag(const ExperimentConfig& cfg, double beta) {
    return cfg.betas.size() > 1 ? "_beta" + fmt_g(beta) : "";
}

void append_suffixed(DiagnosticsReport& rep, std::vector<BoundCheck> checks,
                     const std::string& suffix) {
    for (auto& c : checks) {
        c.claim_id += suffix;
        rep.checks.push_back(std::move(c));
    }
}

bool oracle_applies(const ExperimentConfig& cfg) {
    return cfg.spec.objective == ObjectiveKind::Quadratic &&
           cfg.noise.kind == NoiseKind::AdditiveGaussian && cfg.spec.sigma_sq > 0.0;
}

struct Artifacts {
    std::filesystem::path dir;
    std::vector<std::string> names;

    std::filesystem::path file(const std::string& name) {
        names.push_back(name);
        return dir / name;
    }
};

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& rows,
                      const std::string& header) {
    std::ostringstream out;
    out << header << "\n";
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        out << i;
        for (Eigen::Index j = 0; j < rows.cols(); ++j) out << ',' << fmt17(rows(i, j));
        out << "\n";
    }
    write_text(path, out.str());
}

// MC-certify whatever concentration constants the problem spec leaves unset;
// they are beta-independent, so this runs once per experiment.
void ensure_psi_constants(ExperimentConfig& cfg, DiagnosticsReport& rep) {
    if (cfg.spec.k_bar && cfg.spec.k_lip) return;
    const std::size_t draws =
        std::max<std::size_t>(10000, static_cast<std::size_t>(cfg.n_replicas));
    progress("[certify] estimating noise concentration constants from " +
             std::to_string(draws) + " draws");
    NoisePsiCertificate cert = certify_noise_psi_constants(
        cfg.spec, cfg.noise, draws, block_seed(cfg.master_seed, kTagCertify));
    if (!cfg.spec.k_bar) {
        cfg.spec.k_bar = cert.k_bar;
        cfg.spec.k_bar_is_mc = true;
        rep.provenance.push_back("k_bar = " + fmt_g(cert.k_bar) + " +- " +
                                 fmt_g(cert.k_bar_mc_error) + " (Monte-Carlo certificate, " +
                                 std::to_string(draws) + " draws)");
    }
    if (!cfg.spec.k_lip) {
        cfg.spec.k_lip = cert.k_lip;
        cfg.spec.k_lip_is_mc = !cert.k_lip_closed_form;
        rep.provenance.push_back("k_lip = " + fmt_g(cert.k_lip) +
                                 (cert.k_lip_closed_form ? " (closed form)"
                                                         : " (Monte-Carlo certificate)"));
    }
    for (const auto& e : cert.estimates) rep.estimates.push_back(e);
}

// ---- experiment blocks ------------------------------------------------

// Burn-in attestation, stationary moments, psi transfer, moment stability,
// and the one-step drift regression, all from a single ensemble.
// Returns the measured norm psi2-tilde constant (for the scaling fit).
double run_stationary_block(const ExperimentConfig& cfg, double beta, DiagnosticsReport& rep,
                            Artifacts& art) {
    const std::string sfx = beta_suffix(cfg, beta);
    const long t = cfg.t_horizon;
    if (t < 4) throw ExperimentError("stationary experiment needs t >= 4");
    progress("[stationary] beta=" + fmt_g(beta) + " T=" + std::to_string(t) +
             " replicas=" + std::to_string(cfg.n_replicas));
    InitSampler init = InitSampler::dirac(cfg.spec.theta_star);
    const std::vector<long> times = {t / 2, t, t + 1};
    Ensemble ens = run_ensemble(cfg.spec, cfg.noise, beta, init, t + 1, times, cfg.n_replicas,
                                block_seed(cfg.master_seed, kTagStationary), run_options(cfg));
    write_snapshots_csv(art.file("stationary_snapshots" + beta_file_tag(cfg, beta) + ".csv"),
                        ens);

    const Eigen::MatrixXd& snap = ens.at_time(t);
    BoundCheck burn = attest_burn_in(ens.at_time(t / 2), snap);
    burn.claim_id += sfx;
    rep.checks.push_back(burn);

    append_suffixed(rep, check_variance_bias_bounds(snap, cfg.spec, beta), sfx);

    double norm_psi2 = 0.0;
    if (snap.rows() >= 10000) {
        TransferChecks tc = check_concentration_transfer(snap, cfg.spec, beta, cfg.master_seed);
        for (const auto& e : tc.estimates) {
            if (e.family == PsiFamily::SubGaussianTilde && norm_psi2 == 0.0)
                norm_psi2 = e.constant;
            rep.estimates.push_back(e);
        }
        append_suffixed(rep, std::move(tc.checks), sfx);
    } else {
        rep.provenance.push_back("concentration transfer skipped at beta=" + fmt_g(beta) +
                                 ": tail estimators need >= 10000 stationary draws");
    }

    if (snap.rows() >= 400) {
        const double kb = *cfg.spec.k_bar;
        int j = static_cast<int>(cfg.spec.mu / (beta * (cfg.spec.mu * cfg.spec.mu + kb * kb)));
        j = std::max(1, std::min(j, 8));
        BoundCheck stab = check_finite_moments(snap, cfg.spec, beta, kb, j);
        stab.claim_id += sfx;
        rep.checks.push_back(stab);
    }

    if (snap.rows() >= 320)
        append_suffixed(rep, check_drift_condition(window_of(ens, {t, t + 1}), cfg.spec, beta),
                        sfx);
    return norm_psi2;
}

void run_tv_block(const ExperimentConfig& cfg, double beta, DiagnosticsReport& rep,
                  Artifacts& art) {
    std::vector<long> times = cfg.snapshot_times;
    if (times.empty())
        for (long t = 0; t <= std::min<long>(cfg.t_horizon, 40); ++t) times.push_back(t);
    progress("[tv_decay] beta=" + fmt_g(beta) + " times=" + std::to_string(times.size()) +
             " replicas=" + std::to_string(cfg.n_replicas));
    InitSampler init = InitSampler::dirac(
        cfg.init1.size() == cfg.spec.dim ? Eigen::VectorXd(cfg.init1)
                                         : default_offset(cfg.spec, 1.0));
    TvDecayResult res =
        check_tv_decay(cfg.spec, cfg.noise, beta, init, times, cfg.n_replicas,
                       block_seed(cfg.master_seed, kTagTv), run_options(cfg));

    std::ostringstream curve;
    curve << "time,tv_analytic,tv_empirical\n";
    for (std::size_t i = 0; i < res.times.size(); ++i) {
        curve << res.times[i] << ',';
        if (i < res.tv_analytic.size()) curve << fmt17(res.tv_analytic[i]);
        curve << ',';
        if (i < res.tv_empirical.size()) curve << fmt17(res.tv_empirical[i]);
        curve << "\n";
    }
    write_text(art.file("tv_curve" + beta_file_tag(cfg, beta) + ".csv"), curve.str());

    const std::string sfx = beta_suffix(cfg, beta);
    res.rate_check.claim_id += sfx;
    rep.checks.push_back(res.rate_check);
    if (res.path_agreement) {
        res.path_agreement->claim_id += sfx;
        rep.checks.push_back(*res.path_agreement);
    }
    rep.provenance.push_back("tv noise floor " + fmt_g(res.noise_floor) + " at beta=" +
                             fmt_g(beta));
}

void run_coupling_block(const ExperimentConfig& cfg, double beta, DiagnosticsReport& rep,
                        Artifacts& art) {
    // cap the horizon so the predicted squared distance stays >= 1e-20 of the
    // start: beyond that the paired difference is rounding noise, not
    // contraction
    long t_steps = cfg.t_horizon;
    const double one_step = 1.0 - beta * cfg.spec.mu;
    const double factor = one_step * one_step + beta * beta * cfg.spec.l_w;
    if (factor > 0.0 && factor < 1.0)
        t_steps = std::max<long>(
            1, std::min<long>(t_steps, static_cast<long>(std::log(1e-20) / std::log(factor))));
    progress("[coupling] beta=" + fmt_g(beta) + " pairs=" + std::to_string(cfg.n_replicas) +
             " steps=" + std::to_string(t_steps));
    Eigen::VectorXd a =
        cfg.init1.size() == cfg.spec.dim ? cfg.init1 : default_offset(cfg.spec, 1.0);
    Eigen::VectorXd b =
        cfg.init2.size() == cfg.spec.dim ? cfg.init2 : default_offset(cfg.spec, -1.0);
    CouplingRun run = run_coupled_pair(cfg.spec, cfg.noise, beta, InitSampler::dirac(a),
                                       InitSampler::dirac(b), t_steps, cfg.n_replicas,
                                       block_seed(cfg.master_seed, kTagCoupling),
                                       run_options(cfg));
    write_coupling_csv(art.file("coupling" + beta_file_tag(cfg, beta) + ".csv"), run);
    BoundCheck c = check_coupling_contraction(run, cfg.spec, beta);
    c.claim_id += beta_suffix(cfg, beta);
    rep.checks.push_back(c);
}

void run_last_iterate_block(const ExperimentConfig& cfg, double beta, DiagnosticsReport& rep,
                            Artifacts& art) {
    const long t = cfg.t_horizon;
    progress("[last_iterate] beta=" + fmt_g(beta) + " T=" + std::to_string(t) +
             " replicas=" + std::to_string(cfg.n_replicas));
    Eigen::VectorXd theta0 =
        cfg.init1.size() == cfg.spec.dim ? cfg.init1 : default_offset(cfg.spec, 1.0);
    Ensemble ens = run_ensemble(cfg.spec, cfg.noise, beta, InitSampler::dirac(theta0), t, {t},
                                cfg.n_replicas, block_seed(cfg.master_seed, kTagLastIter),
                                run_options(cfg));
    write_snapshots_csv(art.file("last_iterate" + beta_file_tag(cfg, beta) + ".csv"), ens);
    const double dev0 = (theta0 - cfg.spec.theta_star).squaredNorm();
    append_suffixed(rep,
                    check_last_iterate_deviation(ens.at_time(t), cfg.spec, beta,
                                                 cfg.delta_grid, t, dev0),
                    beta_suffix(cfg, beta));
}

void run_pr_block(const ExperimentConfig& cfg, double beta, DiagnosticsReport& rep,
                  Artifacts& art) {
    if (!oracle_applies(cfg))
        throw ExperimentError(
            "pr_average needs the closed-form reference chain "
            "(quadratic objective with additive gaussian noise)");
    progress("[pr_average] beta=" + fmt_g(beta) + " n0=" + std::to_string(cfg.n0) +
             " n=" + std::to_string(cfg.n_avg) + " replicas=" + std::to_string(cfg.n_replicas));
    OracleSolution sol = make_oracle(cfg.spec, cfg.noise, beta);

    // warm start nu = N(theta*, c^2 V): underdispersed relative to the
    // stationary law, so the density ratio sup dnu/dpi = c^{-d} is finite
    const double c2 = 0.5;
    GaussianLaw nu{cfg.spec.theta_star, c2 * sol.stationary_cov};
    InitSampler init = InitSampler::gaussian(nu.mean, nu.cov);
    Eigen::MatrixXd avg =
        run_tail_averages(cfg.spec, cfg.noise, beta, init, cfg.n0, cfg.n_avg, cfg.n_replicas,
                          block_seed(cfg.master_seed, kTagPr), run_options(cfg));
    write_matrix_csv(art.file("averages" + beta_file_tag(cfg, beta) + ".csv"), avg,
                     [&] {
                         std::string h = "replica";
                         for (int j = 0; j < cfg.spec.dim; ++j)
                             h += ",coord_" + std::to_string(j);
                         return h;
                     }());

    const std::string sfx = beta_suffix(cfg, beta);
    GaussianLaw law = pr_average_law(sol, nu, cfg.n0, cfg.n_avg);
    const double rms_exact = std::sqrt(law.cov.trace() +
                                       (law.mean - cfg.spec.theta_star).squaredNorm());
    double ms = 0.0;
    for (Eigen::Index i = 0; i < avg.rows(); ++i)
        ms += (avg.row(i).transpose() - cfg.spec.theta_star).squaredNorm();
    const double rms_emp = std::sqrt(ms / static_cast<double>(avg.rows()));
    BoundCheck rms = make_band_check("pr_average_rms_oracle" + sfx, rms_emp / rms_exact, 0.95,
                                     1.05, "empirical RMS over exact averaged-law RMS " +
                                               fmt_g(rms_exact));
    rep.checks.push_back(rms);

    const double w2 = gaussian_w2(nu, sol.stationary_law());
    const double ratio_sup = std::pow(c2, -0.5 * cfg.spec.dim);
    const double a = 1.0 - beta * cfg.spec.mu;
    const double rho = std::sqrt(a * a + beta * beta * cfg.spec.l_w);
    append_suffixed(rep,
                    check_pr_average_bound(avg, cfg.spec, beta, cfg.n0, cfg.n_avg,
                                           cfg.delta_grid, w2 * w2, ratio_sup, rho),
                    sfx);
}

void run_minibatch_block(const ExperimentConfig& cfg, double beta, DiagnosticsReport& rep,
                         Artifacts& art) {
    const double delta = cfg.delta_grid.front();
    const double c = cfg.stability_radius;
    const long t = cfg.t_horizon;
    const int d = cfg.spec.dim;
    progress("[minibatch] beta=" + fmt_g(beta) + " N=" + std::to_string(cfg.batch) +
             " T=" + std::to_string(t) + " replicas=" + std::to_string(cfg.n_replicas));

    MatrixNoiseCertificate mcert = certify_matrix_noise_psi1(
        linear_noise_generator(cfg.spec, cfg.noise), d, 20000, 6,
        block_seed(cfg.master_seed, kTagCertify ^ kTagMinibatch));
    rep.provenance.push_back("matrix-noise certificate K_mat=" + fmt_g(mcert.k_mat) +
                             " K_vec=" + fmt_g(mcert.k_vec));

    // admissibility of (N, beta) for the chosen horizon and confidence
    const double need = std::log(4.0 * static_cast<double>(t) / delta) + 3.0 * d;
    const double mu = cfg.spec.mu;
    const double ratio_req =
        std::max(1.0, std::pow(6.0 / mu * std::max(3.0 * mcert.k_mat, 4.0 * mcert.k_vec / c),
                               2.0));
    const double beta_cap = std::min(
        mu * cfg.batch / (54.0 * mcert.k_mat * mcert.k_mat * need), 2.0 / (mu + cfg.spec.big_l));
    std::string cond = "N/(log(4T/delta)+3d) = " + fmt_g(cfg.batch / need) + " vs required " +
                       fmt_g(ratio_req) + "; beta cap " + fmt_g(beta_cap);
    if (!cfg.force_step_size && (cfg.batch / need < ratio_req || beta > beta_cap))
        throw ExperimentError("minibatch boundedness preconditions fail: " + cond);

    Ensemble ens = run_ensemble(cfg.spec, cfg.noise, beta, InitSampler::dirac(cfg.spec.theta_star),
                                t, {t}, cfg.n_replicas,
                                block_seed(cfg.master_seed, kTagMinibatch), run_options(cfg),
                                cfg.batch);
    long escapes = 0;
    std::ostringstream esc;
    esc << "replica,max_deviation,escaped\n";
    for (Eigen::Index r = 0; r < ens.max_deviation.size(); ++r) {
        const bool e = ens.max_deviation[r] > c;
        escapes += e ? 1 : 0;
        esc << r << ',' << fmt17(ens.max_deviation[r]) << ',' << (e ? 1 : 0) << "\n";
    }
    write_text(art.file("escapes" + beta_file_tag(cfg, beta) + ".csv"), esc.str());

    const double n = static_cast<double>(ens.max_deviation.size());
    const double freq = static_cast<double>(escapes) / n;
    const double slack = 3.0 * std::sqrt(delta * (1.0 - delta) / n);
    BoundCheck check = make_bound_check(
        "minibatch_escape_frequency" + beta_suffix(cfg, beta), freq, delta, slack,
        "sup_{t<=T} |theta_t - theta*| > " + fmt_g(c) + " on " + fmt_g(n) + " replicas; " + cond);
    rep.checks.push_back(check);
}

void run_matrix_block(const ExperimentConfig& cfg, DiagnosticsReport& rep) {
    const double delta = cfg.delta_grid.front();
    progress("[matrix] N=" + std::to_string(cfg.batch) + " delta=" + fmt_g(delta) +
             " trials=" + std::to_string(cfg.n_replicas));
    MatrixNoiseGen gen = linear_noise_generator(cfg.spec, cfg.noise);
    MatrixNoiseCertificate mcert = certify_matrix_noise_psi1(
        gen, cfg.spec.dim, 20000, 6, block_seed(cfg.master_seed, kTagCertify ^ kTagMatrix));
    rep.provenance.push_back("matrix-noise certificate K_mat=" + fmt_g(mcert.k_mat) +
                             " K_vec=" + fmt_g(mcert.k_vec));
    auto checks = check_matrix_concentration(gen, std::max(mcert.k_mat, 1e-9),
                                             std::max(mcert.k_vec, 1e-9), {cfg.batch},
                                             cfg.spec.dim, delta, cfg.n_replicas,
                                             block_seed(cfg.master_seed, kTagMatrix),
                                             cfg.threads);
    for (auto& c : checks) rep.checks.push_back(std::move(c));
}

}  // namespace

const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Stationary: return "stationary";
        case ExperimentKind::TvDecay: return "tv_decay";
        case ExperimentKind::Coupling: return "coupling";
        case ExperimentKind::LastIterate: return "last_iterate";
        case ExperimentKind::PrAverage: return "pr_average";
        case ExperimentKind::MinibatchBoundedness: return "minibatch_boundedness";
        case ExperimentKind::MatrixConcentration: return "matrix_concentration";
        case ExperimentKind::FullSuite: return "full_suite";
    }
    return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    if (s == "stationary") return ExperimentKind::Stationary;
    if (s == "tv_decay") return ExperimentKind::TvDecay;
    if (s == "coupling") return ExperimentKind::Coupling;
    if (s == "last_iterate") return ExperimentKind::LastIterate;
    if (s == "pr_average") return ExperimentKind::PrAverage;
    if (s == "minibatch_boundedness") return ExperimentKind::MinibatchBoundedness;
    if (s == "matrix_concentration") return ExperimentKind::MatrixConcentration;
    if (s == "full_suite") return ExperimentKind::FullSuite;
    throw ExperimentError("unknown experiment kind '" + s + "'");
}

ExperimentConfig experiment_from_config(const ConfigMap& cfg) {
    ExperimentConfig ex;
    if (!cfg.has("mu") && !cfg.has("sigma_matrix"))
        throw ConfigError("missing required key mu (or sigma_matrix to derive it)", 0);
    ex.spec = spec_from_config(cfg);
    ex.noise = noise_from_config(cfg);
    finalize_problem(ex.spec, ex.noise);

    ex.kind = experiment_kind_from_string(cfg.get_string("kind", "full_suite"));

    const bool has_beta = cfg.has("beta");
    const bool has_grid = cfg.has("beta_grid");
    if (has_beta == has_grid)
        throw ConfigError("exactly one of beta / beta_grid is required",
                          has_beta ? cfg.line_of("beta") : 0);
    if (has_beta) {
        ex.betas = {cfg.get_number("beta")};
    } else {
        ex.betas = cfg.get_list("beta_grid");
        ex.grid = true;
        if (ex.betas.empty())
            throw ConfigError("beta_grid must not be empty", cfg.line_of("beta_grid"));
    }
    for (double b : ex.betas)
        if (!(b > 0.0))
            throw ConfigError("step sizes must be positive",
                              cfg.line_of(has_beta ? "beta" : "beta_grid"));

    ex.t_horizon = cfg.get_integer("t", 300);
    if (ex.t_horizon < 1) throw ConfigError("t must be positive", cfg.line_of("t"));
    ex.n_replicas = static_cast<int>(cfg.get_integer("replicas", 1000));
    if (ex.n_replicas < 0) throw ConfigError("replicas must be nonnegative",
                                             cfg.line_of("replicas"));
    if (ex.n_replicas == 0 && ex.kind != ExperimentKind::TvDecay)
        throw ConfigError("replicas = 0 is only meaningful for tv_decay (analytic path)", 0);

    if (cfg.has("snapshot_times")) {
        for (double t : cfg.get_list("snapshot_times"))
            ex.snapshot_times.push_back(static_cast<long>(t));
        for (std::size_t i = 0; i + 1 < ex.snapshot_times.size(); ++i)
            if (ex.snapshot_times[i] >= ex.snapshot_times[i + 1])
                throw ConfigError("snapshot_times must be strictly increasing",
                                  cfg.line_of("snapshot_times"));
        if (!ex.snapshot_times.empty() && ex.snapshot_times.front() < 0)
            throw ConfigError("snapshot_times must be nonnegative",
                              cfg.line_of("snapshot_times"));
    }
    if (cfg.has("delta_grid")) {
        ex.delta_grid = cfg.get_list("delta_grid");
        for (double d : ex.delta_grid)
            if (!(d > 0.0 && d < 1.0))
                throw ConfigError("delta_grid entries must lie in (0, 1)",
                                  cfg.line_of("delta_grid"));
    }
    ex.n0 = cfg.get_integer("n0", 200);
    ex.n_avg = cfg.get_integer("n", 1000);
    if (ex.n0 < 0 || ex.n_avg < 1)
        throw ConfigError("need n0 >= 0 and n >= 1 for tail averages", 0);
    ex.batch = static_cast<int>(cfg.get_integer("batch", 100));
    if (ex.batch < 1) throw ConfigError("batch must be positive", cfg.line_of("batch"));
    ex.stability_radius = cfg.get_number("stability_radius", 1.0);
    if (!(ex.stability_radius > 0.0))
        throw ConfigError("stability_radius must be positive", cfg.line_of("stability_radius"));
    if (cfg.has("init1")) ex.init1 = cfg.get_vector("init1");
    if (cfg.has("init2")) ex.init2 = cfg.get_vector("init2");
    for (const auto* v : {&ex.init1, &ex.init2})
        if (v->size() != 0 && v->size() != ex.spec.dim)
            throw ConfigError("init vectors must have length dim", 0);
    ex.master_seed = static_cast<std::uint64_t>(cfg.get_integer("master_seed", 1));
    ex.out_dir = cfg.get_string("out", "out");
    ex.force_step_size = cfg.get_bool("force_step_size", false);
    ex.threads = static_cast<int>(cfg.get_integer("threads", 0));

    const std::vector<std::string> unused = cfg.unused_keys();
    if (!unused.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unused) msg += " " + k;
        throw ConfigError(msg, cfg.line_of(unused.front()));
    }
    return ex;
}

ExperimentConfig load_experiment(const std::string& path) {
    return experiment_from_config(parse_config_file(path));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg_in) {
    ExperimentConfig cfg = cfg_in;  // certified constants are filled in locally
    ExperimentResult result;
    DiagnosticsReport& rep = result.report;

    std::ostringstream summary;
    summary << cfg.spec.id << " " << to_string(cfg.spec.objective) << " d=" << cfg.spec.dim
            << " mu=" << fmt_g(cfg.spec.mu) << " noise=" << to_string(cfg.noise.kind)
            << " sigma_sq=" << fmt_g(cfg.spec.sigma_sq);
    rep.spec_summary = summary.str();
    rep.beta = cfg.betas.front();
    rep.provenance.push_back("kind=" + std::string(to_string(cfg.kind)));
    {
        std::string bs = "betas=[";
        for (std::size_t i = 0; i < cfg.betas.size(); ++i)
            bs += (i ? ", " : "") + fmt_g(cfg.betas[i]);
        rep.provenance.push_back(bs + "]");
    }
    rep.provenance.push_back("master_seed=" + std::to_string(cfg.master_seed));
    rep.provenance.push_back("replicas=" + std::to_string(cfg.n_replicas));

    Artifacts art;
    art.dir = cfg.out_dir;
    std::filesystem::create_directories(art.dir);

    const bool wants_psi = cfg.kind == ExperimentKind::Stationary ||
                           cfg.kind == ExperimentKind::LastIterate ||
                           cfg.kind == ExperimentKind::PrAverage ||
                           cfg.kind == ExperimentKind::FullSuite;
    if (wants_psi) ensure_psi_constants(cfg, rep);

    std::vector<double> psi2_constants;
    for (std::size_t bi = 0; bi < cfg.betas.size(); ++bi) {
        const double beta = cfg.betas[bi];
        switch (cfg.kind) {
            case ExperimentKind::Stationary:
                psi2_constants.push_back(run_stationary_block(cfg, beta, rep, art));
                break;
            case ExperimentKind::TvDecay:
                run_tv_block(cfg, beta, rep, art);
                break;
            case ExperimentKind::Coupling:
                run_coupling_block(cfg, beta, rep, art);
                break;
            case ExperimentKind::LastIterate:
                run_last_iterate_block(cfg, beta, rep, art);
                break;
            case ExperimentKind::PrAverage:
                run_pr_block(cfg, beta, rep, art);
                break;
            case ExperimentKind::MinibatchBoundedness:
                run_minibatch_block(cfg, beta, rep, art);
                break;
            case ExperimentKind::MatrixConcentration:
                if (bi == 0) run_matrix_block(cfg, rep);  // step-size independent
                break;
            case ExperimentKind::FullSuite:
                psi2_constants.push_back(run_stationary_block(cfg, beta, rep, art));
                if (cfg.spec.dim == 1) {
                    run_tv_block(cfg, beta, rep, art);
                } else if (bi == 0) {
                    rep.provenance.push_back(
                        "tv_decay skipped: histogram distance is implemented for d = 1 only");
                }
                run_coupling_block(cfg, beta, rep, art);
                run_last_iterate_block(cfg, beta, rep, art);
                if (oracle_applies(cfg)) {
                    run_pr_block(cfg, beta, rep, art);
                } else if (bi == 0) {
                    rep.provenance.push_back(
                        "pr_average skipped: no closed-form reference for this spec");
                }
                if (bi == 0) run_matrix_block(cfg, rep);
                break;
        }
    }

    std::vector<double> fit_betas, fit_psi2;
    for (std::size_t i = 0; i < psi2_constants.size(); ++i) {
        if (psi2_constants[i] > 0.0) {
            fit_betas.push_back(cfg.betas[i]);
            fit_psi2.push_back(psi2_constants[i]);
        }
    }
    if (fit_betas.size() >= 3) {
        ScalingFit fit = fit_sqrt_beta_scaling(fit_betas, fit_psi2, "psi_sqrt_beta_scaling");
        rep.fits.push_back(fit);
        rep.checks.push_back(check_scaling_slope(fit));
    }

    write_text(art.file("report.json"), report_to_json(rep, iso_now()));
    std::ostringstream lines;
    for (const auto& c : rep.checks) {
        lines << (c.pass ? "[PASS] " : "[FAIL] ") << c.claim_id
              << " empirical=" << fmt_g(c.empirical_value) << " bound=" << fmt_g(c.bound)
              << " margin=" << fmt_g(c.margin) << " mc=" << fmt_g(c.mc_error) << "\n";
    }
    write_text(art.file("summary.txt"), lines.str());
    write_text(art.file("checks.csv"), report_to_csv(rep));

    result.artifacts = art.names;
    result.exit_code = rep.all_pass() ? 0 : 2;
    progress("[done] " + std::to_string(rep.checks.size()) + " checks, " +
             (result.exit_code == 0 ? "all passed" : "failures present"));
    return result;
}

std::string oracle_summary_json(const ProblemSpec& spec, const NoiseModel& noise, double beta) {
    std::ostringstream out;
    out << "{\n  \"beta\": " << fmt17(beta) << ",\n";
    StepSizeReport rep = validate_step_size(spec, beta, 2);
    out << "  \"step_size_conditions\": {";
    bool first = true;
    for (const auto& c : rep.conditions) {
        out << (first ? "" : ",") << "\n    \"" << c.condition_id
            << "\": {\"threshold\": " << fmt17(c.threshold)
            << ", \"admissible\": " << (c.admissible ? "true" : "false") << "}";
        first = false;
    }
    out << "\n  },\n";
    const double denom = 2.0 * spec.mu - beta * (spec.mu * spec.mu + spec.l_sigma);
    if (denom > 0.0) {
        const double vb = beta * spec.sigma_sq / denom;
        out << "  \"variance_bound\": " << fmt17(vb) << ",\n";
        out << "  \"bias_bound\": " << fmt17(std::sqrt(vb)) << ",\n";
    }
    const double a = 1.0 - beta * spec.mu;
    const double alpha_w = std::sqrt(a * a + beta * beta * spec.l_w);
    out << "  \"w2_contraction_factor\": " << fmt17(alpha_w) << ",\n";
    out << "  \"tv_rate_bound\": " << fmt17(alpha_w) << ",\n";
    const bool oracle = spec.objective == ObjectiveKind::Quadratic &&
                        noise.kind == NoiseKind::AdditiveGaussian && spec.sigma_sq > 0.0;
    out << "  \"closed_form_law\": " << (oracle ? "true" : "false");
    if (oracle) {
        OracleSolution sol = make_oracle(spec, noise, beta);
        out << ",\n  \"stationary_cov\": [";
        for (Eigen::Index i = 0; i < sol.stationary_cov.rows(); ++i) {
            out << (i ? ", " : "") << "[";
            for (Eigen::Index j = 0; j < sol.stationary_cov.cols(); ++j)
                out << (j ? ", " : "") << fmt17(sol.stationary_cov(i, j));
            out << "]";
        }
        out << "],\n  \"contraction_bound\": " << fmt17(sol.contraction_bound);
        out << ",\n  \"lyapunov_residual\": " << fmt17(sol.lyapunov_residual);
    }
    out << "\n}\n";
    return out.str();
}

}  // namespace sgdlab

#include "sgdlab/engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "sgdlab/linalg.hpp"
#include "sgdlab/parallel.hpp"

namespace sgdlab {

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_beta(const ProblemSpec& spec, double beta, const RunOptions& opts) {
    if (beta < 0.0) throw EngineError("beta must be nonnegative");
    if (beta == 0.0 || opts.force_step_size) return;
    StepSizeReport rep = validate_step_size(spec, beta);
    if (!rep.admissible("tv_ergodicity"))
        throw EngineError("beta = " + fmt17(beta) + " exceeds the ergodicity threshold " +
                          fmt17(rep.threshold("tv_ergodicity")) +
                          " (pass the force flag to run anyway)");
}

// Workspace for one chain; owns every scratch buffer so steps never allocate.
struct Kernel {
    const ProblemSpec& spec;
    const NoiseModel& noise;
    double beta;
    int batch = 1;
    bool project = false;
    double guard = 1e12;

    NoiseDraw zeta;
    Eigen::VectorXd g, acc, dev;
    double last_deviation = 0.0;

    // bulk-sampled least-squares minibatch: one normal fill + two GEMVs per
    // step instead of `batch` scalar draws
    bool bulk_ls = false;
    Eigen::MatrixXd zbuf, xbuf;
    Eigen::VectorXd resid;

    Kernel(const ProblemSpec& s, const NoiseModel& n, double b, int batch_size, bool proj,
           const RunOptions& opts)
        : spec(s), noise(n), beta(b), batch(batch_size), project(proj),
          guard(opts.divergence_guard) {
        g.resize(s.dim);
        acc.resize(s.dim);
        dev.resize(s.dim);
        if (batch > 1 && spec.objective == ObjectiveKind::LeastSquaresRandomDesign &&
            noise.kind == NoiseKind::RandomDesignGaussian) {
            bulk_ls = true;
            zbuf.resize(s.dim + 1, batch);
            xbuf.resize(s.dim, batch);
            resid.resize(batch);
        }
    }

    double deviation(const Eigen::VectorXd& theta) {
        dev = theta - spec.theta_star;
        last_deviation = dev.norm();
        return last_deviation;
    }

    // returns |G_t|
    double step(Eigen::VectorXd& theta, RngStream& rng, long t, long replica) {
        if (batch == 1) {
            draw_noise(spec, noise, rng, zeta);
            stochastic_gradient_into(spec, noise, theta, zeta, g);
        } else if (bulk_ls) {
            // mean of (X_i . w - xi_i) X_i with columns X_i = design_sqrt z_i
            rng.fill_normal(zbuf.data(), static_cast<std::size_t>(zbuf.size()));
            xbuf.noalias() = noise.design_sqrt * zbuf.topRows(spec.dim);
            dev = theta - spec.theta_star;
            resid.noalias() = xbuf.transpose() * dev;
            resid -= noise.label_std * zbuf.row(spec.dim).transpose();
            g.noalias() = xbuf * resid;
            g /= static_cast<double>(batch);
        } else {
            acc.setZero();
            for (int i = 0; i < batch; ++i) {
                draw_noise(spec, noise, rng, zeta);
                stochastic_gradient_into(spec, noise, theta, zeta, g);
                acc += g;
            }
            g = acc / static_cast<double>(batch);
        }
        theta -= beta * g;
        if (project) {
            const double r = theta.norm();
            const double radius = *spec.ball_radius;
            if (r > radius) theta *= radius / r;
        }
        const double d = deviation(theta);
        if (!std::isfinite(d) || d > guard) {
            std::string where = "step " + std::to_string(t);
            if (replica >= 0) where += ", replica " + std::to_string(replica);
            throw EngineError("divergence at " + where + ": |theta - theta*| = " + fmt17(d));
        }
        return g.norm();
    }
};

long trajectory_stride(long n_steps, int dim) {
    const double entries = static_cast<double>(n_steps + 1) * dim;
    if (entries <= 1e7) return 1;
    return static_cast<long>(std::ceil(entries / 1e7));
}

Trajectory run_single(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                      int batch_size, bool project, const Eigen::VectorXd& theta0, long n_steps,
                      std::uint64_t seed, const RunOptions& opts) {
    if (n_steps < 0) throw EngineError("n_steps must be nonnegative");
    if (batch_size < 1) throw EngineError("batch size must be at least 1");
    if (theta0.size() != spec.dim) throw EngineError("theta0 has wrong dimension");
    if (project) {
        if (!spec.ball_radius) throw EngineError("projected chain needs ball_radius");
        if (theta0.norm() > *spec.ball_radius)
            throw EngineError("theta0 lies outside the projection ball");
    }
    check_beta(spec, beta, opts);

    Trajectory traj;
    traj.spec_id = spec.id;
    traj.beta = beta;
    traj.seed = seed;
    traj.n_steps = n_steps;
    traj.stride = trajectory_stride(n_steps, spec.dim);
    traj.iterates.reserve(static_cast<std::size_t>(n_steps / traj.stride) + 1);
    if (opts.record_gradient_norms) traj.gradient_norms.reserve(n_steps);

    RngStream rng(seed, 0);
    Kernel kernel(spec, noise, beta, batch_size, project, opts);
    Eigen::VectorXd theta = theta0;
    traj.iterates.push_back(theta);
    traj.max_deviation = kernel.deviation(theta);
    for (long t = 0; t < n_steps; ++t) {
        double gnorm = kernel.step(theta, rng, t, -1);
        if (opts.record_gradient_norms) traj.gradient_norms.push_back(gnorm);
        traj.max_deviation = std::max(traj.max_deviation, kernel.last_deviation);
        if ((t + 1) % traj.stride == 0) traj.iterates.push_back(theta);
    }
    traj.final_iterate = theta;
    return traj;
}

}  // namespace

const Eigen::VectorXd& Trajectory::at_time(long t) const {
    if (t < 0 || t > n_steps || t % stride != 0)
        throw EngineError("trajectory has no iterate stored at time " + std::to_string(t));
    return iterates[static_cast<std::size_t>(t / stride)];
}

const Eigen::MatrixXd& Ensemble::at_time(long t) const {
    for (std::size_t i = 0; i < snapshot_times.size(); ++i)
        if (snapshot_times[i] == t) return snapshots[i];
    throw EngineError("ensemble has no snapshot at time " + std::to_string(t));
}

InitSampler InitSampler::dirac(const Eigen::VectorXd& point) {
    InitSampler s;
    s.dirac_ = true;
    s.mean_ = point;
    return s;
}

InitSampler InitSampler::gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        throw EngineError("init covariance has wrong dimension");
    InitSampler s;
    s.dirac_ = false;
    s.mean_ = mean;
    s.cov_ = cov;
    s.cov_sqrt_ = sym_sqrt(cov);
    return s;
}

Eigen::VectorXd InitSampler::sample(RngStream& rng) const {
    if (dirac_) return mean_;  // consumes no randomness
    Eigen::VectorXd z(mean_.size());
    rng.fill_normal(z.data(), z.size());
    return mean_ + cov_sqrt_ * z;
}

std::string InitSampler::description() const {
    std::ostringstream out;
    out << (dirac_ ? "dirac(" : "gaussian(");
    out << "[";
    for (Eigen::Index i = 0; i < mean_.size(); ++i)
        out << fmt17(mean_[i]) << (i + 1 < mean_.size() ? ", " : "");
    out << "]";
    if (!dirac_) out << ", tr_cov=" << fmt17(cov_.trace());
    out << ")";
    return out.str();
}

Trajectory run_chain(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                     const Eigen::VectorXd& theta0, long n_steps, std::uint64_t seed,
                     const RunOptions& opts) {
    return run_single(spec, noise, beta, 1, false, theta0, n_steps, seed, opts);
}

Trajectory run_projected_chain(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                               const Eigen::VectorXd& theta0, long n_steps, std::uint64_t seed,
                               const RunOptions& opts) {
    return run_single(spec, noise, beta, 1, true, theta0, n_steps, seed, opts);
}

Trajectory run_minibatch_chain(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                               int batch_size, const Eigen::VectorXd& theta0, long n_steps,
                               std::uint64_t seed, const RunOptions& opts) {
    return run_single(spec, noise, beta, batch_size, false, theta0, n_steps, seed, opts);
}

Ensemble run_ensemble(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                      const InitSampler& init, long n_steps,
                      const std::vector<long>& snapshot_times, int n_replicas,
                      std::uint64_t master_seed, const RunOptions& opts, int batch_size,
                      bool project) {
    if (n_replicas < 1) throw EngineError("n_replicas must be at least 1");
    if (batch_size < 1) throw EngineError("batch size must be at least 1");
    for (std::size_t i = 0; i < snapshot_times.size(); ++i) {
        if (snapshot_times[i] < 0 || snapshot_times[i] > n_steps)
            throw EngineError("snapshot time outside [0, n_steps]");
        if (i > 0 && snapshot_times[i] <= snapshot_times[i - 1])
            throw EngineError("snapshot_times must be strictly increasing");
    }
    if (project && !spec.ball_radius) throw EngineError("projected chain needs ball_radius");
    check_beta(spec, beta, opts);

    Ensemble ens;
    ens.spec_id = spec.id;
    ens.beta = beta;
    ens.n_replicas = n_replicas;
    ens.master_seed = master_seed;
    ens.snapshot_times = snapshot_times;
    ens.snapshots.assign(snapshot_times.size(), Eigen::MatrixXd(n_replicas, spec.dim));
    ens.seeds.resize(n_replicas);
    for (int r = 0; r < n_replicas; ++r) ens.seeds[r] = static_cast<std::uint64_t>(r);
    ens.max_deviation.resize(n_replicas);

    parallel_for(static_cast<std::size_t>(n_replicas), opts.threads, [&](std::size_t r) {
        RngStream rng(master_seed, static_cast<std::uint64_t>(r));
        Kernel kernel(spec, noise, beta, batch_size, project, opts);
        Eigen::VectorXd theta = init.sample(rng);
        if (theta.size() != spec.dim)
            throw EngineError("init sampler produced the wrong dimension");
        if (project && theta.norm() > *spec.ball_radius)
            throw EngineError("replica " + std::to_string(r) +
                              ": init lies outside the projection ball");
        double maxdev = kernel.deviation(theta);
        std::size_t next = 0;
        if (next < snapshot_times.size() && snapshot_times[next] == 0)
            ens.snapshots[next++].row(static_cast<Eigen::Index>(r)) = theta.transpose();
        for (long t = 0; t < n_steps; ++t) {
            kernel.step(theta, rng, t, static_cast<long>(r));
            maxdev = std::max(maxdev, kernel.last_deviation);
            if (next < snapshot_times.size() && snapshot_times[next] == t + 1)
                ens.snapshots[next++].row(static_cast<Eigen::Index>(r)) = theta.transpose();
        }
        ens.max_deviation[static_cast<Eigen::Index>(r)] = maxdev;
    });
    return ens;
}

CouplingRun run_coupled_pair(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                             const InitSampler& init1, const InitSampler& init2, long n_steps,
                             int n_pairs, std::uint64_t master_seed, const RunOptions& opts) {
    if (n_pairs < 1) throw EngineError("n_pairs must be at least 1");
    if (n_steps < 0) throw EngineError("n_steps must be nonnegative");
    check_beta(spec, beta, opts);

    CouplingRun run;
    run.beta = beta;
    run.n_pairs = n_pairs;
    run.master_seed = master_seed;
    run.sq_dists.resize(n_steps + 1, n_pairs);
    run.init_description = init1.description() + " / " + init2.description();

    parallel_for(static_cast<std::size_t>(n_pairs), opts.threads, [&](std::size_t r) {
        RngStream rng(master_seed, static_cast<std::uint64_t>(r));
        Kernel kernel(spec, noise, beta, 1, false, opts);
        Eigen::VectorXd a = init1.sample(rng);
        Eigen::VectorXd b = init2.sample(rng);
        if (a.size() != spec.dim || b.size() != spec.dim)
            throw EngineError("init sampler produced the wrong dimension");
        Eigen::VectorXd ga(spec.dim), gb(spec.dim);
        NoiseDraw zeta;
        run.sq_dists(0, static_cast<Eigen::Index>(r)) = (a - b).squaredNorm();
        for (long t = 0; t < n_steps; ++t) {
            draw_noise(spec, noise, rng, zeta);
            stochastic_gradient_into(spec, noise, a, zeta, ga);
            stochastic_gradient_into(spec, noise, b, zeta, gb);
            a -= beta * ga;
            b -= beta * gb;
            const double da = (a - spec.theta_star).norm();
            const double db = (b - spec.theta_star).norm();
            if (!std::isfinite(da) || !std::isfinite(db) ||
                std::max(da, db) > opts.divergence_guard)
                throw EngineError("divergence at step " + std::to_string(t) + ", pair " +
                                  std::to_string(r));
            run.sq_dists(t + 1, static_cast<Eigen::Index>(r)) = (a - b).squaredNorm();
        }
    });
    return run;
}

Eigen::MatrixXd run_tail_averages(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                                  const InitSampler& init, long n0, long n, int n_replicas,
                                  std::uint64_t master_seed, const RunOptions& opts) {
    if (n_replicas < 1) throw EngineError("n_replicas must be at least 1");
    if (n0 < 0 || n < 1) throw EngineError("need n0 >= 0 and n >= 1");
    check_beta(spec, beta, opts);

    Eigen::MatrixXd averages(n_replicas, spec.dim);
    parallel_for(static_cast<std::size_t>(n_replicas), opts.threads, [&](std::size_t r) {
        RngStream rng(master_seed, static_cast<std::uint64_t>(r));
        Kernel kernel(spec, noise, beta, 1, false, opts);
        Eigen::VectorXd theta = init.sample(rng);
        if (theta.size() != spec.dim)
            throw EngineError("init sampler produced the wrong dimension");
        kernel.deviation(theta);
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(spec.dim);
        for (long t = 0; t < n0 + n; ++t) {
            kernel.step(theta, rng, t, static_cast<long>(r));
            if (t >= n0) sum += theta;
        }
        averages.row(static_cast<Eigen::Index>(r)) = sum.transpose() / static_cast<double>(n);
    });
    return averages;
}

namespace {

std::vector<double> parse_csv_row(const std::string& line, int line_no) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        std::size_t comma = line.find(',', pos);
        std::string cell =
            line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        double v = 0.0;
        auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
            throw EngineError("bad csv number '" + cell + "' at line " + std::to_string(line_no));
        out.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

}  // namespace

void write_snapshots_csv(const std::string& path, const Ensemble& ens) {
    std::ofstream out(path);
    if (!out) throw EngineError("cannot open " + path + " for writing");
    const Eigen::Index d = ens.snapshots.empty() ? 0 : ens.snapshots[0].cols();
    out << "replica,time";
    for (Eigen::Index j = 0; j < d; ++j) out << ",coord_" << j;
    out << "\n";
    for (int r = 0; r < ens.n_replicas; ++r)
        for (std::size_t i = 0; i < ens.snapshot_times.size(); ++i) {
            out << r << "," << ens.snapshot_times[i];
            for (Eigen::Index j = 0; j < d; ++j) out << "," << fmt17(ens.snapshots[i](r, j));
            out << "\n";
        }
    if (!out) throw EngineError("write failed for " + path);
}

Ensemble read_snapshots_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EngineError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw EngineError(path + ": empty file");
    // rows arrive replica-major in our own writer but any order is accepted
    std::map<long, std::map<int, std::vector<double>>> by_time;
    int max_replica = -1;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row = parse_csv_row(line, line_no);
        if (row.size() < 3) throw EngineError(path + ": short row at line " + std::to_string(line_no));
        int r = static_cast<int>(row[0]);
        long t = static_cast<long>(row[1]);
        by_time[t][r] = std::vector<double>(row.begin() + 2, row.end());
        max_replica = std::max(max_replica, r);
    }
    Ensemble ens;
    ens.n_replicas = max_replica + 1;
    for (auto& [t, rows] : by_time) {
        const std::size_t d = rows.begin()->second.size();
        Eigen::MatrixXd m(ens.n_replicas, static_cast<Eigen::Index>(d));
        for (auto& [r, coords] : rows)
            for (std::size_t j = 0; j < d; ++j) m(r, static_cast<Eigen::Index>(j)) = coords[j];
        ens.snapshot_times.push_back(t);
        ens.snapshots.push_back(std::move(m));
    }
    return ens;
}

void write_coupling_csv(const std::string& path, const CouplingRun& run) {
    std::ofstream out(path);
    if (!out) throw EngineError("cannot open " + path + " for writing");
    out << "pair,step,sq_dist\n";
    for (int r = 0; r < run.n_pairs; ++r)
        for (Eigen::Index t = 0; t < run.sq_dists.rows(); ++t)
            out << r << "," << t << "," << fmt17(run.sq_dists(t, r)) << "\n";
    if (!out) throw EngineError("write failed for " + path);
}

CouplingRun read_coupling_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EngineError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw EngineError(path + ": empty file");
    std::map<long, std::map<int, double>> by_step;
    int max_pair = -1;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row = parse_csv_row(line, line_no);
        if (row.size() != 3) throw EngineError(path + ": bad row at line " + std::to_string(line_no));
        int r = static_cast<int>(row[0]);
        long t = static_cast<long>(row[1]);
        by_step[t][r] = row[2];
        max_pair = std::max(max_pair, r);
    }
    CouplingRun run;
    run.n_pairs = max_pair + 1;
    run.sq_dists.resize(static_cast<Eigen::Index>(by_step.size()), run.n_pairs);
    Eigen::Index i = 0;
    for (auto& [t, cells] : by_step) {
        for (auto& [r, v] : cells) run.sq_dists(i, r) = v;
        ++i;
    }
    return run;
}

}  // namespace sgdlab

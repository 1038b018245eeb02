#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdlab/model.hpp"

namespace sgdlab {

struct EngineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Initial condition: a point mass or a gaussian, drawn from the replica's own
// stream before any chain step consumes randomness.
class InitSampler {
  public:
    static InitSampler dirac(const Eigen::VectorXd& point);
    static InitSampler gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

    Eigen::VectorXd sample(RngStream& rng) const;
    bool is_dirac() const { return dirac_; }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& cov() const { return cov_; }
    std::string description() const;

  private:
    InitSampler() = default;
    bool dirac_ = true;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    Eigen::MatrixXd cov_sqrt_;
};

struct RunOptions {
    bool force_step_size = false;   // skip the admissibility gate (negative tests)
    bool record_gradient_norms = false;
    double divergence_guard = 1e12; // abort when |theta_t - theta*| exceeds this
    int threads = 0;                // 0 = SGDLAB_THREADS env or hardware default
};

struct Trajectory {
    std::string spec_id;
    double beta = 0.0;
    std::uint64_t seed = 0;
    long n_steps = 0;   // T
    long stride = 1;    // iterates[k] is theta at time k*stride
    std::vector<Eigen::VectorXd> iterates;
    Eigen::VectorXd final_iterate;          // theta_T regardless of stride
    double max_deviation = 0.0;             // max_t |theta_t - theta*|
    std::vector<double> gradient_norms;     // |G_t| per step when recorded

    const Eigen::VectorXd& at_time(long t) const;  // requires t % stride == 0
};

struct Ensemble {
    std::string spec_id;
    double beta = 0.0;
    int n_replicas = 0;
    std::uint64_t master_seed = 0;
    std::vector<long> snapshot_times;            // strictly increasing
    std::vector<Eigen::MatrixXd> snapshots;      // one n_replicas x d matrix per time
    std::vector<std::uint64_t> seeds;            // per-replica stream ids
    Eigen::VectorXd max_deviation;               // per replica, max_t |theta_t - theta*|

    const Eigen::MatrixXd& at_time(long t) const;
};

struct CouplingRun {
    double beta = 0.0;
    int n_pairs = 0;
    std::uint64_t master_seed = 0;
    // row t = squared distance |theta_t - theta'_t|^2 per pair, t = 0..n_steps
    Eigen::MatrixXd sq_dists;
    std::string init_description;
};

Trajectory run_chain(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                     const Eigen::VectorXd& theta0, long n_steps, std::uint64_t seed,
                     const RunOptions& opts = {});

Trajectory run_projected_chain(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                               const Eigen::VectorXd& theta0, long n_steps, std::uint64_t seed,
                               const RunOptions& opts = {});

Trajectory run_minibatch_chain(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                               int batch_size, const Eigen::VectorXd& theta0, long n_steps,
                               std::uint64_t seed, const RunOptions& opts = {});

// n_replicas independent chains on split streams; replica r is reproducible
// from (master_seed, seeds[r]) alone.
Ensemble run_ensemble(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                      const InitSampler& init, long n_steps,
                      const std::vector<long>& snapshot_times, int n_replicas,
                      std::uint64_t master_seed, const RunOptions& opts = {},
                      int batch_size = 1, bool project = false);

// Synchronous coupling: both chains of a pair consume the identical noise
// realization each step.
CouplingRun run_coupled_pair(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                             const InitSampler& init1, const InitSampler& init2, long n_steps,
                             int n_pairs, std::uint64_t master_seed, const RunOptions& opts = {});

// Streaming window averages (1/n) sum_{t=n0+1}^{n0+n} theta_t, one row per
// replica. Same stream layout as run_ensemble.
Eigen::MatrixXd run_tail_averages(const ProblemSpec& spec, const NoiseModel& noise, double beta,
                                  const InitSampler& init, long n0, long n, int n_replicas,
                                  std::uint64_t master_seed, const RunOptions& opts = {});

// Columnar serialization, exact round-trip via 17 significant digits.
// Snapshot schema: replica,time,coord_0..coord_{d-1}; coupling: pair,step,sq_dist.
void write_snapshots_csv(const std::string& path, const Ensemble& ens);
Ensemble read_snapshots_csv(const std::string& path);
void write_coupling_csv(const std::string& path, const CouplingRun& run);
CouplingRun read_coupling_csv(const std::string& path);

}  // namespace sgdlab

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdlab/config.hpp"
#include "sgdlab/diagnostics.hpp"
#include "sgdlab/engine.hpp"
#include "sgdlab/model.hpp"

namespace sgdlab {

struct ExperimentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
    Stationary,
    TvDecay,
    Coupling,
    LastIterate,
    PrAverage,
    MinibatchBoundedness,
    MatrixConcentration,
    FullSuite,
};

const char* to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

// One batch experiment: a problem spec plus the run geometry for the chosen
// kind. Exactly one of beta / beta_grid comes from the config; both land in
// `betas` here with `grid` recording which form was used.
struct ExperimentConfig {
    ProblemSpec spec;
    NoiseModel noise;
    ExperimentKind kind = ExperimentKind::FullSuite;
    std::vector<double> betas;
    bool grid = false;
    long t_horizon = 300;
    int n_replicas = 1000;
    std::vector<long> snapshot_times;      // tv_decay checkpoints (optional)
    std::vector<double> delta_grid = {0.05, 0.1, 0.25};
    long n0 = 200;                         // pr_average burn-in
    long n_avg = 1000;                     // pr_average window length
    int batch = 100;                       // minibatch size N / draws per average
    double stability_radius = 1.0;         // minibatch escape ball C
    Eigen::VectorXd init1, init2;          // coupling starts (default theta* +- u)
    std::uint64_t master_seed = 1;
    std::string out_dir = "out";
    bool force_step_size = false;
    int threads = 0;
};

// Reads every documented key and rejects configs with unknown keys, missing
// required fields, or both beta and beta_grid present.
ExperimentConfig experiment_from_config(const ConfigMap& cfg);
ExperimentConfig load_experiment(const std::string& path);

struct ExperimentResult {
    DiagnosticsReport report;
    std::vector<std::string> artifacts;  // files written, relative to out_dir
    int exit_code = 0;                   // 0 all checks pass, 2 any failed
};

// Runs the configured experiment, writes raw CSVs + report.json + summary.txt
// into cfg.out_dir, and returns the report. Throws on execution errors
// (invalid geometry, divergence, unwritable output).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Closed-form quantities for a spec at one step size, as a JSON object:
// step-size thresholds, variance bound, contraction factors, and when the
// linear-gaussian oracle applies, the exact stationary law.
std::string oracle_summary_json(const ProblemSpec& spec, const NoiseModel& noise, double beta);

}  // namespace sgdlab

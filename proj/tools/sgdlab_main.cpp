#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sgdlab/experiment.hpp"

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool force_step_size = false;
    std::optional<int> threads;
};

sgdlab::ExperimentConfig load_with_overrides(const std::string& config_path,
                                             const Overrides& ov) {
    sgdlab::ExperimentConfig cfg = sgdlab::load_experiment(config_path);
    if (ov.seed) cfg.master_seed = *ov.seed;
    if (ov.out) cfg.out_dir = *ov.out;
    if (ov.force_step_size) cfg.force_step_size = true;
    if (ov.threads) cfg.threads = *ov.threads;
    return cfg;
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
    sgdlab::ExperimentConfig cfg = load_with_overrides(config_path, ov);
    sgdlab::ExperimentResult res = sgdlab::run_experiment(cfg);
    for (const auto& c : res.report.checks)
        std::printf("%s %s empirical=%g bound=%g margin=%g\n", c.pass ? "[PASS]" : "[FAIL]",
                    c.claim_id.c_str(), c.empirical_value, c.bound, c.margin);
    std::printf("%s: %zu checks, report in %s/report.json\n",
                res.exit_code == 0 ? "OK" : "BOUND FAILURES", res.report.checks.size(),
                cfg.out_dir.c_str());
    return res.exit_code;
}

int cmd_validate(const std::string& config_path, const Overrides& ov) {
    sgdlab::ExperimentConfig cfg = load_with_overrides(config_path, ov);
    std::printf("valid: kind=%s spec=%s dim=%d betas=%zu replicas=%d\n",
                sgdlab::to_string(cfg.kind), cfg.spec.id.c_str(), cfg.spec.dim,
                cfg.betas.size(), cfg.n_replicas);
    return 0;
}

int cmd_oracle(const std::string& config_path, const Overrides& ov) {
    sgdlab::ExperimentConfig cfg = load_with_overrides(config_path, ov);
    for (double beta : cfg.betas)
        std::fputs(sgdlab::oracle_summary_json(cfg.spec, cfg.noise, beta).c_str(), stdout);
    return 0;
}

int cmd_list_checks() {
    for (const auto& c : sgdlab::claim_registry())
        std::printf("%-34s %s\n", c.claim_id.c_str(), c.description.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo verification lab for constant step-size SGD"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        if (needs_config)
            sub->add_option("--config", config_path, "experiment config file")
                ->required()
                ->check(CLI::ExistingFile);
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { ov.seed = v; }, "override master_seed");
        sub->add_option_function<std::string>(
            "--out", [&](const std::string& v) { ov.out = v; }, "override output directory");
        sub->add_flag("--force-step-size", ov.force_step_size,
                      "run even when the step size fails the ergodicity gate");
        sub->add_option_function<int>(
            "--threads", [&](int v) { ov.threads = v; }, "worker threads (0 = auto)");
    };

    CLI::App* run = app.add_subcommand("run", "run the experiment and write reports");
    add_common(run, true);
    CLI::App* validate = app.add_subcommand("validate", "parse and validate a config");
    add_common(validate, true);
    CLI::App* oracle =
        app.add_subcommand("oracle", "print closed-form quantities for the configured spec");
    add_common(oracle, true);
    app.add_subcommand("list-checks", "list every claim this tool can check");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, ov);
        if (validate->parsed()) return cmd_validate(config_path, ov);
        if (oracle->parsed()) return cmd_oracle(config_path, ov);
        return cmd_list_checks();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

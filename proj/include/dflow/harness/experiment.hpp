#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dflow/harness/config.hpp"

namespace dflow::harness {

/// Everything one optimization cell needs, fully determined by (config, seed).
struct Problem {
    std::shared_ptr<const TargetPrior> prior;
    FlowField field;
    CostSpec spec;
    std::optional<CorruptionOp> op;
    Vec x_star;    ///< ground truth for inverse problems
    Vec hidden_x0; ///< source of a drawn reachable target (reversed sampling)
    Vec x0_init;
    OptimizerConfig optimizer;
};

[[nodiscard]] Problem build_problem(const ExperimentConfig& cfg,
                                    std::shared_ptr<const TargetPrior> prior, std::uint64_t seed);

struct CellResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    RunReport report;
    nlohmann::json metrics;
};

/// Task-level metrics of a finished run: PSNR and recovery error for inverse
/// problems, terminal miss for reversed sampling, level residual for level sets.
[[nodiscard]] nlohmann::json run_metrics(const Problem& problem, const RunReport& report);

[[nodiscard]] CellResult run_cell(const ExperimentConfig& cfg,
                                  std::shared_ptr<const TargetPrior> prior, std::uint64_t seed,
                                  bool write_files);

struct BatchResult {
    std::vector<CellResult> cells;
    int exit_code = 0; ///< 0, or 2 when any cell hit a non-finite state or failed
};

/// Runs seeds cfg.seed .. cfg.seed + cfg.seeds - 1 on up to `jobs` threads.
/// Each cell writes <out_dir>/<name>/seed_<s>/{report.json, summary.txt,
/// iterates.csv, snapshots.csv}; the batch writes batch.json and batch.txt.
[[nodiscard]] BatchResult run_batch(const ExperimentConfig& cfg, int jobs,
                                    bool write_files = true);

enum class Suite { Theorem1, Routes, Order };

[[nodiscard]] Suite parse_suite(const std::string& name);
[[nodiscard]] std::string to_string(Suite suite);

/// Runs one verification suite, writes verify_<suite>.{json,txt} under the
/// experiment directory and returns the text table.
std::string run_verification(const ExperimentConfig& cfg, Suite suite, bool write_files = true);

/// Plain forward sampling of cfg.seeds source draws; writes samples.csv with
/// seed, x0, x(1) and the log-density coordinate z(t_max).
std::string run_sampling(const ExperimentConfig& cfg, bool write_files = true);

/// The `run` subcommand: enabled verification suites, then the batch.
[[nodiscard]] int run_experiment(const ExperimentConfig& cfg, int jobs);

[[nodiscard]] std::filesystem::path experiment_dir(const ExperimentConfig& cfg);

} // namespace dflow::harness

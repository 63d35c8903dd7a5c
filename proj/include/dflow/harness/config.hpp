#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dflow/harness/recipes.hpp"
#include "dflow/optimize.hpp"
#include "dflow/sensitivity.hpp"
#include "dflow/solver.hpp"

namespace dflow::harness {

enum class InitKind { Noise, Blend };

struct ExperimentConfig {
    std::string name = "dflow";
    std::uint64_t seed = 0;
    int seeds = 1;
    bool optimize = true; ///< false for verification-only configs

    PriorRecipe prior;

    std::string scheduler = "cond_ot";
    double t_max = 1.0 - 1e-3;

    Scheme scheme = Scheme::Midpoint;
    int n_steps = 3;

    CostKind cost = CostKind::ReversedSampling;
    Vec target;                 ///< reversed sampling; empty draws a reachable target
    double level = 1.0;
    std::string level_function = "squared_norm";
    Vec level_weights;          ///< linear level function
    std::optional<double> psnr_peak;
    bool chi_d_printed_sign = false;

    std::string corruption = "identity";
    double noise_sigma = 0.0;
    std::string mask = "center_half";
    std::vector<int> mask_keep;
    int subsample_factor = 2;
    Vec kernel;
    std::filesystem::path kernel_file;

    std::optional<double> chi_d_weight; ///< unset: 0.01 when noise_sigma > 0, else 0
    double source_nll_weight = 0.0;
    double target_nll_weight = 0.0;

    InitKind init = InitKind::Noise;
    std::optional<double> blend_alpha;  ///< unset: 0.1 for inverse problems, else 0
    LiftKind lift = LiftKind::MeanFill;
    std::optional<int> backward_steps;  ///< unset: n_steps

    OptimizerConfig optimizer;
    bool noise_matched_target = false;
    GradientRoute route = GradientRoute::DiscreteAdjoint;

    bool verify_theorem1 = false;
    bool verify_routes = false;
    bool verify_order = false;
    int verify_n_steps = 200;
    int verify_pairs = 20;
    int order_reference = 4096;
    std::vector<int> order_steps{16, 32, 64, 128};
    std::vector<double> t_max_sweep{1.0 - 1e-2, 1.0 - 1e-3, 1.0 - 1e-4};

    std::filesystem::path out_dir = "results";
    bool write_snapshots = true;

    [[nodiscard]] bool is_inverse_problem() const;
    [[nodiscard]] double effective_chi_d_weight() const;
    [[nodiscard]] double effective_blend_alpha() const;
    [[nodiscard]] int effective_backward_steps() const;

    /// Cross-field checks: dimensions, ranges and referenced files.
    void validate() const;
};

/// Parses `[section]` headers and `key = value` lines; keys are addressed as
/// `section.key`. Unknown keys and malformed values are ConfigError with the
/// offending line number. Relative paths resolve against the file's directory.
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path,
                                           const std::vector<std::string>& overrides = {});

[[nodiscard]] ExperimentConfig parse_config(const std::string& text,
                                            const std::filesystem::path& base_dir = {},
                                            const std::vector<std::string>& overrides = {});

/// Applies one dotted `key=value` assignment.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir = {});

/// Every recognised key with its documented default, for help output.
[[nodiscard]] const std::map<std::string, std::string>& config_keys();

/// Builds the scheduler named in the config.
[[nodiscard]] Scheduler make_scheduler(const ExperimentConfig& cfg);

/// Builds the corruption operator for a d-dimensional signal.
[[nodiscard]] CorruptionOp make_corruption(const ExperimentConfig& cfg, int dim);

} // namespace dflow::harness

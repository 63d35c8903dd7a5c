#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dflow/field.hpp"
#include "dflow/lbfgs.hpp"
#include "dflow/objective.hpp"
#include "dflow/sensitivity.hpp"
#include "dflow/solver.hpp"

namespace dflow {

struct OptimizerConfig {
    int max_outer_iters = 50;
    int inner_iters_per_step = 20;
    int lbfgs_history = 10;
    LineSearchParams line_search{};
    /// Stop once the base cost reaches this value. For NegPSNR it is a PSNR
    /// in dB and the run stops when PSNR >= target.
    std::optional<double> target_value;
    double grad_tol = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Accepted steps with ||dx|| <= stall_tolerance * max(1, ||x0||) count as
/// failed line searches.
inline constexpr double stall_tolerance = 1e-10;

enum class StopReason { TargetReached, GradTol, MaxIters, LineSearchFailure };

[[nodiscard]] std::string to_string(StopReason reason);

struct IterateRecord {
    int outer = 0;       ///< 0 is the initial point
    int updates = 0;     ///< accepted L-BFGS updates so far
    double cost = 0;     ///< total objective
    double base_cost = 0;
    double grad_norm = 0;
    double x0_norm = 0;
    double step = 0;     ///< last accepted step length
    Vec x0;
    Vec x1;
};

struct RunReport {
    std::vector<IterateRecord> iterates;
    Vec final_x0;
    Vec final_x1;
    double final_cost = 0;
    double final_base_cost = 0;
    StopReason stop_reason = StopReason::MaxIters;
    int evaluations = 0;
    int updates = 0;
    int fallbacks = 0; ///< steepest-descent rescues after a failed search
    double wall_time_s = 0;

    OptimizerConfig config;
    int n_steps = 0;
    Scheme scheme = Scheme::Midpoint;
    GradientRoute route = GradientRoute::DiscreteAdjoint;
};

/// Standard normal draw, deterministic per seed.
[[nodiscard]] Vec init_noise(int d, std::uint64_t seed);

/// sqrt(alpha) y(0) + sqrt(1 - alpha) z, where y(0) is the backward solve of
/// `y_completed` and z = init_noise(d, seed).
[[nodiscard]] Vec init_blend(const FlowField& field, const Vec& y_completed, double alpha,
                             std::uint64_t seed, int n_steps, Scheme scheme = Scheme::Midpoint);

enum class LiftKind { MeanFill, Denoised };

[[nodiscard]] std::string to_string(LiftKind kind);
[[nodiscard]] LiftKind parse_lift(const std::string& name);

/// Full-dimensional proxy for an observation, used as the backward-solve
/// start of the blend initialization. MeanFill is H^T y with unobserved
/// coordinates set to the mean of the observed ones; Denoised additionally
/// maps that through the posterior mean E[x1 | x] at t_max.
[[nodiscard]] Vec lift_observation(const FlowField& field, const CorruptionOp& op, const Vec& y,
                                   LiftKind kind = LiftKind::MeanFill);

struct ObjectiveEval {
    double value = 0;
    double base_value = 0;
    Vec grad;
    Vec x1;
};

/// Total objective at x0: terminal cost of the forward solve plus every
/// regularizer, with the gradient from the chosen adjoint route.
[[nodiscard]] ObjectiveEval evaluate_objective(const FlowField& field, const CostSpec& spec,
                                               const Vec& x0, int n_steps, Scheme scheme,
                                               GradientRoute route);

/// True when the base cost meets the configured target.
[[nodiscard]] bool target_reached(const CostSpec& spec, const OptimizerConfig& cfg,
                                  double base_value);

/// Source-point optimization: outer iterations of up to
/// `inner_iters_per_step` L-BFGS updates that share curvature history. The
/// history is dropped only after a failed line search, which is retried once
/// as steepest descent with backtracking.
[[nodiscard]] RunReport optimize(const FlowField& field, const CostSpec& spec,
                                 const OptimizerConfig& cfg, const Vec& x0_init, int n_steps,
                                 Scheme scheme = Scheme::Midpoint,
                                 GradientRoute route = GradientRoute::DiscreteAdjoint);

} // namespace dflow

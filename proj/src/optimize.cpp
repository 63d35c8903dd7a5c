#include "dflow/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <cmath>
#include <random>

#include "dflow/errors.hpp"

namespace dflow {

void OptimizerConfig::validate() const
{
    if (max_outer_iters < 0 || inner_iters_per_step < 1) {
        throw InvalidArgument("optimizer iteration counts must be positive");
    }
    if (lbfgs_history < 1) {
        throw InvalidArgument("L-BFGS history must be at least 1");
    }
    if (!(grad_tol >= 0.0)) {
        throw InvalidArgument("grad_tol must be nonnegative");
    }
    line_search.validate();
}

namespace {

/// Whether a search succeeded with a step that actually changes x.
bool moved(const LineSearchResult& ls, const Vec& x)
{
    return ls.ok && (ls.x - x).norm() > stall_tolerance * std::max(1.0, x.norm());
}

} // namespace

std::string to_string(StopReason reason)
{
    switch (reason) {
    case StopReason::TargetReached: return "target_reached";
    case StopReason::GradTol: return "grad_tol";
    case StopReason::MaxIters: return "max_iters";
    case StopReason::LineSearchFailure: return "line_search_failure";
    }
    return "unknown";
}

Vec init_noise(int d, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Vec z(d);
    for (int i = 0; i < d; ++i) {
        z[i] = normal(rng);
    }
    return z;
}

Vec init_blend(const FlowField& field, const Vec& y_completed, double alpha, std::uint64_t seed,
               int n_steps, Scheme scheme)
{
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw InvalidArgument("blend alpha must lie in [0, 1]");
    }
    const Vec z = init_noise(field.dim(), seed);
    if (alpha == 0.0) {
        return z;
    }
    const Vec y0 = solve_backward(field, y_completed, n_steps, scheme).terminal();
    if (alpha == 1.0) {
        return y0;
    }
    return std::sqrt(alpha) * y0 + std::sqrt(1.0 - alpha) * z;
}

std::string to_string(LiftKind kind)
{
    return kind == LiftKind::MeanFill ? "mean_fill" : "denoised";
}

LiftKind parse_lift(const std::string& name)
{
    if (name == "mean_fill") {
        return LiftKind::MeanFill;
    }
    if (name == "denoised") {
        return LiftKind::Denoised;
    }
    throw InvalidArgument("unknown lift '" + name + "'");
}

Vec lift_observation(const FlowField& field, const CorruptionOp& op, const Vec& y, LiftKind kind)
{
    Vec lifted = op.lift(y);
    if (lifted.size() != field.dim()) {
        throw DimensionMismatch("lifted observation has dimension " +
                                std::to_string(lifted.size()));
    }
    if (kind == LiftKind::Denoised) {
        lifted = field.denoiser(field.t_max(), lifted);
    }
    return lifted;
}

ObjectiveEval evaluate_objective(const FlowField& field, const CostSpec& spec, const Vec& x0,
                                 int n_steps, Scheme scheme, GradientRoute route)
{
    const auto traj = solve_forward(field, x0, n_steps, scheme);
    const auto cost = cost_and_grad(spec, traj.terminal(), x0);

    ObjectiveEval out;
    out.value = cost.value;
    out.base_value = cost.base_value;
    out.x1 = traj.terminal();
    switch (route) {
    case GradientRoute::DiscreteAdjoint:
        out.grad = discrete_adjoint(field, traj, cost.grad_x1);
        break;
    case GradientRoute::ContinuousAdjoint:
        out.grad = continuous_adjoint(field, traj, cost.grad_x1);
        break;
    default: throw InvalidArgument("optimizer gradients use the discrete or continuous adjoint");
    }
    out.grad += cost.grad_x0_direct;

    for (const auto& reg : spec.regularizers) {
        if (reg.kind == RegularizerKind::TargetNLL && reg.weight > 0.0) {
            const auto nll = regularizer_target_nll(field, x0, n_steps, scheme);
            out.value += reg.weight * nll.value;
            out.grad += reg.weight * nll.grad;
        }
    }
    return out;
}

bool target_reached(const CostSpec& spec, const OptimizerConfig& cfg, double base_value)
{
    if (!cfg.target_value) {
        return false;
    }
    if (spec.kind == CostKind::NegPSNR) {
        return -base_value >= *cfg.target_value;
    }
    return base_value <= *cfg.target_value;
}

RunReport optimize(const FlowField& field, const CostSpec& spec, const OptimizerConfig& cfg,
                   const Vec& x0_init, int n_steps, Scheme scheme, GradientRoute route)
{
    cfg.validate();
    spec.validate(field.dim());
    if (x0_init.size() != field.dim()) {
        throw DimensionMismatch("initial x0 has dimension " + std::to_string(x0_init.size()));
    }
    if (route != GradientRoute::DiscreteAdjoint && route != GradientRoute::ContinuousAdjoint) {
        throw InvalidArgument("optimizer gradients use the discrete or continuous adjoint");
    }
    const auto started = std::chrono::steady_clock::now();

    RunReport report;
    report.config = cfg;
    report.n_steps = n_steps;
    report.scheme = scheme;
    report.route = route;

    // Terminal states and base costs of recent evaluations, so accepted line
    // search points need no extra solve.
    struct Seen {
        Vec x0;
        Vec x1;
        double base;
    };
    std::deque<Seen> seen;
    Objective objective = [&](const Vec& x0, Vec& grad) {
        auto ev = evaluate_objective(field, spec, x0, n_steps, scheme, route);
        ++report.evaluations;
        grad = std::move(ev.grad);
        if (seen.size() == 64) {
            seen.pop_front();
        }
        seen.push_back({x0, std::move(ev.x1), ev.base_value});
        return ev.value;
    };
    auto lookup = [&](const Vec& x0) -> const Seen& {
        for (auto it = seen.rbegin(); it != seen.rend(); ++it) {
            if (it->x0 == x0) {
                return *it;
            }
        }
        Vec unused;
        (void)objective(x0, unused);
        return seen.back();
    };

    Vec x = x0_init;
    Vec g;
    double f = objective(x, g);
    Vec x1 = seen.back().x1;
    double base = seen.back().base;
    double last_step = 0.0;

    auto record = [&](int outer) {
        report.iterates.push_back(
            {outer, report.updates, f, base, g.norm(), x.norm(), last_step, x, x1});
    };
    record(0);

    LbfgsHistory history(cfg.lbfgs_history);
    std::optional<StopReason> stop;
    auto check_stop = [&]() -> bool {
        if (target_reached(spec, cfg, base)) {
            stop = StopReason::TargetReached;
        } else if (g.norm() < cfg.grad_tol) {
            stop = StopReason::GradTol;
        }
        return stop.has_value();
    };

    for (int outer = 1; outer <= cfg.max_outer_iters && !stop; ++outer) {
        for (int inner = 0; inner < cfg.inner_iters_per_step; ++inner) {
            if (check_stop()) {
                break;
            }
            Vec dir = history.direction(g);
            double step0 = 1.0;
            if (history.empty() || g.dot(dir) >= 0.0) {
                history.clear();
                dir = -g;
                step0 = std::min(1.0, 1.0 / g.norm());
            }
            auto ls = line_search(objective, x, f, g, dir, step0, cfg.line_search);
            if (!moved(ls, x)) {
                history.clear();
                ++report.fallbacks;
                const double gn = g.norm();
                ls = backtracking_search(objective, x, f, g, -g, std::min(1.0, 1.0 / gn),
                                         cfg.line_search.rho, cfg.line_search.c,
                                         cfg.line_search.max_evals);
                if (!moved(ls, x)) {
                    stop = StopReason::LineSearchFailure;
                    break;
                }
            }
            history.push(ls.x - x, ls.grad - g);
            x = std::move(ls.x);
            g = std::move(ls.grad);
            f = ls.value;
            last_step = ls.step;
            ++report.updates;
            const auto& hit = lookup(x);
            x1 = hit.x1;
            base = hit.base;
        }
        record(outer);
    }
    if (!stop && !check_stop()) {
        stop = StopReason::MaxIters;
    }

    report.stop_reason = *stop;
    report.final_x0 = x;
    report.final_x1 = x1;
    report.final_cost = f;
    report.final_base_cost = base;
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

} // namespace dflow

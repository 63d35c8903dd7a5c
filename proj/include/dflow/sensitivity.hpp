#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "dflow/field.hpp"
#include "dflow/solver.hpp"
#include "dflow/types.hpp"

namespace dflow {

enum class GradientRoute { DiscreteAdjoint, ContinuousAdjoint, ClosedForm, FiniteDifference };

[[nodiscard]] std::string to_string(GradientRoute route);
[[nodiscard]] GradientRoute parse_route(std::string_view name);

struct SensitivityResult {
    Vec grad_x0;                 ///< empty for pure Jacobian requests
    std::optional<Mat> jacobian; ///< D_{x0} x(1), ClosedForm / FiniteDifference only
    GradientRoute route = GradientRoute::DiscreteAdjoint;
};

/// Gradient of the terminal cost with respect to x(1).
using TerminalGradient = std::function<Vec(const Vec& x1)>;

/// Reverse accumulation through the stored forward solve. Returns the exact
/// gradient of the discrete map x0 -> x_N contracted with `grad_x1`.
///
/// A nonzero `z_weight` adds z_weight * d z_N / d x0 for the augmented
/// log-density coordinate z' = -div u. The divergence gradient is taken by
/// central differences with step `div_step`.
[[nodiscard]] Vec discrete_adjoint(const FlowField& field, const Trajectory& forward,
                                   const Vec& grad_x1, double z_weight = 0.0,
                                   double div_step = 1e-5);

/// Integrates lambda' = -D_x u_t(x(t))^T lambda from t_max back to 0 with the
/// trajectory's scheme. States between grid points come from cubic Hermite
/// interpolation using the velocity at the nodes. Each grid interval is split
/// into equal substeps so that h * ||D_x u|| <= 0.05 at both of its nodes.
[[nodiscard]] Vec continuous_adjoint(const FlowField& field, const Trajectory& forward,
                                     const Vec& grad_x1);

[[nodiscard]] SensitivityResult grad_discrete(const FlowField& field,
                                              const TerminalGradient& cost_grad, const Vec& x0,
                                              int n_steps, Scheme scheme = Scheme::Midpoint);
[[nodiscard]] SensitivityResult grad_continuous(const FlowField& field,
                                                const TerminalGradient& cost_grad, const Vec& x0,
                                                int n_steps, Scheme scheme = Scheme::Midpoint);

struct ClosedFormOptions {
    double tolerance = 1e-4; ///< max entrywise change of the exponent between doublings
    int max_refinements = 12;
};

struct ClosedFormExponent {
    Mat exponent;      ///< int_0^{t_max} gamma_t Var(x1 | x(t)) dt
    int n_steps = 0;   ///< grid size the value was accepted on
    double change = 0; ///< entrywise change on the last doubling
};

/// Trapezoid quadrature of gamma_t Var(x1|x(t)) on the trajectory grid,
/// re-solving on doubled grids until successive values agree.
/// Throws QuadratureUnresolved when the refinement budget runs out.
[[nodiscard]] ClosedFormExponent closed_form_exponent(const FlowField& field,
                                                      const Trajectory& forward,
                                                      const ClosedFormOptions& opts = {});

/// D_{x0} x(1) = sigma(t_max) exp[int gamma_t Var(x1|x(t)) dt].
[[nodiscard]] SensitivityResult jacobian_closed_form(const FlowField& field,
                                                     const Trajectory& forward,
                                                     const ClosedFormOptions& opts = {});

/// sigma(t_max) times the time-ordered product of per-interval exponentials
/// of the same trapezoid increments, on the trajectory's own grid. Equals the
/// single exponential when the covariances commute.
[[nodiscard]] Mat jacobian_time_ordered(const FlowField& field, const Trajectory& forward);

/// Central differences of the terminal state; column j perturbs x0[j].
[[nodiscard]] SensitivityResult jacobian_finite_difference(const FlowField& field,
                                                           const Vec& x0, int n_steps,
                                                           Scheme scheme, double h = 1e-5);

/// Jacobian of the discrete solve, assembled row by row from discrete adjoints.
[[nodiscard]] Mat jacobian_discrete(const FlowField& field, const Trajectory& forward);

/// delta x(1) = -J^2 grad_L with J from jacobian_closed_form.
[[nodiscard]] Vec variation(const FlowField& field, const Trajectory& forward,
                            const Vec& grad_L, const ClosedFormOptions& opts = {});

/// exp(A) for symmetric A via eigendecomposition.
[[nodiscard]] Mat symmetric_expm(const Mat& a);

} // namespace dflow

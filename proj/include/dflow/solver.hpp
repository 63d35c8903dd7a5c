#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dflow/field.hpp"
#include "dflow/types.hpp"

namespace dflow {

enum class Scheme { Euler, Midpoint, RK4 };
enum class Direction { Forward, Backward };

[[nodiscard]] std::string to_string(Scheme scheme);
[[nodiscard]] Scheme parse_scheme(std::string_view name);

/// Explicit Runge-Kutta coefficients. Row i of `a` holds a_ij for j < i.
struct ButcherTableau {
    std::vector<double> c;
    std::vector<double> b;
    std::vector<std::vector<double>> a;

    [[nodiscard]] int stages() const noexcept { return static_cast<int>(b.size()); }
};

[[nodiscard]] const ButcherTableau& tableau(Scheme scheme);

/// Discretized solution on a uniform grid over [0, t_max].
///
/// `grid` is always ascending and `states[i]` is the state at `grid[i]`,
/// whichever direction the integration ran.
struct Trajectory {
    std::vector<double> grid;
    std::vector<Vec> states;
    std::optional<std::vector<double>> log_density;
    Scheme scheme = Scheme::Midpoint;
    Direction direction = Direction::Forward;

    [[nodiscard]] int n_steps() const noexcept { return static_cast<int>(grid.size()) - 1; }
    /// x(t_max) for forward runs, y(0) for backward runs.
    [[nodiscard]] const Vec& terminal() const;
    [[nodiscard]] const Vec& initial() const;
};

/// Uniform grid t_i = t_max * i / n.
[[nodiscard]] std::vector<double> uniform_grid(double t_max, int n_steps);

/// One explicit RK step of y' = f(t, y). When `stage_points` is non-null it
/// receives the stage arguments Y_i (the points where f was evaluated).
template <class Rhs>
Vec explicit_rk_step(const ButcherTableau& tab, Rhs&& f, double t, double h, const Vec& y,
                     std::vector<Vec>* stage_points = nullptr)
{
    const int s = tab.stages();
    std::vector<Vec> k(static_cast<std::size_t>(s));
    if (stage_points) {
        stage_points->assign(static_cast<std::size_t>(s), Vec{});
    }
    Vec out = y;
    for (int i = 0; i < s; ++i) {
        Vec yi = y;
        for (int j = 0; j < i; ++j) {
            const double aij = tab.a[i][j];
            if (aij != 0.0) {
                yi.noalias() += (h * aij) * k[j];
            }
        }
        k[i] = f(t + tab.c[i] * h, yi);
        if (tab.b[i] != 0.0) {
            out.noalias() += (h * tab.b[i]) * k[i];
        }
        if (stage_points) {
            (*stage_points)[i] = std::move(yi);
        }
    }
    return out;
}

/// Integrates x' = u_t(x) from 0 to t_max, storing every grid state.
[[nodiscard]] Trajectory solve_forward(const FlowField& field, const Vec& x0, int n_steps,
                                       Scheme scheme = Scheme::Midpoint);
/// Same map as solve_forward without storing intermediate states.
[[nodiscard]] Vec solve_forward_terminal(const FlowField& field, const Vec& x0, int n_steps,
                                         Scheme scheme = Scheme::Midpoint);
/// Integrates from t_max down to 0; terminal() is y(0).
[[nodiscard]] Trajectory solve_backward(const FlowField& field, const Vec& x1, int n_steps,
                                        Scheme scheme = Scheme::Midpoint);
/// Forward solve of the augmented system x' = u, z' = -div u with
/// z(0) = log N(x0 | 0, I); log_density()[i] approximates log p_{t_i}(x(t_i)).
[[nodiscard]] Trajectory solve_forward_with_logdensity(const FlowField& field, const Vec& x0,
                                                       int n_steps,
                                                       Scheme scheme = Scheme::Midpoint);

} // namespace dflow

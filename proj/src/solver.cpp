#include "dflow/solver.hpp"

#include <algorithm>
#include <cctype>

#include "dflow/errors.hpp"

namespace dflow {

std::string to_string(Scheme scheme)
{
    switch (scheme) {
    case Scheme::Euler: return "euler";
    case Scheme::Midpoint: return "midpoint";
    case Scheme::RK4: return "rk4";
    }
    return "unknown";
}

Scheme parse_scheme(std::string_view name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "euler") return Scheme::Euler;
    if (lower == "midpoint") return Scheme::Midpoint;
    if (lower == "rk4") return Scheme::RK4;
    throw InvalidArgument("unknown scheme '" + std::string(name) + "' (euler|midpoint|rk4)");
}

const ButcherTableau& tableau(Scheme scheme)
{
    static const ButcherTableau euler{{0.0}, {1.0}, {{}}};
    static const ButcherTableau midpoint{{0.0, 0.5}, {0.0, 1.0}, {{}, {0.5}}};
    static const ButcherTableau rk4{{0.0, 0.5, 0.5, 1.0},
                                    {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0},
                                    {{}, {0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}}};
    switch (scheme) {
    case Scheme::Euler: return euler;
    case Scheme::Midpoint: return midpoint;
    case Scheme::RK4: return rk4;
    }
    return midpoint;
}

const Vec& Trajectory::terminal() const
{
    return direction == Direction::Forward ? states.back() : states.front();
}

const Vec& Trajectory::initial() const
{
    return direction == Direction::Forward ? states.front() : states.back();
}

std::vector<double> uniform_grid(double t_max, int n_steps)
{
    if (n_steps < 1) {
        throw InvalidArgument("n_steps must be at least 1, got " + std::to_string(n_steps));
    }
    std::vector<double> grid(static_cast<std::size_t>(n_steps) + 1);
    for (int i = 0; i <= n_steps; ++i) {
        grid[i] = t_max * static_cast<double>(i) / static_cast<double>(n_steps);
    }
    return grid;
}

namespace {

void check_steps(int n_steps)
{
    if (n_steps < 1) {
        throw InvalidArgument("n_steps must be at least 1, got " + std::to_string(n_steps));
    }
}

void check_finite(const Vec& x, int step, double t)
{
    if (!x.allFinite()) {
        throw NonFiniteState("state became non-finite at step " + std::to_string(step) +
                             " (t = " + std::to_string(t) + ")");
    }
}

auto velocity_rhs(const FlowField& field)
{
    return [&field](double t, const Vec& x) { return field.velocity(t, x); };
}

} // namespace

Trajectory solve_forward(const FlowField& field, const Vec& x0, int n_steps, Scheme scheme)
{
    check_steps(n_steps);
    if (x0.size() != field.dim()) {
        throw DimensionMismatch("x0 has dimension " + std::to_string(x0.size()));
    }
    check_finite(x0, 0, 0.0);
    Trajectory traj;
    traj.grid = uniform_grid(field.t_max(), n_steps);
    traj.scheme = scheme;
    traj.direction = Direction::Forward;
    traj.states.reserve(traj.grid.size());
    traj.states.push_back(x0);
    const auto& tab = tableau(scheme);
    for (int i = 0; i < n_steps; ++i) {
        const double t = traj.grid[i];
        const double h = traj.grid[i + 1] - t;
        traj.states.push_back(explicit_rk_step(tab, velocity_rhs(field), t, h, traj.states.back()));
        check_finite(traj.states.back(), i + 1, traj.grid[i + 1]);
    }
    return traj;
}

Vec solve_forward_terminal(const FlowField& field, const Vec& x0, int n_steps, Scheme scheme)
{
    check_steps(n_steps);
    if (x0.size() != field.dim()) {
        throw DimensionMismatch("x0 has dimension " + std::to_string(x0.size()));
    }
    check_finite(x0, 0, 0.0);
    const auto grid = uniform_grid(field.t_max(), n_steps);
    const auto& tab = tableau(scheme);
    Vec x = x0;
    for (int i = 0; i < n_steps; ++i) {
        x = explicit_rk_step(tab, velocity_rhs(field), grid[i], grid[i + 1] - grid[i], x);
        check_finite(x, i + 1, grid[i + 1]);
    }
    return x;
}

Trajectory solve_backward(const FlowField& field, const Vec& x1, int n_steps, Scheme scheme)
{
    check_steps(n_steps);
    if (x1.size() != field.dim()) {
        throw DimensionMismatch("x1 has dimension " + std::to_string(x1.size()));
    }
    check_finite(x1, 0, field.t_max());
    Trajectory traj;
    traj.grid = uniform_grid(field.t_max(), n_steps);
    traj.scheme = scheme;
    traj.direction = Direction::Backward;
    traj.states.assign(traj.grid.size(), Vec{});
    traj.states[n_steps] = x1;
    const auto& tab = tableau(scheme);
    for (int i = n_steps; i > 0; --i) {
        const double t = traj.grid[i];
        const double h = traj.grid[i - 1] - t;
        traj.states[i - 1] = explicit_rk_step(tab, velocity_rhs(field), t, h, traj.states[i]);
        check_finite(traj.states[i - 1], n_steps - i + 1, traj.grid[i - 1]);
    }
    return traj;
}

Trajectory solve_forward_with_logdensity(const FlowField& field, const Vec& x0, int n_steps,
                                         Scheme scheme)
{
    check_steps(n_steps);
    if (x0.size() != field.dim()) {
        throw DimensionMismatch("x0 has dimension " + std::to_string(x0.size()));
    }
    check_finite(x0, 0, 0.0);
    const int d = field.dim();
    Trajectory traj;
    traj.grid = uniform_grid(field.t_max(), n_steps);
    traj.scheme = scheme;
    traj.direction = Direction::Forward;
    traj.states.reserve(traj.grid.size());
    traj.log_density.emplace();
    traj.log_density->reserve(traj.grid.size());

    // Augmented state (x, z) with z in the last slot.
    Vec aug(d + 1);
    aug.head(d) = x0;
    aug[d] = FlowField::source_log_density(x0);
    traj.states.push_back(x0);
    traj.log_density->push_back(aug[d]);

    auto rhs = [&field, d](double t, const Vec& y) {
        Vec dy(d + 1);
        const Vec x = y.head(d);
        const auto [a, b] = field.scheduler().coeffs(t);
        const double sg = field.scheduler().sigma(t);
        const auto post = field.posterior(t, x, PosteriorDetail::Trace);
        dy.head(d) = a * x + b * post.denoiser;
        dy[d] = -(d * a + b * field.scheduler().alpha(t) / (sg * sg) * post.trace_cov);
        return dy;
    };
    const auto& tab = tableau(scheme);
    for (int i = 0; i < n_steps; ++i) {
        const double t = traj.grid[i];
        aug = explicit_rk_step(tab, rhs, t, traj.grid[i + 1] - t, aug);
        check_finite(aug, i + 1, traj.grid[i + 1]);
        traj.states.push_back(aug.head(d));
        traj.log_density->push_back(aug[d]);
    }
    return traj;
}

} // namespace dflow

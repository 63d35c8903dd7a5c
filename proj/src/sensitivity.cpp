#include "dflow/sensitivity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "dflow/errors.hpp"

namespace dflow {

std::string to_string(GradientRoute route)
{
    switch (route) {
    case GradientRoute::DiscreteAdjoint: return "discrete";
    case GradientRoute::ContinuousAdjoint: return "continuous";
    case GradientRoute::ClosedForm: return "closed_form";
    case GradientRoute::FiniteDifference: return "finite_difference";
    }
    return "unknown";
}

GradientRoute parse_route(std::string_view name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "discrete") return GradientRoute::DiscreteAdjoint;
    if (lower == "continuous") return GradientRoute::ContinuousAdjoint;
    if (lower == "closed_form") return GradientRoute::ClosedForm;
    if (lower == "finite_difference") return GradientRoute::FiniteDifference;
    throw InvalidArgument("unknown gradient route '" + std::string(name) + "'");
}

namespace {

constexpr double adjoint_step_bound = 0.05;

void require_forward(const FlowField& field, const Trajectory& traj)
{
    if (traj.direction != Direction::Forward || traj.states.size() != traj.grid.size() ||
        traj.states.size() < 2) {
        throw InvalidArgument("sensitivity needs a forward trajectory with stored states");
    }
    if (traj.states.front().size() != field.dim()) {
        throw DimensionMismatch("trajectory dimension differs from the field");
    }
}

Mat trapezoid_exponent(const FlowField& field, const Trajectory& traj)
{
    const int d = field.dim();
    const auto& sched = field.scheduler();
    Mat sum = Mat::Zero(d, d);
    Mat prev = Mat::Zero(d, d);
    for (std::size_t i = 0; i < traj.grid.size(); ++i) {
        const double t = traj.grid[i];
        const double g = sched.gamma(t);
        Mat cur = g == 0.0 ? Mat::Zero(d, d)
                           : Mat(g * field.posterior(t, traj.states[i]).covariance);
        if (i > 0) {
            sum += 0.5 * (traj.grid[i] - traj.grid[i - 1]) * (prev + cur);
        }
        prev = std::move(cur);
    }
    return 0.5 * (sum + sum.transpose());
}

} // namespace

Vec discrete_adjoint(const FlowField& field, const Trajectory& forward, const Vec& grad_x1,
                     double z_weight, double div_step)
{
    require_forward(field, forward);
    if (grad_x1.size() != field.dim()) {
        throw DimensionMismatch("terminal gradient has dimension " +
                                std::to_string(grad_x1.size()));
    }
    const auto& tab = tableau(forward.scheme);
    const int s = tab.stages();
    auto rhs = [&field](double t, const Vec& x) { return field.velocity(t, x); };

    Vec lambda = grad_x1;
    std::vector<Vec> stage_points;
    std::vector<Vec> k_bar(static_cast<std::size_t>(s));
    for (int n = forward.n_steps() - 1; n >= 0; --n) {
        const double t = forward.grid[n];
        const double h = forward.grid[n + 1] - t;
        (void)explicit_rk_step(tab, rhs, t, h, forward.states[n], &stage_points);

        for (int i = 0; i < s; ++i) {
            k_bar[i] = (h * tab.b[i]) * lambda;
        }
        Vec result = lambda;
        for (int i = s - 1; i >= 0; --i) {
            const double ti = t + tab.c[i] * h;
            Vec x_bar = field.velocity_jacobian(ti, stage_points[i]).transpose() * k_bar[i];
            if (z_weight != 0.0 && tab.b[i] != 0.0) {
                // z_{n+1} = z_n - h sum_i b_i div u(t_i, X_i)
                x_bar -= (z_weight * h * tab.b[i]) *
                         field.divergence_gradient(ti, stage_points[i], div_step);
            }
            for (int j = 0; j < i; ++j) {
                if (tab.a[i][j] != 0.0) {
                    k_bar[j].noalias() += (h * tab.a[i][j]) * x_bar;
                }
            }
            result += x_bar;
        }
        lambda = std::move(result);
    }
    if (z_weight != 0.0) {
        // z_0 = log N(x0 | 0, I)
        lambda -= z_weight * forward.states.front();
    }
    return lambda;
}

Vec continuous_adjoint(const FlowField& field, const Trajectory& forward, const Vec& grad_x1)
{
    require_forward(field, forward);
    if (grad_x1.size() != field.dim()) {
        throw DimensionMismatch("terminal gradient has dimension " +
                                std::to_string(grad_x1.size()));
    }
    const auto& grid = forward.grid;
    const auto& xs = forward.states;
    std::vector<Vec> us(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        us[i] = field.velocity(grid[i], xs[i]);
    }

    std::vector<double> stiffness(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Eigen::SelfAdjointEigenSolver<Mat> eig(field.velocity_jacobian(grid[i], xs[i]),
                                                     Eigen::EigenvaluesOnly);
        stiffness[i] = eig.eigenvalues().cwiseAbs().maxCoeff();
    }

    const auto& tab = tableau(forward.scheme);
    Vec lambda = grad_x1;
    for (int n = forward.n_steps(); n > 0; --n) {
        const double t0 = grid[n - 1];
        const double t1 = grid[n];
        const double width = t1 - t0;
        // Substeps keep h * ||D_x u|| below adjoint_step_bound near the clamped end.
        const double stiff = std::max(stiffness[n - 1], stiffness[n]);
        const int substeps =
            std::max(1, static_cast<int>(std::ceil(width * stiff / adjoint_step_bound)));
        const double h = width / substeps;
        auto state_at = [&](double t) -> Vec {
            const double s = std::clamp((t - t0) / width, 0.0, 1.0);
            const double s2 = s * s;
            const double s3 = s2 * s;
            return (2 * s3 - 3 * s2 + 1) * xs[n - 1] + (s3 - 2 * s2 + s) * width * us[n - 1] +
                   (-2 * s3 + 3 * s2) * xs[n] + (s3 - s2) * width * us[n];
        };
        auto rhs = [&](double t, const Vec& lam) -> Vec {
            return -(field.velocity_jacobian(t, state_at(t)).transpose() * lam);
        };
        for (int k = 0; k < substeps; ++k) {
            lambda = explicit_rk_step(tab, rhs, t1 - k * h, -h, lambda);
        }
    }
    return lambda;
}

SensitivityResult grad_discrete(const FlowField& field, const TerminalGradient& cost_grad,
                                const Vec& x0, int n_steps, Scheme scheme)
{
    const auto traj = solve_forward(field, x0, n_steps, scheme);
    return {discrete_adjoint(field, traj, cost_grad(traj.terminal())), std::nullopt,
            GradientRoute::DiscreteAdjoint};
}

SensitivityResult grad_continuous(const FlowField& field, const TerminalGradient& cost_grad,
                                  const Vec& x0, int n_steps, Scheme scheme)
{
    const auto traj = solve_forward(field, x0, n_steps, scheme);
    return {continuous_adjoint(field, traj, cost_grad(traj.terminal())), std::nullopt,
            GradientRoute::ContinuousAdjoint};
}

ClosedFormExponent closed_form_exponent(const FlowField& field, const Trajectory& forward,
                                        const ClosedFormOptions& opts)
{
    require_forward(field, forward);
    Mat current = trapezoid_exponent(field, forward);
    int n = forward.n_steps();
    double change = 0.0;
    for (int r = 0; r < opts.max_refinements; ++r) {
        n *= 2;
        const auto finer = solve_forward(field, forward.initial(), n, forward.scheme);
        Mat refined = trapezoid_exponent(field, finer);
        change = (refined - current).cwiseAbs().maxCoeff();
        current = std::move(refined);
        if (change < opts.tolerance) {
            return {std::move(current), n, change};
        }
    }
    throw QuadratureUnresolved("exponent still changed by " + std::to_string(change) +
                               " after " + std::to_string(opts.max_refinements) +
                               " grid doublings (n = " + std::to_string(n) + ")");
}

Mat symmetric_expm(const Mat& a)
{
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (a + a.transpose()));
    const Vec e = eig.eigenvalues().array().exp();
    const Mat& v = eig.eigenvectors();
    Mat out = v * e.asDiagonal() * v.transpose();
    return 0.5 * (out + out.transpose());
}

SensitivityResult jacobian_closed_form(const FlowField& field, const Trajectory& forward,
                                       const ClosedFormOptions& opts)
{
    const auto expo = closed_form_exponent(field, forward, opts);
    const double sigma_end = field.scheduler().sigma(field.t_max());
    return {Vec{}, Mat(sigma_end * symmetric_expm(expo.exponent)), GradientRoute::ClosedForm};
}

Mat jacobian_time_ordered(const FlowField& field, const Trajectory& forward)
{
    require_forward(field, forward);
    const int d = field.dim();
    const auto& sched = field.scheduler();
    Mat prod = Mat::Identity(d, d);
    Mat prev = Mat::Zero(d, d);
    for (std::size_t i = 0; i < forward.grid.size(); ++i) {
        const double t = forward.grid[i];
        const double g = sched.gamma(t);
        Mat cur = g == 0.0 ? Mat::Zero(d, d)
                           : Mat(g * field.posterior(t, forward.states[i]).covariance);
        if (i > 0) {
            const Mat inc = 0.5 * (forward.grid[i] - forward.grid[i - 1]) * (prev + cur);
            prod = symmetric_expm(inc) * prod;
        }
        prev = std::move(cur);
    }
    return sched.sigma(field.t_max()) * prod;
}

SensitivityResult jacobian_finite_difference(const FlowField& field, const Vec& x0,
                                             int n_steps, Scheme scheme, double h)
{
    if (!(h > 0.0)) {
        throw InvalidArgument("finite-difference step must be positive");
    }
    const int d = field.dim();
    Mat jac(d, d);
    Vec probe = x0;
    for (int j = 0; j < d; ++j) {
        probe[j] = x0[j] + h;
        const Vec up = solve_forward_terminal(field, probe, n_steps, scheme);
        probe[j] = x0[j] - h;
        const Vec down = solve_forward_terminal(field, probe, n_steps, scheme);
        probe[j] = x0[j];
        jac.col(j) = (up - down) / (2.0 * h);
    }
    return {Vec{}, std::move(jac), GradientRoute::FiniteDifference};
}

Mat jacobian_discrete(const FlowField& field, const Trajectory& forward)
{
    const int d = field.dim();
    Mat jac(d, d);
    for (int i = 0; i < d; ++i) {
        jac.row(i) = discrete_adjoint(field, forward, Vec::Unit(d, i)).transpose();
    }
    return jac;
}

Vec variation(const FlowField& field, const Trajectory& forward, const Vec& grad_L,
              const ClosedFormOptions& opts)
{
    if (grad_L.size() != field.dim()) {
        throw DimensionMismatch("cost gradient has dimension " + std::to_string(grad_L.size()));
    }
    const Mat jac = *jacobian_closed_form(field, forward, opts).jacobian;
    return -(jac * (jac * grad_L));
}

} // namespace dflow

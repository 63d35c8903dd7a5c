#include <doctest.h>

#include <cmath>
#include <random>

#include "dflow/errors.hpp"
#include "dflow/sensitivity.hpp"
#include "support.hpp"

using namespace dflow;
using namespace testing;

namespace {

Vec fd_terminal_cost_grad(const FlowField& f, const Vec& x0, const Vec& y, int n, Scheme s,
                          double h)
{
    return fd_grad([&](const Vec& x) { return (solve_forward_terminal(f, x, n, s) - y).squaredNorm(); },
                   x0, h);
}

TerminalGradient to_target(const Vec& y)
{
    return [y](const Vec& x1) -> Vec { return 2.0 * (x1 - y); };
}

FlowField anisotropic_field()
{
    return {TargetPrior::diagonal_mixture(Mat::Zero(2, 1), Mat(v2(4.0, 0.01))),
            Scheduler::cond_ot()};
}

} // namespace

TEST_CASE("route names round trip")
{
    for (auto r : {GradientRoute::DiscreteAdjoint, GradientRoute::ContinuousAdjoint,
                   GradientRoute::ClosedForm, GradientRoute::FiniteDifference}) {
        CHECK(parse_route(to_string(r)) == r);
    }
    CHECK_THROWS_AS((void)parse_route("magic"), InvalidArgument);
}

TEST_CASE("discrete adjoint matches finite differences")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    std::mt19937_64 rng(1);
    for (Scheme s : {Scheme::Euler, Scheme::Midpoint, Scheme::RK4}) {
        for (int i = 0; i < 5; ++i) {
            const Vec x0 = randn(2, rng);
            const Vec y = f.prior().sample(rng);
            const auto r = grad_discrete(f, to_target(y), x0, 20, s);
            CHECK(r.route == GradientRoute::DiscreteAdjoint);
            CHECK(!r.jacobian);
            CHECK(rel_err(r.grad_x0, fd_terminal_cost_grad(f, x0, y, 20, s, 1e-6)) <= 1e-6);
        }
    }
}

TEST_CASE("single-point prior gives a vanishing gradient")
{
    const FlowField f(single_point(v2(1, 0)), Scheduler::cond_ot());
    const Vec y = v2(-1, 2);
    const auto r = grad_discrete(f, to_target(y), v2(0.5, 0.5), 100);
    CHECK(r.grad_x0.norm() <= 1e-2);
    const auto c = grad_continuous(f, to_target(y), v2(0.5, 0.5), 100);
    const Vec g1 = 2.0 * (solve_forward_terminal(f, v2(0.5, 0.5), 100) - y);
    CHECK(rel_err(c.grad_x0, (1.0 - f.t_max()) * g1) <= 1e-2);
}

TEST_CASE("linear cost through one Euler step")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    const Vec c = v2(0.7, -1.3);
    const Vec x0 = v2(0.2, 0.9);
    const double h = f.t_max();
    const Mat step = Mat::Identity(2, 2) + h * f.velocity_jacobian(0.0, x0);
    const auto r = grad_discrete(f, [&](const Vec&) { return c; }, x0, 1, Scheme::Euler);
    CHECK(rel_err(r.grad_x0, step.transpose() * c) <= 1e-13);
}

TEST_CASE("continuous adjoint agrees with the discrete adjoint")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    std::mt19937_64 rng(2);
    for (int i = 0; i < 5; ++i) {
        const Vec x0 = randn(2, rng);
        const Vec y = f.prior().sample(rng);
        const auto d = grad_discrete(f, to_target(y), x0, 200);
        const auto c = grad_continuous(f, to_target(y), x0, 200);
        CHECK(c.route == GradientRoute::ContinuousAdjoint);
        CHECK(rel_err(c.grad_x0, d.grad_x0) <= 1e-3);
    }
    const auto z = grad_continuous(f, [](const Vec& x) -> Vec { return Vec::Zero(x.size()); },
                                   v2(0.1, 0.2), 50);
    CHECK(z.grad_x0.norm() == 0.0);
}

TEST_CASE("closed-form Jacobian: single point")
{
    const FlowField f(single_point(v2(1, 0)), Scheduler::cond_ot());
    const auto traj = solve_forward(f, v2(0.3, -0.2), 50);
    const auto r = jacobian_closed_form(f, traj);
    REQUIRE(r.jacobian);
    CHECK(r.route == GradientRoute::ClosedForm);
    CHECK((*r.jacobian - (1.0 - f.t_max()) * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("closed-form Jacobian: standard Gaussian")
{
    std::mt19937_64 rng(3);
    for (int d : {1, 2}) {
        const FlowField f(standard_gaussian(d), Scheduler::cond_ot());
        const double tm = f.t_max();
        const Vec x0 = randn(d, rng);
        const auto traj = solve_forward(f, x0, 200);
        const Mat j = *jacobian_closed_form(f, traj).jacobian;
        const Mat fd = *jacobian_finite_difference(f, x0, 200, Scheme::Midpoint).jacobian;
        CHECK(rel_err(j, fd) <= 1e-2);
        // The flow map of N(0, I) is x0 -> sqrt(t^2 + (1-t)^2) x0.
        const double exact = std::sqrt(tm * tm + (1 - tm) * (1 - tm));
        CHECK(rel_err(j, exact * Mat::Identity(d, d)) <= 1e-3);
        CHECK((j - j.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("closed-form exponent matches an independent quadrature")
{
    const FlowField f(standard_gaussian(1), Scheduler::cond_ot());
    const auto s = f.scheduler();
    const double tm = f.t_max();
    const int n = 400000;
    const double h = tm / n;
    auto integrand = [&](double t) {
        const double q = t * t + (1 - t) * (1 - t);
        return s.gamma(t) * (1 - t) * (1 - t) / q;
    };
    double sum = integrand(0.0) + integrand(tm);
    for (int i = 1; i < n; ++i) {
        sum += (i % 2 == 1 ? 4.0 : 2.0) * integrand(i * h);
    }
    const double a = sum * h / 3.0;
    Vec x0(1);
    x0[0] = 0.8;
    const auto e = closed_form_exponent(f, solve_forward(f, x0, 100));
    CHECK(e.exponent(0, 0) == doctest::Approx(a).epsilon(1e-4));
}

TEST_CASE("closed-form Jacobian is symmetric positive definite")
{
    Mat means(2, 2);
    means << -1.5, 1.5, 0.5, -0.5;
    const auto p = TargetPrior::isotropic_mixture(means, v2(0.09, 0.64));
    const FlowField f(p, Scheduler::cond_ot());
    std::mt19937_64 rng(4);
    for (int i = 0; i < 5; ++i) {
        const auto traj = solve_forward(f, randn(2, rng), 100);
        const Mat j = *jacobian_closed_form(f, traj).jacobian;
        CHECK((j - j.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(Eigen::SelfAdjointEigenSolver<Mat>(j).eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("quadrature budget exhaustion")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    const auto traj = solve_forward(f, v2(0.2, 0.4), 4);
    ClosedFormOptions opts;
    opts.tolerance = 1e-14;
    opts.max_refinements = 1;
    CHECK_THROWS_AS((void)closed_form_exponent(f, traj, opts), QuadratureUnresolved);
}

TEST_CASE("time-ordered product equals the exponential when covariances commute")
{
    const FlowField f(standard_gaussian(2), Scheduler::cond_ot());
    const auto traj = solve_forward(f, v2(0.4, -1.1), 100);
    const auto e = closed_form_exponent(f, traj);
    const auto fine = solve_forward(f, v2(0.4, -1.1), e.n_steps);
    const Mat single = (1.0 - f.t_max()) * symmetric_expm(e.exponent);
    CHECK(rel_err(jacobian_time_ordered(f, fine), single) <= 1e-10);
}

TEST_CASE("finite-difference Jacobian")
{
    const FlowField one(single_point(v2(1, 0)), Scheduler::cond_ot());
    const Mat z = *jacobian_finite_difference(one, v2(0.3, 0.3), 50, Scheme::Midpoint).jacobian;
    CHECK(z.cwiseAbs().maxCoeff() <= 1e-2);

    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    std::mt19937_64 rng(5);
    for (int i = 0; i < 5; ++i) {
        const Vec x0 = randn(2, rng);
        const auto r = jacobian_finite_difference(f, x0, 50, Scheme::Midpoint);
        CHECK(r.route == GradientRoute::FiniteDifference);
        const Mat d = jacobian_discrete(f, solve_forward(f, x0, 50));
        CHECK((*r.jacobian - d).cwiseAbs().maxCoeff() <= 1e-5);
        CHECK((*r.jacobian - r.jacobian->transpose()).cwiseAbs().maxCoeff() <= 1e-4);
    }
    CHECK_THROWS_AS((void)jacobian_finite_difference(f, v2(0, 0), 5, Scheme::Midpoint, 0.0),
                    InvalidArgument);
}

TEST_CASE("variation matches the numerical variation")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    std::mt19937_64 rng(6);
    const int n = 200;
    for (int i = 0; i < 5; ++i) {
        const Vec x0 = randn(2, rng);
        const auto traj = solve_forward(f, x0, n);
        const Vec g = randn(2, rng);
        const Vec gx0 = discrete_adjoint(f, traj, g);
        const double tau = 1e-4;
        const Vec numeric = (solve_forward_terminal(f, x0 - tau * gx0, n) -
                             solve_forward_terminal(f, x0 + tau * gx0, n)) /
                            (2 * tau);
        CHECK(rel_err(variation(f, traj, g), numeric) <= 1e-2);
    }
    const auto traj = solve_forward(f, v2(0.1, 0.1), n);
    CHECK(variation(f, traj, Vec::Zero(2)).norm() == 0.0);

    const FlowField one(single_point(v2(1, 0)), Scheduler::cond_ot());
    const Vec g = v2(3, -4);
    const double s = 1.0 - one.t_max();
    CHECK(variation(one, solve_forward(one, v2(0.2, 0.5), 20), g).norm() <= s * s * g.norm() * (1 + 1e-9));
}

TEST_CASE("three gradient routes agree when posterior covariances commute")
{
    const auto shifted = TargetPrior::isotropic_mixture(Mat(v2(1.0, -0.5)), Vec::Constant(1, 0.3));
    const auto line = two_gaussians(4.0, 0.5, 1);
    for (const auto& prior : {shifted, standard_gaussian(2), line}) {
        const FlowField f(prior, Scheduler::cond_ot());
        const int d = f.dim();
        std::mt19937_64 rng(7);
        for (int i = 0; i < 3; ++i) {
            const Vec x0 = randn(d, rng);
            const Vec y = randn(d, rng);
            const auto traj = solve_forward(f, x0, 200);
            const Vec g1 = 2.0 * (traj.terminal() - y);
            const Vec d = discrete_adjoint(f, traj, g1);
            const Vec c = continuous_adjoint(f, traj, g1);
            const Vec j = jacobian_closed_form(f, traj).jacobian->transpose() * g1;
            CHECK(rel_err(c, d) <= 1e-2);
            CHECK(rel_err(j, d) <= 1e-2);
            CHECK(rel_err(j, c) <= 1e-2);
        }
    }
}

TEST_CASE("variation leans towards the dominant data axis")
{
    const FlowField f = anisotropic_field();
    std::mt19937_64 rng(8);
    for (int i = 0; i < 20; ++i) {
        const auto traj = solve_forward(f, randn(2, rng), 100);
        const Vec g = randn(2, rng);
        const Vec dx = variation(f, traj, g);
        const double cos_dx = std::abs(dx[0]) / dx.norm();
        const double cos_g = std::abs(g[0]) / g.norm();
        CHECK(cos_dx > cos_g);
    }
}

TEST_CASE("augmented adjoint matches finite differences of z")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    const Vec x0 = v2(0.3, -0.6);
    const int n = 30;
    const auto traj = solve_forward_with_logdensity(f, x0, n);
    const Vec g = discrete_adjoint(f, traj, Vec::Zero(2), 1.0);
    const Vec fd = fd_grad(
        [&](const Vec& x) { return solve_forward_with_logdensity(f, x, n).log_density->back(); }, x0,
        1e-5);
    CHECK(rel_err(g, fd) <= 1e-5);
}

TEST_CASE("symmetric matrix exponential")
{
    Mat a(3, 3);
    a << 0.5, 0.2, -0.1, 0.2, -0.3, 0.4, -0.1, 0.4, 0.1;
    Mat series = Mat::Identity(3, 3);
    Mat term = Mat::Identity(3, 3);
    for (int k = 1; k < 30; ++k) {
        term = term * a / k;
        series += term;
    }
    CHECK(rel_err(symmetric_expm(a), series) <= 1e-13);
}

TEST_CASE("sensitivity input checks")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    const auto traj = solve_forward(f, v2(0, 1), 5);
    CHECK_THROWS_AS((void)discrete_adjoint(f, traj, Vec::Zero(3)), DimensionMismatch);
    CHECK_THROWS_AS((void)continuous_adjoint(f, traj, Vec::Zero(1)), DimensionMismatch);
    CHECK_THROWS_AS((void)variation(f, traj, Vec::Zero(4)), DimensionMismatch);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "dflow/errors.hpp"
#include "dflow/lbfgs.hpp"
#include "support.hpp"

using namespace dflow;
using namespace testing;

namespace {

Objective quadratic(const Vec& diag)
{
    return [diag](const Vec& x, Vec& g) {
        g = diag.cwiseProduct(x);
        return 0.5 * x.dot(g);
    };
}

double rosenbrock(const Vec& x, Vec& g)
{
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g = v2(-2.0 * a - 400.0 * x[0] * b, 200.0 * b);
    return a * a + 100.0 * b * b;
}

/// Dense BFGS inverse update from H0 = gamma I.
Mat dense_inverse(const std::vector<std::pair<Vec, Vec>>& pairs, int d)
{
    const auto& last = pairs.back();
    Mat h = Mat::Identity(d, d) * last.first.dot(last.second) / last.second.squaredNorm();
    for (const auto& [s, y] : pairs) {
        const double rho = 1.0 / s.dot(y);
        const Mat v = Mat::Identity(d, d) - rho * y * s.transpose();
        h = v.transpose() * h * v + rho * s * s.transpose();
    }
    return h;
}

} // namespace

TEST_CASE("ill-conditioned quadratic")
{
    const auto f = quadratic(v2(1, 10));
    LbfgsOptions opts;
    opts.grad_tol = 1e-12;
    const auto r = minimize_lbfgs(f, v2(1, 1), opts);
    CHECK(r.x.norm() <= 1e-10);
    CHECK(r.iterations <= 10);
    CHECK(r.converged);
}

TEST_CASE("Rosenbrock")
{
    LbfgsOptions opts;
    opts.max_iters = 200;
    const auto r = minimize_lbfgs(rosenbrock, v2(-1.2, 1.0), opts);
    CHECK(r.converged);
    CHECK((r.x - v2(1, 1)).norm() <= 1e-6);
}

TEST_CASE("strong Wolfe step satisfies both conditions")
{
    LineSearchParams p;
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        Vec x = 2.0 * randn(2, rng);
        Vec g0;
        const double f0 = rosenbrock(x, g0);
        const Vec dir = -g0;
        const auto r = strong_wolfe_search(rosenbrock, x, f0, g0, dir, 1.0 / g0.norm(), p);
        REQUIRE(r.ok);
        CHECK(r.value <= f0 + p.c1 * r.step * g0.dot(dir));
        CHECK(std::abs(r.grad.dot(dir)) <= p.c2 * std::abs(g0.dot(dir)));
        CHECK(rel_err(r.x, x + r.step * dir) <= 1e-15);
    }
}

TEST_CASE("backtracking step satisfies sufficient decrease")
{
    std::mt19937_64 rng(2);
    for (int i = 0; i < 20; ++i) {
        Vec x = 2.0 * randn(2, rng);
        Vec g0;
        const double f0 = rosenbrock(x, g0);
        const Vec dir = -g0;
        const auto r = backtracking_search(rosenbrock, x, f0, g0, dir, 1.0, 0.5, 1e-4, 60);
        REQUIRE(r.ok);
        CHECK(r.value <= f0 + 1e-4 * r.step * g0.dot(dir));
        const double k = std::log(r.step) / std::log(0.5);
        CHECK(k == doctest::Approx(std::round(k)));
    }
}

TEST_CASE("line search reports failure on an ascent direction")
{
    const auto f = quadratic(v2(1, 1));
    Vec g0;
    const Vec x = v2(1, 0);
    const double f0 = f(x, g0);
    const auto r = backtracking_search(f, x, f0, g0, g0, 1.0, 0.5, 1e-4, 10);
    CHECK_FALSE(r.ok);
    CHECK(r.evals == 0);

    Vec gr;
    const Vec xr = v2(-1.2, 1.0);
    const double fr = rosenbrock(xr, gr);
    const auto big = backtracking_search(rosenbrock, xr, fr, gr, -gr, 1e3, 0.5, 1e-4, 3);
    CHECK_FALSE(big.ok);
    CHECK(big.evals == 3);
}

TEST_CASE("history skips pairs without positive curvature")
{
    LbfgsHistory h(3);
    CHECK_FALSE(h.push(v2(1, 0), v2(-1, 0)));
    CHECK_FALSE(h.push(v2(1, 0), v2(1e-11, 0)));
    CHECK(h.empty());
    CHECK(h.push(v2(1, 0), v2(2, 0)));
    for (int i = 0; i < 5; ++i) {
        h.push(v2(1, i), v2(1, i));
    }
    CHECK(h.size() == 3);
    CHECK_THROWS_AS(LbfgsHistory(0), InvalidArgument);
}

TEST_CASE("empty history gives steepest descent")
{
    const LbfgsHistory h(4);
    CHECK(h.direction(v2(3, -1)) == v2(-3, 1));
}

TEST_CASE("two-loop recursion matches the dense BFGS inverse")
{
    const int d = 5;
    std::mt19937_64 rng(3);
    Mat a = Mat::Random(d, d);
    const Mat spd = a * a.transpose() + Mat::Identity(d, d);
    LbfgsHistory h(10);
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int i = 0; i < 4; ++i) {
        const Vec s = randn(d, rng);
        const Vec y = spd * s;
        REQUIRE(h.push(s, y));
        pairs.emplace_back(s, y);
    }
    const Vec g = randn(d, rng);
    CHECK(rel_err(h.direction(g), Vec(-dense_inverse(pairs, d) * g)) <= 1e-12);
}

TEST_CASE("line search parameters are validated")
{
    LineSearchParams p;
    CHECK_NOTHROW(p.validate());
    p.c1 = 0.95;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = {};
    p.rho = 1.0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = {};
    p.max_evals = 0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("max iterations stops the run")
{
    LbfgsOptions opts;
    opts.max_iters = 3;
    const auto r = minimize_lbfgs(rosenbrock, v2(-1.2, 1.0), opts);
    CHECK(r.iterations == 3);
    CHECK_FALSE(r.converged);
}

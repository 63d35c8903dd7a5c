#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dflow/errors.hpp"
#include "dflow/field.hpp"
#include "support.hpp"

using namespace dflow;
using namespace testing;

namespace {

// Joint-Gaussian conditioning of x1 ~ N(m, S) on x = alpha x1 + sigma z,
// done with dense matrices.
struct GaussianOracle {
    Vec mean;
    Mat cov;
    double log_density;
};

GaussianOracle condition(const Vec& m, const Mat& S, double alpha, double sigma, const Vec& x)
{
    const int d = static_cast<int>(m.size());
    const Mat cxx = alpha * alpha * S + sigma * sigma * Mat::Identity(d, d);
    const Eigen::LDLT<Mat> ldlt(cxx);
    const Vec r = x - alpha * m;
    GaussianOracle out;
    out.mean = m + alpha * S * ldlt.solve(r);
    out.cov = S - alpha * alpha * S * ldlt.solve(S);
    const double logdet = ldlt.vectorD().array().log().sum();
    out.log_density =
        -0.5 * (d * std::log(2 * std::numbers::pi) + logdet + r.dot(ldlt.solve(r)));
    return out;
}

// Mixture posterior by direct density evaluation and the law of total variance.
GaussianOracle mixture_oracle(const TargetPrior& p, double alpha, double sigma, const Vec& x)
{
    const int d = p.dim();
    std::vector<GaussianOracle> parts;
    Vec w(p.size());
    for (int k = 0; k < p.size(); ++k) {
        const Mat S = p.variances().col(k).asDiagonal();
        parts.push_back(condition(p.atoms().col(k), S, alpha, sigma, x));
        w[k] = p.weights()[k] * std::exp(parts.back().log_density);
    }
    const double z = w.sum();
    w /= z;
    GaussianOracle out;
    out.mean = Vec::Zero(d);
    for (int k = 0; k < p.size(); ++k) {
        out.mean += w[k] * parts[k].mean;
    }
    out.cov = Mat::Zero(d, d);
    for (int k = 0; k < p.size(); ++k) {
        const Vec dm = parts[k].mean - out.mean;
        out.cov += w[k] * (parts[k].cov + dm * dm.transpose());
    }
    out.log_density = std::log(z);
    return out;
}

double empirical_log_marginal(const Mat& pts, double alpha, double sigma, const Vec& x)
{
    const int d = static_cast<int>(pts.rows());
    double sum = 0.0;
    for (int j = 0; j < pts.cols(); ++j) {
        const double r2 = (x - alpha * pts.col(j)).squaredNorm();
        sum += std::exp(-0.5 * r2 / (sigma * sigma)) /
               std::pow(2 * std::numbers::pi * sigma * sigma, 0.5 * d);
    }
    return std::log(sum / static_cast<double>(pts.cols()));
}

Mat random_points(int d, int m, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Mat pts(d, m);
    for (int j = 0; j < m; ++j) {
        pts.col(j) = randn(d, rng);
    }
    return pts;
}

} // namespace

TEST_CASE("construction validates inputs")
{
    const Mat pts = random_points(2, 3, 1);
    CHECK_THROWS_AS((void)TargetPrior::empirical(pts, v2(0.5, 0.5)), DimensionMismatch);
    Vec neg(3);
    neg << 0.5, 0.7, -0.2;
    CHECK_THROWS_AS((void)TargetPrior::empirical(pts, neg), InvalidArgument);
    CHECK_THROWS_AS((void)TargetPrior::isotropic_mixture(pts, Vec::Zero(3)), InvalidArgument);
    CHECK_THROWS((void)TargetPrior::empirical(Mat(2, 0)));
}

TEST_CASE("weights are normalized")
{
    Vec w(3);
    w << 1.0, 2.0, 5.0;
    const auto p = TargetPrior::empirical(random_points(2, 3, 2), w);
    CHECK(std::abs(p.weights().sum() - 1.0) <= 1e-12);
    CHECK(p.weights()[2] == doctest::Approx(5.0 / 8.0));
}

TEST_CASE("single-point prior posterior is a point mass")
{
    const FlowField f(single_point(v2(1, 0)), Scheduler::cond_ot());
    std::mt19937_64 rng(3);
    for (double t : {0.0, 0.3, 0.9, 0.999}) {
        const auto st = f.posterior(t, randn(2, rng));
        CHECK(rel_err(st.denoiser, v2(1, 0)) == 0.0);
        CHECK(st.covariance.norm() == 0.0);
    }
}

TEST_CASE("standard Gaussian posterior example")
{
    const FlowField f(standard_gaussian(2), Scheduler::cond_ot());
    const auto st = f.posterior(0.5, v2(1, 0));
    CHECK(rel_err(st.denoiser, v2(1, 0)) <= 1e-14);
    CHECK(rel_err(st.covariance, 0.5 * Mat::Identity(2, 2)) <= 1e-14);
}

TEST_CASE("Gaussian posterior matches dense conditioning")
{
    Vec m(3);
    m << 0.5, -1.0, 2.0;
    Vec var(3);
    var << 0.3, 1.7, 4.0;
    const auto p = TargetPrior::diagonal_mixture(Mat(m), Mat(var));
    std::mt19937_64 rng(4);
    for (const auto& s : {Scheduler::cond_ot(), Scheduler::variance_preserving()}) {
        const FlowField f(p, s);
        for (double t : {0.1, 0.5, 0.9, 0.99}) {
            const Vec x = randn(3, rng);
            const auto st = f.posterior(t, x);
            const auto o = condition(m, var.asDiagonal(), s.alpha(t), s.sigma(t), x);
            CHECK(rel_err(st.denoiser, o.mean) <= 1e-12);
            CHECK(rel_err(st.covariance, o.cov) <= 1e-10);
            CHECK(st.log_marginal == doctest::Approx(o.log_density).epsilon(1e-12));
        }
    }
}

TEST_CASE("mixture posterior matches direct evaluation")
{
    Mat means(2, 3);
    means << -2, 1, 0.5, 0, 1.5, -1;
    Mat var(2, 3);
    var << 0.2, 0.5, 1.0, 0.2, 0.5, 0.1;
    Vec w(3);
    w << 0.2, 0.5, 0.3;
    const auto p = TargetPrior::diagonal_mixture(means, var, w);
    const FlowField f(p, Scheduler::cond_ot());
    std::mt19937_64 rng(5);
    for (double t : {0.2, 0.5, 0.8}) {
        const Vec x = randn(2, rng);
        const auto st = f.posterior(t, x);
        const auto o = mixture_oracle(p, t, 1 - t, x);
        CHECK(rel_err(st.denoiser, o.mean) <= 1e-10);
        CHECK(rel_err(st.covariance, o.cov) <= 1e-10);
        CHECK(st.log_marginal == doctest::Approx(o.log_density).epsilon(1e-10));
    }
}

TEST_CASE("empirical log marginal matches direct sum")
{
    const Mat pts = random_points(3, 20, 6);
    const FlowField f(TargetPrior::empirical(pts), Scheduler::cond_ot());
    std::mt19937_64 rng(7);
    for (double t : {0.1, 0.5, 0.8}) {
        const Vec x = randn(3, rng);
        CHECK(f.log_marginal(t, x) ==
              doctest::Approx(empirical_log_marginal(pts, t, 1 - t, x)).epsilon(1e-10));
    }
}

TEST_CASE("two-point symmetry")
{
    Mat pts(2, 2);
    pts << -1, 1, 0, 0;
    const FlowField f(TargetPrior::empirical(pts), Scheduler::cond_ot());
    const auto st = f.posterior(0.5, v2(0, 0));
    CHECK(st.posterior_weights[0] == doctest::Approx(0.5));
    CHECK(st.posterior_weights[1] == doctest::Approx(0.5));
    CHECK(st.denoiser.norm() <= 1e-15);
}

TEST_CASE("posterior statistics invariants")
{
    const Mat pts = random_points(4, 30, 8);
    const auto emp = TargetPrior::empirical(pts);
    std::mt19937_64 rng(9);
    const FlowField f(emp, Scheduler::cond_ot());
    for (int i = 0; i < 20; ++i) {
        const double t = 0.05 + 0.9 * (i / 20.0);
        const Vec x = randn(4, rng);
        const auto st = f.posterior(t, x);
        CHECK(std::abs(st.posterior_weights.sum() - 1.0) <= 1e-12);
        CHECK(st.posterior_weights.minCoeff() >= 0.0);
        CHECK(rel_err(st.denoiser, pts * st.posterior_weights) <= 1e-10);
        CHECK((st.covariance - st.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        const double lo = Eigen::SelfAdjointEigenSolver<Mat>(st.covariance).eigenvalues().minCoeff();
        CHECK(lo >= -1e-10);
        CHECK(st.trace_cov == doctest::Approx(st.covariance.trace()).epsilon(1e-12));
    }
}

TEST_CASE("far points near t_max stay finite")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    const Vec x = v2(40.0, -25.0);
    const auto st = f.posterior(f.t_max(), x);
    CHECK(st.denoiser.allFinite());
    CHECK(std::isfinite(st.log_marginal));
    const FlowField g(TargetPrior::empirical(random_points(2, 5, 10)), Scheduler::cond_ot());
    CHECK(g.denoiser(g.t_max(), x).allFinite());
}

TEST_CASE("log marginal integrates to one")
{
    Mat means(1, 2);
    means << -2, 2;
    const auto p = TargetPrior::isotropic_mixture(means, Vec::Constant(2, 0.25));
    const FlowField f(p, Scheduler::cond_ot());
    for (double t : {0.1, 0.5, 0.9}) {
        const int n = 20000;
        const double lo = -15.0;
        const double h = 30.0 / n;
        double sum = 0.0;
        for (int i = 0; i <= n; ++i) {
            Vec x(1);
            x[0] = lo + i * h;
            sum += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(f.log_marginal(t, x));
        }
        CHECK(std::abs(sum * h - 1.0) <= 1e-4);
    }
}

TEST_CASE("score matches gradient of log marginal")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ut(0.05, 0.95);
    for (int i = 0; i < 20; ++i) {
        const double t = ut(rng);
        const Vec x = 1.5 * randn(2, rng);
        const Vec fd = fd_grad([&](const Vec& z) { return f.log_marginal(t, z); }, x, 1e-5);
        CHECK((f.score(t, x) - fd).cwiseAbs().maxCoeff() <= 1e-4);
    }
}

TEST_CASE("denoiser asymptotics stay bounded")
{
    const FlowField f(two_gaussians(), Scheduler::variance_preserving(1.0 - 1e-3));
    const FlowField g(two_gaussians(), Scheduler::cond_ot());
    for (const FlowField* field : {&f, &g}) {
        for (const Vec& x : {v2(2.0, 0.3), v2(-1.7, -0.4), v2(2.5, 0.0)}) {
            auto ratio = [&](double t) {
                const double al = field->scheduler().alpha(t);
                return (field->denoiser(t, x) - x / al).norm() / field->scheduler().sigma(t);
            };
            const double base = ratio(0.9);
            CHECK(ratio(0.99) <= 10 * base);
            CHECK(ratio(0.999) <= 10 * base);
        }
    }
}

TEST_CASE("velocity examples")
{
    const FlowField one(single_point(v2(1, 0)), Scheduler::cond_ot());
    CHECK(rel_err(one.velocity(0.5, v2(0, 0)), v2(2, 0)) <= 1e-14);
    const FlowField g(standard_gaussian(2), Scheduler::cond_ot());
    for (double t : {0.0, 0.4, 0.9, 0.999}) {
        CHECK(g.velocity(t, v2(0, 0)).norm() == 0.0);
    }
}

TEST_CASE("velocity Jacobian")
{
    const FlowField one(single_point(v2(1, 0)), Scheduler::cond_ot());
    CHECK(rel_err(one.velocity_jacobian(0.5, v2(0.3, 0.7)), -2.0 * Mat::Identity(2, 2)) <= 1e-14);

    const Mat pts = random_points(3, 12, 12);
    const auto emp = TargetPrior::empirical(pts);
    std::mt19937_64 rng(13);
    for (const auto& prior : {emp, two_gaussians(4.0, 0.5, 3)}) {
        const FlowField f(prior, Scheduler::cond_ot());
        for (double t : {0.2, 0.5, 0.8}) {
            const Vec x = randn(3, rng);
            const Mat j = f.velocity_jacobian(t, x);
            Mat fd(3, 3);
            const double h = 1e-5;
            for (int c = 0; c < 3; ++c) {
                Vec xp = x;
                Vec xm = x;
                xp[c] += h;
                xm[c] -= h;
                fd.col(c) = (f.velocity(t, xp) - f.velocity(t, xm)) / (2 * h);
            }
            CHECK((j - fd).cwiseAbs().maxCoeff() <= 1e-5);
            CHECK((j - j.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
            CHECK(f.divergence(t, x) == doctest::Approx(j.trace()).epsilon(1e-12));
        }
    }
}

TEST_CASE("divergence examples")
{
    const FlowField one(single_point(v2(1, 0)), Scheduler::cond_ot());
    CHECK(one.divergence(0.5, v2(0.2, 0.1)) == doctest::Approx(-4.0));
    const FlowField g(standard_gaussian(1), Scheduler::cond_ot());
    Vec x(1);
    x[0] = 0.7;
    CHECK(std::abs(g.divergence(0.5, x)) <= 1e-14);
}

TEST_CASE("epsilon conversions")
{
    const auto s = Scheduler::cond_ot();
    const Vec eps = epsilon_from_velocity(s, 0.5, v2(1, 0), v2(2, 0));
    CHECK(eps.norm() <= 1e-15);

    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> ut(1e-3, 1 - 1e-3);
    for (const auto& sched : {Scheduler::cond_ot(), Scheduler::variance_preserving()}) {
        for (int i = 0; i < 100; ++i) {
            const double t = ut(rng);
            const Vec x = randn(3, rng);
            const Vec u = randn(3, rng);
            const Vec back = velocity_from_epsilon(sched, t, x, epsilon_from_velocity(sched, t, x, u));
            CHECK(rel_err(back, u) <= 1e-12);
        }
    }

    const Vec xs = v2(1, -0.5);
    const FlowField one(single_point(xs), s);
    for (double t : {0.1, 0.5, 0.9}) {
        const Vec x0 = randn(2, rng);
        const Vec xt = s.sigma(t) * x0 + s.alpha(t) * xs;
        const Vec e = epsilon_from_velocity(s, t, xt, one.velocity(t, xt));
        CHECK(rel_err(e, (xt - s.alpha(t) * xs) / s.sigma(t)) <= 1e-12);
        CHECK(rel_err(e, x0) <= 1e-12);
    }
}

TEST_CASE("mean, covariance and sampling")
{
    Mat means(2, 2);
    means << -2, 2, 1, 0;
    const auto p = TargetPrior::isotropic_mixture(means, Vec::Constant(2, 0.25), v2(0.25, 0.75));
    Vec expect_mean = v2(1.0, 0.25);
    CHECK(rel_err(p.mean(), expect_mean) <= 1e-14);
    std::mt19937_64 rng(15);
    const int n = 200000;
    Vec acc = Vec::Zero(2);
    Mat sq = Mat::Zero(2, 2);
    for (int i = 0; i < n; ++i) {
        const Vec x = p.sample(rng);
        acc += x;
        sq += x * x.transpose();
    }
    acc /= n;
    const Mat cov = sq / n - acc * acc.transpose();
    CHECK((acc - p.mean()).norm() <= 2e-2);
    CHECK((cov - p.covariance()).norm() <= 5e-2);

    const Mat pts = random_points(2, 4, 16);
    const auto emp = TargetPrior::empirical(pts);
    for (int i = 0; i < 50; ++i) {
        const Vec x = emp.sample(rng);
        bool found = false;
        for (int j = 0; j < 4; ++j) {
            found = found || (x - pts.col(j)).norm() == 0.0;
        }
        CHECK(found);
    }
}

TEST_CASE("dimension mismatch")
{
    const FlowField f(two_gaussians(), Scheduler::cond_ot());
    CHECK_THROWS_AS((void)f.velocity(0.5, Vec::Zero(3)), DimensionMismatch);
}

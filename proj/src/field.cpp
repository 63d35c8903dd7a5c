#include "dflow/field.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "dflow/errors.hpp"

namespace dflow {

FlowField::FlowField(std::shared_ptr<const TargetPrior> prior, Scheduler sched)
    : prior_(std::move(prior)), sched_(std::move(sched))
{
    if (!prior_) {
        throw InvalidArgument("flow field needs a prior");
    }
}

FlowField::FlowField(TargetPrior prior, Scheduler sched)
    : FlowField(std::make_shared<const TargetPrior>(std::move(prior)), std::move(sched))
{
}

PosteriorStats FlowField::posterior(double t, const Vec& x, PosteriorDetail detail) const
{
    return dflow::posterior(*prior_, sched_, t, x, detail);
}

Vec FlowField::denoiser(double t, const Vec& x) const
{
    return posterior(t, x, PosteriorDetail::Mean).denoiser;
}

Vec FlowField::velocity(double t, const Vec& x) const
{
    const auto [a, b] = sched_.coeffs(t);
    return a * x + b * denoiser(t, x);
}

Mat FlowField::velocity_jacobian(double t, const Vec& x) const
{
    const auto [a, b] = sched_.coeffs(t);
    const double sg = sched_.sigma(t);
    const double scale = b * sched_.alpha(t) / (sg * sg);
    Mat jac = scale * posterior(t, x, PosteriorDetail::Full).covariance;
    jac.diagonal().array() += a;
    return jac;
}

double FlowField::divergence(double t, const Vec& x) const
{
    const auto [a, b] = sched_.coeffs(t);
    const double sg = sched_.sigma(t);
    const double tr = posterior(t, x, PosteriorDetail::Trace).trace_cov;
    return dim() * a + b * sched_.alpha(t) / (sg * sg) * tr;
}

Vec FlowField::divergence_gradient(double t, const Vec& x, double h) const
{
    Vec grad(dim());
    Vec probe = x;
    for (int i = 0; i < dim(); ++i) {
        probe[i] = x[i] + h;
        const double up = divergence(t, probe);
        probe[i] = x[i] - h;
        const double down = divergence(t, probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double FlowField::log_marginal(double t, const Vec& x) const
{
    return posterior(t, x, PosteriorDetail::Mean).log_marginal;
}

Vec FlowField::score(double t, const Vec& x) const
{
    const double sg = sched_.sigma(t);
    return (sched_.alpha(t) * denoiser(t, x) - x) / (sg * sg);
}

double FlowField::source_log_density(const Vec& x)
{
    constexpr double log_two_pi = 1.8378770664093454836;
    return -0.5 * static_cast<double>(x.size()) * log_two_pi - 0.5 * x.squaredNorm();
}

namespace {

struct EpsilonCoeffs {
    double x_rate;   // alpha' / alpha
    double eps_rate; // alpha' sigma / alpha - sigma'
};

EpsilonCoeffs epsilon_coeffs(const Scheduler& sched, double t, double t_min)
{
    const double tc = std::clamp(t, std::min(t_min, sched.t_max()), sched.t_max());
    const double al = sched.alpha(tc);
    if (!(al > 0.0)) {
        throw DegenerateScheduler("alpha(" + std::to_string(tc) + ") = 0 in noise parameterization");
    }
    const double ad = sched.alpha_dot(tc);
    const EpsilonCoeffs c{ad / al, ad * sched.sigma(tc) / al - sched.sigma_dot(tc)};
    if (c.eps_rate == 0.0 || !std::isfinite(c.eps_rate)) {
        throw DegenerateScheduler("noise coefficient vanishes at t = " + std::to_string(tc));
    }
    return c;
}

} // namespace

Vec epsilon_from_velocity(const Scheduler& sched, double t, const Vec& x, const Vec& u,
                          double t_min)
{
    if (x.size() != u.size()) {
        throw DimensionMismatch("x and u differ in dimension");
    }
    const auto c = epsilon_coeffs(sched, t, t_min);
    return (c.x_rate * x - u) / c.eps_rate;
}

Vec velocity_from_epsilon(const Scheduler& sched, double t, const Vec& x, const Vec& eps,
                          double t_min)
{
    if (x.size() != eps.size()) {
        throw DimensionMismatch("x and eps differ in dimension");
    }
    const auto c = epsilon_coeffs(sched, t, t_min);
    return c.x_rate * x - c.eps_rate * eps;
}

} // namespace dflow

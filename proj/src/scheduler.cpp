#include "dflow/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "dflow/errors.hpp"

namespace dflow {

namespace {
constexpr double half_pi = std::numbers::pi / 2.0;
constexpr double custom_gamma_step = 1e-6;
} // namespace

Scheduler::Scheduler(SchedulerKind kind, double t_max) : kind_(kind), t_max_(t_max)
{
    if (!(t_max > 0.0 && t_max <= 1.0)) {
        throw InvalidArgument("t_max must lie in (0, 1], got " + std::to_string(t_max));
    }
}

Scheduler Scheduler::cond_ot(double t_max) { return {SchedulerKind::CondOT, t_max}; }

Scheduler Scheduler::variance_preserving(double t_max)
{
    return {SchedulerKind::VariancePreserving, t_max};
}

Scheduler Scheduler::custom(ScalarFn alpha, ScalarFn sigma, ScalarFn alpha_dot,
                            ScalarFn sigma_dot, double t_max)
{
    if (!alpha || !sigma || !alpha_dot || !sigma_dot) {
        throw InvalidArgument("custom scheduler requires alpha, sigma and both derivatives");
    }
    Scheduler s{SchedulerKind::Custom, t_max};
    s.alpha_fn_ = std::move(alpha);
    s.sigma_fn_ = std::move(sigma);
    s.alpha_dot_fn_ = std::move(alpha_dot);
    s.sigma_dot_fn_ = std::move(sigma_dot);
    return s;
}

std::string Scheduler::name() const
{
    switch (kind_) {
    case SchedulerKind::CondOT: return "cond_ot";
    case SchedulerKind::VariancePreserving: return "vp";
    case SchedulerKind::Custom: return "custom";
    }
    return "unknown";
}

double Scheduler::clamp(double t) const noexcept { return std::clamp(t, 0.0, t_max_); }

double Scheduler::alpha(double t) const
{
    const double tc = clamp(t);
    switch (kind_) {
    case SchedulerKind::CondOT: return tc;
    case SchedulerKind::VariancePreserving: return std::sin(half_pi * tc);
    case SchedulerKind::Custom: return alpha_fn_(tc);
    }
    return 0.0;
}

double Scheduler::sigma(double t) const
{
    const double tc = clamp(t);
    switch (kind_) {
    case SchedulerKind::CondOT: return 1.0 - tc;
    case SchedulerKind::VariancePreserving: return std::cos(half_pi * tc);
    case SchedulerKind::Custom: return sigma_fn_(tc);
    }
    return 1.0;
}

double Scheduler::alpha_dot(double t) const
{
    const double tc = clamp(t);
    switch (kind_) {
    case SchedulerKind::CondOT: return 1.0;
    case SchedulerKind::VariancePreserving: return half_pi * std::cos(half_pi * tc);
    case SchedulerKind::Custom: return alpha_dot_fn_(tc);
    }
    return 0.0;
}

double Scheduler::sigma_dot(double t) const
{
    const double tc = clamp(t);
    switch (kind_) {
    case SchedulerKind::CondOT: return -1.0;
    case SchedulerKind::VariancePreserving: return -half_pi * std::sin(half_pi * tc);
    case SchedulerKind::Custom: return sigma_dot_fn_(tc);
    }
    return 0.0;
}

double Scheduler::checked_sigma(double tc) const
{
    const double s = sigma(tc);
    if (!(s > 0.0)) {
        throw DegenerateScheduler("sigma(" + std::to_string(tc) + ") = " + std::to_string(s) +
                                  " after clamping to t_max = " + std::to_string(t_max_));
    }
    return s;
}

PathCoeffs Scheduler::coeffs(double t) const
{
    const double tc = clamp(t);
    const double s = checked_sigma(tc);
    const double a = sigma_dot(tc) / s;
    return {a, alpha_dot(tc) - alpha(tc) * a};
}

double Scheduler::snr(double t) const
{
    const double tc = clamp(t);
    const double s = checked_sigma(tc);
    const double al = alpha(tc);
    return (al * al) / (s * s);
}

double Scheduler::gamma(double t) const
{
    const double tc = clamp(t);
    (void)checked_sigma(tc);
    switch (kind_) {
    case SchedulerKind::CondOT: {
        const double s = 1.0 - tc;
        return tc / (s * s * s);
    }
    case SchedulerKind::VariancePreserving: {
        const double c = std::cos(half_pi * tc);
        return half_pi * std::tan(half_pi * tc) / (c * c);
    }
    case SchedulerKind::Custom: {
        const double h = custom_gamma_step;
        const double lo = std::max(0.0, tc - h);
        const double hi = std::min(t_max_, tc + h);
        return 0.5 * (snr(hi) - snr(lo)) / (hi - lo);
    }
    }
    return 0.0;
}

} // namespace dflow

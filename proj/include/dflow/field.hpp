#pragma once

#include <memory>

#include "dflow/prior.hpp"
#include "dflow/scheduler.hpp"
#include "dflow/types.hpp"

namespace dflow {

/// Closed-form marginal velocity field of an affine Gaussian path towards an
/// analytic prior, with the derivatives the solvers and adjoints consume.
///
///   u_t(x)      = a_t x + b_t E[x1|x]
///   D_x u_t(x)  = a_t I + b_t (alpha_t / sigma_t^2) Var(x1|x)
///   div u_t(x)  = d a_t + b_t (alpha_t / sigma_t^2) tr Var(x1|x)
///
/// Time arguments are clamped to [0, t_max] by the scheduler.
class FlowField {
public:
    FlowField(std::shared_ptr<const TargetPrior> prior, Scheduler sched);
    FlowField(TargetPrior prior, Scheduler sched);

    [[nodiscard]] const TargetPrior& prior() const noexcept { return *prior_; }
    [[nodiscard]] const Scheduler& scheduler() const noexcept { return sched_; }
    [[nodiscard]] int dim() const noexcept { return prior_->dim(); }
    [[nodiscard]] double t_max() const noexcept { return sched_.t_max(); }

    [[nodiscard]] PosteriorStats posterior(double t, const Vec& x,
                                           PosteriorDetail detail = PosteriorDetail::Full) const;
    [[nodiscard]] Vec denoiser(double t, const Vec& x) const;
    [[nodiscard]] Vec velocity(double t, const Vec& x) const;
    [[nodiscard]] Mat velocity_jacobian(double t, const Vec& x) const;
    /// Trace of the velocity Jacobian, computed from tr Var(x1|x) alone.
    [[nodiscard]] double divergence(double t, const Vec& x) const;
    /// Central-difference gradient of divergence(t, .) with step h.
    [[nodiscard]] Vec divergence_gradient(double t, const Vec& x, double h = 1e-5) const;
    [[nodiscard]] double log_marginal(double t, const Vec& x) const;
    /// grad_x log p_t(x) = (alpha_t E[x1|x] - x) / sigma_t^2.
    [[nodiscard]] Vec score(double t, const Vec& x) const;

    /// log N(x | 0, I), the source density.
    [[nodiscard]] static double source_log_density(const Vec& x);

private:
    std::shared_ptr<const TargetPrior> prior_;
    Scheduler sched_;
};

/// Noise-prediction parameterization:
///   u = (alpha'/alpha) x - (alpha' sigma / alpha - sigma') eps.
/// t is clamped to [t_min, t_max] so alpha_t stays away from zero.
[[nodiscard]] Vec epsilon_from_velocity(const Scheduler& sched, double t, const Vec& x,
                                        const Vec& u, double t_min = 1e-3);
[[nodiscard]] Vec velocity_from_epsilon(const Scheduler& sched, double t, const Vec& x,
                                        const Vec& eps, double t_min = 1e-3);

} // namespace dflow

#pragma once

#include <functional>
#include <string>

namespace dflow {

enum class SchedulerKind { CondOT, VariancePreserving, Custom };

/// Coefficients of the conditional velocity u_t(x|x1) = a x + b x1.
struct PathCoeffs {
    double a;
    double b;
};

/// Affine Gaussian path scheduler (alpha_t, sigma_t).
///
/// alpha(0)=0, alpha(1)=1, sigma(0)=1 and sigma(1) is (close to) zero. Every
/// evaluation clamps t into [0, t_max], which keeps a_t and gamma_t finite for
/// schedulers whose sigma vanishes at t=1.
class Scheduler {
public:
    using ScalarFn = std::function<double(double)>;

    static constexpr double default_t_max = 1.0 - 1e-3;

    /// alpha_t = t, sigma_t = 1 - t.
    static Scheduler cond_ot(double t_max = default_t_max);
    /// alpha_t = sin(pi t / 2), sigma_t = cos(pi t / 2).
    static Scheduler variance_preserving(double t_max = default_t_max);
    /// User-supplied functions; derivatives are mandatory.
    static Scheduler custom(ScalarFn alpha, ScalarFn sigma, ScalarFn alpha_dot,
                            ScalarFn sigma_dot, double t_max = default_t_max);

    [[nodiscard]] SchedulerKind kind() const noexcept { return kind_; }
    [[nodiscard]] double t_max() const noexcept { return t_max_; }
    [[nodiscard]] std::string name() const;

    [[nodiscard]] double clamp(double t) const noexcept;

    [[nodiscard]] double alpha(double t) const;
    [[nodiscard]] double sigma(double t) const;
    [[nodiscard]] double alpha_dot(double t) const;
    [[nodiscard]] double sigma_dot(double t) const;

    /// a_t = sigma'/sigma, b_t = alpha' - alpha sigma'/sigma.
    [[nodiscard]] PathCoeffs coeffs(double t) const;
    /// alpha_t^2 / sigma_t^2.
    [[nodiscard]] double snr(double t) const;
    /// Half the time derivative of snr. Closed form for the built-in kinds;
    /// custom schedulers use a central difference with h = 1e-6 (one-sided at
    /// the ends of [0, t_max]), accurate to roughly 1e-8 relative.
    [[nodiscard]] double gamma(double t) const;

private:
    Scheduler(SchedulerKind kind, double t_max);

    [[nodiscard]] double checked_sigma(double tc) const;

    SchedulerKind kind_;
    double t_max_;
    ScalarFn alpha_fn_;
    ScalarFn sigma_fn_;
    ScalarFn alpha_dot_fn_;
    ScalarFn sigma_dot_fn_;
};

} // namespace dflow

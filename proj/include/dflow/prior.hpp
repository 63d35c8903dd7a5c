#pragma once

#include <random>

#include "dflow/scheduler.hpp"
#include "dflow/types.hpp"

namespace dflow {

enum class PriorKind { Empirical, GaussianMixture };

/// Target data distribution p1: a weighted point set or a Gaussian mixture
/// with diagonal component covariances (isotropic is the common case).
///
/// Atoms (points or means) are stored column-wise, one column per atom.
class TargetPrior {
public:
    /// `points` is d x M, one point per column. Empty weights mean uniform.
    static TargetPrior empirical(Mat points, Vec weights = {});
    /// `means` is d x K; `variances` holds one isotropic variance per component.
    static TargetPrior isotropic_mixture(Mat means, Vec variances, Vec weights = {});
    /// `means` and `variances` are both d x K (per-coordinate variances).
    static TargetPrior diagonal_mixture(Mat means, Mat variances, Vec weights = {});

    [[nodiscard]] PriorKind kind() const noexcept { return kind_; }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(atoms_.rows()); }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(atoms_.cols()); }
    [[nodiscard]] const Mat& atoms() const noexcept { return atoms_; }
    /// d x K per-coordinate variances; empty for empirical priors.
    [[nodiscard]] const Mat& variances() const noexcept { return variances_; }
    [[nodiscard]] const Vec& weights() const noexcept { return weights_; }
    [[nodiscard]] const Vec& log_weights() const noexcept { return log_weights_; }
    [[nodiscard]] bool is_isotropic() const noexcept;

    [[nodiscard]] Vec mean() const;
    [[nodiscard]] Mat covariance() const;

    /// Draws one sample x1 ~ p1.
    [[nodiscard]] Vec sample(std::mt19937_64& rng) const;

    friend bool operator==(const TargetPrior& lhs, const TargetPrior& rhs);

private:
    TargetPrior(PriorKind kind, Mat atoms, Mat variances, Vec weights);

    PriorKind kind_;
    Mat atoms_;
    Mat variances_;
    Vec weights_;
    Vec log_weights_;
};

enum class PosteriorDetail { Mean, Trace, Full };

/// Statistics of p_t(x1 | x) for the affine Gaussian path.
struct PosteriorStats {
    Vec denoiser;          ///< E[x1 | x]
    Mat covariance;        ///< Var(x1 | x); empty unless PosteriorDetail::Full
    double trace_cov = 0;  ///< tr Var(x1 | x); zero for PosteriorDetail::Mean
    double log_marginal = 0;
    Vec posterior_weights; ///< over points (empirical) or components (mixture)
};

/// Exact posterior of the clean sample given x at time t. All sums run in log
/// space with max subtraction, so kernels that underflow near t = 1 are fine.
[[nodiscard]] PosteriorStats posterior(const TargetPrior& prior, const Scheduler& sched,
                                       double t, const Vec& x,
                                       PosteriorDetail detail = PosteriorDetail::Full);

} // namespace dflow

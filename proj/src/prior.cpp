#include "dflow/prior.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "dflow/errors.hpp"

namespace dflow {

namespace {

constexpr double log_two_pi = 1.8378770664093454836;
constexpr double weight_sum_tol = 1e-12;

Vec normalized_weights(Vec weights, Eigen::Index n)
{
    if (weights.size() == 0) {
        return Vec::Constant(n, 1.0 / static_cast<double>(n));
    }
    if (weights.size() != n) {
        throw DimensionMismatch("expected " + std::to_string(n) + " weights, got " +
                                std::to_string(weights.size()));
    }
    if ((weights.array() < 0.0).any() || !weights.allFinite()) {
        throw InvalidArgument("prior weights must be finite and nonnegative");
    }
    const double total = weights.sum();
    if (!(total > 0.0)) {
        throw InvalidArgument("prior weights sum to zero");
    }
    if (std::abs(total - 1.0) > weight_sum_tol) {
        weights /= total;
    }
    return weights;
}

/// Softmax of `logits` in place; returns log-sum-exp.
double softmax_inplace(Vec& logits)
{
    const double top = logits.maxCoeff();
    if (!std::isfinite(top)) {
        throw NumericalUnderflow("every unnormalized posterior weight is zero");
    }
    logits = (logits.array() - top).exp();
    const double total = logits.sum();
    logits /= total;
    return top + std::log(total);
}

} // namespace

TargetPrior::TargetPrior(PriorKind kind, Mat atoms, Mat variances, Vec weights)
    : kind_(kind), atoms_(std::move(atoms)), variances_(std::move(variances))
{
    if (atoms_.cols() == 0 || atoms_.rows() == 0) {
        throw InvalidArgument("prior needs at least one atom of positive dimension");
    }
    if (!atoms_.allFinite()) {
        throw InvalidArgument("prior atoms must be finite");
    }
    weights_ = normalized_weights(std::move(weights), atoms_.cols());
    log_weights_ = weights_.array().log();
}

TargetPrior TargetPrior::empirical(Mat points, Vec weights)
{
    return {PriorKind::Empirical, std::move(points), Mat{}, std::move(weights)};
}

TargetPrior TargetPrior::isotropic_mixture(Mat means, Vec variances, Vec weights)
{
    if (variances.size() != means.cols()) {
        throw DimensionMismatch("one variance per mixture component expected");
    }
    Mat per_coord = Mat::Ones(means.rows(), means.cols()) * variances.asDiagonal();
    return diagonal_mixture(std::move(means), std::move(per_coord), std::move(weights));
}

TargetPrior TargetPrior::diagonal_mixture(Mat means, Mat variances, Vec weights)
{
    if (variances.rows() != means.rows() || variances.cols() != means.cols()) {
        throw DimensionMismatch("mixture variances must be d x K like the means");
    }
    if (!(variances.array() > 0.0).all() || !variances.allFinite()) {
        throw InvalidArgument("mixture variances must be strictly positive");
    }
    return {PriorKind::GaussianMixture, std::move(means), std::move(variances),
            std::move(weights)};
}

bool TargetPrior::is_isotropic() const noexcept
{
    if (kind_ == PriorKind::Empirical) {
        return true;
    }
    for (Eigen::Index k = 0; k < variances_.cols(); ++k) {
        if ((variances_.col(k).array() != variances_(0, k)).any()) {
            return false;
        }
    }
    return true;
}

bool operator==(const TargetPrior& lhs, const TargetPrior& rhs)
{
    auto same = [](const auto& a, const auto& b) {
        return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
    };
    return lhs.kind_ == rhs.kind_ && same(lhs.atoms_, rhs.atoms_) &&
           same(lhs.variances_, rhs.variances_) && same(lhs.weights_, rhs.weights_);
}

Vec TargetPrior::mean() const { return atoms_ * weights_; }

Mat TargetPrior::covariance() const
{
    const Vec mu = mean();
    Mat cov = Mat::Zero(dim(), dim());
    for (int j = 0; j < size(); ++j) {
        const Vec diff = atoms_.col(j) - mu;
        cov.noalias() += weights_[j] * diff * diff.transpose();
        if (kind_ == PriorKind::GaussianMixture) {
            cov.diagonal() += weights_[j] * variances_.col(j);
        }
    }
    return cov;
}

Vec TargetPrior::sample(std::mt19937_64& rng) const
{
    std::discrete_distribution<int> pick(weights_.data(), weights_.data() + weights_.size());
    const int j = pick(rng);
    Vec x = atoms_.col(j);
    if (kind_ == PriorKind::GaussianMixture) {
        std::normal_distribution<double> normal;
        for (int i = 0; i < dim(); ++i) {
            x[i] += std::sqrt(variances_(i, j)) * normal(rng);
        }
    }
    return x;
}

PosteriorStats posterior(const TargetPrior& prior, const Scheduler& sched, double t,
                         const Vec& x, PosteriorDetail detail)
{
    const int d = prior.dim();
    if (x.size() != d) {
        throw DimensionMismatch("point has dimension " + std::to_string(x.size()) +
                                ", prior has " + std::to_string(d));
    }
    if (!x.allFinite()) {
        throw NonFiniteState("posterior queried at a non-finite point");
    }
    const double al = sched.alpha(t);
    const double sg = sched.sigma(t);
    const double s2 = sg * sg;
    const Mat& atoms = prior.atoms();

    PosteriorStats out;
    Vec logits(prior.size());

    if (prior.kind() == PriorKind::Empirical) {
        if (!(s2 > 0.0)) {
            throw DegenerateScheduler("empirical posterior needs sigma_t > 0");
        }
        Mat diff = (-al) * atoms;
        diff.colwise() += x;
        const Vec sq = diff.colwise().squaredNorm().transpose();
        logits = prior.log_weights() - sq / (2.0 * s2);
        const double lse = softmax_inplace(logits);
        out.log_marginal = lse - 0.5 * d * (log_two_pi + std::log(s2));
        out.denoiser = atoms * logits;

        if (detail != PosteriorDetail::Mean) {
            const Mat centered = atoms.colwise() - out.denoiser;
            out.trace_cov = centered.colwise().squaredNorm().dot(logits);
            if (detail == PosteriorDetail::Full) {
                out.covariance = centered * logits.asDiagonal() * centered.transpose();
            }
        }
        out.posterior_weights = std::move(logits);
        return out;
    }

    // Gaussian mixture with per-coordinate component variances.
    const Mat& var = prior.variances();
    const int K = prior.size();
    Mat post_means(d, K);
    Mat post_vars(d, K);
    for (int k = 0; k < K; ++k) {
        double logit = 0.0;
        for (int i = 0; i < d; ++i) {
            const double sv = var(i, k);
            const double q = al * al * sv + s2;
            const double r = x[i] - al * atoms(i, k);
            logit -= 0.5 * (r * r / q + log_two_pi + std::log(q));
            post_means(i, k) = (s2 * atoms(i, k) + al * sv * x[i]) / q;
            post_vars(i, k) = sv * s2 / q;
        }
        logits[k] = prior.log_weights()[k] + logit;
    }
    out.log_marginal = softmax_inplace(logits);
    out.denoiser = post_means * logits;

    if (detail != PosteriorDetail::Mean) {
        const Mat centered = post_means.colwise() - out.denoiser;
        out.trace_cov = (centered.colwise().squaredNorm() + post_vars.colwise().sum()).dot(logits);
        if (detail == PosteriorDetail::Full) {
            out.covariance = centered * logits.asDiagonal() * centered.transpose();
            out.covariance.diagonal() += post_vars * logits;
        }
    }
    out.posterior_weights = std::move(logits);
    return out;
}

} // namespace dflow

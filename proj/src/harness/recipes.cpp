#include "dflow/harness/recipes.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "dflow/errors.hpp"
#include "dflow/harness/matrix_io.hpp"

namespace dflow::harness {

std::string to_string(PriorRecipeKind kind)
{
    switch (kind) {
    case PriorRecipeKind::TwoGaussians: return "two_gaussians";
    case PriorRecipeKind::GaussianGrid: return "gaussian_grid";
    case PriorRecipeKind::EmpiricalFromFile: return "empirical_file";
    case PriorRecipeKind::Ring: return "ring";
    case PriorRecipeKind::Gaussian: return "gaussian";
    }
    return "unknown";
}

PriorRecipeKind parse_prior_recipe(const std::string& name)
{
    for (auto k : {PriorRecipeKind::TwoGaussians, PriorRecipeKind::GaussianGrid,
                   PriorRecipeKind::EmpiricalFromFile, PriorRecipeKind::Ring,
                   PriorRecipeKind::Gaussian}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw InvalidArgument("unknown prior kind '" + name + "'");
}

namespace {

void require(bool ok, const std::string& msg)
{
    if (!ok) {
        throw InvalidArgument(msg);
    }
}

TargetPrior two_gaussians(const PriorRecipe& r)
{
    require(r.dim >= 1, "two_gaussians needs dim >= 1");
    require(r.s > 0.0, "two_gaussians needs s > 0");
    Mat means = Mat::Zero(r.dim, 2);
    means(0, 0) = -0.5 * r.sep;
    means(0, 1) = 0.5 * r.sep;
    return TargetPrior::isotropic_mixture(means, Vec::Constant(2, r.s * r.s));
}

TargetPrior gaussian_grid(const PriorRecipe& r)
{
    require(r.dim >= 2, "gaussian_grid needs dim >= 2");
    require(r.k >= 1 && r.s > 0.0, "gaussian_grid needs k >= 1 and s > 0");
    Mat means = Mat::Zero(r.dim, r.k * r.k);
    const double offset = 0.5 * (r.k - 1);
    for (int i = 0; i < r.k; ++i) {
        for (int j = 0; j < r.k; ++j) {
            means(0, i * r.k + j) = (i - offset) * r.spacing;
            means(1, i * r.k + j) = (j - offset) * r.spacing;
        }
    }
    return TargetPrior::isotropic_mixture(means, Vec::Constant(r.k * r.k, r.s * r.s));
}

TargetPrior ring(const PriorRecipe& r)
{
    require(r.dim >= 2 && r.points >= 1 && r.radius > 0.0,
            "ring needs dim >= 2, points >= 1 and radius > 0");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    Mat pts(r.dim, r.points);
    for (int j = 0; j < r.points; ++j) {
        const double theta = two_pi * j / r.points;
        if (r.dim == 2) {
            pts(0, j) = r.radius * std::cos(theta);
            pts(1, j) = r.radius * std::sin(theta);
            continue;
        }
        for (int i = 0; i < r.dim; ++i) {
            pts(i, j) = r.radius * std::cos(two_pi * i / r.dim - theta);
        }
    }
    return TargetPrior::empirical(pts);
}

TargetPrior gaussian(const PriorRecipe& r)
{
    require(r.dim >= 1, "gaussian needs dim >= 1");
    Vec mean = r.mean.size() ? r.mean : Vec::Zero(r.dim);
    Vec var = r.variances.size() ? r.variances : Vec::Ones(r.dim);
    if (mean.size() != r.dim || var.size() != r.dim) {
        throw DimensionMismatch("gaussian mean and variances must have dim entries");
    }
    return TargetPrior::diagonal_mixture(mean, var, Vec::Ones(1));
}

} // namespace

TargetPrior make_prior(const PriorRecipe& recipe)
{
    switch (recipe.kind) {
    case PriorRecipeKind::TwoGaussians: return two_gaussians(recipe);
    case PriorRecipeKind::GaussianGrid: return gaussian_grid(recipe);
    case PriorRecipeKind::EmpiricalFromFile: {
        const Mat rows = read_matrix(recipe.path);
        return TargetPrior::empirical(rows.transpose());
    }
    case PriorRecipeKind::Ring: return ring(recipe);
    case PriorRecipeKind::Gaussian: return gaussian(recipe);
    }
    throw InvalidArgument("unknown prior recipe");
}

Observation synth_observation(const TargetPrior& prior, const CorruptionOp& op,
                              std::uint64_t seed)
{
    if (op.input_dim() != prior.dim()) {
        throw DimensionMismatch("corruption expects dimension " + std::to_string(op.input_dim()) +
                                ", prior has " + std::to_string(prior.dim()));
    }
    std::mt19937_64 rng(seed);
    Observation obs;
    obs.x_star = prior.sample(rng);
    obs.y = op.apply(obs.x_star);
    if (op.noise_sigma() > 0.0) {
        std::normal_distribution<double> normal;
        for (Eigen::Index i = 0; i < obs.y.size(); ++i) {
            obs.y[i] += op.noise_sigma() * normal(rng);
        }
    }
    return obs;
}

std::vector<bool> center_half_mask(int dim)
{
    std::vector<bool> keep(dim, true);
    for (int i = dim / 4; i < 3 * dim / 4; ++i) {
        keep[i] = false;
    }
    return keep;
}

} // namespace dflow::harness

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dflow/field.hpp"
#include "dflow/objective.hpp"
#include "dflow/prior.hpp"

namespace dflow::harness {

enum class PriorRecipeKind { TwoGaussians, GaussianGrid, EmpiricalFromFile, Ring, Gaussian };

[[nodiscard]] std::string to_string(PriorRecipeKind kind);
[[nodiscard]] PriorRecipeKind parse_prior_recipe(const std::string& name);

/// Desk-scale data distributions.
///
///  - TwoGaussians: means (+-sep/2, 0, ..., 0), isotropic variance s^2.
///  - GaussianGrid: k x k means spaced `spacing` apart in the first two
///    coordinates, centered at the origin, variance s^2.
///  - EmpiricalFromFile: one point per row of a plain-text matrix.
///  - Ring: M equally spaced angles theta_j = 2 pi j / M at radius r. In d = 2
///    the points are r (cos theta_j, sin theta_j); for d > 2 they are the
///    smooth signals x_i = r cos(2 pi i / d - theta_j).
///  - Gaussian: a single component with the given mean and diagonal variances.
struct PriorRecipe {
    PriorRecipeKind kind = PriorRecipeKind::TwoGaussians;
    int dim = 2;
    double sep = 4.0;
    double s = 0.5;
    int k = 3;
    double spacing = 2.0;
    int points = 8;
    double radius = 1.0;
    std::filesystem::path path;
    Vec mean;      ///< Gaussian; empty means zero
    Vec variances; ///< Gaussian; empty means all ones
};

[[nodiscard]] TargetPrior make_prior(const PriorRecipe& recipe);

struct Observation {
    Vec x_star;
    Vec y;
};

/// Draws x* ~ p1, then y = H x* + noise with noise ~ N(0, sigma_y^2 I).
[[nodiscard]] Observation synth_observation(const TargetPrior& prior, const CorruptionOp& op,
                                            std::uint64_t seed);

/// Keep-mask hiding the contiguous central half [d/4, 3d/4).
[[nodiscard]] std::vector<bool> center_half_mask(int dim);

} // namespace dflow::harness

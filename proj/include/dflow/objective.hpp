#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dflow/field.hpp"
#include "dflow/solver.hpp"
#include "dflow/types.hpp"

namespace dflow {

enum class CorruptionKind { Identity, Mask, Subsample, Blur1D };

/// Known linear measurement operator H with additive noise level sigma_y.
class CorruptionOp {
public:
    static CorruptionOp identity(int dim, double noise_sigma = 0.0);
    /// Keeps the entries where `keep` is true, in order.
    static CorruptionOp mask(std::vector<bool> keep, double noise_sigma = 0.0);
    /// Keeps every `factor`-th entry starting at index 0; factor must divide dim.
    static CorruptionOp subsample(int dim, int factor, double noise_sigma = 0.0);
    /// Same-size convolution with an odd-length kernel (normalized to sum 1)
    /// and reflect padding: index -1 maps to 1, index d maps to d - 2.
    static CorruptionOp blur1d(int dim, Vec kernel, double noise_sigma = 0.0);

    [[nodiscard]] CorruptionKind kind() const noexcept { return kind_; }
    [[nodiscard]] int input_dim() const noexcept { return dim_; }
    [[nodiscard]] int output_dim() const noexcept;
    [[nodiscard]] double noise_sigma() const noexcept { return noise_sigma_; }
    [[nodiscard]] const Vec& kernel() const noexcept { return kernel_; }
    [[nodiscard]] const std::vector<int>& kept_indices() const noexcept { return kept_; }

    [[nodiscard]] Vec apply(const Vec& x) const;
    [[nodiscard]] Vec apply_adjoint(const Vec& v) const;

    /// Full-dimensional completion of an observation: H^T y, with coordinates
    /// that H never observes filled with the mean of the observed values.
    [[nodiscard]] Vec lift(const Vec& y) const;

private:
    CorruptionOp(CorruptionKind kind, int dim, double noise_sigma);

    CorruptionKind kind_;
    int dim_;
    double noise_sigma_;
    std::vector<int> kept_;
    Vec kernel_;
};

enum class CostKind { Reconstruction, NegPSNR, LevelSet, ReversedSampling };
enum class RegularizerKind { ChiD, SourceGaussianNLL, TargetNLL };

[[nodiscard]] std::string to_string(CostKind kind);
[[nodiscard]] std::string to_string(RegularizerKind kind);

/// Scalar function F for the level-set cost (F(x) - c)^2, with its gradient.
struct LevelFunction {
    std::string name;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;

    /// F(x) = ||x||^2.
    static LevelFunction squared_norm();
    /// F(x) = w . x.
    static LevelFunction linear(Vec w);
};

struct Regularizer {
    RegularizerKind kind;
    double weight;
};

struct CostSpec {
    CostKind kind = CostKind::ReversedSampling;
    /// Observation for Reconstruction / NegPSNR, target for ReversedSampling.
    Vec observation;
    std::optional<CorruptionOp> corruption;
    std::optional<LevelFunction> level_function;
    double level = 0.0;
    /// Peak for PSNR; defaults to max(y) - min(y) of the observation.
    std::optional<double> psnr_peak;
    std::vector<Regularizer> regularizers;
    /// Use the chi^d log-term sign exactly as printed in the source formula.
    bool chi_d_printed_sign = false;

    [[nodiscard]] double effective_psnr_peak() const;
    void validate(int dim) const;
};

struct CostEval {
    double value = 0;      ///< base cost plus weighted x0 regularizers
    double base_value = 0; ///< base cost alone
    Vec grad_x1;           ///< gradient of the base cost w.r.t. x(1)
    Vec grad_x0_direct;    ///< weighted regularizer gradient w.r.t. x0
};

/// Evaluates the terminal cost and the regularizers that depend on x0 directly.
/// TargetNLL terms need the flow and are added by the optimizer through
/// regularizer_target_nll; they contribute nothing here.
[[nodiscard]] CostEval cost_and_grad(const CostSpec& spec, const Vec& x1, const Vec& x0);

/// PSNR in dB of `x` against `y` with the given peak value.
[[nodiscard]] double psnr(const Vec& x, const Vec& y, double peak);

struct ValueGrad {
    double value;
    Vec grad;
};

/// Negative log-density of r = ||x0|| under the chi distribution with d
/// degrees of freedom, constant dropped: -(d-1) log r + r^2 / 2. Minimized at
/// r = sqrt(d-1). `printed_sign` flips the sign of both terms.
[[nodiscard]] ValueGrad regularizer_chi_d(const Vec& x0, bool printed_sign = false);
/// ||x0||^2 / 2.
[[nodiscard]] ValueGrad regularizer_source_nll(const Vec& x0);
/// -z(t_max) of the augmented log-density solve, with its gradient w.r.t. x0
/// from the discrete adjoint of the augmented system.
[[nodiscard]] ValueGrad regularizer_target_nll(const FlowField& field, const Vec& x0,
                                               int n_steps, Scheme scheme = Scheme::Midpoint);

} // namespace dflow

#include "dflow/objective.hpp"

#include <cmath>
#include <numbers>

#include "dflow/errors.hpp"
#include "dflow/sensitivity.hpp"

namespace dflow {

namespace {

int reflect_index(int i, int d)
{
    if (d == 1) {
        return 0;
    }
    const int period = 2 * (d - 1);
    int m = i % period;
    if (m < 0) {
        m += period;
    }
    return m < d ? m : period - m;
}

void check_dim(const Vec& v, int expected, const char* what)
{
    if (v.size() != expected) {
        throw DimensionMismatch(std::string(what) + " has dimension " + std::to_string(v.size()) +
                                ", expected " + std::to_string(expected));
    }
}

} // namespace

CorruptionOp::CorruptionOp(CorruptionKind kind, int dim, double noise_sigma)
    : kind_(kind), dim_(dim), noise_sigma_(noise_sigma)
{
    if (dim < 1) {
        throw InvalidArgument("corruption operator needs a positive input dimension");
    }
    if (!(noise_sigma >= 0.0)) {
        throw InvalidArgument("noise sigma must be nonnegative");
    }
}

CorruptionOp CorruptionOp::identity(int dim, double noise_sigma)
{
    return {CorruptionKind::Identity, dim, noise_sigma};
}

CorruptionOp CorruptionOp::mask(std::vector<bool> keep, double noise_sigma)
{
    CorruptionOp op{CorruptionKind::Mask, static_cast<int>(keep.size()), noise_sigma};
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) {
            op.kept_.push_back(static_cast<int>(i));
        }
    }
    if (op.kept_.empty()) {
        throw InvalidArgument("mask keeps no coordinates");
    }
    return op;
}

CorruptionOp CorruptionOp::subsample(int dim, int factor, double noise_sigma)
{
    if (factor < 1 || dim % factor != 0) {
        throw InvalidArgument("subsample factor " + std::to_string(factor) +
                              " must divide the dimension " + std::to_string(dim));
    }
    CorruptionOp op{CorruptionKind::Subsample, dim, noise_sigma};
    for (int i = 0; i < dim; i += factor) {
        op.kept_.push_back(i);
    }
    return op;
}

CorruptionOp CorruptionOp::blur1d(int dim, Vec kernel, double noise_sigma)
{
    if (kernel.size() % 2 == 0) {
        throw InvalidArgument("blur kernel must have odd length");
    }
    const double total = kernel.sum();
    if (!(std::abs(total) > 0.0) || !kernel.allFinite()) {
        throw InvalidArgument("blur kernel must be finite with nonzero sum");
    }
    CorruptionOp op{CorruptionKind::Blur1D, dim, noise_sigma};
    op.kernel_ = kernel / total;
    return op;
}

int CorruptionOp::output_dim() const noexcept
{
    switch (kind_) {
    case CorruptionKind::Mask:
    case CorruptionKind::Subsample: return static_cast<int>(kept_.size());
    case CorruptionKind::Identity:
    case CorruptionKind::Blur1D: return dim_;
    }
    return dim_;
}

Vec CorruptionOp::apply(const Vec& x) const
{
    check_dim(x, dim_, "corruption input");
    switch (kind_) {
    case CorruptionKind::Identity: return x;
    case CorruptionKind::Mask:
    case CorruptionKind::Subsample: {
        Vec out(static_cast<Eigen::Index>(kept_.size()));
        for (std::size_t i = 0; i < kept_.size(); ++i) {
            out[static_cast<Eigen::Index>(i)] = x[kept_[i]];
        }
        return out;
    }
    case CorruptionKind::Blur1D: {
        const int r = static_cast<int>(kernel_.size()) / 2;
        Vec out = Vec::Zero(dim_);
        for (int i = 0; i < dim_; ++i) {
            for (int j = 0; j < kernel_.size(); ++j) {
                out[i] += kernel_[j] * x[reflect_index(i + j - r, dim_)];
            }
        }
        return out;
    }
    }
    return x;
}

Vec CorruptionOp::apply_adjoint(const Vec& v) const
{
    check_dim(v, output_dim(), "adjoint input");
    switch (kind_) {
    case CorruptionKind::Identity: return v;
    case CorruptionKind::Mask:
    case CorruptionKind::Subsample: {
        Vec out = Vec::Zero(dim_);
        for (std::size_t i = 0; i < kept_.size(); ++i) {
            out[kept_[i]] = v[static_cast<Eigen::Index>(i)];
        }
        return out;
    }
    case CorruptionKind::Blur1D: {
        const int r = static_cast<int>(kernel_.size()) / 2;
        Vec out = Vec::Zero(dim_);
        for (int i = 0; i < dim_; ++i) {
            for (int j = 0; j < kernel_.size(); ++j) {
                out[reflect_index(i + j - r, dim_)] += kernel_[j] * v[i];
            }
        }
        return out;
    }
    }
    return v;
}

Vec CorruptionOp::lift(const Vec& y) const
{
    Vec out = apply_adjoint(y);
    if (kind_ == CorruptionKind::Mask || kind_ == CorruptionKind::Subsample) {
        const double fill = y.mean();
        std::vector<bool> seen(static_cast<std::size_t>(dim_), false);
        for (int i : kept_) {
            seen[static_cast<std::size_t>(i)] = true;
        }
        for (int i = 0; i < dim_; ++i) {
            if (!seen[static_cast<std::size_t>(i)]) {
                out[i] = fill;
            }
        }
    }
    return out;
}

std::string to_string(CostKind kind)
{
    switch (kind) {
    case CostKind::Reconstruction: return "reconstruction";
    case CostKind::NegPSNR: return "neg_psnr";
    case CostKind::LevelSet: return "level_set";
    case CostKind::ReversedSampling: return "reversed_sampling";
    }
    return "unknown";
}

std::string to_string(RegularizerKind kind)
{
    switch (kind) {
    case RegularizerKind::ChiD: return "chi_d";
    case RegularizerKind::SourceGaussianNLL: return "source_nll";
    case RegularizerKind::TargetNLL: return "target_nll";
    }
    return "unknown";
}

LevelFunction LevelFunction::squared_norm()
{
    return {"squared_norm", [](const Vec& x) { return x.squaredNorm(); },
            [](const Vec& x) -> Vec { return 2.0 * x; }};
}

LevelFunction LevelFunction::linear(Vec w)
{
    return {"linear", [w](const Vec& x) { return w.dot(x); }, [w](const Vec&) { return w; }};
}

double CostSpec::effective_psnr_peak() const
{
    if (psnr_peak) {
        return *psnr_peak;
    }
    const double range = observation.size() > 0
                             ? observation.maxCoeff() - observation.minCoeff()
                             : 0.0;
    return range > 0.0 ? range : 1.0;
}

void CostSpec::validate(int dim) const
{
    for (const auto& reg : regularizers) {
        if (!(reg.weight >= 0.0)) {
            throw InvalidArgument("regularizer weights must be nonnegative");
        }
    }
    switch (kind) {
    case CostKind::Reconstruction:
    case CostKind::NegPSNR: {
        if (!corruption) {
            throw InvalidArgument(to_string(kind) + " cost needs a corruption operator");
        }
        if (corruption->input_dim() != dim) {
            throw DimensionMismatch("corruption input dimension differs from the flow");
        }
        check_dim(observation, corruption->output_dim(), "observation");
        if (psnr_peak && !(*psnr_peak > 0.0)) {
            throw InvalidArgument("PSNR peak must be positive");
        }
        break;
    }
    case CostKind::ReversedSampling: check_dim(observation, dim, "target"); break;
    case CostKind::LevelSet:
        if (!level_function) {
            throw InvalidArgument("level-set cost needs a level function");
        }
        break;
    }
}

double psnr(const Vec& x, const Vec& y, double peak)
{
    check_dim(x, static_cast<int>(y.size()), "psnr input");
    const double mse = (x - y).squaredNorm() / static_cast<double>(y.size());
    return 10.0 * std::log10(peak * peak / mse);
}

CostEval cost_and_grad(const CostSpec& spec, const Vec& x1, const Vec& x0)
{
    CostEval out;
    switch (spec.kind) {
    case CostKind::ReversedSampling: {
        check_dim(x1, static_cast<int>(spec.observation.size()), "x1");
        const Vec r = x1 - spec.observation;
        out.base_value = r.squaredNorm();
        out.grad_x1 = 2.0 * r;
        break;
    }
    case CostKind::Reconstruction: {
        const auto& h = spec.corruption.value();
        const Vec r = h.apply(x1) - spec.observation;
        out.base_value = r.squaredNorm();
        out.grad_x1 = 2.0 * h.apply_adjoint(r);
        break;
    }
    case CostKind::NegPSNR: {
        const auto& h = spec.corruption.value();
        const Vec r = h.apply(x1) - spec.observation;
        const double n = static_cast<double>(r.size());
        const double mse = r.squaredNorm() / n;
        if (!(mse > 0.0)) {
            throw NonFiniteCost("PSNR is infinite at an exact fit");
        }
        const double peak = spec.effective_psnr_peak();
        out.base_value = 10.0 * std::log10(mse) - 20.0 * std::log10(peak);
        out.grad_x1 = (10.0 / std::numbers::ln10) * (2.0 / (n * mse)) * h.apply_adjoint(r);
        break;
    }
    case CostKind::LevelSet: {
        const auto& f = spec.level_function.value();
        const double gap = f.value(x1) - spec.level;
        out.base_value = gap * gap;
        out.grad_x1 = 2.0 * gap * f.gradient(x1);
        break;
    }
    }

    out.value = out.base_value;
    out.grad_x0_direct = Vec::Zero(x0.size());
    for (const auto& reg : spec.regularizers) {
        if (reg.weight == 0.0 || reg.kind == RegularizerKind::TargetNLL) {
            continue;
        }
        const auto vg = reg.kind == RegularizerKind::ChiD
                            ? regularizer_chi_d(x0, spec.chi_d_printed_sign)
                            : regularizer_source_nll(x0);
        out.value += reg.weight * vg.value;
        out.grad_x0_direct += reg.weight * vg.grad;
    }
    if (!std::isfinite(out.value) || !out.grad_x1.allFinite() || !out.grad_x0_direct.allFinite()) {
        throw NonFiniteCost("cost or gradient is not finite");
    }
    return out;
}

ValueGrad regularizer_chi_d(const Vec& x0, bool printed_sign)
{
    const double r2 = x0.squaredNorm();
    const double r = std::sqrt(r2);
    if (r < 1e-12) {
        throw ZeroNorm("chi^d regularizer is undefined at x0 = 0");
    }
    const double dof = static_cast<double>(x0.size()) - 1.0;
    ValueGrad out{-dof * std::log(r) + 0.5 * r2, (1.0 - dof / r2) * x0};
    if (printed_sign) {
        out.value = -out.value;
        out.grad = -out.grad;
    }
    return out;
}

ValueGrad regularizer_source_nll(const Vec& x0) { return {0.5 * x0.squaredNorm(), x0}; }

ValueGrad regularizer_target_nll(const FlowField& field, const Vec& x0, int n_steps,
                                 Scheme scheme)
{
    const auto traj = solve_forward_with_logdensity(field, x0, n_steps, scheme);
    const double z_end = traj.log_density->back();
    Vec grad = discrete_adjoint(field, traj, Vec::Zero(field.dim()), -1.0);
    return {-z_end, std::move(grad)};
}

} // namespace dflow

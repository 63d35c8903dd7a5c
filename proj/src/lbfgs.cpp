#include "dflow/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dflow/errors.hpp"

namespace dflow {

void LineSearchParams::validate() const
{
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) {
        throw InvalidArgument("line search needs 0 < c1 < c2 < 1");
    }
    if (!(0.0 < rho && rho < 1.0) || !(0.0 < c && c < 1.0)) {
        throw InvalidArgument("backtracking needs rho and c in (0, 1)");
    }
    if (max_evals < 1) {
        throw InvalidArgument("line search needs at least one evaluation");
    }
}

namespace {

struct Probe {
    double step;
    double value;
    double slope;
    Vec x;
    Vec grad;
};

Probe probe(const Objective& f, const Vec& x, const Vec& dir, double step)
{
    Probe p{step, 0.0, 0.0, x + step * dir, Vec{}};
    p.value = f(p.x, p.grad);
    if (!std::isfinite(p.value) || !p.grad.allFinite()) {
        p.value = std::numeric_limits<double>::infinity();
        p.slope = std::numeric_limits<double>::infinity();
    } else {
        p.slope = p.grad.dot(dir);
    }
    return p;
}

/// Minimizer of the cubic matching value and slope at both ends, kept inside
/// the middle 80% of [lo, hi]; bisection when the fit is unusable.
double cubic_step(const Probe& lo, const Probe& hi)
{
    const double a = lo.step;
    const double b = hi.step;
    const double lo_bound = std::min(a, b) + 0.1 * std::abs(b - a);
    const double hi_bound = std::max(a, b) - 0.1 * std::abs(b - a);
    const double mid = 0.5 * (a + b);
    if (!std::isfinite(hi.value) || !std::isfinite(hi.slope)) {
        return mid;
    }
    const double d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    const double disc = d1 * d1 - lo.slope * hi.slope;
    if (disc < 0.0) {
        return mid;
    }
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = hi.slope - lo.slope + 2.0 * d2;
    if (denom == 0.0) {
        return mid;
    }
    const double trial = b - (b - a) * (hi.slope + d2 - d1) / denom;
    if (!std::isfinite(trial) || trial < lo_bound || trial > hi_bound) {
        return mid;
    }
    return trial;
}

LineSearchResult accept(Probe&& p, int evals)
{
    return {true, p.step, p.value, std::move(p.x), std::move(p.grad), evals};
}

} // namespace

LineSearchResult strong_wolfe_search(const Objective& f, const Vec& x, double f0, const Vec& g0,
                                     const Vec& dir, double step0, const LineSearchParams& params)
{
    const double slope0 = g0.dot(dir);
    LineSearchResult fail;
    if (!(slope0 < 0.0)) {
        return fail;
    }
    auto armijo_ok = [&](const Probe& p) { return p.value <= f0 + params.c1 * p.step * slope0; };
    auto curvature_ok = [&](const Probe& p) { return std::abs(p.slope) <= -params.c2 * slope0; };

    Probe prev{0.0, f0, slope0, x, g0};
    double step = std::min(step0, params.step_max);
    int evals = 0;

    // zoom on a bracket [lo, hi] where lo satisfies sufficient decrease.
    auto zoom = [&](Probe lo, Probe hi) -> LineSearchResult {
        while (evals < params.max_evals) {
            Probe p = probe(f, x, dir, cubic_step(lo, hi));
            ++evals;
            if (!armijo_ok(p) || p.value >= lo.value) {
                hi = std::move(p);
            } else {
                if (curvature_ok(p)) {
                    return accept(std::move(p), evals);
                }
                if (p.slope * (hi.step - lo.step) >= 0.0) {
                    hi = std::move(lo);
                }
                lo = std::move(p);
            }
            if (std::abs(hi.step - lo.step) <= 1e-14 * std::max(1.0, std::abs(lo.step))) {
                break;
            }
        }
        if (lo.step > 0.0) {
            return accept(std::move(lo), evals);
        }
        LineSearchResult r;
        r.evals = evals;
        return r;
    };

    for (bool first = true; evals < params.max_evals; first = false) {
        Probe p = probe(f, x, dir, step);
        ++evals;
        if (!armijo_ok(p) || (!first && p.value >= prev.value)) {
            return zoom(std::move(prev), std::move(p));
        }
        if (curvature_ok(p)) {
            return accept(std::move(p), evals);
        }
        if (p.slope >= 0.0) {
            return zoom(std::move(p), std::move(prev));
        }
        if (step >= params.step_max) {
            return accept(std::move(p), evals);
        }
        prev = std::move(p);
        step = std::min(2.0 * step, params.step_max);
    }
    if (prev.step > 0.0) {
        return accept(std::move(prev), evals);
    }
    fail.evals = evals;
    return fail;
}

LineSearchResult backtracking_search(const Objective& f, const Vec& x, double f0, const Vec& g0,
                                     const Vec& dir, double step0, double rho, double c,
                                     int max_evals)
{
    const double slope0 = g0.dot(dir);
    LineSearchResult out;
    if (!(slope0 < 0.0)) {
        return out;
    }
    double step = step0;
    for (int evals = 1; evals <= max_evals; ++evals, step *= rho) {
        Probe p = probe(f, x, dir, step);
        if (p.value <= f0 + c * step * slope0) {
            return accept(std::move(p), evals);
        }
        out.evals = evals;
    }
    return out;
}

LineSearchResult line_search(const Objective& f, const Vec& x, double f0, const Vec& g0,
                             const Vec& dir, double step0, const LineSearchParams& params)
{
    if (params.kind == LineSearchKind::StrongWolfe) {
        return strong_wolfe_search(f, x, f0, g0, dir, step0, params);
    }
    return backtracking_search(f, x, f0, g0, dir, step0, params.rho, params.c, params.max_evals);
}

LbfgsHistory::LbfgsHistory(int capacity) : capacity_(capacity)
{
    if (capacity < 1) {
        throw InvalidArgument("L-BFGS history must hold at least one pair");
    }
}

bool LbfgsHistory::push(const Vec& s, const Vec& y)
{
    const double sy = s.dot(y);
    if (!(sy > min_curvature)) {
        return false;
    }
    if (static_cast<int>(pairs_.size()) == capacity_) {
        pairs_.pop_front();
    }
    pairs_.push_back({s, y, 1.0 / sy});
    return true;
}

Vec LbfgsHistory::direction(const Vec& grad) const
{
    Vec q = grad;
    std::vector<double> alphas(pairs_.size());
    for (std::size_t i = pairs_.size(); i-- > 0;) {
        const auto& p = pairs_[i];
        alphas[i] = p.rho * p.s.dot(q);
        q.noalias() -= alphas[i] * p.y;
    }
    if (!pairs_.empty()) {
        const auto& last = pairs_.back();
        q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
        const auto& p = pairs_[i];
        const double beta = p.rho * p.y.dot(q);
        q.noalias() += (alphas[i] - beta) * p.s;
    }
    return -q;
}

LbfgsResult minimize_lbfgs(const Objective& f, const Vec& x0, const LbfgsOptions& opts)
{
    opts.line_search.validate();
    LbfgsHistory history(opts.history);
    LbfgsResult out;
    out.x = x0;
    out.value = f(out.x, out.grad);
    out.evaluations = 1;
    while (out.iterations < opts.max_iters) {
        const double gnorm = out.grad.norm();
        if (gnorm < opts.grad_tol) {
            out.converged = true;
            return out;
        }
        Vec dir = history.direction(out.grad);
        double step0 = 1.0;
        if (history.empty() || out.grad.dot(dir) >= 0.0) {
            history.clear();
            dir = -out.grad;
            step0 = std::min(1.0, 1.0 / gnorm);
        }
        auto ls = line_search(f, out.x, out.value, out.grad, dir, step0, opts.line_search);
        out.evaluations += ls.evals;
        if (!ls.ok) {
            break;
        }
        history.push(ls.x - out.x, ls.grad - out.grad);
        out.x = std::move(ls.x);
        out.grad = std::move(ls.grad);
        out.value = ls.value;
        ++out.iterations;
    }
    out.converged = out.grad.norm() < opts.grad_tol;
    return out;
}

} // namespace dflow

#pragma once

#include <deque>
#include <functional>

#include "dflow/types.hpp"

namespace dflow {

/// Smooth objective: returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const Vec& x, Vec& grad)>;

enum class LineSearchKind { StrongWolfe, Backtracking };

struct LineSearchParams {
    LineSearchKind kind = LineSearchKind::StrongWolfe;
    double c1 = 1e-4;  ///< sufficient decrease
    double c2 = 0.9;   ///< curvature (strong Wolfe)
    double rho = 0.5;  ///< backtracking contraction
    double c = 1e-4;   ///< backtracking sufficient decrease
    int max_evals = 40;
    double step_max = 1e10;

    void validate() const;
};

struct LineSearchResult {
    bool ok = false;
    double step = 0;
    double value = 0;
    Vec x;
    Vec grad;
    int evals = 0;
};

/// Bracketing/zoom search for a step satisfying the strong Wolfe conditions,
/// with safeguarded cubic interpolation inside the bracket. When the budget
/// runs out with a bracket whose low end already gives sufficient decrease,
/// that point is returned with ok = true.
[[nodiscard]] LineSearchResult strong_wolfe_search(const Objective& f, const Vec& x, double f0,
                                                   const Vec& g0, const Vec& dir, double step0,
                                                   const LineSearchParams& params);

/// Armijo backtracking: step0, rho step0, rho^2 step0, ...
[[nodiscard]] LineSearchResult backtracking_search(const Objective& f, const Vec& x, double f0,
                                                   const Vec& g0, const Vec& dir, double step0,
                                                   double rho, double c, int max_evals);

[[nodiscard]] LineSearchResult line_search(const Objective& f, const Vec& x, double f0,
                                           const Vec& g0, const Vec& dir, double step0,
                                           const LineSearchParams& params);

/// Limited-memory inverse Hessian approximation (two-loop recursion).
class LbfgsHistory {
public:
    static constexpr double min_curvature = 1e-10;

    explicit LbfgsHistory(int capacity);

    /// Stores (s, y) unless s.y <= min_curvature; returns whether it was kept.
    bool push(const Vec& s, const Vec& y);
    void clear() noexcept { pairs_.clear(); }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(pairs_.size()); }
    [[nodiscard]] bool empty() const noexcept { return pairs_.empty(); }

    /// Search direction -H g.
    [[nodiscard]] Vec direction(const Vec& grad) const;

private:
    struct Pair {
        Vec s;
        Vec y;
        double rho;
    };
    int capacity_;
    std::deque<Pair> pairs_;
};

struct LbfgsOptions {
    int max_iters = 100;
    double grad_tol = 1e-8;
    int history = 10;
    LineSearchParams line_search{};
};

struct LbfgsResult {
    Vec x;
    double value = 0;
    Vec grad;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Plain L-BFGS minimization, stopping when ||grad|| < grad_tol.
[[nodiscard]] LbfgsResult minimize_lbfgs(const Objective& f, const Vec& x0,
                                         const LbfgsOptions& opts = {});

} // namespace dflow

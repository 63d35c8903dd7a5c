#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dflow/harness/config.hpp"

namespace dflow::harness {

/// ||a - b|| / ||b||, or ||a|| when b vanishes.
[[nodiscard]] double relative_error(const Vec& a, const Vec& b);
[[nodiscard]] double relative_error(const Mat& a, const Mat& b);

struct RouteRow {
    Vec x0;
    Vec y;
    double discrete_vs_fd = 0;
    double discrete_vs_continuous = 0;
    double discrete_vs_closed_form = 0; ///< J^T grad L with the closed-form J
};

struct RoutesReport {
    std::vector<RouteRow> rows;
    double max_discrete_vs_fd = 0;
    double max_discrete_vs_continuous = 0;
    double max_discrete_vs_closed_form = 0;
};

/// Compares gradient routes for L(x) = ||x - y||^2 on `pairs` random
/// (x0 ~ N(0, I), y ~ p1) pairs. The finite-difference oracle uses central
/// differences with step 1e-6 on the same discretized map.
[[nodiscard]] RoutesReport verify_routes(const FlowField& field, int pairs, int n_steps,
                                         Scheme scheme, std::uint64_t seed);

struct Theorem1Row {
    Vec x0;
    double closed_vs_fd = 0;           ///< relative Frobenius error
    double closed_vs_time_ordered = 0; ///< single exponential vs ordered product
    double asymmetry = 0;              ///< max |J - J^T|
    double min_eigenvalue = 0;
    int quadrature_steps = 0;
};

struct TmaxRow {
    double t_max = 0;
    double mean_closed_vs_fd = 0;
    double max_closed_vs_fd = 0;
};

struct Theorem1Report {
    std::vector<Theorem1Row> rows;
    std::vector<TmaxRow> t_max_sweep;
    double max_closed_vs_fd = 0;
    double max_closed_vs_time_ordered = 0;
};

/// Closed-form Jacobian against central finite differences of the solver
/// and against the time-ordered product, plus the sensitivity of the
/// agreement to t_max.
[[nodiscard]] Theorem1Report verify_theorem1(const ExperimentConfig& cfg,
                                             const TargetPrior& prior, std::uint64_t seed);

struct OrderRow {
    Scheme scheme = Scheme::Midpoint;
    std::vector<int> n_steps;
    std::vector<double> error;      ///< RMS terminal error over the test points
    std::vector<double> ratio;      ///< error[i - 1] / error[i]
    std::vector<double> min_ratio;  ///< worst single-point ratio per halving
    std::vector<double> max_ratio;
};

struct OrderReport {
    int reference_steps = 0;
    std::vector<OrderRow> rows;
};

/// Terminal errors against an RK4 reference solve with `reference_steps`,
/// for every scheme at each step count in `steps` (ascending).
[[nodiscard]] OrderReport verify_order(const FlowField& field, const std::vector<int>& steps,
                                       int reference_steps, int points, std::uint64_t seed);

[[nodiscard]] nlohmann::json to_json(const RoutesReport& r);
[[nodiscard]] nlohmann::json to_json(const Theorem1Report& r);
[[nodiscard]] nlohmann::json to_json(const OrderReport& r);

[[nodiscard]] std::string summary(const RoutesReport& r);
[[nodiscard]] std::string summary(const Theorem1Report& r);
[[nodiscard]] std::string summary(const OrderReport& r);

} // namespace dflow::harness

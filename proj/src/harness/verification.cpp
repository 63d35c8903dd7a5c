#include "dflow/harness/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "dflow/harness/report.hpp"
#include "dflow/optimize.hpp"

namespace dflow::harness {

double relative_error(const Vec& a, const Vec& b)
{
    const double nb = b.norm();
    return nb > 0.0 ? (a - b).norm() / nb : a.norm();
}

double relative_error(const Mat& a, const Mat& b)
{
    const double nb = b.norm();
    return nb > 0.0 ? (a - b).norm() / nb : a.norm();
}

namespace {

Vec fd_gradient(const FlowField& field, const Vec& x0, const Vec& y, int n, Scheme scheme,
                double h)
{
    Vec g(x0.size());
    for (Eigen::Index j = 0; j < x0.size(); ++j) {
        Vec xp = x0;
        Vec xm = x0;
        xp[j] += h;
        xm[j] -= h;
        const double fp = (solve_forward_terminal(field, xp, n, scheme) - y).squaredNorm();
        const double fm = (solve_forward_terminal(field, xm, n, scheme) - y).squaredNorm();
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

FlowField field_for(const ExperimentConfig& cfg, const TargetPrior& prior, double t_max)
{
    ExperimentConfig c = cfg;
    c.t_max = t_max;
    return {prior, make_scheduler(c)};
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

} // namespace

RoutesReport verify_routes(const FlowField& field, int pairs, int n_steps, Scheme scheme,
                           std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    RoutesReport out;
    for (int p = 0; p < pairs; ++p) {
        RouteRow row;
        row.x0 = init_noise(field.dim(), rng());
        row.y = field.prior().sample(rng);
        const auto traj = solve_forward(field, row.x0, n_steps, scheme);
        const Vec g1 = 2.0 * (traj.terminal() - row.y);

        const Vec discrete = discrete_adjoint(field, traj, g1);
        const Vec continuous = continuous_adjoint(field, traj, g1);
        const Vec fd = fd_gradient(field, row.x0, row.y, n_steps, scheme, 1e-6);
        const Mat j = *jacobian_closed_form(field, traj).jacobian;
        const Vec closed = j.transpose() * g1;

        row.discrete_vs_fd = relative_error(discrete, fd);
        row.discrete_vs_continuous = relative_error(continuous, discrete);
        row.discrete_vs_closed_form = relative_error(closed, discrete);
        out.max_discrete_vs_fd = std::max(out.max_discrete_vs_fd, row.discrete_vs_fd);
        out.max_discrete_vs_continuous =
            std::max(out.max_discrete_vs_continuous, row.discrete_vs_continuous);
        out.max_discrete_vs_closed_form =
            std::max(out.max_discrete_vs_closed_form, row.discrete_vs_closed_form);
        out.rows.push_back(std::move(row));
    }
    return out;
}

Theorem1Report verify_theorem1(const ExperimentConfig& cfg, const TargetPrior& prior,
                               std::uint64_t seed)
{
    const int n = cfg.verify_n_steps;
    Theorem1Report out;
    std::vector<Vec> points;
    std::mt19937_64 rng(seed);
    for (int p = 0; p < cfg.verify_pairs; ++p) {
        points.push_back(init_noise(prior.dim(), rng()));
    }

    const FlowField field = field_for(cfg, prior, cfg.t_max);
    for (const Vec& x0 : points) {
        Theorem1Row row;
        row.x0 = x0;
        const auto traj = solve_forward(field, x0, n, cfg.scheme);
        const auto exponent = closed_form_exponent(field, traj);
        const Mat j = field.scheduler().sigma(field.t_max()) * symmetric_expm(exponent.exponent);
        const Mat fd = *jacobian_finite_difference(field, x0, n, cfg.scheme).jacobian;
        const auto fine = solve_forward(field, x0, exponent.n_steps, cfg.scheme);
        const Mat ordered = jacobian_time_ordered(field, fine);

        row.closed_vs_fd = relative_error(j, fd);
        row.closed_vs_time_ordered = relative_error(j, ordered);
        row.asymmetry = (j - j.transpose()).cwiseAbs().maxCoeff();
        row.min_eigenvalue =
            Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (j + j.transpose())).eigenvalues().minCoeff();
        row.quadrature_steps = exponent.n_steps;
        out.max_closed_vs_fd = std::max(out.max_closed_vs_fd, row.closed_vs_fd);
        out.max_closed_vs_time_ordered =
            std::max(out.max_closed_vs_time_ordered, row.closed_vs_time_ordered);
        out.rows.push_back(std::move(row));
    }

    for (double t_max : cfg.t_max_sweep) {
        const FlowField f = field_for(cfg, prior, t_max);
        TmaxRow row;
        row.t_max = t_max;
        for (const Vec& x0 : points) {
            const auto traj = solve_forward(f, x0, n, cfg.scheme);
            const Mat j = *jacobian_closed_form(f, traj).jacobian;
            const Mat fd = *jacobian_finite_difference(f, x0, n, cfg.scheme).jacobian;
            const double e = relative_error(j, fd);
            row.mean_closed_vs_fd += e / static_cast<double>(points.size());
            row.max_closed_vs_fd = std::max(row.max_closed_vs_fd, e);
        }
        out.t_max_sweep.push_back(row);
    }
    return out;
}

OrderReport verify_order(const FlowField& field, const std::vector<int>& steps,
                         int reference_steps, int points, std::uint64_t seed)
{
    OrderReport out;
    out.reference_steps = reference_steps;
    std::mt19937_64 rng(seed);
    std::vector<Vec> x0s;
    std::vector<Vec> refs;
    for (int p = 0; p < points; ++p) {
        x0s.push_back(init_noise(field.dim(), rng()));
        refs.push_back(solve_forward_terminal(field, x0s.back(), reference_steps, Scheme::RK4));
    }
    for (Scheme scheme : {Scheme::Euler, Scheme::Midpoint, Scheme::RK4}) {
        OrderRow row;
        row.scheme = scheme;
        row.n_steps = steps;
        std::vector<std::vector<double>> per_point(steps.size());
        for (int n : steps) {
            double sq = 0.0;
            std::vector<double> errs;
            for (int p = 0; p < points; ++p) {
                const double e = (solve_forward_terminal(field, x0s[p], n, scheme) - refs[p]).norm();
                errs.push_back(e);
                sq += e * e;
            }
            per_point[row.error.size()] = errs;
            row.error.push_back(std::sqrt(sq / points));
        }
        for (std::size_t i = 1; i < steps.size(); ++i) {
            row.ratio.push_back(row.error[i - 1] / row.error[i]);
            double lo = INFINITY;
            double hi = 0.0;
            for (int p = 0; p < points; ++p) {
                const double r = per_point[i - 1][p] / per_point[i][p];
                lo = std::min(lo, r);
                hi = std::max(hi, r);
            }
            row.min_ratio.push_back(lo);
            row.max_ratio.push_back(hi);
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

nlohmann::json to_json(const RoutesReport& r)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"x0", vec_json(row.x0)},
                        {"y", vec_json(row.y)},
                        {"discrete_vs_fd", row.discrete_vs_fd},
                        {"discrete_vs_continuous", row.discrete_vs_continuous},
                        {"discrete_vs_closed_form", row.discrete_vs_closed_form}});
    }
    return {{"suite", "routes"},
            {"rows", rows},
            {"max_discrete_vs_fd", r.max_discrete_vs_fd},
            {"max_discrete_vs_continuous", r.max_discrete_vs_continuous},
            {"max_discrete_vs_closed_form", r.max_discrete_vs_closed_form}};
}

nlohmann::json to_json(const Theorem1Report& r)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"x0", vec_json(row.x0)},
                        {"closed_vs_fd", row.closed_vs_fd},
                        {"closed_vs_time_ordered", row.closed_vs_time_ordered},
                        {"asymmetry", row.asymmetry},
                        {"min_eigenvalue", row.min_eigenvalue},
                        {"quadrature_steps", row.quadrature_steps}});
    }
    nlohmann::json sweep = nlohmann::json::array();
    for (const auto& row : r.t_max_sweep) {
        sweep.push_back({{"t_max", row.t_max},
                         {"mean_closed_vs_fd", row.mean_closed_vs_fd},
                         {"max_closed_vs_fd", row.max_closed_vs_fd}});
    }
    return {{"suite", "theorem1"},
            {"rows", rows},
            {"t_max_sweep", sweep},
            {"max_closed_vs_fd", r.max_closed_vs_fd},
            {"max_closed_vs_time_ordered", r.max_closed_vs_time_ordered}};
}

nlohmann::json to_json(const OrderReport& r)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"scheme", to_string(row.scheme)},
                        {"n_steps", row.n_steps},
                        {"error", row.error},
                        {"ratio", row.ratio},
                        {"min_ratio", row.min_ratio},
                        {"max_ratio", row.max_ratio}});
    }
    return {{"suite", "order"}, {"reference_steps", r.reference_steps}, {"rows", rows}};
}

std::string summary(const RoutesReport& r)
{
    std::ostringstream out;
    out << "gradient routes (" << r.rows.size() << " pairs)\n"
        << "  pair  discrete/fd  discrete/continuous  discrete/closed_form\n";
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& row = r.rows[i];
        char line[128];
        std::snprintf(line, sizeof line, "  %4zu  %11.3e  %19.3e  %20.3e\n", i,
                      row.discrete_vs_fd, row.discrete_vs_continuous,
                      row.discrete_vs_closed_form);
        out << line;
    }
    out << "  max   " << fmt(r.max_discrete_vs_fd) << "  " << fmt(r.max_discrete_vs_continuous)
        << "  " << fmt(r.max_discrete_vs_closed_form) << "\n";
    return out.str();
}

std::string summary(const Theorem1Report& r)
{
    std::ostringstream out;
    out << "closed-form Jacobian (" << r.rows.size() << " points)\n"
        << "  point  closed/fd   closed/ordered  asymmetry   min_eig     quad_steps\n";
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& row = r.rows[i];
        char line[160];
        std::snprintf(line, sizeof line, "  %5zu  %.3e   %.3e       %.3e   %.3e   %d\n", i,
                      row.closed_vs_fd, row.closed_vs_time_ordered, row.asymmetry,
                      row.min_eigenvalue, row.quadrature_steps);
        out << line;
    }
    out << "  t_max sweep (closed/fd):\n";
    for (const auto& row : r.t_max_sweep) {
        char line[128];
        std::snprintf(line, sizeof line, "    t_max=%.6f  mean=%.3e  max=%.3e\n", row.t_max,
                      row.mean_closed_vs_fd, row.max_closed_vs_fd);
        out << line;
    }
    return out.str();
}

std::string summary(const OrderReport& r)
{
    std::ostringstream out;
    out << "solver order (reference: rk4, n=" << r.reference_steps << ")\n";
    for (const auto& row : r.rows) {
        out << "  " << to_string(row.scheme) << ":";
        for (std::size_t i = 0; i < row.n_steps.size(); ++i) {
            out << "  n=" << row.n_steps[i] << " err=" << fmt(row.error[i]);
            if (i > 0) {
                char buf[32];
                std::snprintf(buf, sizeof buf, " (x%.2f)", row.ratio[i - 1]);
                out << buf;
            }
        }
        out << "\n";
    }
    return out.str();
}

} // namespace dflow::harness

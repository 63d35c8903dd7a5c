#include "dflow/harness/report.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "dflow/errors.hpp"

namespace dflow::harness {

nlohmann::json vec_json(const Vec& v)
{
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vec json_vec(const nlohmann::json& j)
{
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json to_json(const ExperimentConfig& c)
{
    auto opt = [](const std::optional<double>& v) -> nlohmann::json {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    const auto& o = c.optimizer;
    return {
        {"experiment",
         {{"name", c.name}, {"seed", c.seed}, {"seeds", c.seeds}, {"optimize", c.optimize}}},
        {"prior",
         {{"kind", to_string(c.prior.kind)},
          {"dim", c.prior.dim},
          {"sep", c.prior.sep},
          {"s", c.prior.s},
          {"k", c.prior.k},
          {"spacing", c.prior.spacing},
          {"points", c.prior.points},
          {"radius", c.prior.radius},
          {"path", c.prior.path.string()},
          {"mean", vec_json(c.prior.mean)},
          {"variances", vec_json(c.prior.variances)}}},
        {"scheduler", {{"kind", c.scheduler}, {"t_max", c.t_max}}},
        {"solver", {{"scheme", to_string(c.scheme)}, {"n_steps", c.n_steps}}},
        {"cost",
         {{"kind", to_string(c.cost)},
          {"target", vec_json(c.target)},
          {"level", c.level},
          {"level_function", c.level_function},
          {"level_weights", vec_json(c.level_weights)},
          {"psnr_peak", opt(c.psnr_peak)},
          {"chi_d_sign", c.chi_d_printed_sign ? "printed" : "nll"}}},
        {"corruption",
         {{"kind", c.corruption},
          {"noise_sigma", c.noise_sigma},
          {"mask", c.mask},
          {"keep", c.mask_keep},
          {"factor", c.subsample_factor},
          {"kernel", vec_json(c.kernel)},
          {"kernel_file", c.kernel_file.string()}}},
        {"regularizer",
         {{"chi_d", c.effective_chi_d_weight()},
          {"source_nll", c.source_nll_weight},
          {"target_nll", c.target_nll_weight}}},
        {"init",
         {{"kind", c.init == InitKind::Blend ? "blend" : "noise"},
          {"alpha", c.effective_blend_alpha()},
          {"lift", to_string(c.lift)},
          {"backward_steps", c.effective_backward_steps()}}},
        {"optimizer",
         {{"max_outer_iters", o.max_outer_iters},
          {"inner_iters", o.inner_iters_per_step},
          {"history", o.lbfgs_history},
          {"line_search", o.line_search.kind == LineSearchKind::StrongWolfe ? "strong_wolfe"
                                                                            : "backtracking"},
          {"c1", o.line_search.c1},
          {"c2", o.line_search.c2},
          {"rho", o.line_search.rho},
          {"c", o.line_search.c},
          {"max_evals", o.line_search.max_evals},
          {"target", c.noise_matched_target ? nlohmann::json("noise") : opt(o.target_value)},
          {"grad_tol", o.grad_tol},
          {"route", to_string(c.route)}}},
        {"verify",
         {{"theorem1", c.verify_theorem1},
          {"routes", c.verify_routes},
          {"order", c.verify_order},
          {"n_steps", c.verify_n_steps},
          {"pairs", c.verify_pairs},
          {"order_reference", c.order_reference},
          {"order_steps", c.order_steps},
          {"t_max_sweep", c.t_max_sweep}}},
        {"output", {{"dir", c.out_dir.string()}, {"snapshots", c.write_snapshots}}},
    };
}

nlohmann::json to_json(const RunReport& r)
{
    nlohmann::json iterates = nlohmann::json::array();
    for (const auto& it : r.iterates) {
        iterates.push_back({{"outer", it.outer},
                            {"updates", it.updates},
                            {"cost", it.cost},
                            {"base_cost", it.base_cost},
                            {"grad_norm", it.grad_norm},
                            {"x0_norm", it.x0_norm},
                            {"step", it.step}});
    }
    const auto& o = r.config;
    return {{"iterates", iterates},
            {"final_x0", vec_json(r.final_x0)},
            {"final_x1", vec_json(r.final_x1)},
            {"final_cost", r.final_cost},
            {"final_base_cost", r.final_base_cost},
            {"stop_reason", to_string(r.stop_reason)},
            {"evaluations", r.evaluations},
            {"updates", r.updates},
            {"fallbacks", r.fallbacks},
            {"wall_time_s", r.wall_time_s},
            {"n_steps", r.n_steps},
            {"scheme", to_string(r.scheme)},
            {"route", to_string(r.route)},
            {"optimizer",
             {{"max_outer_iters", o.max_outer_iters},
              {"inner_iters", o.inner_iters_per_step},
              {"history", o.lbfgs_history},
              {"target_value",
               o.target_value ? nlohmann::json(*o.target_value) : nlohmann::json(nullptr)},
              {"grad_tol", o.grad_tol},
              {"seed", o.seed}}}};
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string iterates_csv(const RunReport& r)
{
    std::ostringstream out;
    out << "outer,updates,cost,base_cost,grad_norm,x0_norm,step\n";
    for (const auto& it : r.iterates) {
        out << it.outer << ',' << it.updates << ',' << format_double(it.cost) << ','
            << format_double(it.base_cost) << ',' << format_double(it.grad_norm) << ','
            << format_double(it.x0_norm) << ',' << format_double(it.step) << '\n';
    }
    return out.str();
}

std::string snapshots_csv(const FlowField& field, const RunReport& r)
{
    std::ostringstream out;
    out << "outer,t";
    for (int i = 0; i < field.dim(); ++i) {
        out << ",x_" << i;
    }
    out << '\n';
    for (const auto& it : r.iterates) {
        const auto traj = solve_forward(field, it.x0, r.n_steps, r.scheme);
        for (std::size_t k = 0; k < traj.grid.size(); ++k) {
            out << it.outer << ',' << format_double(traj.grid[k]);
            for (Eigen::Index i = 0; i < traj.states[k].size(); ++i) {
                out << ',' << format_double(traj.states[k][i]);
            }
            out << '\n';
        }
    }
    return out.str();
}

std::string text_summary(const RunReport& r)
{
    std::ostringstream out;
    char line[160];
    out << "stop_reason   " << to_string(r.stop_reason) << '\n';
    std::snprintf(line, sizeof line,
                  "final_cost    %.10g\nbase_cost     %.10g\n||x0||        %.6g\n", r.final_cost,
                  r.final_base_cost, r.final_x0.norm());
    out << line;
    out << "updates       " << r.updates << "  (evaluations " << r.evaluations << ", fallbacks "
        << r.fallbacks << ")\n";
    out << "solver        " << to_string(r.scheme) << ", n=" << r.n_steps << ", route "
        << to_string(r.route) << '\n';
    out << "  outer  updates  cost              grad_norm     ||x0||\n";
    for (const auto& it : r.iterates) {
        std::snprintf(line, sizeof line, "  %5d  %7d  %16.9e  %12.5e  %10.5g\n", it.outer,
                      it.updates, it.cost, it.grad_norm, it.x0_norm);
        out << line;
    }
    return out.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const auto id = std::hash<std::thread::id>{}(std::this_thread::get_id());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(id) + "." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FileNotFound("cannot open " + tmp.string() + " for writing");
        }
        out << content;
        out.flush();
        if (!out) {
            throw Error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace dflow::harness

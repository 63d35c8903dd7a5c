#include "dflow/harness/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include "dflow/errors.hpp"
#include "dflow/harness/report.hpp"
#include "dflow/harness/verification.hpp"

namespace dflow::harness {

namespace {

constexpr std::uint64_t hidden_source_salt = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t observation_salt = 0xD1B54A32D192ED03ULL;

CostSpec make_spec(const ExperimentConfig& cfg)
{
    CostSpec spec;
    spec.kind = cfg.cost;
    spec.level = cfg.level;
    spec.psnr_peak = cfg.psnr_peak;
    spec.chi_d_printed_sign = cfg.chi_d_printed_sign;
    if (cfg.cost == CostKind::LevelSet) {
        spec.level_function = cfg.level_function == "linear"
                                  ? LevelFunction::linear(cfg.level_weights)
                                  : LevelFunction::squared_norm();
    }
    if (cfg.effective_chi_d_weight() > 0.0) {
        spec.regularizers.push_back({RegularizerKind::ChiD, cfg.effective_chi_d_weight()});
    }
    if (cfg.source_nll_weight > 0.0) {
        spec.regularizers.push_back({RegularizerKind::SourceGaussianNLL, cfg.source_nll_weight});
    }
    if (cfg.target_nll_weight > 0.0) {
        spec.regularizers.push_back({RegularizerKind::TargetNLL, cfg.target_nll_weight});
    }
    return spec;
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

} // namespace

std::filesystem::path experiment_dir(const ExperimentConfig& cfg) { return cfg.out_dir / cfg.name; }

Problem build_problem(const ExperimentConfig& cfg, std::shared_ptr<const TargetPrior> prior,
                      std::uint64_t seed)
{
    const int d = prior->dim();
    Problem p{prior, FlowField(prior, make_scheduler(cfg)), make_spec(cfg), std::nullopt,
              Vec{}, Vec{}, Vec{}, cfg.optimizer};
    p.optimizer.seed = seed;

    Vec blend_source;
    if (cfg.is_inverse_problem()) {
        p.op = make_corruption(cfg, d);
        const auto obs = synth_observation(*prior, *p.op, seed ^ observation_salt);
        p.x_star = obs.x_star;
        p.spec.observation = obs.y;
        p.spec.corruption = p.op;
        blend_source = lift_observation(p.field, *p.op, obs.y, cfg.lift);
        if (cfg.noise_matched_target) {
            const Vec clean = p.op->apply(obs.x_star);
            p.optimizer.target_value =
                cfg.cost == CostKind::NegPSNR
                    ? psnr(clean, obs.y, p.spec.effective_psnr_peak())
                    : (clean - obs.y).squaredNorm();
        }
    } else if (cfg.cost == CostKind::ReversedSampling) {
        if (cfg.target.size()) {
            p.spec.observation = cfg.target;
        } else {
            p.hidden_x0 = init_noise(d, seed ^ hidden_source_salt);
            p.spec.observation = solve_forward_terminal(p.field, p.hidden_x0, cfg.n_steps,
                                                        cfg.scheme);
        }
        blend_source = p.spec.observation;
    }

    if (cfg.init == InitKind::Blend) {
        if (blend_source.size() == 0) {
            throw ConfigError("blend initialization needs an observation or target");
        }
        p.x0_init = init_blend(p.field, blend_source, cfg.effective_blend_alpha(), seed,
                               cfg.effective_backward_steps(), cfg.scheme);
    } else {
        p.x0_init = init_noise(d, seed);
    }
    return p;
}

nlohmann::json run_metrics(const Problem& p, const RunReport& r)
{
    nlohmann::json m;
    const Vec& x1 = r.final_x1;
    m["x0_norm"] = r.final_x0.norm();
    m["x0_norm_over_sqrt_d"] = r.final_x0.norm() / std::sqrt(static_cast<double>(x1.size()));
    switch (p.spec.kind) {
    case CostKind::Reconstruction:
    case CostKind::NegPSNR:
        m["psnr"] = psnr(p.op->apply(x1), p.spec.observation, p.spec.effective_psnr_peak());
        m["recovery_error"] = (x1 - p.x_star).norm();
        break;
    case CostKind::ReversedSampling:
        m["terminal_miss"] = (x1 - p.spec.observation).norm();
        if (p.hidden_x0.size()) {
            m["source_error"] = (r.final_x0 - p.hidden_x0).norm();
        }
        break;
    case CostKind::LevelSet:
        m["level_residual"] = std::abs(p.spec.level_function->value(x1) - p.spec.level);
        break;
    }
    return m;
}

CellResult run_cell(const ExperimentConfig& cfg, std::shared_ptr<const TargetPrior> prior,
                    std::uint64_t seed, bool write_files)
{
    CellResult cell;
    cell.seed = seed;
    try {
        const Problem p = build_problem(cfg, std::move(prior), seed);
        cell.report = optimize(p.field, p.spec, p.optimizer, p.x0_init, cfg.n_steps, cfg.scheme,
                               cfg.route);
        cell.metrics = run_metrics(p, cell.report);
        cell.ok = true;
        if (write_files) {
            const auto dir = experiment_dir(cfg) / seed_dir_name(seed);
            nlohmann::json doc = {
                {"schema_version", report_schema_version},
                {"experiment", cfg.name},
                {"seed", seed},
                {"config", to_json(cfg)},
                {"problem",
                 {{"x0_init", vec_json(p.x0_init)},
                  {"observation", vec_json(p.spec.observation)},
                  {"x_star", vec_json(p.x_star)},
                  {"hidden_x0", vec_json(p.hidden_x0)},
                  {"target_value", p.optimizer.target_value
                                       ? nlohmann::json(*p.optimizer.target_value)
                                       : nlohmann::json(nullptr)}}},
                {"run", to_json(cell.report)},
                {"metrics", cell.metrics},
            };
            write_atomic(dir / "report.json", doc.dump(2) + "\n");
            write_atomic(dir / "summary.txt", text_summary(cell.report) + "metrics       " +
                                                  cell.metrics.dump() + "\n");
            write_atomic(dir / "iterates.csv", iterates_csv(cell.report));
            if (cfg.write_snapshots) {
                write_atomic(dir / "snapshots.csv", snapshots_csv(p.field, cell.report));
            }
        }
    } catch (const NonFiniteState& e) {
        cell.error = e.what();
    } catch (const NonFiniteCost& e) {
        cell.error = e.what();
    }
    return cell;
}

BatchResult run_batch(const ExperimentConfig& cfg, int jobs, bool write_files)
{
    cfg.validate();
    const auto prior = std::make_shared<const TargetPrior>(make_prior(cfg.prior));
    BatchResult out;
    out.cells.resize(cfg.seeds);

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (int i = next++; i < cfg.seeds; i = next++) {
            try {
                out.cells[i] = run_cell(cfg, prior, cfg.seed + i, write_files);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    const int n_threads = std::max(1, std::min(jobs, cfg.seeds));
    std::vector<std::thread> threads;
    for (int t = 1; t < n_threads; ++t) {
        threads.emplace_back(worker);
    }
    worker();
    for (auto& t : threads) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    nlohmann::json cells = nlohmann::json::array();
    std::ostringstream text;
    text << "experiment " << cfg.name << ": " << cfg.seeds << " seed(s)\n"
         << "  seed        stop_reason           final_cost  ||x0||      metrics\n";
    for (const auto& c : out.cells) {
        if (!c.ok) {
            out.exit_code = 2;
            cells.push_back({{"seed", c.seed}, {"ok", false}, {"error", c.error}});
            text << "  " << c.seed << "  FAILED  " << c.error << "\n";
            continue;
        }
        cells.push_back({{"seed", c.seed},
                         {"ok", true},
                         {"stop_reason", to_string(c.report.stop_reason)},
                         {"final_cost", c.report.final_cost},
                         {"updates", c.report.updates},
                         {"metrics", c.metrics}});
        char line[160];
        std::snprintf(line, sizeof line, "  %-10llu  %-20s  %11.4e  %-10.4g  ",
                      static_cast<unsigned long long>(c.seed),
                      to_string(c.report.stop_reason).c_str(), c.report.final_cost,
                      c.report.final_x0.norm());
        text << line << c.metrics.dump() << "\n";
    }
    if (write_files) {
        const nlohmann::json doc = {{"schema_version", report_schema_version},
                                    {"experiment", cfg.name},
                                    {"config", to_json(cfg)},
                                    {"cells", cells}};
        write_atomic(experiment_dir(cfg) / "batch.json", doc.dump(2) + "\n");
        write_atomic(experiment_dir(cfg) / "batch.txt", text.str());
    }
    return out;
}

Suite parse_suite(const std::string& name)
{
    if (name == "theorem1") return Suite::Theorem1;
    if (name == "routes") return Suite::Routes;
    if (name == "order") return Suite::Order;
    throw InvalidArgument("unknown verification suite '" + name + "' (theorem1|routes|order)");
}

std::string to_string(Suite suite)
{
    switch (suite) {
    case Suite::Theorem1: return "theorem1";
    case Suite::Routes: return "routes";
    case Suite::Order: return "order";
    }
    return "unknown";
}

std::string run_verification(const ExperimentConfig& cfg, Suite suite, bool write_files)
{
    cfg.validate();
    const auto prior = std::make_shared<const TargetPrior>(make_prior(cfg.prior));
    const FlowField field(prior, make_scheduler(cfg));
    nlohmann::json body;
    std::string text;
    switch (suite) {
    case Suite::Theorem1: {
        const auto r = verify_theorem1(cfg, *prior, cfg.seed);
        body = to_json(r);
        text = summary(r);
        break;
    }
    case Suite::Routes: {
        const auto r = verify_routes(field, cfg.verify_pairs, cfg.verify_n_steps, cfg.scheme,
                                     cfg.seed);
        body = to_json(r);
        text = summary(r);
        break;
    }
    case Suite::Order: {
        const auto r = verify_order(field, cfg.order_steps, cfg.order_reference,
                                    cfg.verify_pairs, cfg.seed);
        body = to_json(r);
        text = summary(r);
        break;
    }
    }
    if (write_files) {
        const std::string stem = "verify_" + to_string(suite);
        const nlohmann::json doc = {{"schema_version", report_schema_version},
                                    {"experiment", cfg.name},
                                    {"config", to_json(cfg)},
                                    {"result", body}};
        write_atomic(experiment_dir(cfg) / (stem + ".json"), doc.dump(2) + "\n");
        write_atomic(experiment_dir(cfg) / (stem + ".txt"), text);
    }
    return text;
}

std::string run_sampling(const ExperimentConfig& cfg, bool write_files)
{
    cfg.validate();
    const auto prior = std::make_shared<const TargetPrior>(make_prior(cfg.prior));
    const FlowField field(prior, make_scheduler(cfg));
    const int d = field.dim();
    std::ostringstream csv;
    csv << "seed";
    for (int i = 0; i < d; ++i) csv << ",x0_" << i;
    for (int i = 0; i < d; ++i) csv << ",x1_" << i;
    csv << ",log_density\n";
    for (int k = 0; k < cfg.seeds; ++k) {
        const std::uint64_t seed = cfg.seed + k;
        const Vec x0 = init_noise(d, seed);
        const auto traj = solve_forward_with_logdensity(field, x0, cfg.n_steps, cfg.scheme);
        csv << seed;
        for (int i = 0; i < d; ++i) csv << ',' << format_double(x0[i]);
        for (int i = 0; i < d; ++i) csv << ',' << format_double(traj.terminal()[i]);
        csv << ',' << format_double(traj.log_density->back()) << '\n';
    }
    if (write_files) {
        write_atomic(experiment_dir(cfg) / "samples.csv", csv.str());
    }
    return csv.str();
}

int run_experiment(const ExperimentConfig& cfg, int jobs)
{
    cfg.validate();
    if (cfg.verify_theorem1) (void)run_verification(cfg, Suite::Theorem1);
    if (cfg.verify_routes) (void)run_verification(cfg, Suite::Routes);
    if (cfg.verify_order) (void)run_verification(cfg, Suite::Order);
    if (!cfg.optimize) {
        return 0;
    }
    return run_batch(cfg, jobs).exit_code;
}

} // namespace dflow::harness

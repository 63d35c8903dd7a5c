#include "dflow/harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

#include "dflow/errors.hpp"
#include "dflow/harness/matrix_io.hpp"

namespace dflow::harness {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return s;
}

double to_double(const std::string& v)
{
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) {
        throw ConfigError("expected a number, got '" + v + "'");
    }
    return out;
}

long long to_integer(const std::string& v)
{
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) {
        throw ConfigError("expected an integer, got '" + v + "'");
    }
    return out;
}

int to_int(const std::string& v) { return static_cast<int>(to_integer(v)); }

bool to_bool(const std::string& v)
{
    const auto s = lower(v);
    if (s == "true" || s == "yes" || s == "on" || s == "1") {
        return true;
    }
    if (s == "false" || s == "no" || s == "off" || s == "0") {
        return false;
    }
    throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

Vec to_vec(const std::string& v)
{
    const auto items = split_list(v);
    Vec out(static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = to_double(items[i]);
    }
    return out;
}

std::optional<double> to_optional(const std::string& v)
{
    const auto s = lower(v);
    if (s == "auto" || s == "none" || s.empty()) {
        return std::nullopt;
    }
    return to_double(v);
}

std::filesystem::path resolve(const std::string& v, const std::filesystem::path& base)
{
    std::filesystem::path p(v);
    if (p.is_relative() && !base.empty()) {
        p = base / p;
    }
    return p;
}

CostKind to_cost(const std::string& v)
{
    for (auto k : {CostKind::Reconstruction, CostKind::NegPSNR, CostKind::LevelSet,
                   CostKind::ReversedSampling}) {
        if (to_string(k) == v) {
            return k;
        }
    }
    throw ConfigError("unknown cost kind '" + v + "'");
}

template <class F>
auto rethrow_as_config(F&& f)
{
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

using Setter = std::function<void(ExperimentConfig&, const std::string&,
                                  const std::filesystem::path&)>;

struct Key {
    const char* name;
    const char* default_doc;
    Setter set;
};

const std::vector<Key>& registry()
{
    using C = ExperimentConfig;
    using P = std::filesystem::path;
    static const std::vector<Key> keys = {
        {"experiment.name", "dflow", [](C& c, const std::string& v, const P&) { c.name = v; }},
        {"experiment.seed", "0",
         [](C& c, const std::string& v, const P&) {
             c.seed = static_cast<std::uint64_t>(to_integer(v));
         }},
        {"experiment.seeds", "1", [](C& c, const std::string& v, const P&) { c.seeds = to_int(v); }},
        {"experiment.optimize", "true",
         [](C& c, const std::string& v, const P&) { c.optimize = to_bool(v); }},

        {"prior.kind", "two_gaussians",
         [](C& c, const std::string& v, const P&) {
             c.prior.kind = rethrow_as_config([&] { return parse_prior_recipe(v); });
         }},
        {"prior.dim", "2", [](C& c, const std::string& v, const P&) { c.prior.dim = to_int(v); }},
        {"prior.sep", "4", [](C& c, const std::string& v, const P&) { c.prior.sep = to_double(v); }},
        {"prior.s", "0.5", [](C& c, const std::string& v, const P&) { c.prior.s = to_double(v); }},
        {"prior.k", "3", [](C& c, const std::string& v, const P&) { c.prior.k = to_int(v); }},
        {"prior.spacing", "2",
         [](C& c, const std::string& v, const P&) { c.prior.spacing = to_double(v); }},
        {"prior.points", "8",
         [](C& c, const std::string& v, const P&) { c.prior.points = to_int(v); }},
        {"prior.radius", "1",
         [](C& c, const std::string& v, const P&) { c.prior.radius = to_double(v); }},
        {"prior.path", "(none)",
         [](C& c, const std::string& v, const P& b) { c.prior.path = resolve(v, b); }},
        {"prior.mean", "zeros",
         [](C& c, const std::string& v, const P&) { c.prior.mean = to_vec(v); }},
        {"prior.variances", "ones",
         [](C& c, const std::string& v, const P&) { c.prior.variances = to_vec(v); }},

        {"scheduler.kind", "cond_ot",
         [](C& c, const std::string& v, const P&) {
             if (v != "cond_ot" && v != "vp") {
                 throw ConfigError("unknown scheduler '" + v + "' (cond_ot|vp)");
             }
             c.scheduler = v;
         }},
        {"scheduler.t_max", "0.999",
         [](C& c, const std::string& v, const P&) { c.t_max = to_double(v); }},

        {"solver.scheme", "midpoint",
         [](C& c, const std::string& v, const P&) {
             c.scheme = rethrow_as_config([&] { return parse_scheme(v); });
         }},
        {"solver.n_steps", "3", [](C& c, const std::string& v, const P&) { c.n_steps = to_int(v); }},

        {"cost.kind", "reversed_sampling",
         [](C& c, const std::string& v, const P&) { c.cost = to_cost(v); }},
        {"cost.target", "(hidden reachable point)",
         [](C& c, const std::string& v, const P&) { c.target = to_vec(v); }},
        {"cost.level", "1", [](C& c, const std::string& v, const P&) { c.level = to_double(v); }},
        {"cost.level_function", "squared_norm",
         [](C& c, const std::string& v, const P&) {
             if (v != "squared_norm" && v != "linear") {
                 throw ConfigError("unknown level function '" + v + "' (squared_norm|linear)");
             }
             c.level_function = v;
         }},
        {"cost.level_weights", "(none)",
         [](C& c, const std::string& v, const P&) { c.level_weights = to_vec(v); }},
        {"cost.psnr_peak", "auto",
         [](C& c, const std::string& v, const P&) { c.psnr_peak = to_optional(v); }},
        {"cost.chi_d_sign", "nll",
         [](C& c, const std::string& v, const P&) {
             if (v != "nll" && v != "printed") {
                 throw ConfigError("cost.chi_d_sign must be nll or printed");
             }
             c.chi_d_printed_sign = v == "printed";
         }},

        {"corruption.kind", "identity",
         [](C& c, const std::string& v, const P&) {
             if (v != "identity" && v != "mask" && v != "subsample" && v != "blur1d") {
                 throw ConfigError("unknown corruption '" + v +
                                   "' (identity|mask|subsample|blur1d)");
             }
             c.corruption = v;
         }},
        {"corruption.noise_sigma", "0",
         [](C& c, const std::string& v, const P&) { c.noise_sigma = to_double(v); }},
        {"corruption.mask", "center_half",
         [](C& c, const std::string& v, const P&) {
             if (v != "center_half" && v != "keep") {
                 throw ConfigError("corruption.mask must be center_half or keep");
             }
             c.mask = v;
         }},
        {"corruption.keep", "(none)",
         [](C& c, const std::string& v, const P&) {
             c.mask_keep.clear();
             for (const auto& item : split_list(v)) {
                 c.mask_keep.push_back(to_int(item));
             }
             c.mask = "keep";
         }},
        {"corruption.factor", "2",
         [](C& c, const std::string& v, const P&) { c.subsample_factor = to_int(v); }},
        {"corruption.kernel", "0.25, 0.5, 0.25",
         [](C& c, const std::string& v, const P&) { c.kernel = to_vec(v); }},
        {"corruption.kernel_file", "(none)",
         [](C& c, const std::string& v, const P& b) { c.kernel_file = resolve(v, b); }},

        {"regularizer.chi_d", "auto",
         [](C& c, const std::string& v, const P&) { c.chi_d_weight = to_optional(v); }},
        {"regularizer.source_nll", "0",
         [](C& c, const std::string& v, const P&) { c.source_nll_weight = to_double(v); }},
        {"regularizer.target_nll", "0",
         [](C& c, const std::string& v, const P&) { c.target_nll_weight = to_double(v); }},

        {"init.kind", "noise",
         [](C& c, const std::string& v, const P&) {
             if (v == "noise") {
                 c.init = InitKind::Noise;
             } else if (v == "blend") {
                 c.init = InitKind::Blend;
             } else {
                 throw ConfigError("init.kind must be noise or blend");
             }
         }},
        {"init.alpha", "auto",
         [](C& c, const std::string& v, const P&) { c.blend_alpha = to_optional(v); }},
        {"init.lift", "mean_fill",
         [](C& c, const std::string& v, const P&) {
             c.lift = rethrow_as_config([&] { return parse_lift(v); });
         }},
        {"init.backward_steps", "auto",
         [](C& c, const std::string& v, const P&) {
             if (lower(v) == "auto") {
                 c.backward_steps.reset();
             } else {
                 c.backward_steps = to_int(v);
             }
         }},

        {"optimizer.max_outer_iters", "50",
         [](C& c, const std::string& v, const P&) { c.optimizer.max_outer_iters = to_int(v); }},
        {"optimizer.inner_iters", "20",
         [](C& c, const std::string& v, const P&) {
             c.optimizer.inner_iters_per_step = to_int(v);
         }},
        {"optimizer.history", "10",
         [](C& c, const std::string& v, const P&) { c.optimizer.lbfgs_history = to_int(v); }},
        {"optimizer.line_search", "strong_wolfe",
         [](C& c, const std::string& v, const P&) {
             if (v == "strong_wolfe") {
                 c.optimizer.line_search.kind = LineSearchKind::StrongWolfe;
             } else if (v == "backtracking") {
                 c.optimizer.line_search.kind = LineSearchKind::Backtracking;
             } else {
                 throw ConfigError("optimizer.line_search must be strong_wolfe or backtracking");
             }
         }},
        {"optimizer.c1", "1e-4",
         [](C& c, const std::string& v, const P&) { c.optimizer.line_search.c1 = to_double(v); }},
        {"optimizer.c2", "0.9",
         [](C& c, const std::string& v, const P&) { c.optimizer.line_search.c2 = to_double(v); }},
        {"optimizer.rho", "0.5",
         [](C& c, const std::string& v, const P&) { c.optimizer.line_search.rho = to_double(v); }},
        {"optimizer.c", "1e-4",
         [](C& c, const std::string& v, const P&) { c.optimizer.line_search.c = to_double(v); }},
        {"optimizer.max_evals", "40",
         [](C& c, const std::string& v, const P&) {
             c.optimizer.line_search.max_evals = to_int(v);
         }},
        {"optimizer.target", "none",
         [](C& c, const std::string& v, const P&) {
             c.noise_matched_target = lower(v) == "noise";
             c.optimizer.target_value =
                 c.noise_matched_target ? std::nullopt : to_optional(v);
         }},
        {"optimizer.grad_tol", "1e-8",
         [](C& c, const std::string& v, const P&) { c.optimizer.grad_tol = to_double(v); }},
        {"optimizer.route", "discrete",
         [](C& c, const std::string& v, const P&) {
             c.route = rethrow_as_config([&] { return parse_route(v); });
         }},

        {"verify.theorem1", "false",
         [](C& c, const std::string& v, const P&) { c.verify_theorem1 = to_bool(v); }},
        {"verify.routes", "false",
         [](C& c, const std::string& v, const P&) { c.verify_routes = to_bool(v); }},
        {"verify.order", "false",
         [](C& c, const std::string& v, const P&) { c.verify_order = to_bool(v); }},
        {"verify.n_steps", "200",
         [](C& c, const std::string& v, const P&) { c.verify_n_steps = to_int(v); }},
        {"verify.pairs", "20",
         [](C& c, const std::string& v, const P&) { c.verify_pairs = to_int(v); }},
        {"verify.order_reference", "4096",
         [](C& c, const std::string& v, const P&) { c.order_reference = to_int(v); }},
        {"verify.order_steps", "16, 32, 64, 128",
         [](C& c, const std::string& v, const P&) {
             c.order_steps.clear();
             for (const auto& item : split_list(v)) {
                 c.order_steps.push_back(to_int(item));
             }
         }},
        {"verify.t_max_sweep", "0.99, 0.999, 0.9999",
         [](C& c, const std::string& v, const P&) {
             const Vec s = to_vec(v);
             c.t_max_sweep.assign(s.data(), s.data() + s.size());
         }},

        {"output.dir", "results",
         [](C& c, const std::string& v, const P& b) { c.out_dir = resolve(v, b); }},
        {"output.snapshots", "true",
         [](C& c, const std::string& v, const P&) { c.write_snapshots = to_bool(v); }},
    };
    return keys;
}

} // namespace

bool ExperimentConfig::is_inverse_problem() const
{
    return cost == CostKind::Reconstruction || cost == CostKind::NegPSNR;
}

double ExperimentConfig::effective_chi_d_weight() const
{
    if (chi_d_weight) {
        return *chi_d_weight;
    }
    return noise_sigma > 0.0 ? 0.01 : 0.0;
}

double ExperimentConfig::effective_blend_alpha() const
{
    if (blend_alpha) {
        return *blend_alpha;
    }
    return is_inverse_problem() ? 0.1 : 0.0;
}

int ExperimentConfig::effective_backward_steps() const
{
    return backward_steps.value_or(n_steps);
}

void ExperimentConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (seeds < 1) fail("experiment.seeds must be at least 1");
    if (prior.dim < 1) fail("prior.dim must be at least 1");
    if (!(t_max > 0.0 && t_max < 1.0)) fail("scheduler.t_max must lie in (0, 1)");
    if (n_steps < 1) fail("solver.n_steps must be at least 1");
    if (effective_backward_steps() < 1) fail("init.backward_steps must be at least 1");
    if (noise_sigma < 0.0) fail("corruption.noise_sigma must be nonnegative");
    if (effective_chi_d_weight() < 0.0 || source_nll_weight < 0.0 || target_nll_weight < 0.0) {
        fail("regularizer weights must be nonnegative");
    }
    const double a = effective_blend_alpha();
    if (!(a >= 0.0 && a <= 1.0)) fail("init.alpha must lie in [0, 1]");
    if (prior.kind == PriorRecipeKind::EmpiricalFromFile && !std::filesystem::exists(prior.path)) {
        throw FileNotFound("prior.path " + prior.path.string());
    }
    if (!kernel_file.empty() && !std::filesystem::exists(kernel_file)) {
        throw FileNotFound("corruption.kernel_file " + kernel_file.string());
    }
    if (target.size() && target.size() != prior.dim) {
        fail("cost.target has " + std::to_string(target.size()) + " entries, prior.dim is " +
             std::to_string(prior.dim));
    }
    if (level_function == "linear" && level_weights.size() != prior.dim) {
        fail("cost.level_weights must have prior.dim entries for a linear level function");
    }
    if (noise_matched_target && !is_inverse_problem()) {
        fail("optimizer.target = noise needs a reconstruction or neg_psnr cost");
    }
    if (verify_n_steps < 1 || verify_pairs < 1 || order_reference < 1) {
        fail("verification step counts must be positive");
    }
    for (int n : order_steps) {
        if (n < 1) fail("verify.order_steps entries must be positive");
    }
    for (double t : t_max_sweep) {
        if (!(t > 0.0 && t < 1.0)) fail("verify.t_max_sweep entries must lie in (0, 1)");
    }
    rethrow_as_config([&] {
        optimizer.validate();
        return 0;
    });
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir)
{
    for (const auto& k : registry()) {
        if (key == k.name) {
            k.set(cfg, value, base_dir);
            return;
        }
    }
    throw ConfigError("unknown key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const std::vector<std::string>& overrides)
{
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) {
            continue;
        }
        try {
            if (body.front() == '[') {
                if (body.back() != ']' || body.size() < 3) {
                    throw ConfigError("malformed section header '" + body + "'");
                }
                section = trim(body.substr(1, body.size() - 2));
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("expected 'key = value', got '" + body + "'");
            }
            const std::string key = trim(body.substr(0, eq));
            const std::string value = trim(body.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError("empty key");
            }
            apply_setting(cfg, section.empty() ? key : section + "." + key, value, base_dir);
        } catch (const Error& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override '" + ov + "' is not key=value");
        }
        try {
            apply_setting(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)),
                          std::filesystem::current_path());
        } catch (const Error& e) {
            throw ConfigError("override '" + ov + "': " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides)
{
    std::ifstream in(path);
    if (!in) {
        throw FileNotFound(path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.parent_path(), overrides);
}

const std::map<std::string, std::string>& config_keys()
{
    static const std::map<std::string, std::string> keys = [] {
        std::map<std::string, std::string> out;
        for (const auto& k : registry()) {
            out.emplace(k.name, k.default_doc);
        }
        return out;
    }();
    return keys;
}

Scheduler make_scheduler(const ExperimentConfig& cfg)
{
    return cfg.scheduler == "vp" ? Scheduler::variance_preserving(cfg.t_max)
                                 : Scheduler::cond_ot(cfg.t_max);
}

CorruptionOp make_corruption(const ExperimentConfig& cfg, int dim)
{
    if (cfg.corruption == "mask") {
        std::vector<bool> keep;
        if (cfg.mask == "keep") {
            keep.assign(dim, false);
            for (int i : cfg.mask_keep) {
                if (i < 0 || i >= dim) {
                    throw ConfigError("corruption.keep index " + std::to_string(i) +
                                      " out of range");
                }
                keep[i] = true;
            }
        } else {
            keep = center_half_mask(dim);
        }
        return CorruptionOp::mask(keep, cfg.noise_sigma);
    }
    if (cfg.corruption == "subsample") {
        return CorruptionOp::subsample(dim, cfg.subsample_factor, cfg.noise_sigma);
    }
    if (cfg.corruption == "blur1d") {
        Vec kernel = cfg.kernel;
        if (!cfg.kernel_file.empty()) {
            kernel = read_vector(cfg.kernel_file);
        }
        if (kernel.size() == 0) {
            kernel = Vec(3);
            kernel << 0.25, 0.5, 0.25;
        }
        return CorruptionOp::blur1d(dim, kernel, cfg.noise_sigma);
    }
    return CorruptionOp::identity(dim, cfg.noise_sigma);
}

} // namespace dflow::harness

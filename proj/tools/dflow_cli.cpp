#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dflow/errors.hpp"
#include "dflow/harness/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> seeds;
    std::string out_dir;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args)
{
    cmd->add_option("config", args.config, "experiment config file")->required();
    cmd->add_option("--seed", args.seed, "base seed (overrides experiment.seed)");
    cmd->add_option("--seeds", args.seeds, "number of seeds (overrides experiment.seeds)");
    cmd->add_option("--out-dir", args.out_dir, "output directory (overrides output.dir)");
    cmd->add_option("--override", args.overrides, "dotted key=value config override")
        ->take_all();
}

dflow::harness::ExperimentConfig load(const CommonArgs& args)
{
    auto overrides = args.overrides;
    if (args.seed) {
        overrides.push_back("experiment.seed=" + std::to_string(*args.seed));
    }
    if (args.seeds) {
        overrides.push_back("experiment.seeds=" + std::to_string(*args.seeds));
    }
    if (!args.out_dir.empty()) {
        overrides.push_back("output.dir=" + args.out_dir);
    }
    return dflow::harness::load_config(args.config, overrides);
}

} // namespace

int main(int argc, char** argv)
{
    using namespace dflow::harness;

    CLI::App app{"Source-point optimization through analytic flow-matching fields"};
    app.require_subcommand(1);
    int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    app.add_option("--jobs,-j", jobs, "concurrent seeds in batch runs")->check(CLI::PositiveNumber);

    CommonArgs run_args;
    auto* run = app.add_subcommand("run", "run the configured verifications and optimization batch");
    add_common(run, run_args);

    CommonArgs verify_args;
    std::string suite;
    auto* verify = app.add_subcommand("verify", "run one verification suite");
    verify->add_option("suite", suite, "theorem1 | routes | order")
        ->required()
        ->check(CLI::IsMember({"theorem1", "routes", "order"}));
    add_common(verify, verify_args);

    CommonArgs invert_args;
    auto* invert = app.add_subcommand(
        "invert", "inverse problem; forces blend initialization unless init.kind is overridden");
    add_common(invert, invert_args);

    CommonArgs sample_args;
    auto* sample = app.add_subcommand("sample", "plain forward sampling from source noise");
    add_common(sample, sample_args);

    auto* keys = app.add_subcommand("keys", "list every config key with its default");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*keys) {
            for (const auto& [key, def] : config_keys()) {
                std::cout << key << " = " << def << "\n";
            }
            return 0;
        }
        if (*run) {
            const auto cfg = load(run_args);
            const int code = run_experiment(cfg, jobs);
            std::cout << "wrote " << experiment_dir(cfg).string() << "\n";
            return code;
        }
        if (*verify) {
            const auto cfg = load(verify_args);
            std::cout << run_verification(cfg, parse_suite(suite));
            return 0;
        }
        if (*invert) {
            auto cfg = load(invert_args);
            if (!cfg.is_inverse_problem()) {
                cfg.cost = dflow::CostKind::Reconstruction;
            }
            bool init_overridden = false;
            for (const auto& ov : invert_args.overrides) {
                init_overridden = init_overridden || ov.rfind("init.kind", 0) == 0;
            }
            if (!init_overridden) {
                cfg.init = InitKind::Blend;
            }
            cfg.validate();
            const auto batch = run_batch(cfg, jobs);
            std::cout << "wrote " << experiment_dir(cfg).string() << "\n";
            return batch.exit_code;
        }
        if (*sample) {
            const auto cfg = load(sample_args);
            (void)run_sampling(cfg);
            std::cout << "wrote " << (experiment_dir(cfg) / "samples.csv").string() << "\n";
            return 0;
        }
    } catch (const dflow::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

// gadd: sampling laboratory for uniform-rate discrete diffusion models.
//
// Subcommands:
//   run          execute the configured sampler, emit experiment records
//   sweep-nfe    matched-NFE comparison of Euler against the configured corrector
//   validate     run the built-in invariant suite
//   contraction  spectral-gap / tv-decay estimates for the Gibbs corrector kernel
//   target-dump  write the configured target distribution as a pmf file

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "gadd/config.hpp"
#include "gadd/experiment.hpp"
#include "gadd/validate.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_path;
    std::vector<std::string> sets;
    long seed = -1;
    bool chart = false;
};

gadd::ExperimentSetup load_from_args(const GlobalArgs& args) {
    if (args.config_path.empty())
        throw gadd::InvalidConfig("this command needs --config PATH");
    gadd::ConfigFile cfg = gadd::ConfigFile::parse_file(args.config_path);
    for (const std::string& assignment : args.sets) cfg.set(assignment);
    gadd::ExperimentSetup setup = gadd::load_setup(cfg);
    if (args.seed >= 0) setup.seed = static_cast<std::uint64_t>(args.seed);
    if (!args.out_path.empty()) setup.csv_path = args.out_path;
    return setup;
}

void emit_records(const gadd::ExperimentSetup& setup,
                  const std::vector<gadd::ExperimentRecord>& records) {
    if (setup.csv_path.empty()) {
        std::cout << gadd::format_csv(records);
    } else {
        gadd::write_csv_file(setup.csv_path, records);
        std::cout << "wrote " << records.size() << " rows to " << setup.csv_path << "\n";
    }
}

int run_validate(const std::string& inject_fault) {
    gadd::ValidationOptions opts;
    if (inject_fault == "bad-kernel")
        opts.inject_bad_kernel = true;
    else if (!inject_fault.empty())
        throw gadd::InvalidConfig("unknown fault: " + inject_fault);

    const auto results = gadd::run_validation(opts);
    int failed = 0;
    for (const gadd::CheckResult& r : results) {
        std::printf("[%s] %-42s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
        if (!r.pass) ++failed;
    }
    std::printf("%zu checks, %d failed\n", results.size(), failed);
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sampling laboratory for uniform-rate discrete diffusion models"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalArgs args;
    app.add_option("--config", args.config_path, "Experiment config file");
    app.add_option("--seed", args.seed, "Override sampler.seed");
    app.add_option("--out", args.out_path, "Output CSV path (default: stdout)");
    app.add_option("--set", args.sets, "Override a config entry, section.key=value")
        ->take_all();
    app.add_flag("--chart", args.chart, "Emit an SVG chart next to the CSV");

    CLI::App* cmd_run_app = app.add_subcommand("run", "Execute the configured sampler");
    CLI::App* cmd_sweep = app.add_subcommand("sweep-nfe", "Compare methods at matched NFE budgets");
    std::vector<long> nfe_budgets;
    cmd_sweep->add_option("--nfe", nfe_budgets, "NFE budgets (overrides eval.nfe)")->delimiter(',');
    CLI::App* cmd_validate_app = app.add_subcommand("validate", "Run the invariant suite");
    std::string inject_fault;
    cmd_validate_app->add_option("--inject-fault", inject_fault, "Test hook: force a named failure")
        ->group("");  // hidden
    CLI::App* cmd_contraction_app =
        app.add_subcommand("contraction", "Estimate the Gibbs corrector's spectral gap");
    CLI::App* cmd_dump = app.add_subcommand("target-dump", "Write the target pmf file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    // Configuration phase: failures here are usage errors (exit 2).
    gadd::ExperimentSetup setup;
    const bool needs_config = !cmd_validate_app->parsed();
    if (needs_config) {
        try {
            setup = load_from_args(args);
        } catch (const std::exception& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return 2;
        }
    }

    try {
        if (cmd_run_app->parsed()) {
            const auto records = gadd::cmd_run(setup);
            emit_records(setup, records);
            return 0;
        }
        if (cmd_sweep->parsed()) {
            std::vector<long> budgets = nfe_budgets.empty() ? setup.nfe_list : nfe_budgets;
            if (budgets.empty()) {
                std::cerr << "config error: sweep-nfe needs --nfe or eval.nfe\n";
                return 2;
            }
            const gadd::SweepResult sweep = gadd::cmd_sweep_nfe(setup, budgets);
            emit_records(setup, sweep.records);
            if (args.chart || !setup.chart_path.empty()) {
                const std::string chart_path =
                    setup.chart_path.empty() ? "tv_curves.svg" : setup.chart_path;
                gadd::write_tv_chart_svg(chart_path, sweep.curves);
                std::cout << "wrote chart to " << chart_path << "\n";
            }
            return 0;
        }
        if (cmd_validate_app->parsed()) {
            return run_validate(inject_fault);
        }
        if (cmd_contraction_app->parsed()) {
            const gadd::ContractionReport report = gadd::cmd_contraction(setup);
            std::printf("t = %.6g\n", report.t);
            std::printf("rho (eigen)    = %.6g\n", report.rho_eigen);
            std::printf("rho (tv-decay) = %.6g\n", report.rho_decay);
            return 0;
        }
        if (cmd_dump->parsed()) {
            if (args.out_path.empty()) {
                std::cerr << "config error: target-dump needs --out PATH\n";
                return 2;
            }
            gadd::Rng rng(setup.target_seed);
            const gadd::Pmf target = gadd::build_target(setup.target, rng);
            gadd::write_pmf_file(args.out_path, target);
            std::cout << "wrote " << target.size() << "-state pmf to " << args.out_path << "\n";
            return 0;
        }
    } catch (const gadd::InvalidConfig& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

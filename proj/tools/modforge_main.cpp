// modforge — multi-modal training experiments.
//
// Subcommands:
//   generate  synthesize a dataset from a spec file or builtin benchmark
//   run       execute a full experiment (concepts → training → probes)
//   compare   merge run manifests into one comparison table
//   plot      render a per-epoch CSV as an SVG chart
//
// Exit codes: 0 success, 2 config/usage error, 3 format/I-O error.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "modforge/config.hpp"
#include "modforge/data.hpp"
#include "modforge/errors.hpp"
#include "modforge/harness.hpp"

namespace {

int cmd_generate(const std::string& spec_arg, std::uint64_t seed, bool seed_given,
                 const std::string& out) {
    modforge::SyntheticSpec spec;
    if (spec_arg.rfind("builtin:", 0) == 0) {
        spec = modforge::builtin_benchmark(spec_arg.substr(8), seed);
    } else {
        spec = modforge::load_synthetic_spec(spec_arg);
        if (seed_given) spec.seed = seed;
    }
    const modforge::Dataset ds = modforge::generate(spec);
    const auto parent = std::filesystem::path(out).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    modforge::save_dataset(ds, out);

    std::cout << "wrote " << out << ": N=" << ds.num_samples << " K=" << ds.num_classes
              << " modalities=";
    for (std::size_t i = 0; i < ds.modalities.size(); ++i)
        std::cout << (i ? "," : "") << ds.modalities[i].name << "(d=" << ds.modalities[i].dim
                  << ")";
    std::cout << " seed=" << spec.seed << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, std::size_t probe_every, bool probe_given) {
    modforge::ExperimentConfig cfg = modforge::load_experiment_config(config_path);
    if (probe_given) cfg.probe_every = probe_every;
    if (const char* env = std::getenv("MODFORGE_SEED")) {
        cfg.seeds = modforge::parse_seed_list(env);
        std::cout << "MODFORGE_SEED overrides config seeds (" << cfg.seeds.size()
                  << " seed" << (cfg.seeds.size() == 1 ? "" : "s") << ")\n";
    }
    const std::string manifest = modforge::run_experiment(cfg);
    std::cout << "manifest: " << manifest << "\n";
    return 0;
}

int cmd_compare(const std::vector<std::string>& runs, const std::string& out) {
    const std::string table = modforge::compare_manifests(runs, out);
    std::cout << table;
    if (!out.empty()) std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_plot(const std::string& run_csv, const std::string& out) {
    modforge::plot_run_csv(run_csv, out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-modal training experiments"};
    app.set_version_flag("--version", std::string(modforge::kToolVersion));
    app.require_subcommand(1);

    std::string gen_spec, gen_out;
    std::uint64_t gen_seed = 16;
    auto* generate = app.add_subcommand(
        "generate", "synthesize a dataset (--spec file.json or builtin:<name>)");
    generate->add_option("--spec", gen_spec, "spec JSON file, or builtin:<name>")->required();
    auto* seed_opt = generate->add_option("--seed", gen_seed, "generator seed (default 16)");
    generate->add_option("--out", gen_out, "output .mmds path")->required();

    std::string run_config;
    std::size_t run_probe_every = 0;
    auto* run = app.add_subcommand("run", "execute an experiment from a config file");
    run->add_option("--config", run_config, "experiment config JSON")->required();
    auto* probe_opt = run->add_option("--probe-every", run_probe_every,
                                      "probe cadence in epochs (overrides config; 0 = final only)");

    std::vector<std::string> cmp_runs;
    std::string cmp_out;
    auto* compare = app.add_subcommand("compare", "combine run manifests into a table");
    compare->add_option("--runs", cmp_runs, "manifest.json paths")->required()->expected(-1);
    compare->add_option("--out", cmp_out, "write the table CSV here (otherwise stdout only)");

    std::string plot_run, plot_out;
    auto* plot = app.add_subcommand("plot", "render a per-epoch CSV as SVG");
    plot->add_option("--run", plot_run, "per-epoch run.csv")->required();
    plot->add_option("--out", plot_out, "output .svg path")->required();

    try {
        app.parse(argc, argv);
        if (generate->parsed())
            return cmd_generate(gen_spec, gen_seed, seed_opt->count() > 0, gen_out);
        if (run->parsed()) return cmd_run(run_config, run_probe_every, probe_opt->count() > 0);
        if (compare->parsed()) return cmd_compare(cmp_runs, cmp_out);
        if (plot->parsed()) return cmd_plot(plot_run, plot_out);
        return 2;  // unreachable: require_subcommand(1)
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // --help/--version exit 0; bad usage exits 2
    } catch (const modforge::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const modforge::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const modforge::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const modforge::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

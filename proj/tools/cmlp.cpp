// Command-line front end: run a config, run a named recipe, or render a stored metric.
#include <iostream>

#include <CLI11.hpp>

#include "cmlp/experiment.hpp"

namespace {

void print_summary(const cmlp::RunManifest& m) {
    std::cout << m.config.name << ": " << m.snapshots.size() << " snapshots, "
              << m.loss_curve.size() << " epochs";
    if (!m.loss_curve.empty()) std::cout << ", final loss " << cmlp::format_double(m.loss_curve.back());
    std::cout << ", manifest " << m.manifest_path().string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coordinate MLP experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    bool full = false;
    bool verbose = false;
    auto* run_cmd = app.add_subcommand("run", "train one configuration and fire its probes");
    run_cmd->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--out", out_dir, "output directory");
    run_cmd->add_flag("--full", full, "use train.full_epochs");
    run_cmd->add_flag("-v,--verbose", verbose);

    std::string recipe_name;
    bool dry_run = false;
    auto* recipe_cmd = app.add_subcommand("recipe", "run every configuration of a named figure recipe");
    recipe_cmd->add_option("--name", recipe_name, "figure recipe")
        ->required()
        ->check(CLI::IsMember(cmlp::recipe_names()));
    recipe_cmd->add_option("--out", out_dir, "parent directory; each run goes to <out>/<run name>");
    recipe_cmd->add_flag("--full", full, "use train.full_epochs");
    recipe_cmd->add_flag("--dry-run", dry_run, "print the configs without running");
    recipe_cmd->add_flag("-v,--verbose", verbose);

    std::string manifest_path;
    std::string metric;
    auto* render_cmd = app.add_subcommand("render", "turn a stored metric into PGM or CSV files");
    render_cmd->add_option("--manifest", manifest_path, "manifest.json of a finished run")
        ->required()
        ->check(CLI::ExistingFile);
    render_cmd->add_option("--metric", metric, "metric name, or 'loss'")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            cmlp::RunOptions opts{full, out_dir, verbose};
            print_summary(cmlp::run(cmlp::load_config(config_path), opts));
        } else if (*recipe_cmd) {
            for (const auto& cfg : cmlp::recipe(recipe_name)) {
                if (dry_run) {
                    std::cout << "# " << cfg.name << "\n" << cmlp::to_config_text(cfg) << "\n";
                    continue;
                }
                cmlp::RunOptions opts{full, {}, verbose};
                opts.output_dir = out_dir.empty() ? cmlp::default_output_dir(cfg.name)
                                                  : std::filesystem::path(out_dir) / cfg.name;
                print_summary(cmlp::run(cfg, opts));
            }
        } else if (*render_cmd) {
            for (const auto& file : cmlp::render(manifest_path, metric)) std::cout << file.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

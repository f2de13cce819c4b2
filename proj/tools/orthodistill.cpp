// Experiment runner: seeded end-to-end runs (generate -> distill -> evaluate),
// report comparison and plot-data emission.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "orthodistill/config.hpp"
#include "orthodistill/embed_io.hpp"
#include "orthodistill/experiment.hpp"
#include "orthodistill/plot.hpp"
#include "orthodistill/util.hpp"

using namespace orthodistill;

namespace {

int cmd_compare(const std::vector<std::string>& paths) {
    std::vector<EvalReport> reports;
    for (const std::string& p : paths) reports.push_back(load_report(p));

    std::printf("%-18s %9s %9s %9s %10s %12s\n", "variant", "knn_acc", "auroc", "fpr95",
                "gram_wtw", "auroc_delta");
    double base_auroc = reports.front().ood ? reports.front().ood->auroc : 0.0;
    for (const EvalReport& r : reports) {
        double auroc = r.ood ? r.ood->auroc : 0.0;
        double fpr = r.ood ? r.ood->fpr95 : 0.0;
        double gram = r.orthogonality.empty() ? 0.0 : r.orthogonality.front().score;
        std::printf("%-18s %9.4f %9.4f %9.4f %10.4f %+12.4f\n", r.variant.c_str(),
                    r.knn_accuracy, auroc, fpr, gram, auroc - base_auroc);
    }
    return 0;
}

int cmd_validate(const std::string& config_path) {
    ExperimentConfig cfg = parse_config_file(config_path);
    cfg.validate();
    std::cout << "OK: " << config_path << "\n";
    return 0;
}

int cmd_gen_data(const std::string& config_path) {
    ExperimentConfig cfg = parse_config_file(config_path);
    cfg.validate();
    if (cfg.source != DataSource::synthetic)
        throw ConfigError(0, "gen-data needs a synthetic data section");

    DatasetSpec spec{cfg.n_samples + cfg.n_eval_samples, cfg.n_classes, cfg.d_in, cfg.n_patch,
                     cfg.class_separation};
    Dataset all = gen_token_dataset(spec, cfg.data_seed());
    Dataset train, eval;
    train.n_classes = eval.n_classes = all.n_classes;
    for (std::size_t i = 0; i < all.samples.size(); ++i)
        (i < cfg.n_samples ? train : eval).samples.push_back(all.samples[i]);

    std::filesystem::create_directories(cfg.out_dir);
    std::string train_path = (std::filesystem::path(cfg.out_dir) / "train_embeddings.bin").string();
    std::string eval_path = (std::filesystem::path(cfg.out_dir) / "eval_embeddings.bin").string();
    save_dataset(train_path, train);
    save_dataset(eval_path, eval);
    std::cout << "train: " << train_path << " (" << train.samples.size() << " samples)\n";
    std::cout << "eval: " << eval_path << " (" << eval.samples.size() << " samples)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"orthogonality-preserving knowledge distillation lab"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    std::string run_config;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    run->add_option("config", run_config, "experiment config file")->required();
    std::uint64_t seed_value = 0;
    auto* seed_opt = run->add_option("--seed", seed_value, "override the global seed");
    std::string out_value;
    auto* out_opt = run->add_option("--out", out_value, "override the output directory");

    // compare
    auto* compare = app.add_subcommand("compare", "tabulate several eval reports");
    std::vector<std::string> compare_paths;
    compare->add_option("reports", compare_paths, "eval_report.json files")
        ->required()
        ->expected(-1);

    // plot
    auto* plot = app.add_subcommand("plot", "emit CSV and SVG plot data from reports");
    std::string plot_kind;
    std::string plot_out = "plot";
    std::vector<std::string> plot_inputs;
    plot->add_option("--kind", plot_kind, "gram_density | radar | loss_curves")->required();
    plot->add_option("--out", plot_out, "output prefix (writes <out>.csv and <out>.svg)");
    plot->add_option("inputs", plot_inputs, "report files (loss_curves: history files)")
        ->required()
        ->expected(-1);

    // validate
    auto* validate = app.add_subcommand("validate", "parse and validate a config file");
    std::string validate_config;
    validate->add_option("config", validate_config, "experiment config file")->required();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset as embedding files");
    std::string gen_config;
    gen->add_option("config", gen_config, "experiment config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (seed_opt->count()) seed_override = seed_value;
            if (out_opt->count()) out_override = out_value;
            return run_experiment(run_config, seed_override, out_override);
        }
        if (compare->parsed()) return cmd_compare(compare_paths);
        if (plot->parsed()) {
            PlotPaths paths = emit_plot_data(plot_inputs, plot_kind_from_name(plot_kind), plot_out);
            std::cout << paths.csv << "\n" << paths.svg << "\n";
            return 0;
        }
        if (validate->parsed()) return cmd_validate(validate_config);
        if (gen->parsed()) return cmd_gen_data(gen_config);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

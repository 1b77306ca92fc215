#include "pcis/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"PCIS synthesis, certification and shielded-training harness"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("-c,--config", config_path, "experiment config (JSON)")->required();

    std::string dataset_path, out_dir = "out", mask_path, artifact_dir, out_path;

    auto* synth = app.add_subcommand("synthesize", "fixed-point search on a transition dataset");
    synth->add_option("--dataset", dataset_path, "transition dataset CSV")->required();
    synth->add_option("--out", out_dir, "output directory");

    auto* certify = app.add_subcommand("certify", "hold-out certification of a tentative mask");
    certify->add_option("--mask", mask_path, "tentative mask CSV")->required();
    certify->add_option("--dataset", dataset_path, "certification dataset CSV")->required();
    certify->add_option("--out", out_dir, "output directory");

    auto* train = app.add_subcommand("train", "shielded training runs over the configured seeds");
    train->add_option("--out", out_dir, "output directory");

    auto* verify = app.add_subcommand("verify", "Monte Carlo conservatism property suite");
    verify->add_option("--out", out_path, "report CSV path");

    auto* exp = app.add_subcommand("export", "merge synthesized artifacts into a plot CSV");
    exp->add_option("--artifacts", artifact_dir, "artifact directory from synthesize")->required();
    exp->add_option("--out", out_path, "plot CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    pcis::ExperimentConfig cfg;
    try {
        cfg = pcis::ExperimentConfig::from_file(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return pcis::cli::kExitValidation;
    }

    if (synth->parsed()) return pcis::cli::cmd_synthesize(cfg, dataset_path, out_dir);
    if (certify->parsed()) return pcis::cli::cmd_certify(cfg, mask_path, dataset_path, out_dir);
    if (train->parsed()) return pcis::cli::cmd_train(cfg, out_dir);
    if (verify->parsed())
        return pcis::cli::cmd_verify(cfg, out_path.empty() ? "verify_report.csv" : out_path);
    if (exp->parsed()) return pcis::cli::cmd_export(cfg, artifact_dir, out_path);
    return pcis::cli::kExitValidation;
}

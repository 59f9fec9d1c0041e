// ecl-lab: command line front end for the long-tailed contrastive learning lab.
//
// Exit codes: 0 success, 1 verification failure (gradcheck), 2 configuration
// error, 3 runtime abort.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ecl/ecl.hpp"

namespace {

ecl::ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed,
                                  bool seed_hits_data) {
    ecl::ExperimentConfig cfg = ecl::load_experiment_config(path);
    if (seed) {
        if (seed_hits_data) cfg.data.seed = *seed;
        else cfg.train.seed = *seed;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ecl-lab: long-tailed classification laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        auto* c = cmd->add_option("--config", config_path, "experiment config (JSON)");
        if (config_required) c->required();
        cmd->add_option("--out", out_dir, "output directory (default: config output_dir)");
        cmd->add_option("--seed", seed, "seed override");
    };

    auto* gen = app.add_subcommand("generate", "write the synthetic dataset CSV");
    add_common(gen, true);
    auto* trn = app.add_subcommand("train", "train one run and write its artifacts");
    add_common(trn, true);
    auto* evl = app.add_subcommand("evaluate", "re-evaluate a saved checkpoint on the test split");
    add_common(evl, true);
    auto* cmp = app.add_subcommand("compare", "multi-seed comparison with a mean (std) table");
    add_common(cmp, true);
    auto* gch = app.add_subcommand("gradcheck", "finite-difference verification of all gradients");
    add_common(gch, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gch->parsed()) {
            return ecl::run_gradcheck_cmd(seed.value_or(2024), out_dir.empty() ? "out" : out_dir,
                                          std::cout);
        }
        ecl::ExperimentConfig cfg = load_config(config_path, seed, gen->parsed());
        const std::string out = out_dir.empty() ? cfg.output_dir : out_dir;
        if (gen->parsed()) {
            ecl::run_generate(cfg, out);
            std::cout << "wrote " << out << "/dataset.csv\n";
        } else if (trn->parsed()) {
            ecl::run_train(cfg, out);
            std::cout << "wrote " << out << "/{history.csv,checkpoint.bin,metrics.json,confusion.svg}\n";
        } else if (evl->parsed()) {
            ecl::run_evaluate(cfg, out);
            std::cout << "wrote " << out << "/{metrics_eval.json,confusion_eval.svg}\n";
        } else if (cmp->parsed()) {
            std::cout << ecl::run_compare(cfg, out);
        }
        return 0;
    } catch (const ecl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

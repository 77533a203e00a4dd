#include "prkit/errors.hpp"
#include "prkit/io.hpp"
#include "prkit/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <functional>
#include <iostream>
#include <string>

namespace {

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::string cache_dir;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "experiment config file (JSON)")
        ->required();
    cmd->add_option("--seed", flags.seed, "override the config seed")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--out", flags.out_dir, "override the output directory");
    cmd->add_option("--cache-dir", flags.cache_dir, "override the dataset cache directory");
}

// Flag overrides invalidate the verbatim config copy, so the effective
// config is re-serialized into the output directory instead.
prkit::ExperimentConfig load_with_overrides(const CommonFlags& flags) {
    auto config = prkit::load_experiment_config(flags.config_path);
    bool changed = false;
    if (flags.seed_set) {
        config.seed = flags.seed;
        changed = true;
    }
    if (!flags.out_dir.empty()) {
        config.out_dir = flags.out_dir;
        changed = true;
    }
    if (!flags.cache_dir.empty()) {
        config.cache_dir = flags.cache_dir;
        changed = true;
    }
    if (changed) {
        config.raw_text.clear();
        config.validate();
    }
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prediction-rigidity uncertainty toolkit"};
    app.require_subcommand(1);

    struct Command {
        const char* name;
        const char* help;
        std::string (*run)(const prkit::ExperimentConfig&);
    };
    const Command commands[] = {
        {"fit", "train a regressor and save it with its training log", prkit::run_fit},
        {"uq", "attach calibrated last-layer uncertainty to a saved model", prkit::run_uq},
        {"benchmark", "repeated random splits of a benchmark table, with aggregates",
         prkit::run_benchmark},
        {"ood", "train in-domain only and compare predicted variance across domains",
         prkit::run_ood},
        {"ntk-study", "feature-space vs kernel-space accuracy of the small-angle expansion",
         prkit::run_ntk_study},
        {"width-study", "calibration residual as hidden width grows", prkit::run_width_study},
    };

    CommonFlags flags[std::size(commands)];
    const Command* chosen = nullptr;
    const CommonFlags* chosen_flags = nullptr;
    for (std::size_t i = 0; i < std::size(commands); ++i) {
        CLI::App* cmd = app.add_subcommand(commands[i].name, commands[i].help);
        add_common_flags(cmd, flags[i]);
        cmd->callback([&, i] {
            chosen = &commands[i];
            chosen_flags = &flags[i];
        });
    }

    CLI::App* config_cmd = app.add_subcommand("config", "config file helpers");
    config_cmd->require_subcommand(1);
    CLI::App* init_cmd = config_cmd->add_subcommand(
        "init", "print a config with every default spelled out");
    std::string init_kind = "toy-fit";
    std::string init_out;
    init_cmd->add_option("--kind", init_kind,
                         "toy-fit | benchmark | ood | ntk-study | width-study");
    init_cmd->add_option("--out", init_out, "write to this file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (init_cmd->parsed()) {
        try {
            const auto kind = prkit::experiment_kind_from_string(init_kind);
            const std::string text =
                prkit::default_experiment_config(kind).to_json().dump(2) + "\n";
            if (init_out.empty()) {
                std::cout << text;
            } else {
                prkit::write_text_file(init_out, text);
            }
            return 0;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }

    prkit::ExperimentConfig config;
    try {
        config = load_with_overrides(*chosen_flags);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        const std::string out = chosen->run(config);
        std::cout << out << "\n";
        return 0;
    } catch (const prkit::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

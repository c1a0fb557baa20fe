#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"

#include "occudiff/parallel.hpp"
#include "occudiff/pipeline.hpp"

namespace occudiff {

int run_cli(int argc, char** argv) {
    CLI::App app{"occudiff: diffusion-based local occupancy prediction pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    uint64_t seed = 0;
    int threads = 0;
    bool force = false;
    bool dry_run = false;

    const struct {
        const char* name;
        const char* help;
    } commands[] = {
        {"gen", "generate the procedural scene dataset"},
        {"train", "train the denoiser on the dataset's training split"},
        {"explore", "walk held-out scenes, predicting local occupancy at every pose"},
        {"eval", "score an exploration run (FID / KID / IoU per scene and pooled)"},
        {"ablate", "sweep denoising steps, guidance scale, and conditioning/inpainting"},
    };
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--seed", seed, "master seed override");
        sub->add_option("--threads", threads, "worker threads (0 = all hardware threads)");
        sub->add_flag("--force", force, "overwrite existing artifacts / restart from scratch");
        sub->add_flag("--dry-run", dry_run, "validate inputs and print the plan without writing");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the parse error
        return code == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        RunConfig cfg = load_run_config(config_path);
        if (sub->count("--seed") > 0) cfg.seed = seed;
        if (sub->count("--threads") > 0) {
            if (threads < 0) throw std::invalid_argument("--threads must be >= 0");
            set_thread_count(threads);
        }
        const std::string name = sub->get_name();
        if (name == "gen") {
            cmd_gen(cfg, force, dry_run);
        } else if (name == "train") {
            cmd_train(cfg, force, dry_run);
        } else if (name == "explore") {
            cmd_explore(cfg, force, dry_run);
        } else if (name == "eval") {
            cmd_eval(cfg, force, dry_run);
        } else {
            cmd_ablate(cfg, force, dry_run);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

}  // namespace occudiff

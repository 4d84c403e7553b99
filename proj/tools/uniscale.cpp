// Command-line front end: simulate -> build -> train -> evaluate -> ablate ->
// scale, one subcommand per pipeline stage so downstream runs can reuse cached
// upstream artifacts. All behavior lives in the library; this file only maps
// flags onto the command functions.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "uniscale/cli/cli.hpp"

namespace {

struct SubArgs {
    uniscale::cli::CommonArgs common;
    std::string logs_dir;
    std::string samples_dir;
    std::string checkpoint;
    uint64_t seed_value = 0;
    CLI::Option* seed_opt = nullptr;
};

void add_common_flags(CLI::App* cmd, SubArgs& a) {
    cmd->add_option("--config", a.common.config_path, "Run configuration JSON document")->required();
    cmd->add_option("--out", a.common.out_dir, "Directory for artifacts and the run manifest")
        ->required();
    a.seed_opt = cmd->add_option("--seed", a.seed_value, "Override the config's global seed");
    cmd->add_option("--threads", a.common.threads, "Kernel thread count (0 keeps the default)");
    cmd->add_option("--log-level", a.common.log_level, "debug|info|warn|error (default info)");
}

void finalize(SubArgs& a) {
    if (a.seed_opt != nullptr && a.seed_opt->count() > 0) a.common.seed = a.seed_value;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entire-space sample construction and heterogeneous-attention ranking pipeline"};
    app.set_version_flag("--version", uniscale::cli::kToolVersion);
    app.require_subcommand(1);

    SubArgs gen, build, train, eval, ablate, scaling;

    CLI::App* c_gen = app.add_subcommand("gen-logs", "Generate the world and behavior logs");
    add_common_flags(c_gen, gen);

    CLI::App* c_build = app.add_subcommand("build-samples", "Build list-wise training samples from logs");
    add_common_flags(c_build, build);
    c_build->add_option("--logs", build.logs_dir, "Directory written by gen-logs")->required();

    CLI::App* c_train = app.add_subcommand("train", "Train the ranking model on built samples");
    add_common_flags(c_train, train);
    c_train->add_option("--samples", train.samples_dir, "Directory written by build-samples")->required();

    CLI::App* c_eval = app.add_subcommand("eval", "Score a checkpoint on the held-out samples");
    add_common_flags(c_eval, eval);
    c_eval->add_option("--samples", eval.samples_dir, "Directory written by build-samples")->required();
    c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint path prefix written by train")
        ->required();

    CLI::App* c_ablate = app.add_subcommand("ablate", "Run the data x architecture ablation grid");
    add_common_flags(c_ablate, ablate);
    c_ablate->add_option("--logs", ablate.logs_dir, "Directory written by gen-logs")->required();

    CLI::App* c_scaling = app.add_subcommand("scaling", "Run the width-scaling sweeps");
    add_common_flags(c_scaling, scaling);
    c_scaling->add_option("--logs", scaling.logs_dir, "Directory written by gen-logs")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return uniscale::cli::kExitInternal;
    }

    if (c_gen->parsed()) {
        finalize(gen);
        return uniscale::cli::cmd_gen_logs(gen.common);
    }
    if (c_build->parsed()) {
        finalize(build);
        return uniscale::cli::cmd_build_samples(build.common, build.logs_dir);
    }
    if (c_train->parsed()) {
        finalize(train);
        return uniscale::cli::cmd_train(train.common, train.samples_dir);
    }
    if (c_eval->parsed()) {
        finalize(eval);
        return uniscale::cli::cmd_eval(eval.common, eval.checkpoint, eval.samples_dir);
    }
    if (c_ablate->parsed()) {
        finalize(ablate);
        return uniscale::cli::cmd_ablate(ablate.common, ablate.logs_dir);
    }
    if (c_scaling->parsed()) {
        finalize(scaling);
        return uniscale::cli::cmd_scaling(scaling.common, scaling.logs_dir);
    }
    return uniscale::cli::kExitInternal;
}

// cslearn: staged pipeline driver. Every subcommand shares the same flat
// key=value config file; --seed and --artifacts override config entries.
//
// Exit codes: 0 success, 2 invalid input or config, 1 any other failure.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "cslearn/pipeline.hpp"

namespace {

using cslearn::pipeline::PipelineConfig;

struct StageSpec {
    const char* name;
    const char* help;
    void (*run)(const PipelineConfig&);
};

constexpr StageSpec kStages[] = {
    {"ingest", "Parse, validate, and normalize raw event tables", cslearn::pipeline::run_ingest},
    {"curves", "Build daily-resolution curvesets for every patient", cslearn::pipeline::run_curves},
    {"matrix", "Sample cross sections and assemble the standardized matrix",
     cslearn::pipeline::run_matrix},
    {"ica", "Whiten the matrix and fit the independent-source model", cslearn::pipeline::run_ica},
    {"train", "Fit the outcome model on the configured feature space", cslearn::pipeline::run_train},
    {"explain", "Compute per-instance Shapley attributions and source ranking",
     cslearn::pipeline::run_explain},
    {"synth", "Generate a synthetic corpus with a known causal model", cslearn::pipeline::run_synth},
    {"eval", "Score recovered sources and attributions against synthetic truth",
     cslearn::pipeline::run_eval},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cslearn: source-recovery pipeline over episodic records"};
    app.require_subcommand(1);

    std::string config_path;
    std::string artifacts_override;
    long long seed_override = -1;
    bool have_seed = false;

    const StageSpec* selected = nullptr;
    for (const StageSpec& stage : kStages) {
        CLI::App* sub = app.add_subcommand(stage.name, stage.help);
        sub->add_option("--config", config_path, "Flat key=value config file");
        sub->add_option("--seed", seed_override, "Master seed (overrides config)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--artifacts", artifacts_override, "Artifacts directory (overrides config)");
        sub->callback([&selected, &stage] { selected = &stage; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    for (const StageSpec& stage : kStages)
        if (app.got_subcommand(stage.name))
            have_seed = app.get_subcommand(stage.name)->count("--seed") > 0;

    try {
        PipelineConfig cfg =
            config_path.empty() ? PipelineConfig{} : cslearn::pipeline::load_config(config_path);
        if (have_seed) cfg.seed = static_cast<std::uint64_t>(seed_override);
        if (!artifacts_override.empty()) cfg.artifacts_dir = artifacts_override;
        selected->run(cfg);
        return 0;
    } catch (const cslearn::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const cslearn::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
}

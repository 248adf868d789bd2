#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "cslearn/explain.hpp"
#include "cslearn/ica.hpp"
#include "cslearn/oracle.hpp"

namespace cslearn::pipeline {

/// Flat key-value configuration shared by all CLI stages. Every stage that
/// draws randomness derives sub-seeds from `seed`; there is no wall-clock
/// default.
struct PipelineConfig {
    std::string events_path;
    std::string demographics_path;
    std::string labels_path;
    std::string artifacts_dir = "artifacts";

    double density = 4.0;
    int k = 16;
    ica::Contrast contrast = ica::Contrast::logcosh;
    double tol = 1e-4;
    int max_iter = 500;
    curves::RashParams rash;  // n_histograms, bandwidth_fraction (seed filled per stage)

    explain::Hyperparams model;
    explain::FeatureSpace feature_space = explain::FeatureSpace::sources;
    std::string shap_estimator = "exact";  // or "permutation"
    int n_permutations = 2000;
    int background_size = 256;
    bool background_negative_only = false;
    int top_m = 5;

    std::string sex_categories = "F,M";
    std::string race_categories = "A,B,C";

    // synth stage
    int synth_n_vars = 12;
    double synth_edge_density = 0.3;
    double synth_weight_range = 2.0;
    int synth_n = 200;
    oracle::RenderParams render;

    std::optional<std::uint64_t> seed;  // required before any stage runs

    std::uint64_t require_seed() const;
};

PipelineConfig load_config(const std::string& path);
void apply_config_entry(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// Hash-chained record of every stage run: inputs, outputs, and the config
/// snapshot under which they were produced.
class Manifest {
public:
    static Manifest load(const std::filesystem::path& artifacts_dir);
    void save() const;

    void record_stage(const std::string& stage, const std::map<std::string, std::string>& inputs,
                      const std::map<std::string, std::string>& outputs,
                      const std::string& config_snapshot, double wall_time_s);

    /// Verify that `path`, produced by `producer_stage`, still hashes to what
    /// the manifest recorded. Throws ValidationError naming the stage to
    /// rerun on mismatch or absence.
    void require_artifact(const std::string& producer_stage, const std::filesystem::path& path) const;

    bool has_stage(const std::string& stage) const;

private:
    std::filesystem::path dir_;
    std::map<std::string, std::map<std::string, std::map<std::string, std::string>>> stages_;
    std::map<std::string, std::string> config_snapshots_;
    std::map<std::string, double> wall_times_;
};

void run_ingest(const PipelineConfig& cfg);
void run_curves(const PipelineConfig& cfg);
void run_matrix(const PipelineConfig& cfg);
void run_ica(const PipelineConfig& cfg);
void run_train(const PipelineConfig& cfg);
void run_explain(const PipelineConfig& cfg);
void run_synth(const PipelineConfig& cfg);
void run_eval(const PipelineConfig& cfg);

}  // namespace cslearn::pipeline

#pragma once

#include <Eigen/Dense>
#include <iosfwd>

#include "cslearn/matrix.hpp"

namespace cslearn::explain {

enum class ModelKind { boosted_trees, logistic };
enum class FeatureSpace { sources, raw };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(std::string_view name);
const char* feature_space_name(FeatureSpace s);
FeatureSpace feature_space_from_name(std::string_view name);

struct LabeledCohort {
    Eigen::MatrixXd features;  // n_features x n_instances, instances are columns
    std::vector<int> labels;   // {0,1}, one per column
    std::vector<xsection::ColumnProvenance> provenance;
};

struct TreeNode {
    int feature = -1;  // -1: leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;  // node 0 is the root
    double value(const Eigen::VectorXd& x) const;
};

struct Hyperparams {
    ModelKind kind = ModelKind::boosted_trees;
    int rounds = 200;
    double learning_rate = 0.1;
    int max_depth = 3;
    double l2 = 1e-6;
    std::uint64_t seed = 0;
};

struct CausalModel {
    ModelKind kind = ModelKind::boosted_trees;
    FeatureSpace space = FeatureSpace::sources;
    int n_features = 0;
    double intercept = 0.0;          // base log-odds (trees) or affine intercept (logistic)
    std::vector<Tree> trees;         // boosted_trees only
    Eigen::VectorXd weights;         // logistic only
    Hyperparams hyperparams;
    std::vector<double> train_loss;  // mean logistic loss per boosting round

    /// Log-odds score.
    double margin(const Eigen::VectorXd& x) const;
    /// Probability in (0,1).
    double predict(const Eigen::VectorXd& x) const;
};

CausalModel train_model(const LabeledCohort& cohort, const Hyperparams& hp,
                        FeatureSpace space = FeatureSpace::sources);

enum class ShapEstimator { exact, permutation };

struct ShapExplanation {
    xsection::ColumnProvenance provenance;
    double base_value = 0.0;
    Eigen::VectorXd phi;
    ShapEstimator estimator = ShapEstimator::exact;
    int n_permutations = 0;
    Eigen::VectorXd standard_error;  // permutation estimator only
};

// exact enumeration bound: 2^k subsets
inline constexpr int kMaxExactFeatures = 20;

/// Interventional Shapley values on the margin (log-odds) scale:
/// v(T) = mean over background columns b of margin(x on T, b elsewhere),
/// exact enumeration over all 2^k subsets. base_value = v(empty set).
ShapExplanation shap_exact(const CausalModel& model, const Eigen::VectorXd& instance,
                           const Eigen::MatrixXd& background);

/// Permutation-sampling estimator with antithetic pairs (each sampled
/// permutation is walked together with its reverse). When k! <= n_permutations
/// all permutations are enumerated once and the result is exact.
ShapExplanation shap_sampled(const CausalModel& model, const Eigen::VectorXd& instance,
                             const Eigen::MatrixXd& background, int n_permutations, Rng& rng);

struct SourceRanking {
    std::vector<double> importance;  // mean |phi| per source, source-indexed
    std::vector<int> order;          // source indices, descending importance, ties by index
};

SourceRanking rank_sources(const std::vector<ShapExplanation>& explanations);

struct Metrics {
    double auroc = 0.0;
    double accuracy = 0.0;  // at threshold 0.5
    double log_loss = 0.0;
};

Metrics evaluate(const CausalModel& model, const LabeledCohort& held_out);

void write_model(const CausalModel& model, std::ostream& out);
CausalModel read_model(std::istream& in);

}  // namespace cslearn::explain

#pragma once

#include <Eigen/Dense>
#include <iosfwd>

#include "cslearn/ingest.hpp"

namespace cslearn::oracle {

enum class SourceFamily { laplace, uniform, mixture, gaussian };

const char* family_name(SourceFamily f);
SourceFamily family_from_name(std::string_view name);

/// Linear non-Gaussian structural causal model over a fixed causal order.
/// X = (I - B)^-1 S with B strictly lower-triangular; the binary outcome Y is
/// a sink generated from a subset of sources through a logistic link.
struct SyntheticSCM {
    int n_vars = 0;
    Eigen::MatrixXd edges;  // B, strictly lower-triangular
    std::vector<SourceFamily> families;
    Eigen::MatrixXd mixing_true;   // A_true = (I - B)^-1
    std::vector<int> outcome_sources;
    Eigen::VectorXd outcome_weights;  // one weight per outcome source
    double outcome_intercept = 0.0;
};

struct SyntheticDataset {
    Eigen::MatrixXd x_true;  // n_vars x n
    Eigen::MatrixXd s_true;  // n_vars x n
    std::vector<int> labels;
    std::uint64_t seed = 0;
};

SyntheticSCM generate_scm(int n_vars, double edge_density, double weight_range, Rng& rng);

/// All source families are zero-mean unit-variance; by default every source
/// is Laplace. `family` overrides the per-variable family uniformly.
SyntheticDataset sample_dataset(const SyntheticSCM& scm, int n, Rng& rng);

struct SourceMatch {
    std::vector<int> permutation;  // estimated row i matches true row permutation[i]
    std::vector<double> signs;     // +1/-1 per estimated row
    std::vector<double> abs_correlation;
    double mean_abs_correlation = 0.0;
};

/// Maximum-weight bipartite assignment on the |Pearson correlation| matrix
/// (Hungarian algorithm).
SourceMatch match_sources(const Eigen::MatrixXd& s_est, const Eigen::MatrixXd& s_true);

/// Permutation- and scale-invariant recovery discrepancy; 0 iff P is a
/// scaled signed permutation.
double amari_distance(const Eigen::MatrixXd& p);

/// Ground-truth interventional Shapley value per source on the log-odds
/// scale: w_i (s_i - background_mean_i) for outcome sources, 0 otherwise.
Eigen::VectorXd true_ite(const SyntheticSCM& scm, const Eigen::VectorXd& s_instance,
                         const Eigen::VectorXd& background_mean);

struct RenderParams {
    long long span_days = 730;
    long long index_day = 365;     // day whose cross section reproduces the column
    double sparsity = 0.9;         // fraction of days NOT observed for measurements
    double code_fraction = 0.25;   // fraction of variables rendered as code streams
    double code_rate_scale = 0.5;  // events/day per unit of (value + offset)
    double code_rate_offset = 4.0;
    double drift_amplitude = 0.2;  // slow sinusoidal drift around the column value
    std::uint64_t seed = 0;
};

struct RenderedCorpus {
    std::vector<ingest::PatientRecord> records;  // one synthetic patient per dataset column
    long long index_day = 0;
    std::vector<int> code_variables;  // variable indices rendered as code streams
    std::vector<std::string> variable_names;
    ingest::CategorySets categories;
};

/// Turn each dataset column into an episodic event record: continuous
/// variables as sparse measurements of a smooth trajectory that passes
/// through the column value at the index day, a seed-chosen subset as
/// Poisson code streams with intensity affine in the column value.
RenderedCorpus render_events(const SyntheticDataset& dataset, const SyntheticSCM& scm,
                             const RenderParams& params);

void write_scm(const SyntheticSCM& scm, std::ostream& out);
SyntheticSCM read_scm(std::istream& in);

/// Min-cost assignment (row i -> column assignment[i]) for a square cost
/// matrix, O(n^3).
std::vector<int> hungarian_min_cost(const Eigen::MatrixXd& cost);

}  // namespace cslearn::oracle

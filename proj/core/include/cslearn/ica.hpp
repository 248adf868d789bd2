#pragma once

#include <Eigen/Dense>
#include <iosfwd>

#include "cslearn/ingest.hpp"

namespace cslearn::ica {

enum class Contrast { logcosh, exp };

const char* contrast_name(Contrast c);
Contrast contrast_from_name(std::string_view name);

struct WhiteningTransform {
    Eigen::VectorXd mean;                // per-variable center
    Eigen::MatrixXd projection;          // k x n_variables
    Eigen::MatrixXd inverse_projection;  // n_variables x k
    int retained_k = 0;
    Eigen::VectorXd eigenvalues;  // retained spectrum, descending
};

struct ConvergenceReport {
    int iterations = 0;
    double final_delta = 0.0;
    bool converged = false;
};

/// Realizes X = A S: `mixing` columns are source signatures, `unmixing` maps
/// centered standardized data to source expressions.
struct ICAModel {
    Eigen::MatrixXd mixing;    // n_variables x k
    Eigen::MatrixXd unmixing;  // k x n_variables
    WhiteningTransform whitening;
    Contrast contrast = Contrast::logcosh;
    ConvergenceReport report;
    std::uint64_t vocabulary_hash = 0;
};

struct SourceMatrix {
    Eigen::MatrixXd values;  // k x n_columns
};

struct WhitenResult {
    WhiteningTransform transform;
    Eigen::MatrixXd data;  // k x n_columns, identity covariance
    bool k_reduced = false;
};

/// Center rows and project onto the top-k eigenpairs of the sample
/// covariance, scaled to identity covariance. Eigenvalues below 1e-10 are
/// dropped, reducing k (error instead when `strict`).
WhitenResult whiten(const Eigen::MatrixXd& X_std, int k, bool strict = false);

struct FastIcaResult {
    Eigen::MatrixXd rotation;  // k x k orthogonal
    ConvergenceReport report;
};

/// Symmetric (parallel) fixed-point FastICA on whitened data. Convergence
/// when every row direction is stable: max_i |1 - |<w_i', w_i>|| < tol.
/// Non-convergence is reported, not thrown.
FastIcaResult fastica(const Eigen::MatrixXd& whitened, Contrast contrast, double tol, int max_iter,
                      Rng& rng);

/// unmixing = rotation * projection, mixing = inverse_projection * rotation'.
/// Signs fixed so each signature's largest-magnitude loading is positive.
ICAModel compose_model(const WhiteningTransform& whitening, const Eigen::MatrixXd& rotation,
                       Contrast contrast, const ConvergenceReport& report);

SourceMatrix transform(const ICAModel& model, const Eigen::MatrixXd& X_std);

/// The source's signature (its column of the mixing matrix) ranked by
/// |loading| descending, top_m entries.
std::vector<std::pair<std::string, double>> signature(const ICAModel& model,
                                                      const ingest::VariableVocabulary& vocab,
                                                      int source_index, int top_m);

void write_model(const ICAModel& model, std::ostream& out);
ICAModel read_model(std::istream& in);

}  // namespace cslearn::ica

#pragma once

#include <Eigen/Dense>
#include <iosfwd>

#include "cslearn/curves.hpp"

namespace cslearn::xsection {

struct ColumnProvenance {
    std::string patient_id;
    long long day = 0;
};

/// Dense matrix X: one row per vocabulary variable, one column per sampled
/// patient-timepoint.
struct CrossSectionMatrix {
    Eigen::MatrixXd values;
    std::vector<ColumnProvenance> provenance;
    std::uint64_t vocabulary_hash = 0;
};

struct Standardizer {
    Eigen::VectorXd center;
    Eigen::VectorXd scale;  // strictly positive
};

/// max(1, round(span_years * density)) days drawn uniformly with replacement
/// from the span, sorted. density is samples per 365.25-day year.
std::vector<long long> sample_times(curves::DaySpan span, double density, Rng& rng);

Eigen::VectorXd cross_section(const curves::Curveset& cs, long long day);

/// Columns are all sampled cross sections of all patients, in patient order
/// then day order. Per-patient sampling uses a sub-seed derived from
/// (master_seed, patient_id) so parallel assembly reproduces sequential.
CrossSectionMatrix assemble_matrix(const std::vector<curves::Curveset>& curvesets, double density,
                                   std::uint64_t master_seed, std::uint64_t vocabulary_hash);

/// Robust per-row standardizer: center = median, scale = IQR, falling back to
/// standard deviation then 1 for degenerate rows.
Standardizer fit_standardizer(const Eigen::MatrixXd& X);
Eigen::MatrixXd apply_standardizer(const Standardizer& std_, const Eigen::MatrixXd& X);
Eigen::MatrixXd invert_standardizer(const Standardizer& std_, const Eigen::MatrixXd& X_std);

/// Linear-interpolation quantile of a sample (same convention as the
/// standardizer's median/IQR).
double quantile(std::vector<double> values, double q);

void write_matrix(const CrossSectionMatrix& m, std::ostream& values_out, std::ostream& provenance_out);
CrossSectionMatrix read_matrix(std::istream& values_in, std::istream& provenance_in);
void write_standardizer(const Standardizer& s, std::ostream& out);
Standardizer read_standardizer(std::istream& in);

}  // namespace cslearn::xsection

#pragma once

#include <vector>

#include "cslearn/ingest.hpp"

namespace cslearn::curves {

using ingest::DaySpan;

enum class Provenance { observed, imputed };

/// One daily-resolution trajectory: values[i] is the curve value at day
/// grid.first + i.
struct Curve {
    DaySpan grid;
    std::vector<double> values;
    Provenance provenance = Provenance::observed;

    double at(long long day) const { return values[static_cast<std::size_t>(day - grid.first)]; }
};

struct RashParams {
    int n_histograms = 64;
    double bandwidth_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct Curveset {
    std::string patient_id;
    DaySpan grid;
    std::vector<Curve> curves;  // one per vocabulary row, in vocabulary order
};

/// Fritsch-Carlson monotone piecewise-cubic Hermite interpolation evaluated
/// at every grid day. Exact at observation days; constant-hold beyond the
/// first/last observation.
Curve interpolate_measurement(const std::vector<std::pair<long long, double>>& obs, DaySpan grid);

/// Average of randomly shifted histograms of the event days, converted to
/// events per day. Bin width = max(1, bandwidth_fraction * grid length).
Curve code_intensity(const std::vector<long long>& event_days, DaySpan grid,
                     const RashParams& params);

/// Binary taking/not-taking curve: on from the first mention extended back to
/// just after the nearest earlier reconciliation (or the mention itself), to
/// the last mention extended forward to just before the nearest later
/// reconciliation (or the mention itself).
Curve medication_curve(const std::vector<long long>& mention_days,
                       const std::vector<long long>& reconciliation_days, DaySpan grid);

/// One constant one-hot curve per sex then race category, then the age curve
/// (day - birth_day)/365.25 in years.
std::vector<Curve> demographic_curves(const ingest::Demographics& d,
                                      const ingest::CategorySets& categories, DaySpan grid);

Curve impute_missing(const std::string& variable_id, ingest::RowKind kind, DaySpan grid,
                     const ingest::PopulationStats& stats);

Curveset build_curveset(const ingest::PatientRecord& r, const ingest::PopulationStats& stats,
                        const ingest::VariableVocabulary& vocab, const RashParams& rash);

// days in 20 years; imputed condition-code intensity is 1 code per this span
inline constexpr double kImputedCodeSpanDays = 20.0 * 365.25;
inline constexpr double kDaysPerYear = 365.25;

}  // namespace cslearn::curves

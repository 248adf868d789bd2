#include "cslearn/curves.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cslearn::curves {

namespace {

int sgn(double v) { return (v > 0) - (v < 0); }

// Shape-preserving one-sided endpoint slope (three-point formula with
// Fritsch-Carlson clipping).
double edge_slope(double h0, double h1, double s0, double s1) {
    double d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if (sgn(d) != sgn(s0)) return 0.0;
    if (sgn(s0) != sgn(s1) && std::abs(d) > 3.0 * std::abs(s0)) return 3.0 * s0;
    return d;
}

std::vector<double> pchip_slopes(const std::vector<std::pair<long long, double>>& obs) {
    const std::size_t n = obs.size();
    std::vector<double> h(n - 1), s(n - 1), d(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = static_cast<double>(obs[i + 1].first - obs[i].first);
        s[i] = (obs[i + 1].second - obs[i].second) / h[i];
    }
    if (n == 2) {
        d[0] = d[1] = s[0];
        return d;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (s[i - 1] == 0.0 || s[i] == 0.0 || sgn(s[i - 1]) != sgn(s[i])) {
            d[i] = 0.0;
        } else {
            // weighted harmonic mean of the adjacent secant slopes
            double w1 = 2.0 * h[i] + h[i - 1];
            double w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
        }
    }
    d[0] = edge_slope(h[0], h[1], s[0], s[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
    return d;
}

}  // namespace

Curve interpolate_measurement(const std::vector<std::pair<long long, double>>& obs, DaySpan grid) {
    if (obs.empty()) throw ValidationError("interpolate_measurement: no observations");
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (!std::isfinite(obs[i].second))
            throw ValidationError("interpolate_measurement: non-finite value");
        if (!grid.contains(obs[i].first))
            throw ValidationError("interpolate_measurement: observation day outside grid");
        if (i > 0 && obs[i].first <= obs[i - 1].first)
            throw ValidationError(obs[i].first == obs[i - 1].first
                                      ? "interpolate_measurement: duplicate observation day"
                                      : "interpolate_measurement: days not increasing");
    }

    Curve c;
    c.grid = grid;
    c.values.assign(static_cast<std::size_t>(grid.length()), 0.0);
    c.provenance = Provenance::observed;

    if (obs.size() == 1) {
        std::fill(c.values.begin(), c.values.end(), obs[0].second);
        return c;
    }

    const std::vector<double> d = pchip_slopes(obs);
    std::size_t seg = 0;
    for (long long day = grid.first; day <= grid.last; ++day) {
        double v;
        if (day <= obs.front().first) {
            v = obs.front().second;  // constant-hold extrapolation
        } else if (day >= obs.back().first) {
            v = obs.back().second;
        } else {
            while (obs[seg + 1].first < day) ++seg;
            const double h = static_cast<double>(obs[seg + 1].first - obs[seg].first);
            const double t = static_cast<double>(day - obs[seg].first) / h;
            const double t2 = t * t, t3 = t2 * t;
            const double h00 = 2 * t3 - 3 * t2 + 1;
            const double h10 = t3 - 2 * t2 + t;
            const double h01 = -2 * t3 + 3 * t2;
            const double h11 = t3 - t2;
            v = h00 * obs[seg].second + h10 * h * d[seg] + h01 * obs[seg + 1].second +
                h11 * h * d[seg + 1];
        }
        c.values[static_cast<std::size_t>(day - grid.first)] = v;
    }
    return c;
}

Curve code_intensity(const std::vector<long long>& event_days, DaySpan grid,
                     const RashParams& params) {
    if (params.n_histograms < 1) throw ValidationError("code_intensity: n_histograms must be >= 1");
    for (long long day : event_days)
        if (!grid.contains(day)) throw ValidationError("code_intensity: event day outside grid");

    const double span = static_cast<double>(grid.length());
    const double w = std::max(1.0, params.bandwidth_fraction * span);

    Curve c;
    c.grid = grid;
    c.values.assign(static_cast<std::size_t>(grid.length()), 0.0);
    c.provenance = Provenance::observed;

    Rng rng(params.seed);
    std::uniform_real_distribution<double> shift_dist(0.0, w);
    const auto n_bins = static_cast<std::size_t>(std::ceil(span / w)) + 2;
    std::vector<double> counts(n_bins), days_in_bin(n_bins);

    for (int m = 0; m < params.n_histograms; ++m) {
        const double origin = static_cast<double>(grid.first) - shift_dist(rng);
        auto bin_of = [&](long long day) {
            auto bin = static_cast<std::size_t>((static_cast<double>(day) - origin) / w);
            return std::min(bin, n_bins - 1);
        };
        std::fill(counts.begin(), counts.end(), 0.0);
        std::fill(days_in_bin.begin(), days_in_bin.end(), 0.0);
        for (long long day : event_days) counts[bin_of(day)] += 1.0;
        // normalize each bin by its in-grid width (bins clipped by the span
        // would otherwise leak mass off the grid)
        for (long long day = grid.first; day <= grid.last; ++day) days_in_bin[bin_of(day)] += 1.0;
        for (long long day = grid.first; day <= grid.last; ++day) {
            const auto bin = bin_of(day);
            c.values[static_cast<std::size_t>(day - grid.first)] += counts[bin] / days_in_bin[bin];
        }
    }
    for (double& v : c.values) v /= params.n_histograms;
    return c;
}

Curve medication_curve(const std::vector<long long>& mention_days,
                       const std::vector<long long>& reconciliation_days, DaySpan grid) {
    if (mention_days.empty()) throw ValidationError("medication_curve: no mentions");
    for (long long day : mention_days)
        if (!grid.contains(day)) throw ValidationError("medication_curve: mention outside grid");

    const long long first_mention = *std::min_element(mention_days.begin(), mention_days.end());
    const long long last_mention = *std::max_element(mention_days.begin(), mention_days.end());

    long long start = first_mention;
    long long end = last_mention;
    long long best_earlier = std::numeric_limits<long long>::min();
    long long best_later = std::numeric_limits<long long>::max();
    bool has_earlier = false, has_later = false;
    for (long long r : reconciliation_days) {
        if (r < first_mention && r > best_earlier) best_earlier = r, has_earlier = true;
        if (r > last_mention && r < best_later) best_later = r, has_later = true;
    }
    if (has_earlier) start = best_earlier + 1;
    if (has_later) end = best_later - 1;
    start = std::max(start, grid.first);
    end = std::min(end, grid.last);

    Curve c;
    c.grid = grid;
    c.values.assign(static_cast<std::size_t>(grid.length()), 0.0);
    c.provenance = Provenance::observed;
    for (long long day = start; day <= end; ++day)
        c.values[static_cast<std::size_t>(day - grid.first)] = 1.0;
    return c;
}

std::vector<Curve> demographic_curves(const ingest::Demographics& d,
                                      const ingest::CategorySets& categories, DaySpan grid) {
    auto one_hot = [&](const std::vector<std::string>& cats, const std::string& val,
                       const char* what) {
        if (std::find(cats.begin(), cats.end(), val) == cats.end())
            throw ValidationError(std::string("unknown ") + what + " category '" + val + "'");
        std::vector<Curve> out;
        for (const std::string& cat : cats) {
            Curve c;
            c.grid = grid;
            c.values.assign(static_cast<std::size_t>(grid.length()), cat == val ? 1.0 : 0.0);
            out.push_back(std::move(c));
        }
        return out;
    };

    std::vector<Curve> result = one_hot(categories.sex, d.sex, "sex");
    for (Curve& c : one_hot(categories.race, d.race, "race")) result.push_back(std::move(c));

    Curve age;
    age.grid = grid;
    age.values.resize(static_cast<std::size_t>(grid.length()));
    for (long long day = grid.first; day <= grid.last; ++day)
        age.values[static_cast<std::size_t>(day - grid.first)] =
            static_cast<double>(day - d.birth_day) / kDaysPerYear;
    result.push_back(std::move(age));
    return result;
}

Curve impute_missing(const std::string& variable_id, ingest::RowKind kind, DaySpan grid,
                     const ingest::PopulationStats& stats) {
    double value;
    switch (kind) {
        case ingest::RowKind::measurement: {
            auto it = stats.medians.find(variable_id);
            if (it == stats.medians.end())
                throw ValidationError("impute_missing: no population median for measurement '" +
                                      variable_id + "'");
            value = it->second;
            break;
        }
        case ingest::RowKind::condition_code:
            value = 1.0 / kImputedCodeSpanDays;  // one code per 20 years
            break;
        case ingest::RowKind::medication:
            value = 0.0;  // not taking
            break;
        default:
            throw ValidationError("impute_missing: demographic rows are never imputed");
    }
    Curve c;
    c.grid = grid;
    c.values.assign(static_cast<std::size_t>(grid.length()), value);
    c.provenance = Provenance::imputed;
    return c;
}

Curveset build_curveset(const ingest::PatientRecord& r, const ingest::PopulationStats& stats,
                        const ingest::VariableVocabulary& vocab, const RashParams& rash) {
    Curveset cs;
    cs.patient_id = r.patient_id;
    cs.grid = r.span;
    cs.curves.reserve(vocab.size());

    std::map<std::string, std::vector<std::pair<long long, double>>> meas;
    std::map<std::string, std::vector<long long>> codes, meds, recons;
    for (const ingest::EventRecord& ev : r.events) {
        switch (ev.modality) {
            case ingest::Modality::measurement:
                meas[ev.variable_id].emplace_back(ev.day, *ev.value);
                break;
            case ingest::Modality::condition_code: codes[ev.variable_id].push_back(ev.day); break;
            case ingest::Modality::medication: meds[ev.variable_id].push_back(ev.day); break;
            case ingest::Modality::reconciliation: recons[ev.variable_id].push_back(ev.day); break;
        }
    }

    std::vector<Curve> demo;  // built lazily on the first demographic row
    std::size_t demo_idx = 0;

    for (const ingest::VocabularyRow& row : vocab.rows) {
        switch (row.kind) {
            case ingest::RowKind::measurement: {
                auto it = meas.find(row.variable_id);
                cs.curves.push_back(it != meas.end()
                                        ? interpolate_measurement(it->second, cs.grid)
                                        : impute_missing(row.variable_id, row.kind, cs.grid, stats));
                break;
            }
            case ingest::RowKind::condition_code: {
                auto it = codes.find(row.variable_id);
                if (it != codes.end()) {
                    RashParams p = rash;
                    p.seed = derive_seed(rash.seed, r.patient_id + "/" + row.variable_id);
                    cs.curves.push_back(code_intensity(it->second, cs.grid, p));
                } else {
                    cs.curves.push_back(impute_missing(row.variable_id, row.kind, cs.grid, stats));
                }
                break;
            }
            case ingest::RowKind::medication: {
                auto it = meds.find(row.variable_id);
                if (it != meds.end()) {
                    auto rit = recons.find(row.variable_id);
                    static const std::vector<long long> kNone;
                    cs.curves.push_back(medication_curve(
                        it->second, rit != recons.end() ? rit->second : kNone, cs.grid));
                } else {
                    cs.curves.push_back(impute_missing(row.variable_id, row.kind, cs.grid, stats));
                }
                break;
            }
            case ingest::RowKind::sex_category:
            case ingest::RowKind::race_category:
            case ingest::RowKind::age: {
                if (demo.empty()) demo = demographic_curves(r.demographics, vocab.categories, cs.grid);
                cs.curves.push_back(std::move(demo[demo_idx++]));
                break;
            }
        }
    }
    return cs;
}

}  // namespace cslearn::curves

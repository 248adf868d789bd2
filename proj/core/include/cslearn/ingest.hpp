#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cslearn/common.hpp"

namespace cslearn::ingest {

enum class Modality { measurement, condition_code, medication, reconciliation };

const char* modality_name(Modality m);
std::optional<Modality> modality_from_name(std::string_view name);

struct EventRecord {
    std::string patient_id;
    long long day = 0;  // days since the patient-local epoch
    Modality modality = Modality::measurement;
    std::string variable_id;
    std::optional<double> value;  // present only for measurements
};

struct Demographics {
    std::string patient_id;
    std::string sex;
    std::string race;
    long long birth_day = 0;  // may be negative relative to record start
};

struct DaySpan {
    long long first = 0;
    long long last = 0;
    long long length() const { return last - first + 1; }
    bool contains(long long day) const { return day >= first && day <= last; }
};

struct PatientRecord {
    std::string patient_id;
    std::vector<EventRecord> events;  // sorted by day, stable ties
    Demographics demographics;
    DaySpan span;
};

struct PopulationStats {
    // per measurement variable: median of observed values
    std::map<std::string, double> medians;
    // per variable (any modality): observation count
    std::map<std::string, std::size_t> counts;
};

/// Declared closed category sets for demographic encoding.
struct CategorySets {
    std::vector<std::string> sex;
    std::vector<std::string> race;
};

enum class RowKind { measurement, condition_code, medication, sex_category, race_category, age };

struct VocabularyRow {
    std::string variable_id;  // category label for demographic rows, "age" for the age row
    RowKind kind;
};

/// Frozen row ordering shared by every downstream matrix. Ordering is total:
/// measurements, condition codes, medications (each lexicographic), then one
/// row per sex category, per race category, then age.
struct VariableVocabulary {
    std::vector<VocabularyRow> rows;
    CategorySets categories;

    std::size_t size() const { return rows.size(); }
    /// Stable content hash, recorded in artifacts to detect vocabulary drift.
    std::uint64_t content_hash() const;
};

struct ValidationFinding {
    std::string message;
    std::ptrdiff_t event_index = -1;  // -1 when not tied to a single event
};

/// Parse the event table. One PatientRecord per distinct patient id, events
/// day-sorted, span = [min event day, max event day]. Demographics are
/// attached from `demographics`; patients present only there get span [0,0].
std::vector<PatientRecord> parse_events(std::istream& events, std::istream& demographics);

void serialize_events(const std::vector<PatientRecord>& records, std::ostream& events,
                      std::ostream& demographics);

std::vector<ValidationFinding> validate_record(const PatientRecord& r);

PopulationStats population_statistics(const std::vector<PatientRecord>& records);

VariableVocabulary freeze_vocabulary(const std::vector<PatientRecord>& records,
                                     const CategorySets& categories);

void write_vocabulary(const VariableVocabulary& vocab, std::ostream& out);
VariableVocabulary read_vocabulary(std::istream& in);
void write_stats(const PopulationStats& stats, std::ostream& out);
PopulationStats read_stats(std::istream& in);

}  // namespace cslearn::ingest

#include "cslearn/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

namespace cslearn::ingest {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::measurement: return "measurement";
        case Modality::condition_code: return "condition_code";
        case Modality::medication: return "medication";
        case Modality::reconciliation: return "reconciliation";
    }
    return "?";
}

std::optional<Modality> modality_from_name(std::string_view name) {
    if (name == "measurement") return Modality::measurement;
    if (name == "condition_code") return Modality::condition_code;
    if (name == "medication") return Modality::medication;
    if (name == "reconciliation") return Modality::reconciliation;
    return std::nullopt;
}

namespace {
const std::string kEventHeader = "patient_id,day,modality,variable_id,value";
const std::string kDemoHeader = "patient_id,sex,race,birth_day";
}  // namespace

std::vector<PatientRecord> parse_events(std::istream& events, std::istream& demographics) {
    std::unordered_map<std::string, std::size_t> index;
    std::vector<PatientRecord> records;

    auto record_for = [&](const std::string& pid) -> PatientRecord& {
        auto [it, inserted] = index.emplace(pid, records.size());
        if (inserted) {
            records.emplace_back();
            records.back().patient_id = pid;
        }
        return records[it->second];
    };

    for_each_csv_row(events, kEventHeader, [&](const std::vector<std::string>& f, std::size_t line) {
        EventRecord ev;
        ev.patient_id = f[0];
        if (ev.patient_id.empty()) throw ParseError("empty patient_id", line);
        ev.day = parse_int_field(f[1], line, "day");
        if (ev.day < 0) throw ParseError("negative day " + f[1], line);
        auto mod = modality_from_name(f[2]);
        if (!mod) throw ParseError("unknown modality token '" + f[2] + "'", line);
        ev.modality = *mod;
        ev.variable_id = f[3];
        if (ev.variable_id.empty()) throw ParseError("empty variable_id", line);
        if (ev.modality == Modality::measurement) {
            if (f[4].empty()) throw ParseError("measurement without value", line);
            double v = parse_double_field(f[4], line, "measurement");
            if (!std::isfinite(v)) throw ParseError("non-finite measurement value", line);
            ev.value = v;
        } else if (!f[4].empty()) {
            throw ParseError(std::string(modality_name(ev.modality)) + " event carries a value", line);
        }
        record_for(ev.patient_id).events.push_back(std::move(ev));
    });

    std::set<std::string> seen_demo;
    for_each_csv_row(demographics, kDemoHeader,
                     [&](const std::vector<std::string>& f, std::size_t line) {
                         if (f[0].empty()) throw ParseError("empty patient_id", line);
                         if (!seen_demo.insert(f[0]).second)
                             throw ParseError("duplicate demographics row for patient '" + f[0] + "'",
                                              line);
                         PatientRecord& r = record_for(f[0]);
                         r.demographics.patient_id = f[0];
                         r.demographics.sex = f[1];
                         r.demographics.race = f[2];
                         r.demographics.birth_day = parse_int_field(f[3], line, "birth_day");
                     });

    for (PatientRecord& r : records) {
        std::stable_sort(r.events.begin(), r.events.end(),
                         [](const EventRecord& a, const EventRecord& b) { return a.day < b.day; });
        if (r.events.empty()) {
            r.span = {0, 0};
        } else {
            r.span = {r.events.front().day, r.events.back().day};
        }
        if (r.demographics.patient_id.empty()) r.demographics.patient_id = r.patient_id;
    }
    return records;
}

void serialize_events(const std::vector<PatientRecord>& records, std::ostream& events,
                      std::ostream& demographics) {
    events << kEventHeader << "\n";
    demographics << kDemoHeader << "\n";
    for (const PatientRecord& r : records) {
        for (const EventRecord& ev : r.events) {
            events << ev.patient_id << ',' << ev.day << ',' << modality_name(ev.modality) << ','
                   << ev.variable_id << ',';
            if (ev.value) events << format_double(*ev.value);
            events << "\n";
        }
        const Demographics& d = r.demographics;
        demographics << r.patient_id << ',' << d.sex << ',' << d.race << ',' << d.birth_day << "\n";
    }
}

std::vector<ValidationFinding> validate_record(const PatientRecord& r) {
    std::vector<ValidationFinding> findings;
    long long prev_day = -1;
    for (std::size_t i = 0; i < r.events.size(); ++i) {
        const EventRecord& ev = r.events[i];
        auto idx = static_cast<std::ptrdiff_t>(i);
        if (ev.day < 0) findings.push_back({"negative event day", idx});
        if (ev.day < prev_day) findings.push_back({"events not sorted by day", idx});
        prev_day = ev.day;
        if (ev.modality == Modality::measurement) {
            if (!ev.value)
                findings.push_back({"measurement missing value", idx});
            else if (!std::isfinite(*ev.value))
                findings.push_back({"non-finite measurement value", idx});
        } else if (ev.value) {
            findings.push_back({"non-measurement event carries a value", idx});
        }
        if (!r.span.contains(ev.day)) findings.push_back({"event day outside record span", idx});
        if (ev.patient_id != r.patient_id) findings.push_back({"event patient_id mismatch", idx});
    }
    if (r.span.last < r.span.first) findings.push_back({"empty span", -1});
    if (r.demographics.patient_id != r.patient_id)
        findings.push_back({"demographics patient_id mismatch", -1});
    return findings;
}

PopulationStats population_statistics(const std::vector<PatientRecord>& records) {
    std::map<std::string, std::vector<double>> values;
    PopulationStats stats;
    for (const PatientRecord& r : records) {
        for (const EventRecord& ev : r.events) {
            if (ev.modality == Modality::reconciliation) continue;
            ++stats.counts[ev.variable_id];
            if (ev.modality == Modality::measurement) values[ev.variable_id].push_back(*ev.value);
        }
    }
    for (auto& [var, vals] : values) {
        std::sort(vals.begin(), vals.end());
        const std::size_t n = vals.size();
        // even count: mean of the two central values
        stats.medians[var] =
            (n % 2 == 1) ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
    }
    return stats;
}

VariableVocabulary freeze_vocabulary(const std::vector<PatientRecord>& records,
                                     const CategorySets& categories) {
    if (records.empty()) throw ValidationError("freeze_vocabulary: no records");
    std::set<std::string> meas, code, med;
    for (const PatientRecord& r : records) {
        for (const EventRecord& ev : r.events) {
            switch (ev.modality) {
                case Modality::measurement: meas.insert(ev.variable_id); break;
                case Modality::condition_code: code.insert(ev.variable_id); break;
                case Modality::medication:
                case Modality::reconciliation: med.insert(ev.variable_id); break;
            }
        }
    }
    VariableVocabulary vocab;
    vocab.categories = categories;
    for (const auto& v : meas) vocab.rows.push_back({v, RowKind::measurement});
    for (const auto& v : code) vocab.rows.push_back({v, RowKind::condition_code});
    for (const auto& v : med) vocab.rows.push_back({v, RowKind::medication});
    for (const auto& c : categories.sex) vocab.rows.push_back({c, RowKind::sex_category});
    for (const auto& c : categories.race) vocab.rows.push_back({c, RowKind::race_category});
    vocab.rows.push_back({"age", RowKind::age});
    return vocab;
}

std::uint64_t VariableVocabulary::content_hash() const {
    std::uint64_t h = fnv1a64(std::uint64_t{rows.size()});
    for (const VocabularyRow& row : rows) {
        h = fnv1a64(row.variable_id, h);
        h = fnv1a64(std::uint64_t(row.kind), h);
    }
    return h;
}

namespace {
const char* row_kind_name(RowKind k) {
    switch (k) {
        case RowKind::measurement: return "measurement";
        case RowKind::condition_code: return "condition_code";
        case RowKind::medication: return "medication";
        case RowKind::sex_category: return "sex";
        case RowKind::race_category: return "race";
        case RowKind::age: return "age";
    }
    return "?";
}

RowKind row_kind_from_name(const std::string& s, std::size_t line) {
    if (s == "measurement") return RowKind::measurement;
    if (s == "condition_code") return RowKind::condition_code;
    if (s == "medication") return RowKind::medication;
    if (s == "sex") return RowKind::sex_category;
    if (s == "race") return RowKind::race_category;
    if (s == "age") return RowKind::age;
    throw ParseError("unknown vocabulary row kind '" + s + "'", line);
}
}  // namespace

void write_vocabulary(const VariableVocabulary& vocab, std::ostream& out) {
    out << "kind,variable_id\n";
    for (const VocabularyRow& row : vocab.rows)
        out << row_kind_name(row.kind) << ',' << row.variable_id << "\n";
}

VariableVocabulary read_vocabulary(std::istream& in) {
    VariableVocabulary vocab;
    for_each_csv_row(in, "kind,variable_id", [&](const std::vector<std::string>& f, std::size_t line) {
        RowKind kind = row_kind_from_name(f[0], line);
        vocab.rows.push_back({f[1], kind});
        if (kind == RowKind::sex_category) vocab.categories.sex.push_back(f[1]);
        if (kind == RowKind::race_category) vocab.categories.race.push_back(f[1]);
    });
    return vocab;
}

void write_stats(const PopulationStats& stats, std::ostream& out) {
    out << "variable_id,count,median\n";
    for (const auto& [var, count] : stats.counts) {
        out << var << ',' << count << ',';
        auto it = stats.medians.find(var);
        if (it != stats.medians.end()) out << format_double(it->second);
        out << "\n";
    }
}

PopulationStats read_stats(std::istream& in) {
    PopulationStats stats;
    for_each_csv_row(in, "variable_id,count,median",
                     [&](const std::vector<std::string>& f, std::size_t line) {
                         stats.counts[f[0]] = static_cast<std::size_t>(
                             parse_int_field(f[1], line, "count"));
                         if (!f[2].empty())
                             stats.medians[f[0]] = parse_double_field(f[2], line, "median");
                     });
    return stats;
}

}  // namespace cslearn::ingest

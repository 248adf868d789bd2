#include "cslearn/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace cslearn::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t PipelineConfig::require_seed() const {
    if (!seed) throw ValidationError("seed is required (set --seed or config key 'seed')");
    return *seed;
}

void apply_config_entry(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    auto as_double = [&] { return parse_double_field(value, 0, key.c_str()); };
    auto as_int = [&] { return static_cast<int>(parse_int_field(value, 0, key.c_str())); };
    if (key == "events") cfg.events_path = value;
    else if (key == "demographics") cfg.demographics_path = value;
    else if (key == "labels") cfg.labels_path = value;
    else if (key == "artifacts") cfg.artifacts_dir = value;
    else if (key == "density") cfg.density = as_double();
    else if (key == "k") cfg.k = as_int();
    else if (key == "contrast") cfg.contrast = ica::contrast_from_name(value);
    else if (key == "tol") cfg.tol = as_double();
    else if (key == "max_iter") cfg.max_iter = as_int();
    else if (key == "n_histograms") cfg.rash.n_histograms = as_int();
    else if (key == "bandwidth_fraction") cfg.rash.bandwidth_fraction = as_double();
    else if (key == "model") cfg.model.kind = explain::model_kind_from_name(value);
    else if (key == "rounds") cfg.model.rounds = as_int();
    else if (key == "learning_rate") cfg.model.learning_rate = as_double();
    else if (key == "max_depth") cfg.model.max_depth = as_int();
    else if (key == "l2") cfg.model.l2 = as_double();
    else if (key == "feature_space") cfg.feature_space = explain::feature_space_from_name(value);
    else if (key == "shap_estimator") {
        if (value != "exact" && value != "permutation")
            throw ValidationError("shap_estimator must be 'exact' or 'permutation'");
        cfg.shap_estimator = value;
    } else if (key == "n_permutations") cfg.n_permutations = as_int();
    else if (key == "background_size") cfg.background_size = as_int();
    else if (key == "background_negative_only") cfg.background_negative_only = as_int() != 0;
    else if (key == "top_m") cfg.top_m = as_int();
    else if (key == "sex_categories") cfg.sex_categories = value;
    else if (key == "race_categories") cfg.race_categories = value;
    else if (key == "synth_n_vars") cfg.synth_n_vars = as_int();
    else if (key == "synth_edge_density") cfg.synth_edge_density = as_double();
    else if (key == "synth_weight_range") cfg.synth_weight_range = as_double();
    else if (key == "synth_n") cfg.synth_n = as_int();
    else if (key == "synth_span_days") cfg.render.span_days = parse_int_field(value, 0, key.c_str());
    else if (key == "synth_index_day") cfg.render.index_day = parse_int_field(value, 0, key.c_str());
    else if (key == "synth_sparsity") cfg.render.sparsity = as_double();
    else if (key == "synth_code_fraction") cfg.render.code_fraction = as_double();
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int_field(value, 0, "seed"));
    else throw ValidationError("unknown config key '" + key + "'");
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    PipelineConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config line is not key=value", lineno);
        apply_config_entry(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

namespace {

std::string config_snapshot(const PipelineConfig& cfg) {
    std::ostringstream ss;
    ss << "artifacts=" << cfg.artifacts_dir << ";background_negative_only="
       << cfg.background_negative_only << ";background_size=" << cfg.background_size
       << ";bandwidth_fraction=" << format_double(cfg.rash.bandwidth_fraction)
       << ";contrast=" << ica::contrast_name(cfg.contrast)
       << ";demographics=" << cfg.demographics_path << ";density=" << format_double(cfg.density)
       << ";events=" << cfg.events_path
       << ";feature_space=" << explain::feature_space_name(cfg.feature_space) << ";k=" << cfg.k
       << ";l2=" << format_double(cfg.model.l2) << ";labels=" << cfg.labels_path
       << ";learning_rate=" << format_double(cfg.model.learning_rate)
       << ";max_depth=" << cfg.model.max_depth << ";max_iter=" << cfg.max_iter
       << ";model=" << explain::model_kind_name(cfg.model.kind)
       << ";n_histograms=" << cfg.rash.n_histograms << ";n_permutations=" << cfg.n_permutations
       << ";race_categories=" << cfg.race_categories << ";rounds=" << cfg.model.rounds
       << ";seed=" << (cfg.seed ? std::to_string(*cfg.seed) : std::string("unset"))
       << ";sex_categories=" << cfg.sex_categories << ";shap_estimator=" << cfg.shap_estimator
       << ";synth_code_fraction=" << format_double(cfg.render.code_fraction)
       << ";synth_edge_density=" << format_double(cfg.synth_edge_density)
       << ";synth_index_day=" << cfg.render.index_day << ";synth_n=" << cfg.synth_n
       << ";synth_n_vars=" << cfg.synth_n_vars
       << ";synth_span_days=" << cfg.render.span_days
       << ";synth_sparsity=" << format_double(cfg.render.sparsity)
       << ";synth_weight_range=" << format_double(cfg.synth_weight_range)
       << ";tol=" << format_double(cfg.tol) << ";top_m=" << cfg.top_m;
    return ss.str();
}

std::vector<std::string> split_list(const std::string& csv) {
    return split_csv_line(csv);
}

ingest::CategorySets category_sets(const PipelineConfig& cfg) {
    return {split_list(cfg.sex_categories), split_list(cfg.race_categories)};
}

std::ofstream open_out(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open output file: " + path.string());
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open input file: " + path.string());
    return in;
}

// values-only block: "rows,cols,tag" header then one CSV row per matrix row
void write_values(const Eigen::MatrixXd& m, std::uint64_t tag, std::ostream& out) {
    out << m.rows() << ',' << m.cols() << ',' << tag << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << "\n";
    }
}

Eigen::MatrixXd read_values(std::istream& in, std::uint64_t* tag = nullptr) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("values file empty", 1);
    auto header = split_csv_line(line);
    if (header.size() != 3) throw ParseError("values header must be rows,cols,tag", 1);
    const long long rows = parse_int_field(header[0], 1, "rows");
    const long long cols = parse_int_field(header[1], 1, "cols");
    if (tag) *tag = std::stoull(header[2]);
    Eigen::MatrixXd m(rows, cols);
    for (long long i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) throw ParseError("values file truncated");
        auto fields = split_csv_line(line);
        if (static_cast<long long>(fields.size()) != cols)
            throw ParseError("values row width mismatch", static_cast<std::size_t>(2 + i));
        for (long long j = 0; j < cols; ++j)
            m(i, j) = parse_double_field(fields[static_cast<std::size_t>(j)],
                                         static_cast<std::size_t>(2 + i), "value");
    }
    return m;
}

std::vector<xsection::ColumnProvenance> read_provenance(const fs::path& path) {
    auto in = open_in(path);
    std::vector<xsection::ColumnProvenance> prov;
    for_each_csv_row(in, "patient_id,day", [&](const std::vector<std::string>& f, std::size_t line) {
        prov.push_back({f[0], parse_int_field(f[1], line, "day")});
    });
    return prov;
}

std::map<std::string, int> read_labels(const fs::path& path) {
    auto in = open_in(path);
    std::map<std::string, int> labels;
    for_each_csv_row(in, "patient_id,label", [&](const std::vector<std::string>& f, std::size_t line) {
        const long long v = parse_int_field(f[1], line, "label");
        if (v != 0 && v != 1) throw ParseError("label must be 0 or 1", line);
        labels[f[0]] = static_cast<int>(v);
    });
    return labels;
}

struct StageTimer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

Manifest Manifest::load(const fs::path& artifacts_dir) {
    Manifest m;
    m.dir_ = artifacts_dir;
    const fs::path path = artifacts_dir / "manifest.json";
    if (fs::exists(path)) {
        std::ifstream in(path);
        json doc = json::parse(in);
        for (auto& [stage, entry] : doc.items()) {
            m.config_snapshots_[stage] = entry.value("config", "");
            m.wall_times_[stage] = entry.value("wall_time_s", 0.0);
            for (const char* section : {"inputs", "outputs"})
                if (entry.contains(section))
                    for (auto& [file, hash] : entry[section].items())
                        m.stages_[stage][section][file] = hash.get<std::string>();
        }
    }
    return m;
}

void Manifest::save() const {
    json doc = json::object();
    for (const auto& [stage, sections] : stages_) {
        json entry = json::object();
        entry["config"] = config_snapshots_.count(stage) ? config_snapshots_.at(stage) : "";
        entry["wall_time_s"] = wall_times_.count(stage) ? wall_times_.at(stage) : 0.0;
        for (const auto& [section, files] : sections) {
            json filemap = json::object();
            for (const auto& [file, hash] : files) filemap[file] = hash;
            entry[section] = filemap;
        }
        doc[stage] = entry;
    }
    fs::create_directories(dir_);
    std::ofstream out(dir_ / "manifest.json");
    out << doc.dump(2) << "\n";
}

void Manifest::record_stage(const std::string& stage,
                            const std::map<std::string, std::string>& inputs,
                            const std::map<std::string, std::string>& outputs,
                            const std::string& snapshot, double wall_time_s) {
    stages_[stage]["inputs"] = inputs;
    stages_[stage]["outputs"] = outputs;
    config_snapshots_[stage] = snapshot;
    wall_times_[stage] = wall_time_s;
}

bool Manifest::has_stage(const std::string& stage) const { return stages_.count(stage) > 0; }

void Manifest::require_artifact(const std::string& producer_stage, const fs::path& path) const {
    auto stage_it = stages_.find(producer_stage);
    if (stage_it == stages_.end())
        throw ValidationError("missing upstream artifacts: run stage '" + producer_stage +
                              "' first");
    const auto& outputs = stage_it->second.count("outputs")
                              ? stage_it->second.at("outputs")
                              : std::map<std::string, std::string>{};
    const std::string name = path.filename().string();
    auto file_it = outputs.find(name);
    if (file_it == outputs.end())
        throw ValidationError("stage '" + producer_stage + "' did not produce artifact '" + name +
                              "': rerun stage '" + producer_stage + "'");
    if (!fs::exists(path))
        throw ValidationError("artifact '" + name + "' is missing: rerun stage '" + producer_stage +
                              "'");
    if (hash_file(path.string()) != file_it->second)
        throw ValidationError("artifact '" + name +
                              "' does not match the manifest hash: rerun stage '" + producer_stage +
                              "'");
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

namespace {

std::vector<ingest::PatientRecord> load_records(const fs::path& dir, Manifest& manifest) {
    manifest.require_artifact("ingest", dir / "records_events.csv");
    manifest.require_artifact("ingest", dir / "records_demographics.csv");
    auto events = open_in(dir / "records_events.csv");
    auto demo = open_in(dir / "records_demographics.csv");
    return ingest::parse_events(events, demo);
}

void finish_stage(Manifest& manifest, const PipelineConfig& cfg, const std::string& stage,
                  const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                  const StageTimer& timer) {
    std::map<std::string, std::string> in_hashes, out_hashes;
    for (const fs::path& p : inputs) in_hashes[p.filename().string()] = hash_file(p.string());
    for (const fs::path& p : outputs) out_hashes[p.filename().string()] = hash_file(p.string());
    manifest.record_stage(stage, in_hashes, out_hashes, config_snapshot(cfg), timer.seconds());
    manifest.save();
}

}  // namespace

void run_ingest(const PipelineConfig& cfg) {
    cfg.require_seed();
    StageTimer timer;
    const fs::path dir = cfg.artifacts_dir;
    if (cfg.events_path.empty() || cfg.demographics_path.empty())
        throw ValidationError("ingest requires 'events' and 'demographics' input paths");

    auto events_in = open_in(cfg.events_path);
    auto demo_in = open_in(cfg.demographics_path);
    auto records = ingest::parse_events(events_in, demo_in);

    for (const auto& r : records) {
        auto findings = ingest::validate_record(r);
        if (!findings.empty())
            throw ValidationError("record '" + r.patient_id + "' invalid: " + findings[0].message);
    }

    const auto stats = ingest::population_statistics(records);
    const auto vocab = ingest::freeze_vocabulary(records, category_sets(cfg));

    {
        auto ev_out = open_out(dir / "records_events.csv");
        auto demo_out = open_out(dir / "records_demographics.csv");
        ingest::serialize_events(records, ev_out, demo_out);
        auto stats_out = open_out(dir / "stats.csv");
        ingest::write_stats(stats, stats_out);
        auto vocab_out = open_out(dir / "vocabulary.csv");
        ingest::write_vocabulary(vocab, vocab_out);
    }

    Manifest manifest = Manifest::load(dir);
    finish_stage(manifest, cfg, "ingest", {cfg.events_path, cfg.demographics_path},
                 {dir / "records_events.csv", dir / "records_demographics.csv", dir / "stats.csv",
                  dir / "vocabulary.csv"},
                 timer);
    std::printf("ingest: %zu records, %zu vocabulary rows\n", records.size(), vocab.size());
}

void run_curves(const PipelineConfig& cfg) {
    const std::uint64_t seed = cfg.require_seed();
    StageTimer timer;
    const fs::path dir = cfg.artifacts_dir;
    Manifest manifest = Manifest::load(dir);

    auto records = load_records(dir, manifest);
    manifest.require_artifact("ingest", dir / "stats.csv");
    manifest.require_artifact("ingest", dir / "vocabulary.csv");
    auto stats_in = open_in(dir / "stats.csv");
    const auto stats = ingest::read_stats(stats_in);
    auto vocab_in = open_in(dir / "vocabulary.csv");
    const auto vocab = ingest::read_vocabulary(vocab_in);

    curves::RashParams rash = cfg.rash;
    rash.seed = derive_seed(seed, std::string_view("curves"));

    auto out = open_out(dir / "curvesets.txt");
    out << "curvesets 1\n";
    out << "vocabulary_hash " << vocab.content_hash() << "\n";
    for (const auto& r : records) {
        const auto cs = curves::build_curveset(r, stats, vocab, rash);
        out << "patient " << cs.patient_id << ' ' << cs.grid.first << ' ' << cs.grid.last << "\n";
        for (const curves::Curve& c : cs.curves) {
            out << (c.provenance == curves::Provenance::observed ? 'o' : 'i');
            for (double v : c.values) out << ',' << format_double(v);
            out << "\n";
        }
    }
    out.close();

    finish_stage(manifest, cfg, "curves",
                 {dir / "records_events.csv", dir / "records_demographics.csv", dir / "stats.csv",
                  dir / "vocabulary.csv"},
                 {dir / "curvesets.txt"}, timer);
    std::printf("curves: %zu curvesets x %zu variables\n", records.size(), vocab.size());
}

namespace {

std::vector<curves::Curveset> read_curvesets(const fs::path& path, std::uint64_t* vocab_hash) {
    auto in = open_in(path);
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "curvesets" || version != 1)
        throw ParseError("not a curvesets file");
    if (!(in >> tag >> *vocab_hash) || tag != "vocabulary_hash")
        throw ParseError("curvesets: missing vocabulary_hash");
    std::string line;
    std::getline(in, line);

    std::vector<curves::Curveset> sets;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream head(line);
        curves::Curveset cs;
        if (!(head >> tag >> cs.patient_id >> cs.grid.first >> cs.grid.last) || tag != "patient")
            throw ParseError("curvesets: bad patient header");
        while (in.peek() != 'p' && in.peek() != EOF) {
            if (!std::getline(in, line)) break;
            if (line.empty()) continue;
            curves::Curve c;
            c.grid = cs.grid;
            auto fields = split_csv_line(line);
            c.provenance = fields[0] == "o" ? curves::Provenance::observed : curves::Provenance::imputed;
            for (std::size_t i = 1; i < fields.size(); ++i)
                c.values.push_back(parse_double_field(fields[i], 0, "curve value"));
            cs.curves.push_back(std::move(c));
        }
        sets.push_back(std::move(cs));
    }
    return sets;
}

}  // namespace

void run_matrix(const PipelineConfig& cfg) {
    const std::uint64_t seed = cfg.require_seed();
    StageTimer timer;
    const fs::path dir = cfg.artifacts_dir;
    Manifest manifest = Manifest::load(dir);
    manifest.require_artifact("curves", dir / "curvesets.txt");

    std::uint64_t vocab_hash = 0;
    const auto curvesets = read_curvesets(dir / "curvesets.txt", &vocab_hash);
    auto m = xsection::assemble_matrix(curvesets, cfg.density, derive_seed(seed, std::string_view("matrix")),
                                       vocab_hash);
    const auto standardizer = xsection::fit_standardizer(m.values);
    m.values = xsection::apply_standardizer(standardizer, m.values);

    {
        auto values_out = open_out(dir / "matrix.csv");
        auto prov_out = open_out(dir / "provenance.csv");
        xsection::write_matrix(m, values_out, prov_out);
        auto std_out = open_out(dir / "standardizer.csv");
        xsection::write_standardizer(standardizer, std_out);
    }

    finish_stage(manifest, cfg, "matrix", {dir / "curvesets.txt"},
                 {dir / "matrix.csv", dir / "provenance.csv", dir / "standardizer.csv"}, timer);
    std::printf("matrix: %lld x %lld standardized\n", static_cast<long long>(m.values.rows()),
                static_cast<long long>(m.values.cols()));
}

void run_ica(const PipelineConfig& cfg) {
    const std::uint64_t seed = cfg.require_seed();
    StageTimer timer;
    const fs::path dir = cfg.artifacts_dir;
    Manifest manifest = Manifest::load(dir);
    manifest.require_artifact("matrix", dir / "matrix.csv");
    manifest.require_artifact("matrix", dir / "provenance.csv");

    auto values_in = open_in(dir / "matrix.csv");
    auto prov_in = open_in(dir / "provenance.csv");
    const auto m = xsection::read_matrix(values_in, prov_in);

    auto white = ica::whiten(m.values, cfg.k);
    Rng rng(derive_seed(seed, std::string_view("ica")));
    auto result = ica::fastica(white.data, cfg.contrast, cfg.tol, cfg.max_iter, rng);
    auto model = ica::compose_model(white.transform, result.rotation, cfg.contrast, result.report);
    model.vocabulary_hash = m.vocabulary_hash;
    const auto sources = ica::transform(model, m.values);

    {
        auto model_out = open_out(dir / "ica_model.txt");
        ica::write_model(model, model_out);
        auto src_out = open_out(dir / "sources.csv");
        write_values(sources.values, m.vocabulary_hash, src_out);
    }

    finish_stage(manifest, cfg, "ica", {dir / "matrix.csv", dir / "provenance.csv"},
                 {dir / "ica_model.txt", dir / "sources.csv"}, timer);
    std::printf("ica: k=%d converged=%d iterations=%d\n", model.whitening.retained_k,
                model.report.converged ? 1 : 0, model.report.iterations);
}

namespace {

explain::LabeledCohort load_cohort(const fs::path& dir, Manifest& manifest,
                                   explain::FeatureSpace space, const std::string& labels_path) {
    if (labels_path.empty()) throw ValidationError("train requires a 'labels' path");
    const fs::path features_file = space == explain::FeatureSpace::sources ? dir / "sources.csv"
                                                                           : dir / "matrix.csv";
    const char* producer = space == explain::FeatureSpace::sources ? "ica" : "matrix";
    manifest.require_artifact(producer, features_file);
    manifest.require_artifact("matrix", dir / "provenance.csv");

    Eigen::MatrixXd features;
    if (space == explain::FeatureSpace::sources) {
        auto in = open_in(features_file);
        features = read_values(in);
    } else {
        auto in = open_in(features_file);
        auto prov_in = open_in(dir / "provenance.csv");
        features = xsection::read_matrix(in, prov_in).values;
    }
    const auto prov = read_provenance(dir / "provenance.csv");
    const auto labels = read_labels(labels_path);

    explain::LabeledCohort cohort;
    std::vector<Eigen::Index> keep;
    for (std::size_t j = 0; j < prov.size(); ++j) {
        auto it = labels.find(prov[j].patient_id);
        if (it == labels.end()) continue;
        keep.push_back(static_cast<Eigen::Index>(j));
        cohort.labels.push_back(it->second);
        cohort.provenance.push_back(prov[j]);
    }
    if (keep.empty()) throw ValidationError("no matrix columns match the labels file");
    cohort.features.resize(features.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t t = 0; t < keep.size(); ++t)
        cohort.features.col(static_cast<Eigen::Index>(t)) = features.col(keep[t]);
    return cohort;
}

fs::path model_file(const fs::path& dir, explain::FeatureSpace space) {
    return dir / (std::string("model_") + explain::feature_space_name(space) + ".txt");
}

}  // namespace

void run_train(const PipelineConfig& cfg) {
    const std::uint64_t seed = cfg.require_seed();
    StageTimer timer;
    const fs::path dir = cfg.artifacts_dir;
    Manifest manifest = Manifest::load(dir);

    auto cohort = load_cohort(dir, manifest, cfg.feature_space, cfg.labels_path);
    explain::Hyperparams hp = cfg.model;
    hp.seed = derive_seed(seed, std::string_view("train"));
    const auto model = explain::train_model(cohort, hp, cfg.feature_space);

    const fs::path out_path = model_file(dir, cfg.feature_space);
    {
        auto out = open_out(out_path);
        explain::write_model(model, out);
    }

    const fs::path features_file = cfg.feature_space == explain::FeatureSpace::sources
                                       ? dir / "sources.csv"
                                       : dir / "matrix.csv";
    finish_stage(manifest, cfg,
                 std::string("train_") + explain::feature_space_name(cfg.feature_space),
                 {features_file, dir / "provenance.csv", cfg.labels_path}, {out_path}, timer);
    const auto metrics = explain::evaluate(model, cohort);
    std::printf("train: %s on %s, n=%zu, training AUROC %.3f\n",
                explain::model_kind_name(model.kind), explain::feature_space_name(cfg.feature_space),
                cohort.labels.size(), metrics.auroc);
}

void run_explain(const PipelineConfig& cfg) {
    const std::uint64_t seed = cfg.require_seed();
    StageTimer timer;
    const fs::path dir = cfg.artifacts_dir;
    Manifest manifest = Manifest::load(dir);

    const std::string train_stage =
        std::string("train_") + explain::feature_space_name(cfg.feature_space);
    const fs::path model_path = model_file(dir, cfg.feature_space);
    manifest.require_artifact(train_stage, model_path);
    auto model_in = open_in(model_path);
    const auto model = explain::read_model(model_in);

    auto cohort = load_cohort(dir, manifest, cfg.feature_space, cfg.labels_path);

    // background: fixed-size random subsample of the cohort, recorded seed
    std::vector<Eigen::Index> candidates;
    for (std::size_t j = 0; j < cohort.labels.size(); ++j)
        if (!cfg.background_negative_only || cohort.labels[j] == 0)
            candidates.push_back(static_cast<Eigen::Index>(j));
    if (candidates.empty()) throw ValidationError("no background candidates (labels all positive?)");
    Rng bg_rng(derive_seed(seed, std::string_view("background")));
    std::shuffle(candidates.begin(), candidates.end(), bg_rng);
    const auto bg_n = std::min<std::size_t>(candidates.size(),
                                            static_cast<std::size_t>(std::max(1, cfg.background_size)));
    Eigen::MatrixXd background(cohort.features.rows(), static_cast<Eigen::Index>(bg_n));
    for (std::size_t t = 0; t < bg_n; ++t)
        background.col(static_cast<Eigen::Index>(t)) = cohort.features.col(candidates[t]);

    const bool exact =
        cfg.shap_estimator == "exact" && cohort.features.rows() <= explain::kMaxExactFeatures;
    Rng shap_rng(derive_seed(seed, std::string_view("shap")));

    std::vector<explain::ShapExplanation> explanations;
    explanations.reserve(cohort.labels.size());
    for (std::size_t j = 0; j < cohort.labels.size(); ++j) {
        const Eigen::VectorXd instance = cohort.features.col(static_cast<Eigen::Index>(j));
        auto ex = exact ? explain::shap_exact(model, instance, background)
                        : explain::shap_sampled(model, instance, background, cfg.n_permutations,
                                                shap_rng);
        ex.provenance = cohort.provenance[j];
        explanations.push_back(std::move(ex));
    }

    const auto k = cohort.features.rows();
    {
        auto out = open_out(dir / "explanations.csv");
        out << "patient_id,day,estimator,base_value";
        for (Eigen::Index i = 0; i < k; ++i) out << ",phi_" << i;
        if (!exact)
            for (Eigen::Index i = 0; i < k; ++i) out << ",se_" << i;
        out << "\n";
        for (const auto& ex : explanations) {
            out << ex.provenance.patient_id << ',' << ex.provenance.day << ','
                << (ex.estimator == explain::ShapEstimator::exact ? "exact" : "permutation") << ','
                << format_double(ex.base_value);
            for (Eigen::Index i = 0; i < k; ++i) out << ',' << format_double(ex.phi[i]);
            if (!exact)
                for (Eigen::Index i = 0; i < k; ++i) out << ',' << format_double(ex.standard_error[i]);
            out << "\n";
        }
    }

    // ranking report with attached signatures when the features are sources
    const auto ranking = explain::rank_sources(explanations);
    {
        auto out = open_out(dir / "ranking.csv");
        out << "rank,source,importance,signature\n";
        std::optional<ica::ICAModel> ica_model;
        ingest::VariableVocabulary vocab;
        if (cfg.feature_space == explain::FeatureSpace::sources &&
            fs::exists(dir / "ica_model.txt")) {
            auto in = open_in(dir / "ica_model.txt");
            ica_model = ica::read_model(in);
            auto vin = open_in(dir / "vocabulary.csv");
            vocab = ingest::read_vocabulary(vin);
        }
        for (std::size_t r = 0; r < ranking.order.size(); ++r) {
            const int src = ranking.order[r];
            out << (r + 1) << ',' << src << ','
                << format_double(ranking.importance[static_cast<std::size_t>(src)]) << ',';
            if (ica_model) {
                const auto sig = ica::signature(*ica_model, vocab, src, cfg.top_m);
                for (std::size_t t = 0; t < sig.size(); ++t) {
                    if (t) out << '|';
                    out << sig[t].first << ':' << format_double(sig[t].second);
                }
            }
            out << "\n";
        }
    }

    finish_stage(manifest, cfg, "explain", {model_path, dir / "provenance.csv"},
                 {dir / "explanations.csv", dir / "ranking.csv"}, timer);
    std::printf("explain: %zu explanations, estimator=%s\n", explanations.size(),
                exact ? "exact" : "permutation");
}

void run_synth(const PipelineConfig& cfg) {
    const std::uint64_t seed = cfg.require_seed();
    StageTimer timer;
    const fs::path dir = cfg.artifacts_dir;

    Rng rng(derive_seed(seed, std::string_view("synth")));
    const auto scm = oracle::generate_scm(cfg.synth_n_vars, cfg.synth_edge_density,
                                          cfg.synth_weight_range, rng);
    const auto dataset = oracle::sample_dataset(scm, cfg.synth_n, rng);
    oracle::RenderParams render = cfg.render;
    render.seed = derive_seed(seed, std::string_view("render"));
    const auto corpus = oracle::render_events(dataset, scm, render);

    const fs::path corpus_dir = dir / "corpus";
    const fs::path truth_dir = dir / "truth";
    {
        auto events = open_out(corpus_dir / "events.csv");
        auto demo = open_out(corpus_dir / "demographics.csv");
        ingest::serialize_events(corpus.records, events, demo);
        auto labels = open_out(corpus_dir / "labels.csv");
        labels << "patient_id,label\n";
        for (std::size_t j = 0; j < corpus.records.size(); ++j)
            labels << corpus.records[j].patient_id << ',' << dataset.labels[j] << "\n";
    }
    {
        auto scm_out = open_out(truth_dir / "scm.txt");
        oracle::write_scm(scm, scm_out);
        auto s_out = open_out(truth_dir / "s_true.csv");
        write_values(dataset.s_true, 0, s_out);
        auto x_out = open_out(truth_dir / "x_true.csv");
        write_values(dataset.x_true, 0, x_out);
        auto render_out = open_out(truth_dir / "render.txt");
        render_out << "render 1\n";
        render_out << "index_day " << corpus.index_day << "\n";
        render_out << "span_days " << render.span_days << "\n";
        render_out << "code_rate_scale " << format_double(render.code_rate_scale) << "\n";
        render_out << "code_variables " << corpus.code_variables.size();
        for (int v : corpus.code_variables) render_out << ' ' << v;
        render_out << "\n";
    }

    Manifest manifest = Manifest::load(dir);
    finish_stage(manifest, cfg, "synth", {},
                 {corpus_dir / "events.csv", corpus_dir / "demographics.csv",
                  corpus_dir / "labels.csv", truth_dir / "scm.txt", truth_dir / "s_true.csv",
                  truth_dir / "x_true.csv", truth_dir / "render.txt"},
                 timer);
    std::printf("synth: %zu patients, %d variables (%zu rendered as code streams)\n",
                corpus.records.size(), scm.n_vars, corpus.code_variables.size());
}

void run_eval(const PipelineConfig& cfg) {
    cfg.require_seed();
    StageTimer timer;
    const fs::path dir = cfg.artifacts_dir;
    const fs::path truth_dir = dir / "truth";
    Manifest manifest = Manifest::load(dir);

    for (const char* f : {"scm.txt", "s_true.csv", "render.txt"})
        if (!fs::exists(truth_dir / f))
            throw ValidationError(std::string("missing truth bundle file: ") + f);

    auto scm_in = open_in(truth_dir / "scm.txt");
    const auto scm = oracle::read_scm(scm_in);
    auto s_in = open_in(truth_dir / "s_true.csv");
    const Eigen::MatrixXd s_true = read_values(s_in);

    long long index_day = 0, span_days = 0;
    double code_rate_scale = 0.0;
    std::vector<int> code_variables;
    {
        auto in = open_in(truth_dir / "render.txt");
        std::string tag;
        int version = 0;
        std::size_t n_code = 0;
        if (!(in >> tag >> version) || tag != "render") throw ParseError("bad render.txt");
        in >> tag >> index_day >> tag >> span_days >> tag >> code_rate_scale >> tag >> n_code;
        code_variables.resize(n_code);
        for (int& v : code_variables) in >> v;
    }

    manifest.require_artifact("ica", dir / "ica_model.txt");
    manifest.require_artifact("ica", dir / "sources.csv");
    auto model_in = open_in(dir / "ica_model.txt");
    const auto ica_model = ica::read_model(model_in);
    auto src_in = open_in(dir / "sources.csv");
    const Eigen::MatrixXd s_est = read_values(src_in);
    const auto prov = read_provenance(dir / "provenance.csv");
    auto std_in = open_in(dir / "standardizer.csv");
    const auto standardizer = xsection::read_standardizer(std_in);
    auto vocab_in = open_in(dir / "vocabulary.csv");
    const auto vocab = ingest::read_vocabulary(vocab_in);

    // truth per sampled column: a patient's sources are its dataset column
    auto patient_index = [](const std::string& pid) {
        return static_cast<int>(std::stoll(pid.substr(1)));
    };
    Eigen::MatrixXd s_true_cols(s_true.rows(), static_cast<Eigen::Index>(prov.size()));
    for (std::size_t j = 0; j < prov.size(); ++j)
        s_true_cols.col(static_cast<Eigen::Index>(j)) = s_true.col(patient_index(prov[j].patient_id));

    double mean_rho = std::numeric_limits<double>::quiet_NaN();
    double amari = std::numeric_limits<double>::quiet_NaN();
    oracle::SourceMatch match;
    const bool square = s_est.rows() == s_true_cols.rows();
    if (square) {
        match = oracle::match_sources(s_est, s_true_cols);
        mean_rho = match.mean_abs_correlation;

        // effective true mixing into pipeline rows: identity for measurement
        // rows, the affine intensity scale for code-rendered rows
        std::vector<char> is_code(static_cast<std::size_t>(scm.n_vars), 0);
        for (int v : code_variables) is_code[static_cast<std::size_t>(v)] = 1;
        Eigen::MatrixXd m_render =
            Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()), scm.n_vars);
        for (std::size_t r = 0; r < vocab.rows.size(); ++r) {
            const auto& row = vocab.rows[r];
            if (row.kind != ingest::RowKind::measurement &&
                row.kind != ingest::RowKind::condition_code)
                continue;
            if (row.variable_id.rfind("var_", 0) != 0) continue;
            const int v = static_cast<int>(std::stoll(row.variable_id.substr(4)));
            const double scale = is_code[static_cast<std::size_t>(v)] ? code_rate_scale : 1.0;
            m_render.row(static_cast<Eigen::Index>(r)) = scale * scm.mixing_true.row(v);
        }
        const Eigen::MatrixXd p =
            ica_model.unmixing * standardizer.scale.cwiseInverse().asDiagonal() * m_render;
        amari = oracle::amari_distance(p);
    }

    // ITE agreement from the explanations table
    double ite_agreement = std::numeric_limits<double>::quiet_NaN();
    double parent_recall = std::numeric_limits<double>::quiet_NaN();
    if (fs::exists(dir / "explanations.csv") && square) {
        auto in = open_in(dir / "explanations.csv");
        std::string header_line;
        std::getline(in, header_line);
        const auto header = split_csv_line(header_line);
        const auto k = static_cast<Eigen::Index>(s_est.rows());
        std::vector<explain::ShapExplanation> explanations;
        std::string line;
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto f = split_csv_line(line);
            explain::ShapExplanation ex;
            ex.provenance = {f[0], parse_int_field(f[1], lineno, "day")};
            ex.base_value = parse_double_field(f[3], lineno, "base_value");
            ex.phi.resize(k);
            for (Eigen::Index i = 0; i < k; ++i)
                ex.phi[i] = parse_double_field(f[4 + static_cast<std::size_t>(i)], lineno, "phi");
            explanations.push_back(std::move(ex));
        }

        const Eigen::VectorXd bg_mean = Eigen::VectorXd::Zero(scm.n_vars);
        double total = 0.0;
        std::size_t counted = 0;
        for (const auto& ex : explanations) {
            const Eigen::VectorXd truth =
                oracle::true_ite(scm, s_true.col(patient_index(ex.provenance.patient_id)), bg_mean);
            Eigen::VectorXd mapped(k);
            for (Eigen::Index i = 0; i < k; ++i)
                mapped[i] = truth[match.permutation[static_cast<std::size_t>(i)]];
            const double mx = mapped.mean(), px = ex.phi.mean();
            const double num = ((mapped.array() - mx) * (ex.phi.array() - px)).sum();
            const double den = std::sqrt((mapped.array() - mx).square().sum() *
                                         (ex.phi.array() - px).square().sum());
            if (den > 0) {
                total += num / den;
                ++counted;
            }
        }
        if (counted) ite_agreement = total / static_cast<double>(counted);

        const auto ranking = explain::rank_sources(explanations);
        const auto n_parents = scm.outcome_sources.size();
        std::size_t hit = 0;
        for (std::size_t r = 0; r < std::min(ranking.order.size(), 2 * n_parents); ++r) {
            const int true_idx = match.permutation[static_cast<std::size_t>(ranking.order[r])];
            if (std::find(scm.outcome_sources.begin(), scm.outcome_sources.end(), true_idx) !=
                scm.outcome_sources.end())
                ++hit;
        }
        parent_recall = static_cast<double>(hit) / static_cast<double>(n_parents);
    }

    // H_c vs H_a on the labeled columns
    double auroc_hc = std::numeric_limits<double>::quiet_NaN();
    double auroc_ha = std::numeric_limits<double>::quiet_NaN();
    if (!cfg.labels_path.empty()) {
        if (fs::exists(model_file(dir, explain::FeatureSpace::sources))) {
            auto in = open_in(model_file(dir, explain::FeatureSpace::sources));
            auto hc = explain::read_model(in);
            auto cohort = load_cohort(dir, manifest, explain::FeatureSpace::sources, cfg.labels_path);
            auroc_hc = explain::evaluate(hc, cohort).auroc;
        }
        if (fs::exists(model_file(dir, explain::FeatureSpace::raw))) {
            auto in = open_in(model_file(dir, explain::FeatureSpace::raw));
            auto ha = explain::read_model(in);
            auto cohort = load_cohort(dir, manifest, explain::FeatureSpace::raw, cfg.labels_path);
            auroc_ha = explain::evaluate(ha, cohort).auroc;
        }
    }

    {
        auto out = open_out(dir / "eval_report.txt");
        out << "mean_matched_abs_correlation " << format_double(mean_rho) << "\n";
        out << "amari_distance " << format_double(amari) << "\n";
        out << "ite_agreement " << format_double(ite_agreement) << "\n";
        out << "parent_recovery_recall " << format_double(parent_recall) << "\n";
        out << "auroc_hc " << format_double(auroc_hc) << "\n";
        out << "auroc_ha " << format_double(auroc_ha) << "\n";
        out << "n_columns " << prov.size() << "\n";
    }
    finish_stage(manifest, cfg, "eval", {dir / "sources.csv", truth_dir / "s_true.csv"},
                 {dir / "eval_report.txt"}, timer);
    std::printf("eval: matched |rho|=%.3f amari=%.3f ite=%.3f parents=%.2f hc=%.3f ha=%.3f\n",
                mean_rho, amari, ite_agreement, parent_recall, auroc_hc, auroc_ha);
}

}  // namespace cslearn::pipeline

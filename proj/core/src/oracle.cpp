#include "cslearn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

namespace cslearn::oracle {

const char* family_name(SourceFamily f) {
    switch (f) {
        case SourceFamily::laplace: return "laplace";
        case SourceFamily::uniform: return "uniform";
        case SourceFamily::mixture: return "mixture";
        case SourceFamily::gaussian: return "gaussian";
    }
    return "?";
}

SourceFamily family_from_name(std::string_view name) {
    if (name == "laplace") return SourceFamily::laplace;
    if (name == "uniform") return SourceFamily::uniform;
    if (name == "mixture") return SourceFamily::mixture;
    if (name == "gaussian") return SourceFamily::gaussian;
    throw ValidationError("unknown source family '" + std::string(name) + "'");
}

SyntheticSCM generate_scm(int n_vars, double edge_density, double weight_range, Rng& rng) {
    if (n_vars < 2) throw ValidationError("generate_scm: n_vars must be >= 2");
    if (edge_density < 0.0 || edge_density > 1.0)
        throw ValidationError("generate_scm: edge_density must be in [0,1]");

    SyntheticSCM scm;
    scm.n_vars = n_vars;
    scm.edges = Eigen::MatrixXd::Zero(n_vars, n_vars);
    scm.families.assign(static_cast<std::size_t>(n_vars), SourceFamily::laplace);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // weights bounded away from 0 for detectability
    const double lo = 0.25;
    const double hi = std::max(weight_range, lo);
    std::uniform_real_distribution<double> magnitude(lo, hi);
    for (int i = 1; i < n_vars; ++i)
        for (int j = 0; j < i; ++j)
            if (unit(rng) < edge_density)
                scm.edges(i, j) = (unit(rng) < 0.5 ? -1.0 : 1.0) * magnitude(rng);

    scm.mixing_true = (Eigen::MatrixXd::Identity(n_vars, n_vars) - scm.edges)
                          .triangularView<Eigen::Lower>()
                          .solve(Eigen::MatrixXd::Identity(n_vars, n_vars));

    const int n_outcome = std::max(2, n_vars / 5);
    std::vector<int> all(static_cast<std::size_t>(n_vars));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    scm.outcome_sources.assign(all.begin(), all.begin() + n_outcome);
    std::sort(scm.outcome_sources.begin(), scm.outcome_sources.end());
    std::uniform_real_distribution<double> w_mag(0.5, 2.0);
    scm.outcome_weights.resize(n_outcome);
    for (int i = 0; i < n_outcome; ++i)
        scm.outcome_weights[i] = (unit(rng) < 0.5 ? -1.0 : 1.0) * w_mag(rng);
    scm.outcome_intercept = 0.0;
    return scm;
}

namespace {

double draw_source(SourceFamily family, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    switch (family) {
        case SourceFamily::laplace: {
            // inverse CDF, scale 1/sqrt(2) for unit variance
            const double u = unit(rng) - 0.5;
            return -(1.0 / std::sqrt(2.0)) * std::copysign(std::log(1.0 - 2.0 * std::abs(u)), u);
        }
        case SourceFamily::uniform: {
            return std::uniform_real_distribution<double>(-std::sqrt(3.0), std::sqrt(3.0))(rng);
        }
        case SourceFamily::mixture: {
            // symmetric bimodal Gaussian mixture, unit variance
            constexpr double mu = 0.9;
            const double sd = std::sqrt(1.0 - mu * mu);
            const double center = unit(rng) < 0.5 ? -mu : mu;
            return center + std::normal_distribution<double>(0.0, sd)(rng);
        }
        case SourceFamily::gaussian:
            return std::normal_distribution<double>(0.0, 1.0)(rng);
    }
    return 0.0;
}

}  // namespace

SyntheticDataset sample_dataset(const SyntheticSCM& scm, int n, Rng& rng) {
    if (n < 1) throw ValidationError("sample_dataset: n must be >= 1");
    SyntheticDataset ds;
    ds.s_true.resize(scm.n_vars, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < scm.n_vars; ++i)
            ds.s_true(i, j) = draw_source(scm.families[static_cast<std::size_t>(i)], rng);
    ds.x_true = scm.mixing_true * ds.s_true;

    ds.labels.resize(static_cast<std::size_t>(n));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int j = 0; j < n; ++j) {
        double z = scm.outcome_intercept;
        for (std::size_t t = 0; t < scm.outcome_sources.size(); ++t)
            z += scm.outcome_weights[static_cast<Eigen::Index>(t)] *
                 ds.s_true(scm.outcome_sources[t], j);
        ds.labels[static_cast<std::size_t>(j)] = unit(rng) < 1.0 / (1.0 + std::exp(-z)) ? 1 : 0;
    }
    return ds;
}

std::vector<int> hungarian_min_cost(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw ValidationError("hungarian: cost matrix must be square");
    constexpr double kInf = std::numeric_limits<double>::infinity();
    // potentials method, 1-indexed
    std::vector<double> u(static_cast<std::size_t>(n) + 1), v(static_cast<std::size_t>(n) + 1);
    std::vector<int> p(static_cast<std::size_t>(n) + 1), way(static_cast<std::size_t>(n) + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = kInf;
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
    return assignment;
}

SourceMatch match_sources(const Eigen::MatrixXd& s_est, const Eigen::MatrixXd& s_true) {
    const int k = static_cast<int>(s_est.rows());
    if (s_true.rows() != k) throw ValidationError("match_sources: row counts differ");
    if (s_est.cols() != s_true.cols())
        throw ValidationError("match_sources: column counts differ");
    const auto n = static_cast<double>(s_est.cols());

    Eigen::MatrixXd est = s_est.colwise() - s_est.rowwise().mean();
    Eigen::MatrixXd tru = s_true.colwise() - s_true.rowwise().mean();
    Eigen::VectorXd est_sd = (est.array().square().rowwise().sum() / n).sqrt();
    Eigen::VectorXd tru_sd = (tru.array().square().rowwise().sum() / n).sqrt();
    for (int i = 0; i < k; ++i) {
        // relative tolerance: centering a constant row leaves rounding dust
        const double est_floor = 1e-12 * std::max(1.0, s_est.row(i).cwiseAbs().maxCoeff());
        const double tru_floor = 1e-12 * std::max(1.0, s_true.row(i).cwiseAbs().maxCoeff());
        if (est_sd[i] <= est_floor || tru_sd[i] <= tru_floor)
            throw ValidationError("match_sources: zero-variance source row");
    }

    Eigen::MatrixXd corr = (est * tru.transpose()) / n;
    corr = corr.array().colwise() / est_sd.array();
    corr = corr.array().rowwise() / tru_sd.transpose().array();

    std::vector<int> assignment = hungarian_min_cost(-corr.cwiseAbs());

    SourceMatch match;
    match.permutation = assignment;
    match.signs.resize(static_cast<std::size_t>(k));
    match.abs_correlation.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const double rho = corr(i, assignment[static_cast<std::size_t>(i)]);
        match.signs[static_cast<std::size_t>(i)] = rho < 0 ? -1.0 : 1.0;
        match.abs_correlation[static_cast<std::size_t>(i)] = std::abs(rho);
        match.mean_abs_correlation += std::abs(rho);
    }
    match.mean_abs_correlation /= static_cast<double>(k);
    return match;
}

double amari_distance(const Eigen::MatrixXd& p) {
    const int k = static_cast<int>(p.rows());
    if (p.cols() != k) throw ValidationError("amari_distance: matrix must be square");
    const Eigen::MatrixXd a = p.cwiseAbs();
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        const double row_max = a.row(i).maxCoeff();
        const double col_max = a.col(i).maxCoeff();
        if (row_max <= 0.0 || col_max <= 0.0)
            throw ValidationError("amari_distance: zero row or column");
        total += a.row(i).sum() / row_max - 1.0;
        total += a.col(i).sum() / col_max - 1.0;
    }
    return total / (2.0 * k);
}

Eigen::VectorXd true_ite(const SyntheticSCM& scm, const Eigen::VectorXd& s_instance,
                         const Eigen::VectorXd& background_mean) {
    if (s_instance.size() != scm.n_vars || background_mean.size() != scm.n_vars)
        throw ValidationError("true_ite: dimension mismatch");
    Eigen::VectorXd ite = Eigen::VectorXd::Zero(scm.n_vars);
    for (std::size_t t = 0; t < scm.outcome_sources.size(); ++t) {
        const int i = scm.outcome_sources[t];
        ite[i] = scm.outcome_weights[static_cast<Eigen::Index>(t)] *
                 (s_instance[i] - background_mean[i]);
    }
    return ite;
}

RenderedCorpus render_events(const SyntheticDataset& dataset, const SyntheticSCM& scm,
                             const RenderParams& params) {
    if (params.span_days < 30) throw ValidationError("render_events: span must be >= 30 days");
    if (params.index_day < 0 || params.index_day >= params.span_days)
        throw ValidationError("render_events: index_day outside span");

    const int n_vars = scm.n_vars;
    const int n_patients = static_cast<int>(dataset.x_true.cols());

    RenderedCorpus corpus;
    corpus.index_day = params.index_day;
    corpus.categories.sex = {"F", "M"};
    corpus.categories.race = {"A", "B", "C"};

    for (int i = 0; i < n_vars; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "var_%03d", i);
        corpus.variable_names.emplace_back(buf);
    }

    // seed-chosen subset of variables rendered as code streams
    Rng pick_rng(derive_seed(params.seed, std::uint64_t{0}));
    std::vector<int> order(static_cast<std::size_t>(n_vars));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), pick_rng);
    const int n_code = static_cast<int>(std::floor(params.code_fraction * n_vars));
    corpus.code_variables.assign(order.begin(), order.begin() + n_code);
    std::sort(corpus.code_variables.begin(), corpus.code_variables.end());
    std::vector<char> is_code(static_cast<std::size_t>(n_vars), 0);
    for (int i : corpus.code_variables) is_code[static_cast<std::size_t>(i)] = 1;

    const double two_pi = 2.0 * std::acos(-1.0);
    const auto span = static_cast<double>(params.span_days);

    for (int j = 0; j < n_patients; ++j) {
        char pid[24];
        std::snprintf(pid, sizeof(pid), "p%05d", j);
        ingest::PatientRecord rec;
        rec.patient_id = pid;
        rec.span = {0, params.span_days - 1};

        Rng rng(derive_seed(params.seed, rec.patient_id));
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        rec.demographics.patient_id = rec.patient_id;
        rec.demographics.sex = corpus.categories.sex[unit(rng) < 0.5 ? 0 : 1];
        rec.demographics.race =
            corpus.categories.race[std::min<std::size_t>(2, static_cast<std::size_t>(unit(rng) * 3))];
        rec.demographics.birth_day =
            -static_cast<long long>((20.0 + 60.0 * unit(rng)) * 365.25);

        for (int i = 0; i < n_vars; ++i) {
            const double value = dataset.x_true(i, j);
            if (is_code[static_cast<std::size_t>(i)]) {
                // homogeneous Poisson stream, intensity affine in the value
                const double rate = std::max(
                    0.01, params.code_rate_scale * (value + params.code_rate_offset));
                std::poisson_distribution<int> pois(rate);
                for (long long day = 0; day < params.span_days; ++day) {
                    const int count = pois(rng);
                    for (int c = 0; c < count; ++c)
                        rec.events.push_back({rec.patient_id, day, ingest::Modality::condition_code,
                                              corpus.variable_names[static_cast<std::size_t>(i)],
                                              std::nullopt});
                }
            } else {
                const double phase = two_pi * unit(rng);
                auto trajectory = [&](long long day) {
                    const double s = std::sin(two_pi * static_cast<double>(day) / span + phase);
                    const double s0 =
                        std::sin(two_pi * static_cast<double>(params.index_day) / span + phase);
                    return value + params.drift_amplitude * (s - s0);
                };
                for (long long day = 0; day < params.span_days; ++day) {
                    const bool forced = day == 0 || day == params.span_days - 1;
                    if (!forced && unit(rng) < params.sparsity) continue;
                    rec.events.push_back({rec.patient_id, day, ingest::Modality::measurement,
                                          corpus.variable_names[static_cast<std::size_t>(i)],
                                          trajectory(day)});
                }
            }
        }
        std::stable_sort(rec.events.begin(), rec.events.end(),
                         [](const ingest::EventRecord& a, const ingest::EventRecord& b) {
                             return a.day < b.day;
                         });
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

void write_scm(const SyntheticSCM& scm, std::ostream& out) {
    out << "synthetic_scm 1\n";
    out << "n_vars " << scm.n_vars << "\n";
    out << "families";
    for (SourceFamily f : scm.families) out << ' ' << family_name(f);
    out << "\n";
    out << "edges\n";
    for (int i = 0; i < scm.n_vars; ++i) {
        for (int j = 0; j < scm.n_vars; ++j) {
            if (j) out << ' ';
            out << format_double(scm.edges(i, j));
        }
        out << "\n";
    }
    out << "outcome " << scm.outcome_sources.size();
    for (std::size_t t = 0; t < scm.outcome_sources.size(); ++t)
        out << ' ' << scm.outcome_sources[t] << ' '
            << format_double(scm.outcome_weights[static_cast<Eigen::Index>(t)]);
    out << ' ' << format_double(scm.outcome_intercept) << "\n";
}

SyntheticSCM read_scm(std::istream& in) {
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "synthetic_scm" || version != 1)
        throw ParseError("not a synthetic scm file");
    SyntheticSCM scm;
    if (!(in >> tag >> scm.n_vars) || tag != "n_vars") throw ParseError("scm: missing n_vars");
    if (!(in >> tag) || tag != "families") throw ParseError("scm: missing families");
    scm.families.resize(static_cast<std::size_t>(scm.n_vars));
    for (SourceFamily& f : scm.families) {
        std::string name;
        if (!(in >> name)) throw ParseError("scm: truncated families");
        f = family_from_name(name);
    }
    if (!(in >> tag) || tag != "edges") throw ParseError("scm: missing edges");
    scm.edges.resize(scm.n_vars, scm.n_vars);
    for (int i = 0; i < scm.n_vars; ++i)
        for (int j = 0; j < scm.n_vars; ++j)
            if (!(in >> scm.edges(i, j))) throw ParseError("scm: truncated edges");
    std::size_t n_outcome = 0;
    if (!(in >> tag >> n_outcome) || tag != "outcome") throw ParseError("scm: missing outcome");
    scm.outcome_sources.resize(n_outcome);
    scm.outcome_weights.resize(static_cast<Eigen::Index>(n_outcome));
    for (std::size_t t = 0; t < n_outcome; ++t)
        if (!(in >> scm.outcome_sources[t] >> scm.outcome_weights[static_cast<Eigen::Index>(t)]))
            throw ParseError("scm: truncated outcome spec");
    if (!(in >> scm.outcome_intercept)) throw ParseError("scm: missing outcome intercept");
    scm.mixing_true = (Eigen::MatrixXd::Identity(scm.n_vars, scm.n_vars) - scm.edges)
                          .triangularView<Eigen::Lower>()
                          .solve(Eigen::MatrixXd::Identity(scm.n_vars, scm.n_vars));
    return scm;
}

}  // namespace cslearn::oracle

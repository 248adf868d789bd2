#include "cslearn/matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

namespace cslearn::xsection {

std::vector<long long> sample_times(curves::DaySpan span, double density, Rng& rng) {
    if (density <= 0) throw ValidationError("sample_times: density must be > 0");
    const double span_years = static_cast<double>(span.length()) / curves::kDaysPerYear;
    const auto n = std::max<long long>(1, std::llround(span_years * density));
    std::uniform_int_distribution<long long> day_dist(span.first, span.last);
    std::vector<long long> days(static_cast<std::size_t>(n));
    for (auto& d : days) d = day_dist(rng);
    std::sort(days.begin(), days.end());
    return days;
}

Eigen::VectorXd cross_section(const curves::Curveset& cs, long long day) {
    if (!cs.grid.contains(day)) throw ValidationError("cross_section: day outside patient grid");
    Eigen::VectorXd v(static_cast<Eigen::Index>(cs.curves.size()));
    for (std::size_t i = 0; i < cs.curves.size(); ++i) v[static_cast<Eigen::Index>(i)] = cs.curves[i].at(day);
    return v;
}

CrossSectionMatrix assemble_matrix(const std::vector<curves::Curveset>& curvesets, double density,
                                   std::uint64_t master_seed, std::uint64_t vocabulary_hash) {
    if (curvesets.empty()) throw ValidationError("assemble_matrix: no curvesets");
    const auto n_vars = static_cast<Eigen::Index>(curvesets.front().curves.size());

    std::vector<std::vector<long long>> per_patient_days(curvesets.size());
    Eigen::Index n_cols = 0;
    for (std::size_t p = 0; p < curvesets.size(); ++p) {
        if (static_cast<Eigen::Index>(curvesets[p].curves.size()) != n_vars)
            throw ValidationError("assemble_matrix: curvesets disagree on vocabulary size");
        Rng rng(derive_seed(master_seed, curvesets[p].patient_id));
        per_patient_days[p] = sample_times(curvesets[p].grid, density, rng);
        n_cols += static_cast<Eigen::Index>(per_patient_days[p].size());
    }

    CrossSectionMatrix m;
    m.vocabulary_hash = vocabulary_hash;
    m.values.resize(n_vars, n_cols);
    m.provenance.reserve(static_cast<std::size_t>(n_cols));
    Eigen::Index col = 0;
    for (std::size_t p = 0; p < curvesets.size(); ++p) {
        for (long long day : per_patient_days[p]) {
            m.values.col(col++) = cross_section(curvesets[p], day);
            m.provenance.push_back({curvesets[p].patient_id, day});
        }
    }
    return m;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

Standardizer fit_standardizer(const Eigen::MatrixXd& X) {
    if (X.cols() < 2) throw ValidationError("fit_standardizer: need at least 2 columns");
    Standardizer s;
    s.center.resize(X.rows());
    s.scale.resize(X.rows());
    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
        s.center[i] = quantile(row, 0.5);
        double scale = quantile(row, 0.75) - quantile(row, 0.25);
        if (scale <= 0.0) {
            const double mean = X.row(i).mean();
            scale = std::sqrt((X.row(i).array() - mean).square().sum() /
                              static_cast<double>(X.cols() - 1));
        }
        if (scale <= 0.0) scale = 1.0;  // constant row passes through centered at 0
        s.scale[i] = scale;
    }
    return s;
}

Eigen::MatrixXd apply_standardizer(const Standardizer& s, const Eigen::MatrixXd& X) {
    if (X.rows() != s.center.size()) throw ValidationError("apply_standardizer: row count mismatch");
    return (X.colwise() - s.center).array().colwise() / s.scale.array();
}

Eigen::MatrixXd invert_standardizer(const Standardizer& s, const Eigen::MatrixXd& X_std) {
    if (X_std.rows() != s.center.size())
        throw ValidationError("invert_standardizer: row count mismatch");
    return (X_std.array().colwise() * s.scale.array()).matrix().colwise() + s.center;
}

void write_matrix(const CrossSectionMatrix& m, std::ostream& values_out,
                  std::ostream& provenance_out) {
    values_out << m.values.rows() << ',' << m.values.cols() << ',' << m.vocabulary_hash << "\n";
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
            if (j) values_out << ',';
            values_out << format_double(m.values(i, j));
        }
        values_out << "\n";
    }
    provenance_out << "patient_id,day\n";
    for (const ColumnProvenance& p : m.provenance)
        provenance_out << p.patient_id << ',' << p.day << "\n";
}

CrossSectionMatrix read_matrix(std::istream& values_in, std::istream& provenance_in) {
    std::string line;
    if (!std::getline(values_in, line)) throw ParseError("matrix file empty", 1);
    auto header = split_csv_line(line);
    if (header.size() != 3) throw ParseError("matrix header must be rows,cols,vocab_hash", 1);
    const long long rows = parse_int_field(header[0], 1, "rows");
    const long long cols = parse_int_field(header[1], 1, "cols");
    CrossSectionMatrix m;
    {
        unsigned long long vh = 0;
        auto [ptr, ec] = std::from_chars(header[2].data(), header[2].data() + header[2].size(), vh);
        if (ec != std::errc{} || ptr != header[2].data() + header[2].size())
            throw ParseError("bad vocab_hash '" + header[2] + "'", 1);
        m.vocabulary_hash = vh;
    }
    m.values.resize(rows, cols);
    for (long long i = 0; i < rows; ++i) {
        if (!std::getline(values_in, line)) throw ParseError("matrix file truncated", 2 + i);
        auto fields = split_csv_line(line);
        if (static_cast<long long>(fields.size()) != cols)
            throw ParseError("matrix row width mismatch", 2 + i);
        for (long long j = 0; j < cols; ++j)
            m.values(i, j) = parse_double_field(fields[static_cast<std::size_t>(j)],
                                                static_cast<std::size_t>(2 + i), "matrix entry");
    }
    for_each_csv_row(provenance_in, "patient_id,day",
                     [&](const std::vector<std::string>& f, std::size_t lineno) {
                         m.provenance.push_back({f[0], parse_int_field(f[1], lineno, "day")});
                     });
    if (static_cast<long long>(m.provenance.size()) != cols)
        throw ParseError("provenance length does not match matrix columns");
    return m;
}

void write_standardizer(const Standardizer& s, std::ostream& out) {
    out << "center,scale\n";
    for (Eigen::Index i = 0; i < s.center.size(); ++i)
        out << format_double(s.center[i]) << ',' << format_double(s.scale[i]) << "\n";
}

Standardizer read_standardizer(std::istream& in) {
    std::vector<double> center, scale;
    for_each_csv_row(in, "center,scale", [&](const std::vector<std::string>& f, std::size_t line) {
        center.push_back(parse_double_field(f[0], line, "center"));
        scale.push_back(parse_double_field(f[1], line, "scale"));
    });
    Standardizer s;
    s.center = Eigen::Map<Eigen::VectorXd>(center.data(), static_cast<Eigen::Index>(center.size()));
    s.scale = Eigen::Map<Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    return s;
}

}  // namespace cslearn::xsection

#include "cslearn/ica.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace cslearn::ica {

const char* contrast_name(Contrast c) { return c == Contrast::logcosh ? "logcosh" : "exp"; }

Contrast contrast_from_name(std::string_view name) {
    if (name == "logcosh") return Contrast::logcosh;
    if (name == "exp") return Contrast::exp;
    throw ValidationError("unknown contrast '" + std::string(name) + "'");
}

WhitenResult whiten(const Eigen::MatrixXd& X_std, int k, bool strict) {
    const Eigen::Index p = X_std.rows();
    const Eigen::Index n = X_std.cols();
    if (k < 1 || k > std::min<Eigen::Index>(p, n - 1))
        throw ValidationError("whiten: k must satisfy 1 <= k <= min(n_variables, n_columns-1)");
    if (!X_std.allFinite()) throw ValidationError("whiten: non-finite input");

    WhitenResult result;
    result.transform.mean = X_std.rowwise().mean();
    Eigen::MatrixXd centered = X_std.colwise() - result.transform.mean;
    Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // eigenvalues ascending; take the top k above the rank floor
    int usable = 0;
    for (Eigen::Index i = 0; i < p; ++i)
        if (eig.eigenvalues()[i] > 1e-10) ++usable;
    int kept = std::min(k, usable);
    if (kept < k) {
        if (strict) throw ValidationError("whiten: k exceeds numerical rank");
        result.k_reduced = true;
    }

    result.transform.retained_k = kept;
    result.transform.projection.resize(kept, p);
    result.transform.inverse_projection.resize(p, kept);
    result.transform.eigenvalues.resize(kept);
    for (int i = 0; i < kept; ++i) {
        const Eigen::Index src = p - 1 - i;  // descending order
        const double lambda = eig.eigenvalues()[src];
        result.transform.eigenvalues[i] = lambda;
        result.transform.projection.row(i) = eig.eigenvectors().col(src).transpose() / std::sqrt(lambda);
        result.transform.inverse_projection.col(i) = eig.eigenvectors().col(src) * std::sqrt(lambda);
    }
    result.data = result.transform.projection * centered;
    return result;
}

namespace {

Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& W) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(W * W.transpose());
    Eigen::VectorXd inv_sqrt = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * W;
}

}  // namespace

FastIcaResult fastica(const Eigen::MatrixXd& whitened, Contrast contrast, double tol, int max_iter,
                      Rng& rng) {
    if (tol <= 0) throw ValidationError("fastica: tol must be > 0");
    const auto k = static_cast<int>(whitened.rows());
    const double n = static_cast<double>(whitened.cols());

    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd W(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) W(i, j) = gauss(rng);
    W = symmetric_decorrelation(W);

    FastIcaResult result;
    for (int iter = 1; iter <= max_iter; ++iter) {
        Eigen::MatrixXd U = W * whitened;  // k x n projected sources
        Eigen::MatrixXd G(k, static_cast<Eigen::Index>(n));
        Eigen::VectorXd gprime_mean(k);
        if (contrast == Contrast::logcosh) {
            G = U.array().tanh();
            gprime_mean = (1.0 - G.array().square()).rowwise().mean();
        } else {
            Eigen::ArrayXXd e = (-U.array().square() / 2.0).exp();
            G = (U.array() * e).matrix();
            gprime_mean = ((1.0 - U.array().square()) * e).rowwise().mean();
        }
        Eigen::MatrixXd W_new = G * whitened.transpose() / n - gprime_mean.asDiagonal() * W;
        W_new = symmetric_decorrelation(W_new);

        double delta = 0.0;
        for (int i = 0; i < k; ++i)
            delta = std::max(delta, std::abs(1.0 - std::abs(W_new.row(i).dot(W.row(i)))));
        W = W_new;
        result.report.iterations = iter;
        result.report.final_delta = delta;
        if (delta < tol) {
            result.report.converged = true;
            break;
        }
    }
    result.rotation = W;
    return result;
}

ICAModel compose_model(const WhiteningTransform& whitening, const Eigen::MatrixXd& rotation,
                       Contrast contrast, const ConvergenceReport& report) {
    if (rotation.rows() != whitening.retained_k || rotation.cols() != whitening.retained_k)
        throw ValidationError("compose_model: rotation shape inconsistent with whitening");
    ICAModel model;
    model.whitening = whitening;
    model.contrast = contrast;
    model.report = report;
    model.unmixing = rotation * whitening.projection;
    model.mixing = whitening.inverse_projection * rotation.transpose();
    // sign convention: each signature's largest-|loading| entry is positive
    for (Eigen::Index j = 0; j < model.mixing.cols(); ++j) {
        Eigen::Index argmax = 0;
        model.mixing.col(j).cwiseAbs().maxCoeff(&argmax);
        if (model.mixing(argmax, j) < 0) {
            model.mixing.col(j) = -model.mixing.col(j);
            model.unmixing.row(j) = -model.unmixing.row(j);
        }
    }
    return model;
}

SourceMatrix transform(const ICAModel& model, const Eigen::MatrixXd& X_std) {
    if (X_std.rows() != model.whitening.mean.size())
        throw ValidationError("transform: variable count mismatch");
    SourceMatrix s;
    s.values = model.unmixing * (X_std.colwise() - model.whitening.mean);
    return s;
}

std::vector<std::pair<std::string, double>> signature(const ICAModel& model,
                                                      const ingest::VariableVocabulary& vocab,
                                                      int source_index, int top_m) {
    if (source_index < 0 || source_index >= model.mixing.cols())
        throw ValidationError("signature: source index out of range");
    std::vector<std::pair<std::string, double>> entries;
    for (Eigen::Index i = 0; i < model.mixing.rows(); ++i)
        entries.emplace_back(vocab.rows[static_cast<std::size_t>(i)].variable_id,
                             model.mixing(i, source_index));
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return std::abs(a.second) > std::abs(b.second);
    });
    if (top_m < static_cast<int>(entries.size()))
        entries.resize(static_cast<std::size_t>(std::max(top_m, 0)));
    return entries;
}

namespace {

void write_matrix_block(std::ostream& out, const char* name, const Eigen::MatrixXd& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ' ';
            out << format_double(m(i, j));
        }
        out << "\n";
    }
}

Eigen::MatrixXd read_matrix_block(std::istream& in, const char* name) {
    std::string tag;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> tag >> rows >> cols) || tag != name)
        throw ParseError(std::string("ica model: expected block '") + name + "'");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            if (!(in >> m(i, j))) throw ParseError("ica model: truncated matrix block");
    return m;
}

}  // namespace

void write_model(const ICAModel& model, std::ostream& out) {
    out << "ica_model 1\n";
    out << "k " << model.whitening.retained_k << "\n";
    out << "contrast " << contrast_name(model.contrast) << "\n";
    out << "vocabulary_hash " << model.vocabulary_hash << "\n";
    out << "converged " << (model.report.converged ? 1 : 0) << ' ' << model.report.iterations << ' '
        << format_double(model.report.final_delta) << "\n";
    write_matrix_block(out, "mean", model.whitening.mean);
    write_matrix_block(out, "projection", model.whitening.projection);
    write_matrix_block(out, "inverse_projection", model.whitening.inverse_projection);
    write_matrix_block(out, "eigenvalues", model.whitening.eigenvalues);
    write_matrix_block(out, "mixing", model.mixing);
    write_matrix_block(out, "unmixing", model.unmixing);
}

ICAModel read_model(std::istream& in) {
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "ica_model" || version != 1)
        throw ParseError("not an ica model file");
    ICAModel model;
    int k = 0, converged = 0;
    std::string contrast;
    if (!(in >> tag >> k) || tag != "k") throw ParseError("ica model: missing k");
    if (!(in >> tag >> contrast) || tag != "contrast") throw ParseError("ica model: missing contrast");
    model.contrast = contrast_from_name(contrast);
    if (!(in >> tag >> model.vocabulary_hash) || tag != "vocabulary_hash")
        throw ParseError("ica model: missing vocabulary_hash");
    if (!(in >> tag >> converged >> model.report.iterations >> model.report.final_delta) ||
        tag != "converged")
        throw ParseError("ica model: missing convergence report");
    model.report.converged = converged != 0;
    model.whitening.retained_k = k;
    model.whitening.mean = read_matrix_block(in, "mean");
    model.whitening.projection = read_matrix_block(in, "projection");
    model.whitening.inverse_projection = read_matrix_block(in, "inverse_projection");
    model.whitening.eigenvalues = read_matrix_block(in, "eigenvalues");
    model.mixing = read_matrix_block(in, "mixing");
    model.unmixing = read_matrix_block(in, "unmixing");
    return model;
}

}  // namespace cslearn::ica

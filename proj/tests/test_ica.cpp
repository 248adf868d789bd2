#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cslearn/ica.hpp"
#include "cslearn/oracle.hpp"

using namespace cslearn;
using namespace cslearn::ica;

namespace {

Eigen::MatrixXd laplace_sources(int k, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(1e-12, 1.0);
    std::bernoulli_distribution coin(0.5);
    Eigen::MatrixXd s(k, n);
    const double b = 1.0 / std::sqrt(2.0);  // unit variance
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) {
            const double e = -b * std::log(u(rng));
            s(i, j) = coin(rng) ? e : -e;
        }
    return s;
}

Eigen::MatrixXd uniform_sources(int k, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-std::sqrt(3.0), std::sqrt(3.0));
    Eigen::MatrixXd s(k, n);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) s(i, j) = u(rng);
    return s;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
    return centered * centered.transpose() / static_cast<double>(x.cols() - 1);
}

ingest::VariableVocabulary measurement_vocab(int n) {
    ingest::VariableVocabulary vocab;
    for (int i = 0; i < n; ++i)
        vocab.rows.push_back({"v" + std::to_string(i), ingest::RowKind::measurement});
    return vocab;
}

}  // namespace

TEST_CASE("whiten: already-white data keeps identity covariance") {
    auto x = laplace_sources(4, 20000, 1);
    auto white = whiten(x, 4);
    const auto cov = sample_covariance(white.data);
    CHECK((cov - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(white.transform.retained_k == 4);
    CHECK(!white.k_reduced);
}

TEST_CASE("whiten: diagonal covariance [[4,0],[0,1]] scales to unit variances") {
    auto s = laplace_sources(2, 50000, 2);
    Eigen::MatrixXd x = s;
    x.row(0) *= 2.0;  // variance 4
    auto white = whiten(x, 2);
    const auto cov = sample_covariance(white.data);
    CHECK(cov(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(cov(1, 1) == doctest::Approx(1.0).epsilon(1e-6));
    // eigenvalue spectrum is descending and reflects the input variances
    CHECK(white.transform.eigenvalues[0] == doctest::Approx(4.0).epsilon(0.05));
    CHECK(white.transform.eigenvalues[1] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("whiten: random 10-row matrix gives identity projected covariance") {
    Rng rng(3);
    std::normal_distribution<double> g;
    Eigen::MatrixXd mix(10, 10);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) mix(i, j) = g(rng);
    const Eigen::MatrixXd x = mix * laplace_sources(10, 5000, 4);
    auto white = whiten(x, 10);
    const auto cov = sample_covariance(white.data);
    CHECK((cov - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-6);
    // projection and inverse_projection invert each other on the subspace
    const Eigen::MatrixXd pi = white.transform.projection * white.transform.inverse_projection;
    CHECK((pi - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("whiten: rank deficiency reduces k, or errors in strict mode") {
    Eigen::MatrixXd x(3, 1000);
    auto s = laplace_sources(2, 1000, 5);
    x.row(0) = s.row(0);
    x.row(1) = s.row(1);
    x.row(2) = s.row(0) + s.row(1);  // linearly dependent
    auto white = whiten(x, 3);
    CHECK(white.k_reduced);
    CHECK(white.transform.retained_k == 2);
    CHECK_THROWS_AS(whiten(x, 3, /*strict=*/true), ValidationError);
}

TEST_CASE("fastica: identity-mixed Laplace sources yield a signed permutation rotation") {
    const int k = 4, n = 50000;
    auto s = laplace_sources(k, n, 10);
    auto white = whiten(s, k);
    Rng rng(11);
    auto result = fastica(white.data, Contrast::logcosh, 1e-4, 500, rng);
    CHECK(result.report.converged);
    // rotation * (whitening of identity mixing) should be a signed permutation
    const Eigen::MatrixXd total = result.rotation * white.transform.projection;
    for (int i = 0; i < k; ++i) {
        // normalize the row then check a dominant entry
        Eigen::VectorXd row = total.row(i).cwiseAbs();
        CHECK(row.maxCoeff() / row.norm() > 0.99);
    }
}

TEST_CASE("fastica: rotation is orthogonal") {
    auto s = uniform_sources(5, 20000, 12);
    auto white = whiten(s, 5);
    Rng rng(13);
    auto result = fastica(white.data, Contrast::logcosh, 1e-4, 500, rng);
    const Eigen::MatrixXd wwt = result.rotation * result.rotation.transpose();
    CHECK((wwt - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fastica: two Gaussian sources terminate with an honest flag") {
    Rng rng(14);
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(2, 20000);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 20000; ++j) x(i, j) = g(rng);
    auto white = whiten(x, 2);
    Rng fit_rng(15);
    auto result = fastica(white.data, Contrast::logcosh, 1e-4, 200, fit_rng);
    CHECK(result.report.iterations >= 1);  // terminated; convergence not guaranteed
}

TEST_CASE("fastica: deterministic given the rng seed") {
    auto s = laplace_sources(3, 10000, 16);
    auto white = whiten(s, 3);
    Rng r1(77), r2(77);
    auto a = fastica(white.data, Contrast::exp, 1e-4, 500, r1);
    auto b = fastica(white.data, Contrast::exp, 1e-4, 500, r2);
    CHECK(a.rotation == b.rotation);
}

TEST_CASE("2x2 mixing recovery: Amari distance below 0.05") {
    Eigen::MatrixXd a_true(2, 2);
    a_true << 2, 1, 1, 2;
    const Eigen::MatrixXd x = a_true * uniform_sources(2, 50000, 17);
    auto white = whiten(x, 2);
    Rng rng(18);
    auto result = fastica(white.data, Contrast::logcosh, 1e-4, 500, rng);
    auto model = compose_model(white.transform, result.rotation, Contrast::logcosh, result.report);
    CHECK(oracle::amari_distance(model.unmixing * a_true) < 0.05);
}

TEST_CASE("compose_model invariants") {
    Eigen::MatrixXd mix(6, 6);
    Rng rng(19);
    std::normal_distribution<double> g;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) mix(i, j) = g(rng);
    const Eigen::MatrixXd x = mix * laplace_sources(6, 30000, 20);
    auto white = whiten(x, 6);
    Rng fit_rng(21);
    auto result = fastica(white.data, Contrast::logcosh, 1e-4, 500, fit_rng);
    auto model = compose_model(white.transform, result.rotation, Contrast::logcosh, result.report);

    SUBCASE("unmixing * mixing = identity within 1e-6") {
        const Eigen::MatrixXd prod = model.unmixing * model.mixing;
        CHECK((prod - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-6);
    }
    SUBCASE("sign convention: every signature's max-|loading| entry is positive") {
        for (int j = 0; j < model.mixing.cols(); ++j) {
            Eigen::Index argmax;
            model.mixing.col(j).cwiseAbs().maxCoeff(&argmax);
            CHECK(model.mixing(argmax, j) > 0.0);
        }
    }
    SUBCASE("full-rank reconstruction: A*S matches centered X") {
        auto sources = transform(model, x);
        const Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
        const Eigen::MatrixXd recon = model.mixing * sources.values;
        CHECK((recon - centered).norm() / centered.norm() < 1e-6);
    }
    SUBCASE("recovered sources: unit variance, near-zero pairwise correlation") {
        auto sources = transform(model, x);
        const auto cov = sample_covariance(sources.values);
        for (int i = 0; i < 6; ++i) {
            CHECK(cov(i, i) == doctest::Approx(1.0).epsilon(1e-3));
            for (int j = 0; j < i; ++j)
                CHECK(std::abs(cov(i, j)) / std::sqrt(cov(i, i) * cov(j, j)) < 0.05);
        }
    }
}

TEST_CASE("transform centering and exactness") {
    auto s = laplace_sources(3, 5000, 22);
    auto white = whiten(s, 3);
    Rng rng(23);
    auto result = fastica(white.data, Contrast::logcosh, 1e-4, 500, rng);
    auto model = compose_model(white.transform, result.rotation, Contrast::logcosh, result.report);
    SUBCASE("transform of the training mean column is zero") {
        const Eigen::VectorXd mean_col = s.rowwise().mean();
        auto sm = transform(model, mean_col);
        CHECK(sm.values.cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("shape mismatch errors") {
        CHECK_THROWS_AS(transform(model, Eigen::MatrixXd::Zero(5, 2)), ValidationError);
    }
}

TEST_CASE("seed indeterminacy: two seeds agree up to permutation and sign") {
    Eigen::MatrixXd mix(5, 5);
    Rng rng(24);
    std::normal_distribution<double> g;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) mix(i, j) = g(rng);
    const Eigen::MatrixXd x = mix * laplace_sources(5, 30000, 25);
    auto white = whiten(x, 5);
    Rng r1(100), r2(200);
    auto m1 = compose_model(white.transform, fastica(white.data, Contrast::logcosh, 1e-4, 500, r1).rotation,
                            Contrast::logcosh, {});
    auto m2 = compose_model(white.transform, fastica(white.data, Contrast::logcosh, 1e-4, 500, r2).rotation,
                            Contrast::logcosh, {});
    auto s1 = transform(m1, x), s2 = transform(m2, x);
    auto match = oracle::match_sources(s1.values, s2.values);
    for (double rho : match.abs_correlation) CHECK(rho > 0.95);
}

TEST_CASE("held-out synthetic data: matched source correlation above 0.95") {
    Eigen::MatrixXd mix(6, 6);
    Rng rng(26);
    std::normal_distribution<double> g;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) mix(i, j) = g(rng);
    const auto s_train = laplace_sources(6, 40000, 27);
    const auto s_test = laplace_sources(6, 10000, 28);
    auto white = whiten(mix * s_train, 6);
    Rng fit_rng(29);
    auto model = compose_model(white.transform,
                               fastica(white.data, Contrast::logcosh, 1e-4, 500, fit_rng).rotation,
                               Contrast::logcosh, {});
    auto s_est = transform(model, mix * s_test);
    auto match = oracle::match_sources(s_est.values, s_test);
    for (double rho : match.abs_correlation) CHECK(rho > 0.95);
}

TEST_CASE("signature ranks loadings by magnitude") {
    ICAModel model;
    model.mixing = Eigen::MatrixXd::Identity(3, 3);
    auto vocab = measurement_vocab(3);
    SUBCASE("identity mixing: source i loads variable i with 1") {
        for (int i = 0; i < 3; ++i) {
            auto sig = signature(model, vocab, i, 2);
            REQUIRE(!sig.empty());
            CHECK(sig[0].first == "v" + std::to_string(i));
            CHECK(sig[0].second == doctest::Approx(1.0));
        }
    }
    SUBCASE("top_m = 0 gives an empty list") {
        CHECK(signature(model, vocab, 0, 0).empty());
    }
    SUBCASE("ordering by |loading| with signs preserved") {
        model.mixing = Eigen::MatrixXd::Zero(3, 1);
        model.mixing << 0.5, -2.0, 1.0;
        auto sig = signature(model, vocab, 0, 3);
        REQUIRE(sig.size() == 3);
        CHECK(sig[0].first == "v1");
        CHECK(sig[0].second == doctest::Approx(-2.0));
        CHECK(sig[1].first == "v2");
        CHECK(sig[2].first == "v0");
    }
}

TEST_CASE("model persistence reloads bit-for-bit") {
    auto s = laplace_sources(4, 8000, 30);
    auto white = whiten(s, 4);
    Rng rng(31);
    auto result = fastica(white.data, Contrast::exp, 1e-4, 500, rng);
    auto model = compose_model(white.transform, result.rotation, Contrast::exp, result.report);
    model.vocabulary_hash = 0xdeadbeefULL;

    std::ostringstream out;
    write_model(model, out);
    std::istringstream in(out.str());
    auto model2 = read_model(in);
    CHECK(model2.mixing == model.mixing);
    CHECK(model2.unmixing == model.unmixing);
    CHECK(model2.whitening.mean == model.whitening.mean);
    CHECK(model2.whitening.projection == model.whitening.projection);
    CHECK(model2.contrast == model.contrast);
    CHECK(model2.vocabulary_hash == model.vocabulary_hash);
    CHECK(model2.report.iterations == model.report.iterations);

    // reload reproduces transform outputs exactly
    auto a = transform(model, s);
    auto b = transform(model2, s);
    CHECK(a.values == b.values);
}

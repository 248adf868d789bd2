#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "cslearn/explain.hpp"

using namespace cslearn;
using namespace cslearn::explain;

namespace {

LabeledCohort random_cohort(int k, int n, std::uint64_t seed,
                            const std::function<int(const Eigen::VectorXd&, Rng&)>& label) {
    Rng rng(seed);
    std::normal_distribution<double> g;
    LabeledCohort cohort;
    cohort.features.resize(k, n);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) cohort.features(i, j) = g(rng);
    for (int j = 0; j < n; ++j) cohort.labels.push_back(label(cohort.features.col(j), rng));
    cohort.provenance.resize(static_cast<std::size_t>(n));
    return cohort;
}

// Independent Shapley oracle: direct factorial-weighted subset enumeration
// over bitmask subsets, evaluating the interventional value function from
// scratch for every subset.
Eigen::VectorXd brute_force_shap(const CausalModel& model, const Eigen::VectorXd& instance,
                                 const Eigen::MatrixXd& background, double* base = nullptr) {
    const int k = static_cast<int>(instance.size());
    std::vector<double> fact(static_cast<std::size_t>(k) + 1, 1.0);
    for (int i = 1; i <= k; ++i) fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i - 1)] * i;

    auto value = [&](unsigned mask) {
        double total = 0.0;
        for (Eigen::Index b = 0; b < background.cols(); ++b) {
            Eigen::VectorXd x = background.col(b);
            for (int i = 0; i < k; ++i)
                if (mask & (1u << i)) x[i] = instance[i];
            total += model.margin(x);
        }
        return total / static_cast<double>(background.cols());
    };

    Eigen::VectorXd phi = Eigen::VectorXd::Zero(k);
    for (int i = 0; i < k; ++i) {
        for (unsigned mask = 0; mask < (1u << k); ++mask) {
            if (mask & (1u << i)) continue;
            const int t = static_cast<int>(std::popcount(mask));
            const double w = fact[static_cast<std::size_t>(t)] *
                             fact[static_cast<std::size_t>(k - t - 1)] /
                             fact[static_cast<std::size_t>(k)];
            phi[i] += w * (value(mask | (1u << i)) - value(mask));
        }
    }
    if (base) *base = value(0);
    return phi;
}

CausalModel linear_logistic(const Eigen::VectorXd& weights, double intercept) {
    CausalModel m;
    m.kind = ModelKind::logistic;
    m.weights = weights;
    m.intercept = intercept;
    m.n_features = static_cast<int>(weights.size());
    return m;
}

}  // namespace

TEST_CASE("train_model: linearly separable toy set reaches training accuracy 1.0") {
    LabeledCohort cohort;
    cohort.features.resize(2, 40);
    for (int j = 0; j < 40; ++j) {
        const double side = j < 20 ? -1.0 : 1.0;
        cohort.features(0, j) = side * (1.0 + 0.05 * j);
        cohort.features(1, j) = 0.1 * j;
        cohort.labels.push_back(side > 0 ? 1 : 0);
    }
    cohort.provenance.resize(40);
    for (ModelKind kind : {ModelKind::boosted_trees, ModelKind::logistic}) {
        Hyperparams hp;
        hp.kind = kind;
        hp.rounds = 50;
        auto model = train_model(cohort, hp);
        auto metrics = evaluate(model, cohort);
        CHECK(metrics.accuracy == doctest::Approx(1.0));
    }
}

TEST_CASE("train_model: random labels give chance-level held-out AUROC") {
    auto train = random_cohort(4, 500, 42, [](const Eigen::VectorXd&, Rng& r) {
        return std::bernoulli_distribution(0.5)(r) ? 1 : 0;
    });
    auto test = random_cohort(4, 500, 43, [](const Eigen::VectorXd&, Rng& r) {
        return std::bernoulli_distribution(0.5)(r) ? 1 : 0;
    });
    Hyperparams hp;
    hp.rounds = 50;
    auto model = train_model(train, hp);
    auto metrics = evaluate(model, test);
    CHECK(metrics.auroc >= 0.4);
    CHECK(metrics.auroc <= 0.6);
}

TEST_CASE("train_model: logistic recovers known generating weights within 15%") {
    const Eigen::Vector2d w_true(2.0, -1.0);
    auto cohort = random_cohort(2, 20000, 44, [&](const Eigen::VectorXd& x, Rng& r) {
        const double p = 1.0 / (1.0 + std::exp(-(w_true.dot(x))));
        return std::bernoulli_distribution(p)(r) ? 1 : 0;
    });
    Hyperparams hp;
    hp.kind = ModelKind::logistic;
    auto model = train_model(cohort, hp);
    CHECK(model.weights[0] == doctest::Approx(2.0).epsilon(0.15));
    CHECK(model.weights[1] == doctest::Approx(-1.0).epsilon(0.15));
}

TEST_CASE("train_model errors") {
    LabeledCohort cohort;
    cohort.features = Eigen::MatrixXd::Random(2, 10);
    cohort.labels.assign(10, 1);  // single class
    cohort.provenance.resize(10);
    CHECK_THROWS_AS(train_model(cohort, {}), ValidationError);

    cohort.labels[0] = 0;
    cohort.features(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_model(cohort, {}), ValidationError);
}

TEST_CASE("boosted-trees training loss is non-increasing per round") {
    auto cohort = random_cohort(3, 400, 45, [](const Eigen::VectorXd& x, Rng& r) {
        const double p = 1.0 / (1.0 + std::exp(-(x[0] + 0.5 * x[1] * x[2])));
        return std::bernoulli_distribution(p)(r) ? 1 : 0;
    });
    Hyperparams hp;
    hp.rounds = 80;
    auto model = train_model(cohort, hp);
    REQUIRE(model.train_loss.size() >= 2);
    for (std::size_t i = 1; i < model.train_loss.size(); ++i)
        CHECK(model.train_loss[i] <= model.train_loss[i - 1] + 1e-12);
}

TEST_CASE("predict baselines") {
    SUBCASE("logistic with zero weights gives 0.5 everywhere") {
        auto m = linear_logistic(Eigen::Vector2d::Zero(), 0.0);
        CHECK(m.predict(Eigen::Vector2d(3.0, -7.0)) == doctest::Approx(0.5));
    }
    SUBCASE("empty tree ensemble with zero intercept gives 0.5") {
        CausalModel m;
        m.kind = ModelKind::boosted_trees;
        m.intercept = 0.0;
        m.n_features = 2;
        CHECK(m.predict(Eigen::Vector2d(1.0, 2.0)) == doctest::Approx(0.5));
    }
    SUBCASE("predictions are monotone in a single monotone feature") {
        LabeledCohort cohort;
        cohort.features.resize(1, 100);
        for (int j = 0; j < 100; ++j) {
            cohort.features(0, j) = j * 0.1;
            cohort.labels.push_back(j >= 50 ? 1 : 0);
        }
        cohort.provenance.resize(100);
        Hyperparams hp;
        hp.rounds = 40;
        auto model = train_model(cohort, hp);
        double prev = -1.0;
        for (double v = 0.0; v <= 10.0; v += 0.25) {
            const double p = model.predict(Eigen::VectorXd::Constant(1, v));
            CHECK(p >= prev - 1e-12);
            prev = p;
        }
    }
    SUBCASE("shape mismatch errors") {
        auto m = linear_logistic(Eigen::Vector2d(1.0, 2.0), 0.0);
        CHECK_THROWS_AS(m.predict(Eigen::Vector3d(1, 2, 3)), ValidationError);
    }
}

TEST_CASE("shap_exact: linear model closed form") {
    auto m = linear_logistic(Eigen::Vector2d(2.0, 3.0), 1.0);
    Eigen::MatrixXd background = Eigen::MatrixXd::Zero(2, 1);
    auto ex = shap_exact(m, Eigen::Vector2d(1.0, 1.0), background);
    CHECK(ex.base_value == doctest::Approx(1.0));
    CHECK(ex.phi[0] == doctest::Approx(2.0));
    CHECK(ex.phi[1] == doctest::Approx(3.0));
    CHECK(ex.estimator == ShapEstimator::exact);
}

TEST_CASE("shap_exact: two-player product game splits the surplus evenly") {
    // trees realizing margin(x) = 1{x0 > 0.5 and x1 > 0.5} on {0,1}^2
    CausalModel m;
    m.kind = ModelKind::boosted_trees;
    m.n_features = 2;
    m.intercept = 0.0;
    Tree t;
    t.nodes.push_back({0, 0.5, 1, 2, 0.0});   // root: x0 <= 0.5 ?
    t.nodes.push_back({-1, 0.0, -1, -1, 0.0});  // x0 low -> 0
    t.nodes.push_back({1, 0.5, 3, 4, 0.0});   // x1 <= 0.5 ?
    t.nodes.push_back({-1, 0.0, -1, -1, 0.0});
    t.nodes.push_back({-1, 0.0, -1, -1, 1.0});
    m.trees.push_back(t);

    Eigen::MatrixXd background = Eigen::MatrixXd::Zero(2, 1);
    auto ex = shap_exact(m, Eigen::Vector2d(1.0, 1.0), background);
    CHECK(ex.base_value == doctest::Approx(0.0));
    CHECK(ex.phi[0] == doctest::Approx(0.5));
    CHECK(ex.phi[1] == doctest::Approx(0.5));
}

TEST_CASE("shap_exact matches the brute-force enumeration oracle on boosted trees") {
    const int k = 8;
    auto cohort = random_cohort(k, 300, 46, [](const Eigen::VectorXd& x, Rng& r) {
        const double p = 1.0 / (1.0 + std::exp(-(x[0] - x[3] + x[1] * x[2])));
        return std::bernoulli_distribution(p)(r) ? 1 : 0;
    });
    Hyperparams hp;
    hp.rounds = 60;
    auto model = train_model(cohort, hp);
    const Eigen::MatrixXd background = cohort.features.leftCols(16);

    for (int j = 0; j < 5; ++j) {
        const Eigen::VectorXd instance = cohort.features.col(20 + j);
        auto ex = shap_exact(model, instance, background);
        double base_oracle = 0.0;
        auto phi_oracle = brute_force_shap(model, instance, background, &base_oracle);
        CHECK(ex.base_value == doctest::Approx(base_oracle).epsilon(1e-9));
        for (int i = 0; i < k; ++i) CHECK(ex.phi[i] == doctest::Approx(phi_oracle[i]).epsilon(1e-9));
    }
}

TEST_CASE("shap_exact refuses k beyond the enumeration bound") {
    const int k = kMaxExactFeatures + 1;
    auto m = linear_logistic(Eigen::VectorXd::Ones(k), 0.0);
    CHECK_THROWS_AS(shap_exact(m, Eigen::VectorXd::Zero(k), Eigen::MatrixXd::Zero(k, 1)),
                    ValidationError);
}

TEST_CASE("Shapley axioms on the exact estimator") {
    Rng rng(47);
    std::normal_distribution<double> g;
    const int k = 5;
    auto cohort = random_cohort(k, 200, 48, [](const Eigen::VectorXd& x, Rng& r) {
        const double p = 1.0 / (1.0 + std::exp(-x.sum()));
        return std::bernoulli_distribution(p)(r) ? 1 : 0;
    });
    Hyperparams hp;
    hp.rounds = 40;
    auto trees = train_model(cohort, hp);
    Eigen::MatrixXd background(k, 8);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < 8; ++j) background(i, j) = g(rng);

    SUBCASE("efficiency: base + sum(phi) = margin(instance)") {
        for (int t = 0; t < 20; ++t) {
            Eigen::VectorXd instance(k);
            for (int i = 0; i < k; ++i) instance[i] = g(rng);
            auto ex = shap_exact(trees, instance, background);
            CHECK(std::abs(ex.base_value + ex.phi.sum() - trees.margin(instance)) < 1e-9);
        }
    }
    SUBCASE("dummy: an unread feature has phi exactly zero") {
        Eigen::VectorXd w(k);
        w << 1.0, 0.0, -2.0, 0.5, 0.0;  // features 1 and 4 unread
        auto m = linear_logistic(w, 0.3);
        Eigen::VectorXd instance(k);
        for (int i = 0; i < k; ++i) instance[i] = g(rng);
        auto ex = shap_exact(m, instance, background);
        CHECK(ex.phi[1] == 0.0);
        CHECK(ex.phi[4] == 0.0);
    }
    SUBCASE("symmetry: exchangeable features get equal phi") {
        Eigen::VectorXd w(k);
        w << 1.5, 1.5, -1.0, 0.0, 2.0;
        auto m = linear_logistic(w, 0.0);
        Eigen::VectorXd instance(k);
        for (int i = 0; i < k; ++i) instance[i] = g(rng);
        instance[1] = instance[0];
        Eigen::MatrixXd sym_bg = background;
        sym_bg.row(1) = sym_bg.row(0);
        auto ex = shap_exact(m, instance, sym_bg);
        CHECK(std::abs(ex.phi[0] - ex.phi[1]) < 1e-9);
    }
    SUBCASE("linearity: phi of a summed ensemble is the sum of phis") {
        auto half_a = trees;
        auto half_b = trees;
        const std::size_t split = trees.trees.size() / 2;
        half_a.trees.assign(trees.trees.begin(), trees.trees.begin() + static_cast<long>(split));
        half_b.trees.assign(trees.trees.begin() + static_cast<long>(split), trees.trees.end());
        half_b.intercept = 0.0;
        Eigen::VectorXd instance(k);
        for (int i = 0; i < k; ++i) instance[i] = g(rng);
        auto ex_sum = shap_exact(trees, instance, background);
        auto ex_a = shap_exact(half_a, instance, background);
        auto ex_b = shap_exact(half_b, instance, background);
        for (int i = 0; i < k; ++i)
            CHECK(std::abs(ex_sum.phi[i] - (ex_a.phi[i] + ex_b.phi[i])) < 1e-9);
    }
}

TEST_CASE("shap_sampled") {
    SUBCASE("k = 2 enumerates both permutations and equals shap_exact") {
        auto m = linear_logistic(Eigen::Vector2d(1.0, -2.0), 0.5);
        Eigen::MatrixXd background(2, 3);
        background << 0.1, -0.4, 0.2, 1.0, 0.3, -0.2;
        Rng rng(49);
        auto exact = shap_exact(m, Eigen::Vector2d(0.7, 0.9), background);
        auto sampled = shap_sampled(m, Eigen::Vector2d(0.7, 0.9), background, 100, rng);
        CHECK(sampled.phi[0] == doctest::Approx(exact.phi[0]).epsilon(1e-12));
        CHECK(sampled.phi[1] == doctest::Approx(exact.phi[1]).epsilon(1e-12));
        CHECK(sampled.estimator == ShapEstimator::permutation);
    }
    SUBCASE("k = 8 trees: sampled within 4 standard errors of exact") {
        auto cohort = random_cohort(8, 300, 50, [](const Eigen::VectorXd& x, Rng& r) {
            const double p = 1.0 / (1.0 + std::exp(-(x[0] + x[1] * x[2] - x[5])));
            return std::bernoulli_distribution(p)(r) ? 1 : 0;
        });
        Hyperparams hp;
        hp.rounds = 60;
        auto model = train_model(cohort, hp);
        const Eigen::MatrixXd background = cohort.features.leftCols(16);
        const Eigen::VectorXd instance = cohort.features.col(40);
        auto exact = shap_exact(model, instance, background);
        Rng rng(51);
        auto sampled = shap_sampled(model, instance, background, 2000, rng);
        for (int i = 0; i < 8; ++i) {
            const double tol = 4.0 * std::max(sampled.standard_error[i], 1e-12);
            CHECK(std::abs(sampled.phi[i] - exact.phi[i]) <= tol);
        }
    }
    SUBCASE("constant model: all phi zero, base equals the constant") {
        CausalModel m;
        m.kind = ModelKind::boosted_trees;
        m.intercept = 0.75;
        m.n_features = 3;
        Rng rng(52);
        auto ex = shap_sampled(m, Eigen::Vector3d(1, 2, 3), Eigen::MatrixXd::Zero(3, 2), 50, rng);
        CHECK(ex.base_value == doctest::Approx(0.75));
        for (int i = 0; i < 3; ++i) CHECK(ex.phi[i] == 0.0);
    }
    SUBCASE("doubling permutations shrinks mean SE by about sqrt(2)") {
        auto cohort = random_cohort(6, 200, 53, [](const Eigen::VectorXd& x, Rng& r) {
            const double p = 1.0 / (1.0 + std::exp(-x.sum()));
            return std::bernoulli_distribution(p)(r) ? 1 : 0;
        });
        Hyperparams hp;
        hp.rounds = 40;
        auto model = train_model(cohort, hp);
        const Eigen::MatrixXd background = cohort.features.leftCols(8);
        const Eigen::VectorXd instance = cohort.features.col(30);
        double se_small = 0.0, se_big = 0.0;
        const int reps = 20;
        for (int r = 0; r < reps; ++r) {
            Rng r1(1000 + static_cast<std::uint64_t>(r)), r2(5000 + static_cast<std::uint64_t>(r));
            se_small += shap_sampled(model, instance, background, 200, r1).standard_error.mean();
            se_big += shap_sampled(model, instance, background, 400, r2).standard_error.mean();
        }
        const double ratio = se_small / se_big;
        CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.20));
    }
}

TEST_CASE("rank_sources") {
    SUBCASE("single explanation ranks by |phi|") {
        ShapExplanation ex;
        ex.phi = Eigen::Vector3d(0.0, 5.0, -3.0);
        auto ranking = rank_sources({ex});
        REQUIRE(ranking.order.size() == 3);
        CHECK(ranking.order[0] == 1);
        CHECK(ranking.order[1] == 2);
        CHECK(ranking.order[2] == 0);
        CHECK(ranking.importance[1] == doctest::Approx(5.0));
    }
    SUBCASE("duplicating the list leaves the ranking unchanged") {
        ShapExplanation a, b;
        a.phi = Eigen::Vector3d(1.0, -4.0, 2.0);
        b.phi = Eigen::Vector3d(-1.0, 2.0, 0.0);
        auto r1 = rank_sources({a, b});
        auto r2 = rank_sources({a, b, a, b});
        CHECK(r1.order == r2.order);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(r1.importance[i] == doctest::Approx(r2.importance[i]));
    }
    SUBCASE("ties break by source index") {
        ShapExplanation ex;
        ex.phi = Eigen::Vector3d(2.0, -2.0, 2.0);
        auto ranking = rank_sources({ex});
        CHECK(ranking.order == std::vector<int>{0, 1, 2});
    }
    SUBCASE("empty list errors") {
        CHECK_THROWS_AS(rank_sources({}), ValidationError);
    }
}

TEST_CASE("evaluate") {
    LabeledCohort cohort;
    cohort.features.resize(1, 6);
    cohort.features << -3, -2, -1, 1, 2, 3;
    cohort.labels = {0, 0, 0, 1, 1, 1};
    cohort.provenance.resize(6);
    SUBCASE("perfect separation gives AUROC 1.0") {
        auto m = linear_logistic(Eigen::VectorXd::Ones(1), 0.0);
        CHECK(evaluate(m, cohort).auroc == doctest::Approx(1.0));
    }
    SUBCASE("constant predictions give AUROC 0.5") {
        auto m = linear_logistic(Eigen::VectorXd::Zero(1), 0.2);
        CHECK(evaluate(m, cohort).auroc == doctest::Approx(0.5));
    }
    SUBCASE("random sets match a quadratic all-pairs oracle") {
        auto big = random_cohort(2, 150, 54, [](const Eigen::VectorXd& x, Rng& r) {
            const double p = 1.0 / (1.0 + std::exp(-x[0]));
            return std::bernoulli_distribution(p)(r) ? 1 : 0;
        });
        auto m = linear_logistic(Eigen::Vector2d(0.8, -0.3), 0.1);
        const double auroc = evaluate(m, big).auroc;

        double pairs = 0.0, wins = 0.0;
        for (int i = 0; i < 150; ++i)
            for (int j = 0; j < 150; ++j) {
                if (big.labels[static_cast<std::size_t>(i)] != 1 ||
                    big.labels[static_cast<std::size_t>(j)] != 0)
                    continue;
                ++pairs;
                const double pi = m.predict(big.features.col(i));
                const double pj = m.predict(big.features.col(j));
                wins += pi > pj ? 1.0 : (pi == pj ? 0.5 : 0.0);
            }
        CHECK(auroc == doctest::Approx(wins / pairs).epsilon(1e-12));
    }
    SUBCASE("single-class held-out set errors") {
        cohort.labels = {1, 1, 1, 1, 1, 1};
        auto m = linear_logistic(Eigen::VectorXd::Ones(1), 0.0);
        CHECK_THROWS_AS(evaluate(m, cohort), ValidationError);
    }
}

TEST_CASE("model persistence round trip preserves predictions exactly") {
    auto cohort = random_cohort(4, 300, 55, [](const Eigen::VectorXd& x, Rng& r) {
        const double p = 1.0 / (1.0 + std::exp(-(x[0] - x[2])));
        return std::bernoulli_distribution(p)(r) ? 1 : 0;
    });
    for (ModelKind kind : {ModelKind::boosted_trees, ModelKind::logistic}) {
        Hyperparams hp;
        hp.kind = kind;
        hp.rounds = 30;
        auto model = train_model(cohort, hp, FeatureSpace::raw);
        std::ostringstream out;
        write_model(model, out);
        std::istringstream in(out.str());
        auto model2 = read_model(in);
        CHECK(model2.kind == model.kind);
        CHECK(model2.space == model.space);
        for (int j = 0; j < 20; ++j)
            CHECK(model2.margin(cohort.features.col(j)) == model.margin(cohort.features.col(j)));
    }
}

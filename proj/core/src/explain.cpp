#include "cslearn/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace cslearn::explain {

const char* model_kind_name(ModelKind k) {
    return k == ModelKind::boosted_trees ? "boosted_trees" : "logistic";
}

ModelKind model_kind_from_name(std::string_view name) {
    if (name == "boosted_trees") return ModelKind::boosted_trees;
    if (name == "logistic") return ModelKind::logistic;
    throw ValidationError("unknown model kind '" + std::string(name) + "'");
}

const char* feature_space_name(FeatureSpace s) { return s == FeatureSpace::sources ? "sources" : "raw"; }

FeatureSpace feature_space_from_name(std::string_view name) {
    if (name == "sources") return FeatureSpace::sources;
    if (name == "raw") return FeatureSpace::raw;
    throw ValidationError("unknown feature space '" + std::string(name) + "'");
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamped_log(double p) { return std::log(std::max(p, 1e-300)); }

double mean_log_loss(const Eigen::VectorXd& margins, const std::vector<int>& labels) {
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = sigmoid(margins[static_cast<Eigen::Index>(i)]);
        loss -= labels[i] ? clamped_log(p) : clamped_log(1.0 - p);
    }
    return loss / static_cast<double>(labels.size());
}

}  // namespace

double Tree::value(const Eigen::VectorXd& x) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const TreeNode& n = nodes[static_cast<std::size_t>(node)];
        node = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(node)].leaf_value;
}

double CausalModel::margin(const Eigen::VectorXd& x) const {
    if (x.size() != n_features) throw ValidationError("predict: feature count mismatch");
    if (kind == ModelKind::logistic) return intercept + weights.dot(x);
    double m = intercept;
    for (const Tree& t : trees) m += t.value(x);
    return m;
}

double CausalModel::predict(const Eigen::VectorXd& x) const { return sigmoid(margin(x)); }

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxBins = 255;

struct BinnedFeatures {
    std::vector<std::vector<double>> edges;    // per feature, sorted candidate thresholds
    std::vector<std::vector<std::uint16_t>> bins;  // per feature, per instance
};

BinnedFeatures bin_features(const Eigen::MatrixXd& X) {
    const auto k = static_cast<std::size_t>(X.rows());
    const auto n = static_cast<std::size_t>(X.cols());
    BinnedFeatures bf;
    bf.edges.resize(k);
    bf.bins.resize(k);
    std::vector<double> sorted(n);
    for (std::size_t f = 0; f < k; ++f) {
        for (std::size_t i = 0; i < n; ++i) sorted[i] = X(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i));
        std::sort(sorted.begin(), sorted.end());
        auto& edges = bf.edges[f];
        for (int q = 1; q <= kMaxBins; ++q) {
            const auto idx = static_cast<std::size_t>(
                static_cast<double>(q) * static_cast<double>(n - 1) / (kMaxBins + 1));
            edges.push_back(sorted[idx]);
        }
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        // the largest value can never be a useful threshold
        while (!edges.empty() && edges.back() >= sorted.back()) edges.pop_back();
        auto& bins = bf.bins[f];
        bins.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = X(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i));
            bins[i] = static_cast<std::uint16_t>(
                std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
        }
    }
    return bf;
}

struct TreeBuilder {
    const BinnedFeatures& bf;
    const Eigen::VectorXd& grad;  // residuals y - p
    const Eigen::VectorXd& hess;  // p (1 - p)
    double l2;
    int max_depth;
    Tree tree;

    int build(std::vector<int>& indices, int depth) {
        double sum_g = 0.0, sum_h = 0.0;
        for (int i : indices) {
            sum_g += grad[i];
            sum_h += hess[i];
        }
        const auto n = static_cast<double>(indices.size());

        int best_feature = -1, best_edge = -1;
        double best_gain = 1e-12;
        if (depth < max_depth && indices.size() >= 2) {
            const auto n_feat = bf.edges.size();
            for (std::size_t f = 0; f < n_feat; ++f) {
                const auto n_edges = bf.edges[f].size();
                if (n_edges == 0) continue;
                std::vector<double> bin_g(n_edges + 1, 0.0);
                std::vector<double> bin_n(n_edges + 1, 0.0);
                for (int i : indices) {
                    const std::uint16_t b = bf.bins[f][static_cast<std::size_t>(i)];
                    bin_g[b] += grad[i];
                    bin_n[b] += 1.0;
                }
                double left_g = 0.0, left_n = 0.0;
                const double parent = sum_g * sum_g / n;
                for (std::size_t e = 0; e < n_edges; ++e) {
                    left_g += bin_g[e];
                    left_n += bin_n[e];
                    const double right_n = n - left_n;
                    if (left_n < 1.0 || right_n < 1.0) continue;
                    const double right_g = sum_g - left_g;
                    // variance reduction of the residuals
                    const double gain = left_g * left_g / left_n + right_g * right_g / right_n - parent;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feature = static_cast<int>(f);
                        best_edge = static_cast<int>(e);
                    }
                }
            }
        }

        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        if (best_feature < 0) {
            // Newton leaf on the logistic loss
            tree.nodes[static_cast<std::size_t>(node_id)].leaf_value = sum_g / (sum_h + l2);
            return node_id;
        }

        std::vector<int> left, right;
        for (int i : indices) {
            if (bf.bins[static_cast<std::size_t>(best_feature)][static_cast<std::size_t>(i)] <=
                static_cast<std::uint16_t>(best_edge))
                left.push_back(i);
            else
                right.push_back(i);
        }
        indices.clear();
        indices.shrink_to_fit();
        const int left_id = build(left, depth + 1);
        const int right_id = build(right, depth + 1);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
        node.feature = best_feature;
        node.threshold = bf.edges[static_cast<std::size_t>(best_feature)][static_cast<std::size_t>(best_edge)];
        node.left = left_id;
        node.right = right_id;
        return node_id;
    }
};

CausalModel train_boosted(const LabeledCohort& cohort, const Hyperparams& hp, FeatureSpace space) {
    const auto n = static_cast<Eigen::Index>(cohort.labels.size());
    const double pos_rate =
        static_cast<double>(std::accumulate(cohort.labels.begin(), cohort.labels.end(), 0)) /
        static_cast<double>(n);

    CausalModel model;
    model.kind = ModelKind::boosted_trees;
    model.space = space;
    model.n_features = static_cast<int>(cohort.features.rows());
    model.hyperparams = hp;
    model.intercept = std::log(pos_rate / (1.0 - pos_rate));

    const BinnedFeatures bf = bin_features(cohort.features);
    Eigen::VectorXd margins = Eigen::VectorXd::Constant(n, model.intercept);
    Eigen::VectorXd grad(n), hess(n);

    for (int round = 0; round < hp.rounds; ++round) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = sigmoid(margins[i]);
            grad[i] = static_cast<double>(cohort.labels[static_cast<std::size_t>(i)]) - p;
            hess[i] = std::max(p * (1.0 - p), 1e-16);
        }
        TreeBuilder builder{bf, grad, hess, hp.l2, hp.max_depth, {}};
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        builder.build(all, 0);
        for (TreeNode& node : builder.tree.nodes)
            if (node.feature < 0) node.leaf_value *= hp.learning_rate;
        for (Eigen::Index i = 0; i < n; ++i) margins[i] += builder.tree.value(cohort.features.col(i));
        model.trees.push_back(std::move(builder.tree));
        model.train_loss.push_back(mean_log_loss(margins, cohort.labels));
    }
    return model;
}

CausalModel train_logistic(const LabeledCohort& cohort, const Hyperparams& hp, FeatureSpace space) {
    const auto k = cohort.features.rows();
    const auto n = cohort.features.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    CausalModel model;
    model.kind = ModelKind::logistic;
    model.space = space;
    model.n_features = static_cast<int>(k);
    model.hyperparams = hp;
    model.weights = Eigen::VectorXd::Zero(k);

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = cohort.labels[static_cast<std::size_t>(i)];

    constexpr double kGradTol = 1e-8;
    constexpr int kMaxNewton = 200;
    for (int iter = 0; iter < kMaxNewton; ++iter) {
        Eigen::VectorXd z =
            (cohort.features.transpose() * model.weights).array() + model.intercept;
        Eigen::VectorXd p = z.unaryExpr([](double v) { return sigmoid(v); });
        Eigen::VectorXd r = p - y;

        Eigen::VectorXd grad(k + 1);
        grad.head(k) = cohort.features * r * inv_n + hp.l2 * model.weights;
        grad[k] = r.mean();
        if (grad.cwiseAbs().maxCoeff() < kGradTol) break;

        Eigen::VectorXd w = (p.array() * (1.0 - p.array())).cwiseMax(1e-12);
        Eigen::MatrixXd Xw = cohort.features.array().rowwise() * w.transpose().array();
        Eigen::MatrixXd H(k + 1, k + 1);
        H.topLeftCorner(k, k) = Xw * cohort.features.transpose() * inv_n;
        H.topLeftCorner(k, k).diagonal().array() += hp.l2;
        H.topRightCorner(k, 1) = cohort.features * w * inv_n;
        H.bottomLeftCorner(1, k) = H.topRightCorner(k, 1).transpose();
        H(k, k) = w.mean();

        Eigen::VectorXd step = H.ldlt().solve(grad);
        model.weights -= step.head(k);
        model.intercept -= step[k];
    }
    return model;
}

}  // namespace

CausalModel train_model(const LabeledCohort& cohort, const Hyperparams& hp, FeatureSpace space) {
    if (cohort.features.cols() < 2) throw ValidationError("train_model: need at least 2 columns");
    if (static_cast<std::size_t>(cohort.features.cols()) != cohort.labels.size())
        throw ValidationError("train_model: label count does not match column count");
    if (!cohort.features.allFinite()) throw ValidationError("train_model: non-finite features");
    const int pos = std::accumulate(cohort.labels.begin(), cohort.labels.end(), 0);
    if (pos == 0 || pos == static_cast<int>(cohort.labels.size()))
        throw ValidationError("train_model: both classes must be present");
    for (int label : cohort.labels)
        if (label != 0 && label != 1) throw ValidationError("train_model: labels must be in {0,1}");

    return hp.kind == ModelKind::boosted_trees ? train_boosted(cohort, hp, space)
                                               : train_logistic(cohort, hp, space);
}

// ---------------------------------------------------------------------------
// Shapley values
// ---------------------------------------------------------------------------

namespace {

// v(T) for every subset mask T of the k instance features:
// mean over background columns of margin(instance on T, background elsewhere).
std::vector<double> subset_value_table(const CausalModel& model, const Eigen::VectorXd& x,
                                       const Eigen::MatrixXd& background) {
    const int k = static_cast<int>(x.size());
    const std::size_t n_masks = std::size_t{1} << k;
    std::vector<double> v(n_masks, 0.0);

    if (model.kind == ModelKind::logistic) {
        const Eigen::VectorXd bg_mean = background.rowwise().mean();
        v[0] = model.intercept + model.weights.dot(bg_mean);
        std::vector<double> delta(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i)
            delta[static_cast<std::size_t>(i)] = model.weights[i] * (x[i] - bg_mean[i]);
        for (std::size_t mask = 1; mask < n_masks; ++mask) {
            const int i = std::countr_zero(mask);
            v[mask] = v[mask & (mask - 1)] + delta[static_cast<std::size_t>(i)];
        }
        return v;
    }

    std::fill(v.begin(), v.end(), model.intercept);
    const auto n_bg = static_cast<double>(background.cols());
    std::vector<int> used;
    std::vector<double> table;
    for (const Tree& tree : model.trees) {
        used.clear();
        for (const TreeNode& node : tree.nodes)
            if (node.feature >= 0) used.push_back(node.feature);
        std::sort(used.begin(), used.end());
        used.erase(std::unique(used.begin(), used.end()), used.end());
        const int m = static_cast<int>(used.size());
        const std::size_t n_sub = std::size_t{1} << m;

        table.assign(n_sub, 0.0);
        for (Eigen::Index b = 0; b < background.cols(); ++b) {
            for (std::size_t sub = 0; sub < n_sub; ++sub) {
                int node = 0;
                while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
                    const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
                    const auto pos = static_cast<std::size_t>(
                        std::lower_bound(used.begin(), used.end(), nd.feature) - used.begin());
                    const double value = (sub >> pos) & 1 ? x[nd.feature] : background(nd.feature, b);
                    node = value <= nd.threshold ? nd.left : nd.right;
                }
                table[sub] += tree.nodes[static_cast<std::size_t>(node)].leaf_value;
            }
        }
        for (double& t : table) t /= n_bg;

        if (m == 0) {
            for (double& vm : v) vm += table[0];
            continue;
        }
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            std::size_t sub = 0;
            for (int j = 0; j < m; ++j)
                sub |= ((mask >> used[static_cast<std::size_t>(j)]) & 1u) << j;
            v[mask] += table[sub];
        }
    }
    return v;
}

// Shapley subset weights: w[t] = t! (k-1-t)! / k! = 1 / (k * C(k-1, t))
std::vector<double> shapley_weights(int k) {
    std::vector<double> w(static_cast<std::size_t>(k));
    double binom = 1.0;  // C(k-1, t)
    for (int t = 0; t < k; ++t) {
        w[static_cast<std::size_t>(t)] = 1.0 / (static_cast<double>(k) * binom);
        binom = binom * static_cast<double>(k - 1 - t) / static_cast<double>(t + 1);
    }
    return w;
}

void check_shap_inputs(const CausalModel& model, const Eigen::VectorXd& instance,
                       const Eigen::MatrixXd& background) {
    if (instance.size() != model.n_features)
        throw ValidationError("shap: instance feature count mismatch");
    if (background.rows() != model.n_features)
        throw ValidationError("shap: background feature count mismatch");
    if (background.cols() < 1) throw ValidationError("shap: background must be non-empty");
}

}  // namespace

ShapExplanation shap_exact(const CausalModel& model, const Eigen::VectorXd& instance,
                           const Eigen::MatrixXd& background) {
    check_shap_inputs(model, instance, background);
    const int k = static_cast<int>(instance.size());
    if (k > kMaxExactFeatures)
        throw ValidationError("shap_exact: more than " + std::to_string(kMaxExactFeatures) +
                              " features; use shap_sampled");

    const std::vector<double> v = subset_value_table(model, instance, background);
    const std::vector<double> w = shapley_weights(k);

    ShapExplanation ex;
    ex.estimator = ShapEstimator::exact;
    ex.base_value = v[0];
    ex.phi = Eigen::VectorXd::Zero(k);
    const std::size_t n_masks = std::size_t{1} << k;
    for (int i = 0; i < k; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        double phi = 0.0;
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            phi += w[static_cast<std::size_t>(std::popcount(mask))] * (v[mask | bit] - v[mask]);
        }
        ex.phi[i] = phi;
    }
    return ex;
}

ShapExplanation shap_sampled(const CausalModel& model, const Eigen::VectorXd& instance,
                             const Eigen::MatrixXd& background, int n_permutations, Rng& rng) {
    check_shap_inputs(model, instance, background);
    if (n_permutations < 1) throw ValidationError("shap_sampled: n_permutations must be >= 1");
    const int k = static_cast<int>(instance.size());

    // value function: table lookup within the enumeration bound, direct
    // evaluation beyond it
    std::vector<double> table;
    if (k <= kMaxExactFeatures) table = subset_value_table(model, instance, background);
    Eigen::VectorXd composed(k);
    auto value_of = [&](const std::vector<char>& in_set, std::size_t mask) {
        if (!table.empty()) return table[mask];
        double total = 0.0;
        for (Eigen::Index b = 0; b < background.cols(); ++b) {
            for (int f = 0; f < k; ++f)
                composed[f] = in_set[static_cast<std::size_t>(f)] ? instance[f] : background(f, b);
            total += model.margin(composed);
        }
        return total / static_cast<double>(background.cols());
    };

    std::vector<char> in_set(static_cast<std::size_t>(k));
    auto walk = [&](const std::vector<int>& perm, Eigen::VectorXd& contrib) {
        std::fill(in_set.begin(), in_set.end(), 0);
        std::size_t mask = 0;
        double prev = value_of(in_set, mask);
        for (int f : perm) {
            in_set[static_cast<std::size_t>(f)] = 1;
            mask |= std::size_t{1} << f;
            const double cur = value_of(in_set, mask);
            contrib[f] = cur - prev;
            prev = cur;
        }
    };

    ShapExplanation ex;
    ex.estimator = ShapEstimator::permutation;
    ex.base_value = value_of(std::vector<char>(static_cast<std::size_t>(k), 0), 0);
    ex.phi = Eigen::VectorXd::Zero(k);
    ex.standard_error = Eigen::VectorXd::Zero(k);

    // complete enumeration when feasible: the estimate is then exact
    double factorial = 1.0;
    for (int i = 2; i <= k; ++i) factorial *= i;
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);

    if (factorial <= static_cast<double>(n_permutations)) {
        Eigen::VectorXd contrib(k);
        int count = 0;
        do {
            walk(perm, contrib);
            ex.phi += contrib;
            ++count;
        } while (std::next_permutation(perm.begin(), perm.end()));
        ex.phi /= static_cast<double>(count);
        ex.n_permutations = count;
        return ex;
    }

    const int n_pairs = std::max(1, n_permutations / 2);
    Eigen::MatrixXd pair_means(k, n_pairs);
    Eigen::VectorXd forward(k), backward(k);
    for (int p = 0; p < n_pairs; ++p) {
        std::shuffle(perm.begin(), perm.end(), rng);
        walk(perm, forward);
        std::vector<int> reversed(perm.rbegin(), perm.rend());
        walk(reversed, backward);  // antithetic partner
        pair_means.col(p) = 0.5 * (forward + backward);
    }
    ex.phi = pair_means.rowwise().mean();
    ex.n_permutations = 2 * n_pairs;
    if (n_pairs > 1) {
        for (int f = 0; f < k; ++f) {
            const double var = (pair_means.row(f).array() - ex.phi[f]).square().sum() /
                               static_cast<double>(n_pairs - 1);
            ex.standard_error[f] = std::sqrt(var / static_cast<double>(n_pairs));
        }
    }
    return ex;
}

SourceRanking rank_sources(const std::vector<ShapExplanation>& explanations) {
    if (explanations.empty()) throw ValidationError("rank_sources: no explanations");
    const auto k = explanations.front().phi.size();
    for (const ShapExplanation& ex : explanations)
        if (ex.phi.size() != k) throw ValidationError("rank_sources: inconsistent feature counts");

    SourceRanking ranking;
    ranking.importance.assign(static_cast<std::size_t>(k), 0.0);
    for (const ShapExplanation& ex : explanations)
        for (Eigen::Index i = 0; i < k; ++i)
            ranking.importance[static_cast<std::size_t>(i)] += std::abs(ex.phi[i]);
    for (double& imp : ranking.importance) imp /= static_cast<double>(explanations.size());

    ranking.order.resize(static_cast<std::size_t>(k));
    std::iota(ranking.order.begin(), ranking.order.end(), 0);
    std::stable_sort(ranking.order.begin(), ranking.order.end(), [&](int a, int b) {
        return ranking.importance[static_cast<std::size_t>(a)] >
               ranking.importance[static_cast<std::size_t>(b)];
    });
    return ranking;
}

Metrics evaluate(const CausalModel& model, const LabeledCohort& held_out) {
    const auto n = held_out.features.cols();
    if (static_cast<std::size_t>(n) != held_out.labels.size())
        throw ValidationError("evaluate: label count mismatch");
    const int pos = std::accumulate(held_out.labels.begin(), held_out.labels.end(), 0);
    if (pos == 0 || pos == static_cast<int>(held_out.labels.size()))
        throw ValidationError("evaluate: both classes must be present in the held-out set");

    std::vector<double> preds(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) preds[static_cast<std::size_t>(i)] = model.predict(held_out.features.col(i));

    Metrics m;
    // AUROC as the rank statistic over positive-negative pairs, ties 1/2
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return preds[static_cast<std::size_t>(a)] < preds[static_cast<std::size_t>(b)]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && preds[static_cast<std::size_t>(idx[j])] == preds[static_cast<std::size_t>(idx[i])]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t t = i; t < j; ++t)
            if (held_out.labels[static_cast<std::size_t>(idx[t])]) rank_sum_pos += avg_rank;
        i = j;
    }
    const double n_pos = pos;
    const double n_neg = static_cast<double>(n) - n_pos;
    m.auroc = (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);

    double correct = 0.0, loss = 0.0;
    for (std::size_t t = 0; t < preds.size(); ++t) {
        const int label = held_out.labels[t];
        if ((preds[t] >= 0.5) == (label == 1)) correct += 1.0;
        loss -= label ? clamped_log(preds[t]) : clamped_log(1.0 - preds[t]);
    }
    m.accuracy = correct / static_cast<double>(n);
    m.log_loss = loss / static_cast<double>(n);
    return m;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

void write_model(const CausalModel& model, std::ostream& out) {
    out << "causal_model 1\n";
    out << "kind " << model_kind_name(model.kind) << "\n";
    out << "space " << feature_space_name(model.space) << "\n";
    out << "n_features " << model.n_features << "\n";
    out << "intercept " << format_double(model.intercept) << "\n";
    const Hyperparams& hp = model.hyperparams;
    out << "hyperparams " << hp.rounds << ' ' << format_double(hp.learning_rate) << ' '
        << hp.max_depth << ' ' << format_double(hp.l2) << ' ' << hp.seed << "\n";
    out << "trees " << model.trees.size() << "\n";
    for (const Tree& tree : model.trees) {
        out << "tree " << tree.nodes.size() << "\n";
        for (const TreeNode& n : tree.nodes)
            out << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right
                << ' ' << format_double(n.leaf_value) << "\n";
    }
    out << "weights " << model.weights.size();
    for (Eigen::Index i = 0; i < model.weights.size(); ++i)
        out << ' ' << format_double(model.weights[i]);
    out << "\n";
}

CausalModel read_model(std::istream& in) {
    std::string tag, word;
    int version = 0;
    if (!(in >> tag >> version) || tag != "causal_model" || version != 1)
        throw ParseError("not a causal model file");
    CausalModel model;
    if (!(in >> tag >> word) || tag != "kind") throw ParseError("causal model: missing kind");
    model.kind = model_kind_from_name(word);
    if (!(in >> tag >> word) || tag != "space") throw ParseError("causal model: missing space");
    model.space = feature_space_from_name(word);
    if (!(in >> tag >> model.n_features) || tag != "n_features")
        throw ParseError("causal model: missing n_features");
    if (!(in >> tag >> model.intercept) || tag != "intercept")
        throw ParseError("causal model: missing intercept");
    Hyperparams& hp = model.hyperparams;
    hp.kind = model.kind;
    if (!(in >> tag >> hp.rounds >> hp.learning_rate >> hp.max_depth >> hp.l2 >> hp.seed) ||
        tag != "hyperparams")
        throw ParseError("causal model: missing hyperparams");
    std::size_t n_trees = 0;
    if (!(in >> tag >> n_trees) || tag != "trees") throw ParseError("causal model: missing trees");
    model.trees.resize(n_trees);
    for (Tree& tree : model.trees) {
        std::size_t n_nodes = 0;
        if (!(in >> tag >> n_nodes) || tag != "tree") throw ParseError("causal model: bad tree block");
        tree.nodes.resize(n_nodes);
        for (TreeNode& n : tree.nodes)
            if (!(in >> n.feature >> n.threshold >> n.left >> n.right >> n.leaf_value))
                throw ParseError("causal model: truncated tree");
    }
    Eigen::Index n_weights = 0;
    if (!(in >> tag >> n_weights) || tag != "weights")
        throw ParseError("causal model: missing weights");
    model.weights.resize(n_weights);
    for (Eigen::Index i = 0; i < n_weights; ++i)
        if (!(in >> model.weights[i])) throw ParseError("causal model: truncated weights");
    return model;
}

}  // namespace cslearn::explain

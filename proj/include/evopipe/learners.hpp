#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "evopipe/errors.hpp"
#include "evopipe/matrix.hpp"
#include "evopipe/rng.hpp"

namespace evopipe {

enum class LearnerKind { LogisticRegressionNN, MlpNN, DecisionTree, KNearest, GaussianNB };

inline const char* learner_kind_name(LearnerKind k) {
    switch (k) {
        case LearnerKind::LogisticRegressionNN: return "LogisticRegressionNN";
        case LearnerKind::MlpNN: return "MlpNN";
        case LearnerKind::DecisionTree: return "DecisionTree";
        case LearnerKind::KNearest: return "KNearest";
        case LearnerKind::GaussianNB: return "GaussianNB";
    }
    return "?";
}

// One sampled hyperparameter assignment. std::map keeps key order canonical for
// serialization and cache keys.
using HpValue = std::variant<std::int64_t, double, std::string>;
using Hyperparameters = std::map<std::string, HpValue>;

inline std::int64_t hp_int(const Hyperparameters& hp, const std::string& key, std::int64_t fallback) {
    auto it = hp.find(key);
    if (it == hp.end()) return fallback;
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
    if (const auto* v = std::get_if<double>(&it->second)) return static_cast<std::int64_t>(*v);
    throw ConfigError("hyperparameter '" + key + "' is not numeric");
}

inline double hp_double(const Hyperparameters& hp, const std::string& key, double fallback) {
    auto it = hp.find(key);
    if (it == hp.end()) return fallback;
    if (const auto* v = std::get_if<double>(&it->second)) return *v;
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*v);
    throw ConfigError("hyperparameter '" + key + "' is not numeric");
}

inline std::string hp_str(const Hyperparameters& hp, const std::string& key, const std::string& fallback) {
    auto it = hp.find(key);
    if (it == hp.end()) return fallback;
    if (const auto* v = std::get_if<std::string>(&it->second)) return *v;
    throw ConfigError("hyperparameter '" + key + "' is not a string");
}

// Uniform prediction contract every estimator (built-in or registered) satisfies.
// Implementations are immutable after fit; concurrent predict calls are safe.
class LearnerModel {
public:
    virtual ~LearnerModel() = default;
    virtual Matrix predict_proba(const Matrix& x) const = 0;
    int n_classes() const { return n_classes_; }
    int d_in() const { return d_in_; }

    // argmax of predict_proba rows; ties broken toward the lower class index
    std::vector<int> predict(const Matrix& x) const {
        Matrix p = predict_proba(x);
        std::vector<int> out(p.rows());
        for (std::size_t i = 0; i < p.rows(); ++i) {
            auto row = p.row(i);
            std::size_t best = 0;
            for (std::size_t j = 1; j < row.size(); ++j)
                if (row[j] > row[best]) best = j;
            out[i] = static_cast<int>(best);
        }
        return out;
    }

protected:
    LearnerModel(int n_classes, int d_in) : n_classes_(n_classes), d_in_(d_in) {}
    void check_width(const Matrix& x) const {
        if (static_cast<int>(x.cols()) != d_in_)
            throw FitError("predict: input width " + std::to_string(x.cols()) +
                           " does not match fit-time width " + std::to_string(d_in_));
    }

private:
    int n_classes_;
    int d_in_;
};

using ModelPtr = std::shared_ptr<const LearnerModel>;

struct FittedLearner {
    LearnerKind kind;
    ModelPtr model;

    int n_classes() const { return model->n_classes(); }
    int d_in() const { return model->d_in(); }
    Matrix predict_proba(const Matrix& x) const { return model->predict_proba(x); }
    std::vector<int> predict(const Matrix& x) const { return model->predict(x); }
};

// Degenerate single-class training folds fit to this rather than failing.
class ConstantModel : public LearnerModel {
public:
    ConstantModel(int cls, int n_classes, int d_in) : LearnerModel(n_classes, d_in), cls_(cls) {}
    Matrix predict_proba(const Matrix& x) const override {
        check_width(x);
        Matrix p(x.rows(), static_cast<std::size_t>(n_classes()));
        for (std::size_t i = 0; i < p.rows(); ++i) p(i, static_cast<std::size_t>(cls_)) = 1.0;
        return p;
    }
    int constant_class() const { return cls_; }

private:
    int cls_;
};

inline std::size_t lr_param_count(std::size_t d, std::size_t c) { return d * c + c; }
inline std::size_t mlp_param_count(std::size_t d, std::size_t h, std::size_t c) {
    return d * h + h + h * c + c;
}

namespace detail {

// In-place row softmax from logits; returns mean cross-entropy against y.
// Stable via per-row max subtraction.
inline double softmax_rows_and_loss(Matrix& z, std::span<const int> y) {
    double loss = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        auto row = z.row(i);
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        const double lse = std::log(sum) + mx;
        loss += lse - (std::log(row[static_cast<std::size_t>(y[i])] ) + mx);
        for (double& v : row) v /= sum;
    }
    return loss / static_cast<double>(z.rows());
}

inline void add_bias_rows(Matrix& z, std::span<const double> bias) {
    for (std::size_t i = 0; i < z.rows(); ++i) {
        auto row = z.row(i);
        for (std::size_t j = 0; j < bias.size(); ++j) row[j] += bias[j];
    }
}

inline int infer_classes(std::span<const int> y) {
    int c = 0;
    for (int v : y) c = std::max(c, v + 1);
    return std::max(c, 2);
}

}  // namespace detail

// Training objective for the neural kinds, exposed so tests can check the analytic
// gradient against central finite differences. Parameter layout is
//   LR:  [W (d*c, row-major), b (c)]
//   MLP: [W1 (d*h), b1 (h), W2 (h*c), b2 (c)]  with h inferred from the length.
// loss = mean softmax cross-entropy + l2 * ||weights||^2 / 2 (biases unpenalized).
inline std::pair<double, std::vector<double>> loss_and_gradient(LearnerKind kind,
                                                                std::span<const double> params,
                                                                const Matrix& x,
                                                                std::span<const int> y, double l2,
                                                                int n_classes = 0) {
    const std::size_t n = x.rows(), d = x.cols();
    if (n == 0 || y.size() != n) throw FitError("loss_and_gradient: bad label vector");
    const std::size_t c =
        static_cast<std::size_t>(n_classes > 0 ? n_classes : detail::infer_classes(y));

    std::vector<double> grad(params.size(), 0.0);
    double loss = 0.0;

    if (kind == LearnerKind::LogisticRegressionNN) {
        if (params.size() != lr_param_count(d, c))
            throw FitError("loss_and_gradient: LR parameter vector length mismatch");
        const Matrix w(d, c, std::vector<double>(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(d * c)));
        std::span<const double> b = params.subspan(d * c, c);

        Matrix z = matmul(x, w);
        detail::add_bias_rows(z, b);
        loss = detail::softmax_rows_and_loss(z, y);
        // z now holds probabilities; turn it into dZ = (P - Y)/n
        for (std::size_t i = 0; i < n; ++i) z(i, static_cast<std::size_t>(y[i])) -= 1.0;
        for (double& v : z.data()) v /= static_cast<double>(n);

        Matrix gw = matmul_at_b(x, z);
        for (std::size_t k = 0; k < d * c; ++k) {
            loss += 0.5 * l2 * params[k] * params[k];
            grad[k] = gw.data()[k] + l2 * params[k];
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) grad[d * c + j] += z(i, j);
        return {loss, std::move(grad)};
    }

    if (kind == LearnerKind::MlpNN) {
        if (params.size() <= c || (params.size() - c) % (d + 1 + c) != 0)
            throw FitError("loss_and_gradient: MLP parameter vector length mismatch");
        const std::size_t h = (params.size() - c) / (d + 1 + c);
        const std::size_t off_b1 = d * h, off_w2 = d * h + h, off_b2 = d * h + h + h * c;

        const Matrix w1(d, h, std::vector<double>(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(off_b1)));
        std::span<const double> b1 = params.subspan(off_b1, h);
        const Matrix w2(h, c, std::vector<double>(params.begin() + static_cast<std::ptrdiff_t>(off_w2),
                                                  params.begin() + static_cast<std::ptrdiff_t>(off_b2)));
        std::span<const double> b2 = params.subspan(off_b2, c);

        Matrix a1 = matmul(x, w1);
        detail::add_bias_rows(a1, b1);
        Matrix hidden = a1;
        for (double& v : hidden.data()) v = v > 0.0 ? v : 0.0;  // ReLU

        Matrix z = matmul(hidden, w2);
        detail::add_bias_rows(z, b2);
        loss = detail::softmax_rows_and_loss(z, y);
        for (std::size_t i = 0; i < n; ++i) z(i, static_cast<std::size_t>(y[i])) -= 1.0;
        for (double& v : z.data()) v /= static_cast<double>(n);

        Matrix gw2 = matmul_at_b(hidden, z);
        Matrix dh = matmul_a_bt(z, w2);
        for (std::size_t i = 0; i < n * h; ++i)
            if (a1.data()[i] <= 0.0) dh.data()[i] = 0.0;
        Matrix gw1 = matmul_at_b(x, dh);

        for (std::size_t k = 0; k < d * h; ++k) {
            loss += 0.5 * l2 * params[k] * params[k];
            grad[k] = gw1.data()[k] + l2 * params[k];
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < h; ++j) grad[off_b1 + j] += dh(i, j);
        for (std::size_t k = 0; k < h * c; ++k) {
            const double wv = params[off_w2 + k];
            loss += 0.5 * l2 * wv * wv;
            grad[off_w2 + k] = gw2.data()[k] + l2 * wv;
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) grad[off_b2 + j] += z(i, j);
        return {loss, std::move(grad)};
    }

    throw FitError("loss_and_gradient: not a neural learner kind");
}

class NeuralModel : public LearnerModel {
public:
    NeuralModel(LearnerKind kind, std::vector<double> params, int n_classes, int d_in)
        : LearnerModel(n_classes, d_in), kind_(kind), params_(std::move(params)) {}

    Matrix predict_proba(const Matrix& x) const override {
        check_width(x);
        const auto c = static_cast<std::size_t>(n_classes());
        const auto d = static_cast<std::size_t>(d_in());
        Matrix z;
        if (kind_ == LearnerKind::LogisticRegressionNN) {
            const Matrix w(d, c, std::vector<double>(params_.begin(),
                                                     params_.begin() + static_cast<std::ptrdiff_t>(d * c)));
            z = matmul(x, w);
            detail::add_bias_rows(z, std::span<const double>(params_).subspan(d * c, c));
        } else {
            const std::size_t h = (params_.size() - c) / (d + 1 + c);
            const std::size_t off_b1 = d * h, off_w2 = d * h + h, off_b2 = d * h + h + h * c;
            const Matrix w1(d, h, std::vector<double>(params_.begin(),
                                                      params_.begin() + static_cast<std::ptrdiff_t>(off_b1)));
            const Matrix w2(h, c, std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(off_w2),
                                                      params_.begin() + static_cast<std::ptrdiff_t>(off_b2)));
            Matrix a1 = matmul(x, w1);
            detail::add_bias_rows(a1, std::span<const double>(params_).subspan(off_b1, h));
            for (double& v : a1.data()) v = v > 0.0 ? v : 0.0;
            z = matmul(a1, w2);
            detail::add_bias_rows(z, std::span<const double>(params_).subspan(off_b2, c));
        }
        for (std::size_t i = 0; i < z.rows(); ++i) {
            auto row = z.row(i);
            double mx = row[0];
            for (double v : row) mx = std::max(mx, v);
            double sum = 0.0;
            for (double& v : row) {
                v = std::exp(v - mx);
                sum += v;
            }
            for (double& v : row) v /= sum;
        }
        return z;
    }

    const std::vector<double>& params() const { return params_; }

private:
    LearnerKind kind_;
    std::vector<double> params_;
};

namespace detail {

inline ModelPtr fit_neural(LearnerKind kind, const Hyperparameters& hp, const Matrix& x,
                           std::span<const int> y, std::uint64_t seed, int n_classes) {
    const std::size_t n = x.rows(), d = x.cols();
    const auto c = static_cast<std::size_t>(n_classes);
    const double lr = hp_double(hp, "lr", 0.1);
    const auto epochs = hp_int(hp, "epochs", 100);
    const double l2 = hp_double(hp, "l2", 0.0);
    const std::string batch_tag = hp_str(hp, "batch", "full");
    std::size_t batch = batch_tag == "full" ? n : static_cast<std::size_t>(std::stoll(batch_tag));
    batch = std::min(std::max<std::size_t>(batch, 1), n);

    std::vector<double> params;
    Rng init_rng(hash_seed(seed, "init"));
    if (kind == LearnerKind::LogisticRegressionNN) {
        params.assign(lr_param_count(d, c), 0.0);  // convex objective, zero init
    } else {
        const auto h = static_cast<std::size_t>(hp_int(hp, "hidden", 16));
        params.assign(mlp_param_count(d, h, c), 0.0);
        const double a1 = std::sqrt(6.0 / static_cast<double>(d + h));
        for (std::size_t k = 0; k < d * h; ++k) params[k] = init_rng.uniform(-a1, a1);
        const double a2 = std::sqrt(6.0 / static_cast<double>(h + c));
        const std::size_t off_w2 = d * h + h;
        for (std::size_t k = 0; k < h * c; ++k) params[off_w2 + k] = init_rng.uniform(-a2, a2);
    }

    Rng shuffle_rng(hash_seed(seed, "epochs"));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> yv(y.begin(), y.end());

    for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            std::span<const std::size_t> idx(order.data() + start, len);
            Matrix xb = x.take_rows(idx);
            std::vector<int> yb(len);
            for (std::size_t i = 0; i < len; ++i) yb[i] = yv[idx[i]];
            auto [loss, grad] = loss_and_gradient(kind, params, xb, yb, l2, n_classes);
            if (!std::isfinite(loss))
                throw FitError(std::string(learner_kind_name(kind)) +
                               ": non-finite loss during training");
            for (std::size_t k = 0; k < params.size(); ++k) params[k] -= lr * grad[k];
        }
    }
    return std::make_shared<NeuralModel>(kind, std::move(params), n_classes, static_cast<int>(d));
}

// --- CART ---------------------------------------------------------------

struct CartNode {
    int feature = -1;  // -1 means leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> proba;
};

class CartModel : public LearnerModel {
public:
    CartModel(std::vector<CartNode> nodes, int n_classes, int d_in)
        : LearnerModel(n_classes, d_in), nodes_(std::move(nodes)) {}

    Matrix predict_proba(const Matrix& x) const override {
        check_width(x);
        Matrix p(x.rows(), static_cast<std::size_t>(n_classes()));
        for (std::size_t i = 0; i < x.rows(); ++i) {
            auto row = x.row(i);
            int node = 0;
            while (nodes_[static_cast<std::size_t>(node)].feature >= 0) {
                const auto& nd = nodes_[static_cast<std::size_t>(node)];
                node = row[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
            }
            const auto& proba = nodes_[static_cast<std::size_t>(node)].proba;
            for (std::size_t j = 0; j < proba.size(); ++j) p(i, j) = proba[j];
        }
        return p;
    }

    const std::vector<CartNode>& nodes() const { return nodes_; }

private:
    std::vector<CartNode> nodes_;
};

inline double gini(std::span<const std::size_t> counts, std::size_t total) {
    double g = 1.0;
    for (std::size_t cnt : counts) {
        const double f = static_cast<double>(cnt) / static_cast<double>(total);
        g -= f * f;
    }
    return g;
}

inline ModelPtr fit_cart(const Hyperparameters& hp, const Matrix& x, std::span<const int> y,
                         int n_classes) {
    const auto max_depth = hp_int(hp, "max_depth", 6);
    const auto c = static_cast<std::size_t>(n_classes);
    std::vector<CartNode> nodes;

    struct Frame {
        std::vector<std::size_t> idx;
        int depth;
        int slot;
    };

    auto make_leaf = [&](const std::vector<std::size_t>& idx, int slot) {
        std::vector<std::size_t> counts(c, 0);
        for (auto i : idx) ++counts[static_cast<std::size_t>(y[i])];
        CartNode leaf;
        leaf.proba.resize(c);
        for (std::size_t j = 0; j < c; ++j)
            leaf.proba[j] = static_cast<double>(counts[j]) / static_cast<double>(idx.size());
        nodes[static_cast<std::size_t>(slot)] = std::move(leaf);
    };

    std::vector<Frame> stack;
    nodes.emplace_back();
    {
        std::vector<std::size_t> all(x.rows());
        std::iota(all.begin(), all.end(), std::size_t{0});
        stack.push_back({std::move(all), 0, 0});
    }

    // Midpoint thresholds between sorted distinct values; impurity ties broken by
    // lowest feature index then lowest threshold.
    while (!stack.empty()) {
        Frame fr = std::move(stack.back());
        stack.pop_back();
        const std::size_t m = fr.idx.size();

        std::vector<std::size_t> counts(c, 0);
        for (auto i : fr.idx) ++counts[static_cast<std::size_t>(y[i])];
        const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t v) { return v > 0; }) <= 1;
        if (pure || fr.depth >= max_depth || m < 2) {
            make_leaf(fr.idx, fr.slot);
            continue;
        }

        double best_impurity = std::numeric_limits<double>::infinity();
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, int>> vals(m);
        for (std::size_t j = 0; j < x.cols(); ++j) {
            for (std::size_t i = 0; i < m; ++i) vals[i] = {x(fr.idx[i], j), y[fr.idx[i]]};
            std::sort(vals.begin(), vals.end());
            std::vector<std::size_t> left_counts(c, 0);
            std::size_t n_left = 0;
            for (std::size_t i = 0; i + 1 < m; ++i) {
                ++left_counts[static_cast<std::size_t>(vals[i].second)];
                ++n_left;
                if (vals[i].first == vals[i + 1].first) continue;
                std::vector<std::size_t> right_counts(c, 0);
                for (std::size_t k = 0; k < c; ++k) right_counts[k] = counts[k] - left_counts[k];
                const double wg =
                    (static_cast<double>(n_left) * gini(left_counts, n_left) +
                     static_cast<double>(m - n_left) * gini(right_counts, m - n_left)) /
                    static_cast<double>(m);
                if (wg < best_impurity) {
                    best_impurity = wg;
                    best_feature = static_cast<int>(j);
                    best_threshold = vals[i].first + 0.5 * (vals[i + 1].first - vals[i].first);
                }
            }
        }
        if (best_feature < 0) {  // all features constant within this node
            make_leaf(fr.idx, fr.slot);
            continue;
        }

        std::vector<std::size_t> left_idx, right_idx;
        for (auto i : fr.idx)
            (x(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left_idx : right_idx)
                .push_back(i);

        CartNode inner;
        inner.feature = best_feature;
        inner.threshold = best_threshold;
        inner.left = static_cast<int>(nodes.size());
        inner.right = static_cast<int>(nodes.size() + 1);
        nodes[static_cast<std::size_t>(fr.slot)] = inner;
        nodes.emplace_back();
        nodes.emplace_back();
        stack.push_back({std::move(right_idx), fr.depth + 1, inner.right});
        stack.push_back({std::move(left_idx), fr.depth + 1, inner.left});
    }

    return std::make_shared<CartModel>(std::move(nodes), n_classes, static_cast<int>(x.cols()));
}

// --- kNN ----------------------------------------------------------------

class KnnModel : public LearnerModel {
public:
    KnnModel(Matrix train_x, std::vector<int> train_y, std::size_t k, int n_classes)
        : LearnerModel(n_classes, static_cast<int>(train_x.cols())),
          x_(std::move(train_x)),
          y_(std::move(train_y)),
          k_(k) {}

    Matrix predict_proba(const Matrix& x) const override {
        check_width(x);
        Matrix p(x.rows(), static_cast<std::size_t>(n_classes()));
        std::vector<std::pair<double, std::size_t>> dist(x_.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            auto q = x.row(i);
            for (std::size_t t = 0; t < x_.rows(); ++t) {
                auto r = x_.row(t);
                double s = 0.0;
                for (std::size_t j = 0; j < q.size(); ++j) {
                    const double d = q[j] - r[j];
                    s += d * d;
                }
                dist[t] = {s, t};  // index in the pair breaks distance ties low-first
            }
            std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_ - 1), dist.end());
            std::sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_));
            for (std::size_t t = 0; t < k_; ++t)
                p(i, static_cast<std::size_t>(y_[dist[t].second])) += 1.0 / static_cast<double>(k_);
        }
        return p;
    }

private:
    Matrix x_;
    std::vector<int> y_;
    std::size_t k_;
};

// --- Gaussian naive Bayes -------------------------------------------------

class NbModel : public LearnerModel {
public:
    NbModel(std::vector<double> log_priors, Matrix means, Matrix vars, int n_classes, int d_in)
        : LearnerModel(n_classes, d_in),
          log_priors_(std::move(log_priors)),
          means_(std::move(means)),
          vars_(std::move(vars)) {}

    Matrix predict_proba(const Matrix& x) const override {
        check_width(x);
        const auto c = static_cast<std::size_t>(n_classes());
        Matrix p(x.rows(), c);
        std::vector<double> logp(c);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            auto row = x.row(i);
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < c; ++k) {
                double lp = log_priors_[k];
                if (std::isfinite(lp)) {
                    for (std::size_t j = 0; j < row.size(); ++j) {
                        const double var = vars_(k, j);
                        const double diff = row[j] - means_(k, j);
                        lp += -0.5 * std::log(6.283185307179586 * var) - diff * diff / (2.0 * var);
                    }
                }
                logp[k] = lp;
                mx = std::max(mx, lp);
            }
            double sum = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                logp[k] = std::isfinite(logp[k]) ? std::exp(logp[k] - mx) : 0.0;
                sum += logp[k];
            }
            for (std::size_t k = 0; k < c; ++k) p(i, k) = logp[k] / sum;
        }
        return p;
    }

private:
    std::vector<double> log_priors_;
    Matrix means_;  // c x d
    Matrix vars_;   // c x d
};

inline ModelPtr fit_nb(const Matrix& x, std::span<const int> y, int n_classes) {
    const auto c = static_cast<std::size_t>(n_classes);
    const std::size_t d = x.cols(), n = x.rows();
    std::vector<std::size_t> counts(c, 0);
    for (int v : y) ++counts[static_cast<std::size_t>(v)];

    Matrix means(c, d), vars(c, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = x.row(i);
        auto mrow = means.row(static_cast<std::size_t>(y[i]));
        for (std::size_t j = 0; j < d; ++j) mrow[j] += row[j];
    }
    for (std::size_t k = 0; k < c; ++k)
        if (counts[k] > 0)
            for (std::size_t j = 0; j < d; ++j) means(k, j) /= static_cast<double>(counts[k]);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = x.row(i);
        const auto k = static_cast<std::size_t>(y[i]);
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = row[j] - means(k, j);
            vars(k, j) += diff * diff;
        }
    }

    // Variance floor: 1e-9 times the largest whole-set feature variance.
    const auto mu = column_means(x);
    const auto full_var = column_variances(x, mu);
    double max_var = 0.0;
    for (double v : full_var) max_var = std::max(max_var, v);
    const double floor = max_var > 0.0 ? 1e-9 * max_var : 1e-9;

    std::vector<double> log_priors(c, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < c; ++k) {
        if (counts[k] == 0) continue;
        log_priors[k] = std::log(static_cast<double>(counts[k]) / static_cast<double>(n));
        for (std::size_t j = 0; j < d; ++j)
            vars(k, j) = std::max(vars(k, j) / static_cast<double>(counts[k]), floor);
    }
    return std::make_shared<NbModel>(std::move(log_priors), std::move(means), std::move(vars),
                                     n_classes, static_cast<int>(d));
}

}  // namespace detail

// Uniform fit entry point. Deterministic given (kind, hp, X, y, seed). Pass
// n_classes explicitly when the label space is wider than the classes present in
// y (cross-validation folds); 0 infers it from y.
inline FittedLearner fit(LearnerKind kind, const Hyperparameters& hp, const Matrix& x,
                         std::span<const int> y, std::uint64_t seed, int n_classes = 0) {
    if (x.rows() != y.size()) throw FitError("fit: feature row count does not match label count");
    if (x.rows() == 0 || x.cols() == 0) throw FitError("fit: empty training matrix");
    const int c = n_classes > 0 ? n_classes : detail::infer_classes(y);
    for (int v : y)
        if (v < 0 || v >= c) throw FitError("fit: label out of range");

    int first = y[0];
    const bool single_class = std::all_of(y.begin(), y.end(), [&](int v) { return v == first; });
    if (single_class)
        return {kind, std::make_shared<ConstantModel>(first, c, static_cast<int>(x.cols()))};

    ModelPtr model;
    switch (kind) {
        case LearnerKind::LogisticRegressionNN:
        case LearnerKind::MlpNN:
            model = detail::fit_neural(kind, hp, x, y, seed, c);
            break;
        case LearnerKind::DecisionTree:
            model = detail::fit_cart(hp, x, y, c);
            break;
        case LearnerKind::KNearest: {
            const auto k = static_cast<std::size_t>(std::max<std::int64_t>(1, hp_int(hp, "k", 5)));
            model = std::make_shared<detail::KnnModel>(x, std::vector<int>(y.begin(), y.end()),
                                                       std::min(k, x.rows()), c);
            break;
        }
        case LearnerKind::GaussianNB:
            model = detail::fit_nb(x, y, c);
            break;
    }
    return {kind, std::move(model)};
}

}  // namespace evopipe

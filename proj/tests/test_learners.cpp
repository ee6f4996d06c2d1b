#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "evopipe/dataset.hpp"
#include "evopipe/learners.hpp"

using namespace evopipe;

namespace {

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d, double scale = 1.0) {
    Matrix x(n, d);
    for (double& v : x.data()) v = rng.normal(0.0, scale);
    return x;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, int c) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.index(static_cast<std::size_t>(c)));
    // make sure at least two classes are present
    if (n >= 2) {
        y[0] = 0;
        y[1] = 1;
    }
    return y;
}

// Central finite differences of the training objective.
std::vector<double> fd_gradient(LearnerKind kind, std::vector<double> params, const Matrix& x,
                                std::span<const int> y, double l2, int c, double eps = 1e-5) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + eps;
        const double up = loss_and_gradient(kind, params, x, y, l2, c).first;
        params[i] = keep - eps;
        const double dn = loss_and_gradient(kind, params, x, y, l2, c).first;
        params[i] = keep;
        g[i] = (up - dn) / (2.0 * eps);
    }
    return g;
}

double max_rel_error(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

const Matrix kXor{4, 2, std::vector<double>{0, 0, 0, 1, 1, 0, 1, 1}};
const std::vector<int> kXorLabels{0, 1, 1, 0};

// Exact 2-D segment intersection on integer coordinates. XOR's class hulls are
// the two diagonals of the unit square; they cross, so no line separates them.
bool segments_intersect(int ax, int ay, int bx, int by, int cx, int cy, int dx, int dy) {
    auto orient = [](int px, int py, int qx, int qy, int rx, int ry) {
        const long v = static_cast<long>(qx - px) * (ry - py) - static_cast<long>(qy - py) * (rx - px);
        return v > 0 ? 1 : v < 0 ? -1 : 0;
    };
    const int o1 = orient(ax, ay, bx, by, cx, cy);
    const int o2 = orient(ax, ay, bx, by, dx, dy);
    const int o3 = orient(cx, cy, dx, dy, ax, ay);
    const int o4 = orient(cx, cy, dx, dy, bx, by);
    return o1 != o2 && o3 != o4;
}

}  // namespace

TEST_CASE("LR with zero epochs predicts uniformly") {
    Rng rng(1);
    Matrix x = random_matrix(rng, 6, 3);
    std::vector<int> y{0, 1, 2, 0, 1, 2};
    Hyperparameters hp{{"epochs", std::int64_t{0}}, {"lr", 0.1}};
    FittedLearner m = fit(LearnerKind::LogisticRegressionNN, hp, x, y, 5);

    const auto* nm = dynamic_cast<const NeuralModel*>(m.model.get());
    REQUIRE(nm != nullptr);
    REQUIRE(nm->params().size() == lr_param_count(3, 3));
    for (double v : nm->params()) REQUIRE(v == 0.0);

    Matrix p = m.predict_proba(x);
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j)
            REQUIRE_THAT(p(i, j), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("MLP parameter count formula") {
    Rng rng(2);
    Matrix x = random_matrix(rng, 10, 4);
    std::vector<int> y = random_labels(rng, 10, 2);
    Hyperparameters hp{{"hidden", std::int64_t{8}}, {"epochs", std::int64_t{1}}, {"lr", 0.01}};
    FittedLearner m = fit(LearnerKind::MlpNN, hp, x, y, 5);
    const auto* nm = dynamic_cast<const NeuralModel*>(m.model.get());
    REQUIRE(nm != nullptr);
    REQUIRE(nm->params().size() == 58);  // 4*8 + 8 + 8*2 + 2
    REQUIRE(mlp_param_count(4, 8, 2) == 58);
}

TEST_CASE("decision tree separates two points with one split") {
    Matrix x(2, 1, std::vector<double>{0.0, 1.0});
    std::vector<int> y{0, 1};
    FittedLearner m = fit(LearnerKind::DecisionTree, {{"max_depth", std::int64_t{1}}}, x, y, 0);
    REQUIRE(m.predict(x) == y);
}

TEST_CASE("predict breaks probability ties toward the lower class") {
    // zero-epoch LR gives exactly uniform rows
    Matrix x(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
    std::vector<int> y{0, 1, 0};
    FittedLearner m = fit(LearnerKind::LogisticRegressionNN, {{"epochs", std::int64_t{0}}}, x, y, 0);
    REQUIRE(m.predict(x) == std::vector<int>{0, 0, 0});
}

TEST_CASE("single-class training data yields a constant predictor") {
    Matrix x(4, 2, std::vector<double>{0, 0, 1, 1, 2, 2, 3, 3});
    std::vector<int> y{1, 1, 1, 1};
    for (LearnerKind kind : {LearnerKind::LogisticRegressionNN, LearnerKind::MlpNN,
                             LearnerKind::DecisionTree, LearnerKind::KNearest,
                             LearnerKind::GaussianNB}) {
        FittedLearner m = fit(kind, {}, x, y, 3, 3);
        REQUIRE(m.n_classes() == 3);
        REQUIRE(m.predict(x) == std::vector<int>{1, 1, 1, 1});
        Matrix p = m.predict_proba(x);
        REQUIRE(p(0, 1) == 1.0);
    }
}

TEST_CASE("predict agrees with row-argmax of predict_proba") {
    Rng rng(12);
    for (LearnerKind kind : {LearnerKind::LogisticRegressionNN, LearnerKind::MlpNN,
                             LearnerKind::DecisionTree, LearnerKind::KNearest,
                             LearnerKind::GaussianNB}) {
        Matrix x = random_matrix(rng, 14, 3);
        std::vector<int> y = random_labels(rng, 14, 3);
        Hyperparameters hp;
        if (kind == LearnerKind::LogisticRegressionNN || kind == LearnerKind::MlpNN)
            hp = {{"epochs", std::int64_t{20}}, {"lr", 0.1}, {"hidden", std::int64_t{4}}};
        FittedLearner m = fit(kind, hp, x, y, 9);
        Matrix q = random_matrix(rng, 8, 3);
        Matrix p = m.predict_proba(q);
        std::vector<int> labels = m.predict(q);
        for (std::size_t i = 0; i < q.rows(); ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < p.cols(); ++j)
                if (p(i, j) > p(i, best)) best = j;
            REQUIRE(labels[i] == static_cast<int>(best));
        }
    }
}

TEST_CASE("kNN probabilities are vote fractions") {
    Matrix x(4, 2, std::vector<double>{0, 0, 0.1, 0, 0.2, 0, 5, 5});
    std::vector<int> y{1, 1, 0, 0};
    FittedLearner m = fit(LearnerKind::KNearest, {{"k", std::int64_t{3}}}, x, y, 0);
    Matrix p = m.predict_proba(Matrix(1, 2, std::vector<double>{0, 0}));
    REQUIRE_THAT(p(0, 0), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
    REQUIRE_THAT(p(0, 1), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
}

TEST_CASE("kNN distance ties break toward the lower training-row index") {
    // two training rows at identical distance from the query, different labels
    Matrix x(2, 1, std::vector<double>{-1.0, 1.0});
    std::vector<int> y{1, 0};
    FittedLearner m = fit(LearnerKind::KNearest, {{"k", std::int64_t{1}}}, x, y, 0);
    Matrix p = m.predict_proba(Matrix(1, 1, std::vector<double>{0.0}));
    REQUIRE(p(0, 1) == 1.0);  // row 0 wins the tie
}

TEST_CASE("GaussianNB is symmetric on mirrored data") {
    Matrix x(4, 1, std::vector<double>{-2, -1, 1, 2});
    std::vector<int> y{0, 0, 1, 1};
    FittedLearner m = fit(LearnerKind::GaussianNB, {}, x, y, 0);
    Matrix p = m.predict_proba(Matrix(1, 1, std::vector<double>{0.0}));
    REQUIRE_THAT(p(0, 0), Catch::Matchers::WithinAbs(0.5, 1e-9));
    REQUIRE_THAT(p(0, 1), Catch::Matchers::WithinAbs(0.5, 1e-9));
}

TEST_CASE("probability rows are normalized for every kind") {
    Rng rng(31);
    for (LearnerKind kind : {LearnerKind::LogisticRegressionNN, LearnerKind::MlpNN,
                             LearnerKind::DecisionTree, LearnerKind::KNearest,
                             LearnerKind::GaussianNB}) {
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t n = 6 + rng.index(10);
            const int c = 2 + static_cast<int>(rng.index(3));
            Matrix x = random_matrix(rng, n, 4);
            std::vector<int> y = random_labels(rng, n, c);
            Hyperparameters hp;
            if (kind == LearnerKind::LogisticRegressionNN || kind == LearnerKind::MlpNN)
                hp = {{"epochs", std::int64_t{10}}, {"lr", 0.1}, {"hidden", std::int64_t{4}}};
            FittedLearner m = fit(kind, hp, x, y, 100 + static_cast<std::uint64_t>(trial), c);
            Matrix p = m.predict_proba(random_matrix(rng, 7, 4));
            for (std::size_t i = 0; i < p.rows(); ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < p.cols(); ++j) {
                    REQUIRE(p(i, j) >= 0.0);
                    sum += p(i, j);
                }
                REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
            }
        }
    }
}

TEST_CASE("zero-parameter LR loss on balanced binary labels is ln 2") {
    Matrix x(4, 3, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    std::vector<int> y{0, 1, 0, 1};
    std::vector<double> params(lr_param_count(3, 2), 0.0);
    auto [loss, grad] = loss_and_gradient(LearnerKind::LogisticRegressionNN, params, x, y, 0.0, 2);
    REQUIRE_THAT(loss, Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
    REQUIRE(grad.size() == params.size());
}

TEST_CASE("an l2 penalty strictly increases the loss of nonzero weights") {
    Rng rng(8);
    Matrix x = random_matrix(rng, 6, 3);
    std::vector<int> y = random_labels(rng, 6, 2);
    std::vector<double> params(lr_param_count(3, 2));
    for (double& v : params) v = rng.normal(0.0, 1.0);
    const double plain = loss_and_gradient(LearnerKind::LogisticRegressionNN, params, x, y, 0.0, 2).first;
    const double penalized =
        loss_and_gradient(LearnerKind::LogisticRegressionNN, params, x, y, 0.01, 2).first;
    REQUIRE(penalized > plain);
}

TEST_CASE("analytic gradients match central finite differences") {
    for (LearnerKind kind : {LearnerKind::LogisticRegressionNN, LearnerKind::MlpNN}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(hash_seed(900, "grad", seed, kind == LearnerKind::MlpNN));
            const std::size_t n = 4 + rng.index(8);
            const std::size_t d = 2 + rng.index(4);
            const int c = 2 + static_cast<int>(rng.index(3));
            const std::size_t h = 2 + rng.index(5);
            const double l2 = seed % 2 == 0 ? 0.0 : 0.01;

            Matrix x = random_matrix(rng, n, d);
            std::vector<int> y = random_labels(rng, n, c);
            const std::size_t n_params = kind == LearnerKind::LogisticRegressionNN
                                             ? lr_param_count(d, static_cast<std::size_t>(c))
                                             : mlp_param_count(d, h, static_cast<std::size_t>(c));
            std::vector<double> params(n_params);
            for (double& v : params) v = rng.normal(0.0, 0.5);

            auto [loss, analytic] = loss_and_gradient(kind, params, x, y, l2, c);
            REQUIRE(std::isfinite(loss));
            auto numeric = fd_gradient(kind, params, x, y, l2, c);
            REQUIRE(max_rel_error(analytic, numeric) < 1e-4);
        }
    }
}

TEST_CASE("loss_and_gradient rejects a wrong-length parameter vector") {
    Matrix x(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
    std::vector<int> y{0, 1, 0};
    std::vector<double> params(5, 0.0);  // LR needs 2*2+2 = 6
    REQUIRE_THROWS_AS(loss_and_gradient(LearnerKind::LogisticRegressionNN, params, x, y, 0.0, 2),
                      FitError);
}

TEST_CASE("fit is deterministic") {
    Rng rng(77);
    Matrix x = random_matrix(rng, 20, 4);
    std::vector<int> y = random_labels(rng, 20, 2);
    Hyperparameters hp{{"epochs", std::int64_t{30}}, {"lr", 0.1},
                       {"batch", std::string("16")}, {"hidden", std::int64_t{8}}};
    FittedLearner a = fit(LearnerKind::MlpNN, hp, x, y, 42);
    FittedLearner b = fit(LearnerKind::MlpNN, hp, x, y, 42);
    const auto* na = dynamic_cast<const NeuralModel*>(a.model.get());
    const auto* nb = dynamic_cast<const NeuralModel*>(b.model.get());
    REQUIRE(na->params() == nb->params());
    Matrix q = random_matrix(rng, 9, 4);
    REQUIRE(a.predict(q) == b.predict(q));
}

TEST_CASE("LR training reduces the loss on separable data") {
    // two clusters straddling the y axis
    Rng rng(5);
    Matrix x(20, 2);
    std::vector<int> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
        const int cls = static_cast<int>(i % 2);
        x(i, 0) = (cls == 0 ? -1.0 : 1.0) + rng.normal(0.0, 0.1);
        x(i, 1) = rng.normal(0.0, 0.5);
        y[i] = cls;
    }
    std::vector<double> zero(lr_param_count(2, 2), 0.0);
    const double initial = loss_and_gradient(LearnerKind::LogisticRegressionNN, zero, x, y, 0.0, 2).first;

    Hyperparameters hp{{"epochs", std::int64_t{200}}, {"lr", 0.1}, {"batch", std::string("full")}};
    FittedLearner m = fit(LearnerKind::LogisticRegressionNN, hp, x, y, 1);
    const auto* nm = dynamic_cast<const NeuralModel*>(m.model.get());
    const double final_loss =
        loss_and_gradient(LearnerKind::LogisticRegressionNN, nm->params(), x, y, 0.0, 2).first;
    REQUIRE(final_loss < initial);
    REQUIRE(accuracy(m.predict(x), y) == 1.0);
}

TEST_CASE("XOR: the MLP fits it, LR cannot") {
    // exact oracle: the class hulls (the square's diagonals) intersect
    REQUIRE(segments_intersect(0, 0, 1, 1, 0, 1, 1, 0));

    Hyperparameters mlp_hp{{"hidden", std::int64_t{8}}, {"epochs", std::int64_t{2000}},
                           {"lr", 0.1}, {"batch", std::string("full")}, {"l2", 0.0}};
    FittedLearner mlp = fit(LearnerKind::MlpNN, mlp_hp, kXor, kXorLabels, 3);
    REQUIRE(accuracy(mlp.predict(kXor), kXorLabels) == 1.0);

    Hyperparameters lr_hp{{"epochs", std::int64_t{2000}}, {"lr", 0.1},
                          {"batch", std::string("full")}, {"l2", 0.0}};
    FittedLearner lr = fit(LearnerKind::LogisticRegressionNN, lr_hp, kXor, kXorLabels, 3);
    REQUIRE(accuracy(lr.predict(kXor), kXorLabels) <= 0.75);
}

TEST_CASE("fit error contracts") {
    Matrix x(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
    REQUIRE_THROWS_AS(fit(LearnerKind::GaussianNB, {}, x, std::vector<int>{0, 1}, 0), FitError);
    REQUIRE_THROWS_AS(fit(LearnerKind::GaussianNB, {}, x, std::vector<int>{0, 1, 9}, 0, 2), FitError);

    FittedLearner m = fit(LearnerKind::GaussianNB, {}, x, std::vector<int>{0, 1, 0}, 0);
    REQUIRE_THROWS_AS(m.predict(Matrix(2, 5)), FitError);  // width mismatch
}

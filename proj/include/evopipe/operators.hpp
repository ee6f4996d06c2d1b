#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evopipe/errors.hpp"
#include "evopipe/learners.hpp"
#include "evopipe/matrix.hpp"
#include "evopipe/rng.hpp"

namespace evopipe {

enum class OperatorKindClass { Selector, Transformer, Classifier, Combiner, StackingWrapper, Identity };

inline const char* kind_class_name(OperatorKindClass k) {
    switch (k) {
        case OperatorKindClass::Selector: return "Selector";
        case OperatorKindClass::Transformer: return "Transformer";
        case OperatorKindClass::Classifier: return "Classifier";
        case OperatorKindClass::Combiner: return "Combiner";
        case OperatorKindClass::StackingWrapper: return "StackingWrapper";
        case OperatorKindClass::Identity: return "Identity";
    }
    return "?";
}

// An operator kind plus its hyperparameter search space. All spaces are finite
// choice sets; that keeps GP sampling trivially uniform and runs reproducible.
struct OperatorSpec {
    std::string name;
    OperatorKindClass kind_class;
    std::map<std::string, std::vector<HpValue>> space;
};

struct OperatorInstance {
    std::string spec_name;
    Hyperparameters hp;

    bool operator==(const OperatorInstance&) const = default;
};

// Classifier implementations are pluggable so user-defined estimators slot in
// beside the built-in ones.
using LearnerFitHook = std::function<ModelPtr(const Hyperparameters& hp, const Matrix& x,
                                              std::span<const int> y, std::uint64_t seed,
                                              int n_classes)>;

enum class EstimatorFilter { All, LrOnly, MlpOnly, NbOnly, TreeOnly, KnnOnly };

inline const char* estimator_filter_name(EstimatorFilter f) {
    switch (f) {
        case EstimatorFilter::All: return "all";
        case EstimatorFilter::LrOnly: return "lr";
        case EstimatorFilter::MlpOnly: return "mlp";
        case EstimatorFilter::NbOnly: return "nb";
        case EstimatorFilter::TreeOnly: return "tree";
        case EstimatorFilter::KnnOnly: return "knn";
    }
    return "?";
}

class Registry {
public:
    const std::vector<OperatorSpec>& specs() const { return specs_; }

    const OperatorSpec* find(std::string_view name) const {
        for (const auto& s : specs_)
            if (s.name == name) return &s;
        return nullptr;
    }

    const OperatorSpec& require(std::string_view name) const {
        const OperatorSpec* s = find(name);
        if (!s) throw ConfigError("unknown operator '" + std::string(name) + "'");
        return *s;
    }

    std::vector<const OperatorSpec*> of_class(OperatorKindClass k) const {
        std::vector<const OperatorSpec*> out;
        for (const auto& s : specs_)
            if (s.kind_class == k) out.push_back(&s);
        return out;
    }

    std::vector<const OperatorSpec*> classifiers() const {
        return of_class(OperatorKindClass::Classifier);
    }

    ModelPtr fit_classifier(const std::string& name, const Hyperparameters& hp, const Matrix& x,
                            std::span<const int> y, std::uint64_t seed, int n_classes) const {
        auto it = hooks_.find(name);
        if (it == hooks_.end()) throw ConfigError("no classifier implementation for '" + name + "'");
        return it->second(hp, x, y, seed, n_classes);
    }

    void add(OperatorSpec spec, LearnerFitHook hook = nullptr) {
        if (find(spec.name)) throw ConfigError("duplicate operator name '" + spec.name + "'");
        if (spec.kind_class == OperatorKindClass::Classifier) {
            if (!hook) throw ConfigError("classifier '" + spec.name + "' needs a fit hook");
            hooks_[spec.name] = std::move(hook);
        }
        specs_.push_back(std::move(spec));
    }

private:
    std::vector<OperatorSpec> specs_;
    std::map<std::string, LearnerFitHook> hooks_;
};

namespace detail {

inline std::vector<HpValue> dchoices(std::initializer_list<double> vs) {
    std::vector<HpValue> out;
    for (double v : vs) out.emplace_back(v);
    return out;
}
inline std::vector<HpValue> ichoices(std::initializer_list<std::int64_t> vs) {
    std::vector<HpValue> out;
    for (std::int64_t v : vs) out.emplace_back(v);
    return out;
}
inline std::vector<HpValue> schoices(std::initializer_list<const char*> vs) {
    std::vector<HpValue> out;
    for (const char* v : vs) out.emplace_back(std::string(v));
    return out;
}

inline LearnerFitHook builtin_hook(LearnerKind kind) {
    return [kind](const Hyperparameters& hp, const Matrix& x, std::span<const int> y,
                  std::uint64_t seed, int n_classes) -> ModelPtr {
        return fit(kind, hp, x, y, seed, n_classes).model;
    };
}

inline std::map<std::string, std::vector<HpValue>> neural_space(bool mlp) {
    std::map<std::string, std::vector<HpValue>> space{
        {"lr", dchoices({0.001, 0.01, 0.1})},
        {"epochs", ichoices({50, 100, 200})},
        {"batch", schoices({"16", "64", "full"})},
        {"l2", dchoices({0.0, 1e-4, 1e-2})},
    };
    if (mlp) space["hidden"] = ichoices({8, 16, 32, 64, 128});
    return space;
}

}  // namespace detail

// The configuration-dictionary mechanism: which operators the GP may draw from.
// LrOnly / MlpOnly restrict the neural classifiers (and require nn_enabled);
// NbOnly / TreeOnly / KnnOnly restrict to a single shallow classifier so the
// single-estimator experiment families are expressible.
inline Registry default_registry(bool nn_enabled, EstimatorFilter filter = EstimatorFilter::All) {
    const bool wants_neural = filter == EstimatorFilter::LrOnly || filter == EstimatorFilter::MlpOnly;
    if (wants_neural && !nn_enabled)
        throw ConfigError("estimator filter requests a neural classifier but nn_enabled is false");

    auto keep_classifier = [&](std::string_view name) {
        switch (filter) {
            case EstimatorFilter::All: return true;
            case EstimatorFilter::LrOnly: return name == "LogisticRegressionNN";
            case EstimatorFilter::MlpOnly: return name == "MlpNN";
            case EstimatorFilter::NbOnly: return name == "GaussianNB";
            case EstimatorFilter::TreeOnly: return name == "DecisionTree";
            case EstimatorFilter::KnnOnly: return name == "KNearest";
        }
        return true;
    };

    Registry reg;
    reg.add({"VarianceThreshold", OperatorKindClass::Selector,
             {{"threshold", detail::dchoices({0.0, 1e-4, 1e-2})}}});
    reg.add({"SelectKBest", OperatorKindClass::Selector,
             {{"k_fraction", detail::dchoices({0.25, 0.5, 0.75, 1.0})}}});
    reg.add({"MinMaxScaler", OperatorKindClass::Transformer, {}});
    reg.add({"StandardScaler", OperatorKindClass::Transformer, {}});
    reg.add({"PCA", OperatorKindClass::Transformer, {{"frac", detail::dchoices({0.25, 0.5, 0.75})}}});
    reg.add({"Identity", OperatorKindClass::Identity, {}});
    reg.add({"Union", OperatorKindClass::Combiner, {}});
    reg.add({"Stack", OperatorKindClass::StackingWrapper, {}});

    if (keep_classifier("DecisionTree"))
        reg.add({"DecisionTree", OperatorKindClass::Classifier,
                 {{"max_depth", detail::ichoices({2, 4, 6, 8, 12})}}},
                detail::builtin_hook(LearnerKind::DecisionTree));
    if (keep_classifier("KNearest"))
        reg.add({"KNearest", OperatorKindClass::Classifier, {{"k", detail::ichoices({1, 3, 5, 7, 11})}}},
                detail::builtin_hook(LearnerKind::KNearest));
    if (keep_classifier("GaussianNB"))
        reg.add({"GaussianNB", OperatorKindClass::Classifier, {}},
                detail::builtin_hook(LearnerKind::GaussianNB));
    if (nn_enabled) {
        if (keep_classifier("LogisticRegressionNN"))
            reg.add({"LogisticRegressionNN", OperatorKindClass::Classifier, detail::neural_space(false)},
                    detail::builtin_hook(LearnerKind::LogisticRegressionNN));
        if (keep_classifier("MlpNN"))
            reg.add({"MlpNN", OperatorKindClass::Classifier, detail::neural_space(true)},
                    detail::builtin_hook(LearnerKind::MlpNN));
    }

    if (reg.classifiers().empty()) throw ConfigError("registry has no classifier");
    return reg;
}

inline bool hp_valid(const OperatorSpec& spec, const Hyperparameters& hp) {
    if (hp.size() != spec.space.size()) return false;
    for (const auto& [key, choices] : spec.space) {
        auto it = hp.find(key);
        if (it == hp.end()) return false;
        if (std::find(choices.begin(), choices.end(), it->second) == choices.end()) return false;
    }
    return true;
}

// Every parameter drawn uniformly from its declared choice set.
inline OperatorInstance sample_instance(const OperatorSpec& spec, Rng& rng) {
    OperatorInstance inst;
    inst.spec_name = spec.name;
    for (const auto& [key, choices] : spec.space) inst.hp[key] = choices[rng.index(choices.size())];
    return inst;
}

inline OperatorInstance sample_instance(const OperatorSpec& spec, std::uint64_t rng_seed) {
    Rng rng(hash_seed(rng_seed, "sample", spec.name));
    return sample_instance(spec, rng);
}

// --- Fitted feature operators ------------------------------------------------

struct FittedSelector {
    std::vector<std::size_t> kept;  // ascending column indices
};
struct FittedMinMax {
    std::vector<double> lo, hi;
};
struct FittedStandard {
    std::vector<double> mean, sigma;  // sigma floored to 1 where the column was constant
};
struct FittedPca {
    std::vector<double> mean;
    Matrix components;  // d x m, columns are principal directions
};
struct FittedIdentity {};
struct FittedStack {
    ModelPtr model;
};

// Learned state of one pipeline node below the root.
struct FittedOperator {
    std::string spec_name;
    std::size_t d_in = 0;
    std::variant<FittedIdentity, FittedSelector, FittedMinMax, FittedStandard, FittedPca, FittedStack> state;
};

namespace detail {

// One-way ANOVA F-statistic of a column against the class labels.
inline double anova_f(const Matrix& x, std::size_t col, std::span<const int> y, int n_classes) {
    const std::size_t n = x.rows();
    std::vector<double> sum(static_cast<std::size_t>(n_classes), 0.0);
    std::vector<std::size_t> cnt(static_cast<std::size_t>(n_classes), 0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x(i, col);
        sum[static_cast<std::size_t>(y[i])] += v;
        ++cnt[static_cast<std::size_t>(y[i])];
        total += v;
    }
    const double grand = total / static_cast<double>(n);
    std::size_t g = 0;
    double ssb = 0.0;
    for (std::size_t k = 0; k < cnt.size(); ++k) {
        if (cnt[k] == 0) continue;
        ++g;
        const double mu = sum[k] / static_cast<double>(cnt[k]);
        ssb += static_cast<double>(cnt[k]) * (mu - grand) * (mu - grand);
    }
    if (g < 2) return 0.0;
    double ssw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(y[i]);
        const double mu = sum[k] / static_cast<double>(cnt[k]);
        const double diff = x(i, col) - mu;
        ssw += diff * diff;
    }
    if (ssw <= 0.0 || n <= g)
        return ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return (ssb / static_cast<double>(g - 1)) / (ssw / static_cast<double>(n - g));
}

inline FittedOperator fit_pca(const OperatorInstance& inst, const Matrix& x) {
    const std::size_t d = x.cols(), n = x.rows();
    const double frac = hp_double(inst.hp, "frac", 0.5);
    const std::size_t m =
        std::min(d, std::max<std::size_t>(1, static_cast<std::size_t>(
                                                 std::ceil(frac * static_cast<double>(d)))));
    auto mean = column_means(x);
    Matrix cov(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = x.row(i);
        for (std::size_t a = 0; a < d; ++a) {
            const double da = row[a] - mean[a];
            for (std::size_t b = a; b < d; ++b) cov(a, b) += da * (row[b] - mean[b]);
        }
    }
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            cov(a, b) /= denom;
            cov(b, a) = cov(a, b);
        }

    auto [eig, vecs] = symmetric_eigen(cov);
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (eig[a] != eig[b]) return eig[a] > eig[b];
        return a < b;
    });

    Matrix comps(d, m);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t src = order[j];
        // sign convention: the largest-magnitude loading is positive
        std::size_t arg = 0;
        for (std::size_t a = 1; a < d; ++a)
            if (std::abs(vecs(a, src)) > std::abs(vecs(arg, src))) arg = a;
        const double flip = vecs(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t a = 0; a < d; ++a) comps(a, j) = flip * vecs(a, src);
    }
    return {inst.spec_name, d, FittedPca{std::move(mean), std::move(comps)}};
}

}  // namespace detail

// Fits one operator instance on training data. Classifier instances fit with
// stacking semantics (their transform appends probabilities and the predicted
// class); Union has no learned state and is handled by the pipeline executor.
inline FittedOperator fit_operator(const Registry& registry, const OperatorInstance& inst,
                                   const Matrix& x, std::span<const int> y, std::uint64_t seed,
                                   int n_classes = 0) {
    const OperatorSpec& spec = registry.require(inst.spec_name);
    if (!hp_valid(spec, inst.hp))
        throw ConfigError("hyperparameters for '" + inst.spec_name + "' are outside the declared space");
    if (x.rows() == 0 || x.cols() == 0) throw FitError("fit_operator: empty input matrix");
    const std::size_t d = x.cols();

    switch (spec.kind_class) {
        case OperatorKindClass::Identity:
            return {inst.spec_name, d, FittedIdentity{}};

        case OperatorKindClass::Selector: {
            FittedSelector sel;
            if (spec.name == "VarianceThreshold") {
                const double thr = hp_double(inst.hp, "threshold", 0.0);
                auto mu = column_means(x);
                auto var = column_variances(x, mu);
                for (std::size_t j = 0; j < d; ++j)
                    if (var[j] > thr) sel.kept.push_back(j);
                if (sel.kept.empty())
                    throw FitError("VarianceThreshold dropped every column");
            } else {  // SelectKBest
                const double kf = hp_double(inst.hp, "k_fraction", 1.0);
                const std::size_t m = std::min(
                    d, std::max<std::size_t>(1, static_cast<std::size_t>(
                                                    std::ceil(kf * static_cast<double>(d)))));
                std::vector<std::pair<double, std::size_t>> scored(d);
                for (std::size_t j = 0; j < d; ++j)
                    scored[j] = {detail::anova_f(x, j, y, detail::infer_classes(y)), j};
                std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                    if (a.first != b.first) return a.first > b.first;
                    return a.second < b.second;
                });
                sel.kept.resize(m);
                for (std::size_t j = 0; j < m; ++j) sel.kept[j] = scored[j].second;
                std::sort(sel.kept.begin(), sel.kept.end());
            }
            return {inst.spec_name, d, std::move(sel)};
        }

        case OperatorKindClass::Transformer: {
            if (spec.name == "MinMaxScaler") {
                FittedMinMax mm;
                mm.lo.assign(d, std::numeric_limits<double>::infinity());
                mm.hi.assign(d, -std::numeric_limits<double>::infinity());
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    auto row = x.row(i);
                    for (std::size_t j = 0; j < d; ++j) {
                        mm.lo[j] = std::min(mm.lo[j], row[j]);
                        mm.hi[j] = std::max(mm.hi[j], row[j]);
                    }
                }
                return {inst.spec_name, d, std::move(mm)};
            }
            if (spec.name == "StandardScaler") {
                FittedStandard st;
                st.mean = column_means(x);
                auto var = column_variances(x, st.mean);
                st.sigma.resize(d);
                for (std::size_t j = 0; j < d; ++j) {
                    const double s = std::sqrt(var[j]);
                    st.sigma[j] = s > 0.0 ? s : 1.0;  // sigma floor for constant columns
                }
                return {inst.spec_name, d, std::move(st)};
            }
            return detail::fit_pca(inst, x);  // PCA
        }

        case OperatorKindClass::Classifier: {
            const int c = n_classes > 0 ? n_classes : detail::infer_classes(y);
            ModelPtr model = registry.fit_classifier(spec.name, inst.hp, x, y, seed, c);
            return {inst.spec_name, d, FittedStack{std::move(model)}};
        }

        case OperatorKindClass::Combiner:
        case OperatorKindClass::StackingWrapper:
            throw ConfigError("'" + spec.name + "' is structural and is fit by the pipeline executor");
    }
    throw ConfigError("unreachable operator class");
}

inline Matrix transform(const FittedOperator& f, const Matrix& x) {
    if (x.cols() != f.d_in)
        throw FitError("transform: input width " + std::to_string(x.cols()) +
                       " does not match fit-time width " + std::to_string(f.d_in));
    return std::visit(
        [&](const auto& state) -> Matrix {
            using T = std::decay_t<decltype(state)>;
            if constexpr (std::is_same_v<T, FittedIdentity>) {
                return x;
            } else if constexpr (std::is_same_v<T, FittedSelector>) {
                return x.take_cols(state.kept);
            } else if constexpr (std::is_same_v<T, FittedMinMax>) {
                Matrix out = x;
                for (std::size_t i = 0; i < out.rows(); ++i) {
                    auto row = out.row(i);
                    for (std::size_t j = 0; j < row.size(); ++j) {
                        const double range = state.hi[j] - state.lo[j];
                        row[j] = range > 0.0 ? (row[j] - state.lo[j]) / range : 0.0;
                    }
                }
                return out;
            } else if constexpr (std::is_same_v<T, FittedStandard>) {
                Matrix out = x;
                for (std::size_t i = 0; i < out.rows(); ++i) {
                    auto row = out.row(i);
                    for (std::size_t j = 0; j < row.size(); ++j)
                        row[j] = (row[j] - state.mean[j]) / state.sigma[j];
                }
                return out;
            } else if constexpr (std::is_same_v<T, FittedPca>) {
                Matrix centered = x;
                for (std::size_t i = 0; i < centered.rows(); ++i) {
                    auto row = centered.row(i);
                    for (std::size_t j = 0; j < row.size(); ++j) row[j] -= state.mean[j];
                }
                return matmul(centered, state.components);
            } else {  // FittedStack: original features + probabilities + predicted class
                static_assert(std::is_same_v<T, FittedStack>);
                Matrix proba = state.model->predict_proba(x);
                Matrix cls(x.rows(), 1);
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    auto row = proba.row(i);
                    std::size_t best = 0;
                    for (std::size_t j = 1; j < row.size(); ++j)
                        if (row[j] > row[best]) best = j;
                    cls(i, 0) = static_cast<double>(best);
                }
                const Matrix blocks[] = {x, std::move(proba), std::move(cls)};
                return hconcat(blocks);
            }
        },
        f.state);
}

// --- Template strings ---------------------------------------------------------

struct TemplateSlot {
    std::string token;
    bool is_class = false;             // token named a kind class rather than a concrete spec
    OperatorKindClass kind_class;      // constraint class
};

// Ordered slot list for a linear pipeline; slot 0 receives the data source and
// the last slot is the root classifier.
struct TemplateConstraint {
    std::vector<TemplateSlot> slots;
    bool operator==(const TemplateConstraint&) const = default;
};

inline TemplateConstraint parse_template(const std::string& templ, const Registry& registry) {
    if (templ.empty()) throw ConfigError("empty template");
    TemplateConstraint tc;
    std::size_t start = 0;
    while (start <= templ.size()) {
        const std::size_t pos = templ.find('-', start);
        const std::string token =
            templ.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        if (token.empty()) throw ConfigError("template has an empty token");

        TemplateSlot slot;
        slot.token = token;
        if (token == "Selector" || token == "Transformer" || token == "Classifier") {
            slot.is_class = true;
            slot.kind_class = token == "Selector"    ? OperatorKindClass::Selector
                              : token == "Transformer" ? OperatorKindClass::Transformer
                                                       : OperatorKindClass::Classifier;
        } else {
            const OperatorSpec* spec = registry.find(token);
            if (!spec) throw ConfigError("unknown template token '" + token + "'");
            if (spec->kind_class == OperatorKindClass::Combiner)
                throw ConfigError("'Union' cannot appear in a linear template");
            slot.kind_class = spec->kind_class;
        }
        tc.slots.push_back(std::move(slot));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }

    if (tc.slots.back().kind_class != OperatorKindClass::Classifier)
        throw ConfigError("template must end with a classifier, got '" + tc.slots.back().token + "'");
    return tc;
}

inline std::string render_template(const TemplateConstraint& tc) {
    std::string out;
    for (std::size_t i = 0; i < tc.slots.size(); ++i) {
        if (i) out += '-';
        out += tc.slots[i].token;
    }
    return out;
}

// Concrete specs a template slot admits, in registry order.
inline std::vector<const OperatorSpec*> slot_candidates(const TemplateConstraint& tc,
                                                        std::size_t slot_idx,
                                                        const Registry& registry) {
    const TemplateSlot& slot = tc.slots[slot_idx];
    std::vector<const OperatorSpec*> out;
    if (slot.is_class) {
        out = registry.of_class(slot.kind_class);
    } else if (slot.kind_class == OperatorKindClass::StackingWrapper) {
        out = registry.classifiers();  // a 'Stack' token stacks any classifier
    } else {
        out.push_back(&registry.require(slot.token));
    }
    if (out.empty())
        throw ConfigError("template slot '" + slot.token + "' has no candidate in the registry");
    return out;
}

// Registers a user-defined classifier. The implementation is probe-fit on a tiny
// synthetic dataset at registration time so contract violations surface here and
// not in the middle of an evolution run.
inline Registry register_custom_learner(const Registry& registry, OperatorSpec spec,
                                        LearnerFitHook fit_hook) {
    if (registry.find(spec.name))
        throw ConfigError("duplicate operator name '" + spec.name + "'");
    if (spec.kind_class != OperatorKindClass::Classifier)
        throw ConfigError("custom learners must have kind class Classifier");
    if (!fit_hook) throw ConfigError("custom learner '" + spec.name + "' has no fit hook");

    // probe: 4-row, 2-feature, 2-class dataset
    Matrix px(4, 2, std::vector<double>{0, 0, 1, 0, 0, 1, 1, 1});
    const std::vector<int> py{0, 1, 0, 1};
    Hyperparameters probe_hp;
    {
        OperatorInstance sampled = sample_instance(spec, 0);
        probe_hp = sampled.hp;
    }
    try {
        ModelPtr model = fit_hook(probe_hp, px, py, 0, 2);
        if (!model) throw FitError("fit hook returned null");
        Matrix proba = model->predict_proba(px);
        if (proba.rows() != 4 || proba.cols() != 2)
            throw FitError("predict_proba returned wrong shape");
        for (std::size_t i = 0; i < proba.rows(); ++i) {
            double sum = 0.0;
            for (double v : proba.row(i)) {
                if (v < 0.0) throw FitError("predict_proba returned a negative entry");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9) throw FitError("predict_proba rows do not sum to 1");
        }
        if (model->predict(px).size() != 4) throw FitError("predict returned wrong length");
    } catch (const std::exception& e) {
        throw ConfigError("custom learner '" + spec.name + "' failed the registration probe: " +
                          e.what());
    }

    Registry out = registry;
    out.add(std::move(spec), std::move(fit_hook));
    return out;
}

}  // namespace evopipe

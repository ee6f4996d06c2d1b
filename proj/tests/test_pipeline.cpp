#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <set>

#include "evopipe/evolve.hpp"
#include "evopipe/pipeline.hpp"

using namespace evopipe;

namespace {

const Registry kFullRegistry = default_registry(true, EstimatorFilter::All);

OperatorInstance inst_of(const char* name, std::uint64_t seed = 0) {
    return sample_instance(kFullRegistry.require(name), seed);
}

PipelineTree minimal_tree(const char* classifier = "GaussianNB", std::uint64_t seed = 0) {
    return PipelineTree{
        PipelineNode::unary(NodeKind::ClassifierRoot, inst_of(classifier, seed), PipelineNode::source())};
}

// Registers a classifier that passes the registration probe and then fails every
// subsequent fit; used to drive the node-failure paths.
Registry registry_with_failing_classifier() {
    auto calls = std::make_shared<std::atomic<int>>(0);
    auto hook = [calls](const Hyperparameters&, const Matrix& x, std::span<const int>,
                        std::uint64_t, int c) -> ModelPtr {
        if (calls->fetch_add(1) == 0)
            return std::make_shared<ConstantModel>(0, c, static_cast<int>(x.cols()));
        throw FitError("deliberate failure");
    };
    return register_custom_learner(kFullRegistry, {"FailsLater", OperatorKindClass::Classifier, {}},
                                   hook);
}

GpConfig free_form_config(std::uint64_t seed) {
    GpConfig cfg;
    cfg.registry = kFullRegistry;
    cfg.population_size = 2;
    cfg.seed = seed;
    return cfg;
}

const Hyperparameters kLrHp{{"batch", std::string("full")}, {"epochs", std::int64_t{50}},
                            {"l2", 0.0}, {"lr", 0.1}};

}  // namespace

TEST_CASE("validate accepts the minimal pipeline") {
    REQUIRE_FALSE(validate(minimal_tree(), kFullRegistry).has_value());
}

TEST_CASE("validate reports structural violations with node paths") {
    SECTION("union with one branch") {
        std::vector<PipelineNode> branch;
        branch.push_back(PipelineNode::source());
        PipelineNode u;
        u.kind = NodeKind::Union;
        u.inst.spec_name = "Union";
        u.children = std::move(branch);
        PipelineTree t{PipelineNode::unary(NodeKind::ClassifierRoot, inst_of("GaussianNB"),
                                           std::move(u))};
        auto v = validate(t, kFullRegistry);
        REQUIRE(v.has_value());
        REQUIRE(v->path == "0");
        REQUIRE(v->message.find("Union") != std::string::npos);
    }
    SECTION("node count bound") {
        // chain of 9 identity nodes + root + source = 11 nodes
        PipelineNode node = PipelineNode::source();
        for (int i = 0; i < 9; ++i)
            node = PipelineNode::unary(NodeKind::Identity, {"Identity", {}}, std::move(node));
        PipelineTree t{
            PipelineNode::unary(NodeKind::ClassifierRoot, inst_of("GaussianNB"), std::move(node))};
        REQUIRE(node_count(t) == 11);
        auto v = validate(t, kFullRegistry);
        REQUIRE(v.has_value());
        REQUIRE(v->message.find("node count") != std::string::npos);
    }
    SECTION("root must be a classifier") {
        PipelineTree t{PipelineNode::unary(NodeKind::Transformer, inst_of("StandardScaler"),
                                           PipelineNode::source())};
        REQUIRE(validate(t, kFullRegistry)->message.find("root") != std::string::npos);
    }
    SECTION("classifier root below root") {
        PipelineTree t{PipelineNode::unary(
            NodeKind::ClassifierRoot, inst_of("GaussianNB"),
            PipelineNode::unary(NodeKind::ClassifierRoot, inst_of("GaussianNB"),
                                PipelineNode::source()))};
        auto v = validate(t, kFullRegistry);
        REQUIRE(v.has_value());
        REQUIRE(v->path == "0");
    }
    SECTION("unknown operator is named") {
        PipelineTree t = minimal_tree();
        t.root.inst.spec_name = "Nonexistent";
        auto v = validate(t, kFullRegistry);
        REQUIRE(v.has_value());
        REQUIRE(v->message.find("Nonexistent") != std::string::npos);
    }
    SECTION("stack must wrap a classifier spec") {
        PipelineTree t{PipelineNode::unary(
            NodeKind::ClassifierRoot, inst_of("GaussianNB"),
            PipelineNode::unary(NodeKind::Stack, inst_of("StandardScaler"), PipelineNode::source()))};
        auto v = validate(t, kFullRegistry);
        REQUIRE(v.has_value());
        REQUIRE(v->message.find("Classifier") != std::string::npos);
    }
}

TEST_CASE("complexity counts operator nodes, not sources") {
    REQUIRE(complexity(minimal_tree()) == 1);

    PipelineTree res = make_residual_block_tree(kLrHp, kLrHp, kLrHp, kLrHp);
    REQUIRE(complexity(res) == 6);  // 3 stacks + union + identity + root

    // adding one transformer anywhere adds exactly one
    PipelineTree plus{PipelineNode::unary(
        NodeKind::ClassifierRoot, inst_of("GaussianNB"),
        PipelineNode::unary(NodeKind::Transformer, inst_of("StandardScaler"),
                            PipelineNode::source()))};
    REQUIRE(complexity(plus) == complexity(minimal_tree()) + 1);
}

TEST_CASE("complexity is additive under subtree replacement") {
    GpConfig cfg = free_form_config(50);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        PipelineTree t = generate_tree(cfg, rng);
        PipelineTree donor = generate_tree(cfg, rng);
        if (t.root.children[0].kind == NodeKind::Source) continue;
        const int before = complexity(t);
        const int sub = complexity(t.root.children[0]);
        const int donated = complexity(donor.root.children[0]);
        t.root.children[0] = donor.root.children[0];
        REQUIRE(complexity(t) == before - sub + donated);
    }
}

TEST_CASE("fit_pipeline on separable data beats the majority baseline") {
    Dataset ds = make_hill_valley(120, 12, false, 8);
    PipelineTree t = minimal_tree("GaussianNB");
    FittedPipeline fp = fit_pipeline(kFullRegistry, t, ds.features, ds.labels, 1, ds.n_classes);
    const double train_acc = accuracy(predict_pipeline(fp, ds.features), ds.labels);

    // majority-class oracle
    std::size_t ones = 0;
    for (int v : ds.labels) ones += static_cast<std::size_t>(v);
    const double majority =
        std::max(ones, ds.n_rows() - ones) / static_cast<double>(ds.n_rows());
    REQUIRE(train_acc >= majority);
}

TEST_CASE("identity-like operators leave predictions unchanged at a fresh path") {
    Dataset ds = make_hill_valley(60, 10, true, 4);
    PipelineTree base{PipelineNode::unary(
        NodeKind::ClassifierRoot, inst_of("MlpNN", 3),
        PipelineNode::unary(NodeKind::Transformer, inst_of("StandardScaler"),
                            PipelineNode::source()))};
    FittedPipeline fp_base = fit_pipeline(kFullRegistry, base, ds.features, ds.labels, 7, 2);
    auto base_pred = predict_pipeline(fp_base, ds.features);

    // Insert directly above the Source: every existing node keeps its path, so
    // every node seed is unchanged.
    SECTION("identity insertion") {
        PipelineTree t = base;
        t.root.children[0].children[0] = PipelineNode::unary(
            NodeKind::Identity, {"Identity", {}}, PipelineNode::source());
        FittedPipeline fp = fit_pipeline(kFullRegistry, t, ds.features, ds.labels, 7, 2);
        REQUIRE(predict_pipeline(fp, ds.features) == base_pred);
    }
    SECTION("SelectKBest with k_fraction 1.0") {
        PipelineTree t = base;
        t.root.children[0].children[0] = PipelineNode::unary(
            NodeKind::Selector, OperatorInstance{"SelectKBest", {{"k_fraction", 1.0}}},
            PipelineNode::source());
        FittedPipeline fp = fit_pipeline(kFullRegistry, t, ds.features, ds.labels, 7, 2);
        REQUIRE(predict_pipeline(fp, ds.features) == base_pred);
    }
}

TEST_CASE("permuting union branches leaves a kNN root unchanged") {
    Dataset ds = make_hill_valley(50, 8, true, 11);
    auto build = [&](bool swapped) {
        std::vector<PipelineNode> branches;
        PipelineNode a = PipelineNode::unary(NodeKind::Transformer, inst_of("StandardScaler"),
                                             PipelineNode::source());
        PipelineNode b = PipelineNode::unary(NodeKind::Transformer, inst_of("MinMaxScaler"),
                                             PipelineNode::source());
        if (swapped) {
            branches.push_back(std::move(b));
            branches.push_back(std::move(a));
        } else {
            branches.push_back(std::move(a));
            branches.push_back(std::move(b));
        }
        return PipelineTree{PipelineNode::unary(NodeKind::ClassifierRoot,
                                                OperatorInstance{"KNearest", {{"k", std::int64_t{3}}}},
                                                PipelineNode::union_of(std::move(branches)))};
    };
    FittedPipeline f1 = fit_pipeline(kFullRegistry, build(false), ds.features, ds.labels, 5, 2);
    FittedPipeline f2 = fit_pipeline(kFullRegistry, build(true), ds.features, ds.labels, 5, 2);
    REQUIRE(predict_pipeline(f1, ds.features) == predict_pipeline(f2, ds.features));
}

TEST_CASE("fit failures carry the failing node path") {
    Registry reg = registry_with_failing_classifier();
    Dataset ds = make_hill_valley(20, 8, false, 2);
    PipelineTree t{PipelineNode::unary(
        NodeKind::ClassifierRoot, inst_of("GaussianNB"),
        PipelineNode::unary(NodeKind::Stack, OperatorInstance{"FailsLater", {}},
                            PipelineNode::source()))};
    try {
        fit_pipeline(reg, t, ds.features, ds.labels, 0, 2);
        FAIL("expected FitError");
    } catch (const FitError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("0") != std::string::npos);
        REQUIRE(msg.find("FailsLater") != std::string::npos);
    }
}

TEST_CASE("predict_pipeline determinism and width checks") {
    Dataset ds = make_hill_valley(40, 9, true, 3);
    PipelineTree t = minimal_tree("DecisionTree", 1);
    FittedPipeline fp = fit_pipeline(kFullRegistry, t, ds.features, ds.labels, 9, 2);
    REQUIRE(predict_pipeline(fp, ds.features) == predict_pipeline(fp, ds.features));
    REQUIRE_THROWS_AS(predict_pipeline(fp, Matrix(4, 2)), FitError);

    FittedPipeline fp2 = fit_pipeline(kFullRegistry, t, ds.features, ds.labels, 9, 2);
    REQUIRE(predict_pipeline(fp2, ds.features) == predict_pipeline(fp, ds.features));
}

TEST_CASE("cv_score of a constant predictor tracks the majority fraction") {
    // 60/40 binary dataset
    Dataset ds = make_hill_valley(100, 8, true, 6);
    for (std::size_t i = 0; i < 100; ++i) ds.labels[i] = i < 60 ? 0 : 1;

    auto hook = [](const Hyperparameters&, const Matrix& x, std::span<const int>, std::uint64_t,
                   int c) -> ModelPtr {
        return std::make_shared<ConstantModel>(0, c, static_cast<int>(x.cols()));
    };
    Registry reg = register_custom_learner(kFullRegistry,
                                           {"AlwaysZero", OperatorKindClass::Classifier, {}}, hook);
    PipelineTree t{PipelineNode::unary(NodeKind::ClassifierRoot, OperatorInstance{"AlwaysZero", {}},
                                       PipelineNode::source())};
    const double cv = cv_score(reg, t, ds, 5, 17);
    REQUIRE_THAT(cv, Catch::Matchers::WithinAbs(0.6, 0.1));
}

TEST_CASE("cv_score is 1.0 for a memorizer on duplicated data") {
    // two distinct rows, each repeated 20 times
    Dataset ds;
    ds.name = "dup";
    ds.n_classes = 2;
    ds.feature_names = {"a", "b"};
    ds.features = Matrix(40, 2);
    ds.labels.resize(40);
    for (std::size_t i = 0; i < 40; ++i) {
        const int cls = static_cast<int>(i % 2);
        ds.features(i, 0) = cls == 0 ? 1.0 : 5.0;
        ds.features(i, 1) = cls == 0 ? 2.0 : 6.0;
        ds.labels[i] = cls;
    }
    PipelineTree t{PipelineNode::unary(NodeKind::ClassifierRoot,
                                       OperatorInstance{"KNearest", {{"k", std::int64_t{1}}}},
                                       PipelineNode::source())};
    REQUIRE(cv_score(kFullRegistry, t, ds, 2, 1) == 1.0);
}

TEST_CASE("cv_score scores failed folds as zero") {
    Registry reg = registry_with_failing_classifier();
    Dataset ds = make_hill_valley(30, 8, false, 1);
    PipelineTree t{PipelineNode::unary(NodeKind::ClassifierRoot, OperatorInstance{"FailsLater", {}},
                                       PipelineNode::source())};
    REQUIRE(cv_score(reg, t, ds, 3, 1) == 0.0);
}

TEST_CASE("export produces one classifier entry for the minimal pipeline") {
    const std::string text = export_pipeline(minimal_tree("GaussianNB"));
    REQUIRE(text.find("evopipe-export v1\n") == 0);
    REQUIRE(text.find("  ClassifierRoot GaussianNB\n") != std::string::npos);
    REQUIRE(text.find("    Source\n") != std::string::npos);
    // exactly one classifier node entry
    std::size_t count = 0, pos = 0;
    while ((pos = text.find("ClassifierRoot", pos)) != std::string::npos) {
        ++count;
        pos += 1;
    }
    REQUIRE(count == 1);
}

TEST_CASE("export/import round-trip is bitwise idempotent on random trees") {
    GpConfig cfg = free_form_config(1234);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(hash_seed(500, "tree", seed));
        PipelineTree t = generate_tree(cfg, rng);
        ExportMeta meta;
        if (seed % 2 == 0) meta.cv_score = 0.5 + 0.5 * (static_cast<double>(seed) / 100.0);
        if (seed % 3 == 0) meta.dataset = "round-trip";
        meta.seed = seed;
        const std::string once = export_pipeline(t, meta);
        auto [imported, meta2] = import_pipeline(once, kFullRegistry);
        REQUIRE(imported == t);
        REQUIRE(meta2 == meta);
        REQUIRE(export_pipeline(imported, meta2) == once);
    }
}

TEST_CASE("import error contracts") {
    const std::string good = export_pipeline(minimal_tree());
    SECTION("version mismatch") {
        std::string bad = good;
        bad[bad.find('1')] = '9';
        REQUIRE_THROWS_AS(import_pipeline(bad, kFullRegistry), ParseError);
    }
    SECTION("truncated artifact") {
        REQUIRE_THROWS_AS(import_pipeline("evopipe-export v1\ntree\n", kFullRegistry), ParseError);
    }
    SECTION("unknown operator is named") {
        std::string bad = good;
        const auto pos = bad.find("GaussianNB");
        bad.replace(pos, 10, "MadeUpName");
        try {
            import_pipeline(bad, kFullRegistry);
            FAIL("expected failure");
        } catch (const ParseError& e) {
            REQUIRE(std::string(e.what()).find("MadeUpName") != std::string::npos);
        }
    }
}

TEST_CASE("paper-style recorded cv score survives import verbatim") {
    PipelineTree res = make_residual_block_tree(kLrHp, kLrHp, kLrHp, kLrHp);
    ExportMeta meta;
    meta.cv_score = 0.9406477266781772;
    const std::string text = export_pipeline(res, meta);
    REQUIRE(text.find("cv_score 0.9406477266781772\n") != std::string::npos);
    REQUIRE(text.find("# Average CV score on the training set was: 0.9406477266781772") !=
            std::string::npos);

    auto [tree, meta2] = import_pipeline(text, kFullRegistry);
    REQUIRE(meta2.cv_score == 0.9406477266781772);  // preserved, not recomputed
    REQUIRE(export_pipeline(tree, meta2) == text);
}

TEST_CASE("residual block tree: structure, execution, export") {
    Hyperparameters lr_hp{{"batch", std::string("full")}, {"epochs", std::int64_t{50}},
                          {"l2", 0.0}, {"lr", 0.1}};
    PipelineTree t = make_residual_block_tree(lr_hp, lr_hp, lr_hp, lr_hp);
    REQUIRE_FALSE(validate(t, kFullRegistry).has_value());
    REQUIRE(complexity(t) == 6);
    REQUIRE(node_count(t) == 8);
    REQUIRE(max_depth(t) == 5);

    Dataset ds = make_hill_valley(200, 20, false, 12);
    FittedPipeline fp = fit_pipeline(kFullRegistry, t, ds.features, ds.labels, 2, 2);
    auto labels = predict_pipeline(fp, ds.features);
    REQUIRE(labels.size() == 200);
    for (int v : labels) {
        REQUIRE(v >= 0);
        REQUIRE(v <= 1);
    }

    const std::string text = export_pipeline(t);
    std::size_t lr_count = 0, pos = 0;
    while ((pos = text.find("LogisticRegressionNN", pos)) != std::string::npos) {
        ++lr_count;
        pos += 1;
    }
    // 4 instances in the tree block; the script block mentions each again
    REQUIRE(lr_count >= 4);

    std::size_t tree_lr = 0;
    std::istringstream lines(text);
    std::string line;
    bool in_tree = false;
    while (std::getline(lines, line)) {
        if (line == "tree") in_tree = true;
        else if (line == "script") in_tree = false;
        else if (in_tree && line.find("LogisticRegressionNN") != std::string::npos) ++tree_lr;
    }
    REQUIRE(tree_lr == 4);
}

TEST_CASE("rendered script mirrors the stacked-union listing style") {
    Hyperparameters lr_hp{{"batch", std::string("full")}, {"epochs", std::int64_t{50}},
                          {"l2", 0.0}, {"lr", 0.1}};
    PipelineTree t = make_residual_block_tree(lr_hp, lr_hp, lr_hp, lr_hp);
    ExportMeta meta;
    meta.cv_score = 0.9406477266781772;
    const std::string text = export_pipeline(t, meta);

    auto count = [&](const std::string& needle) {
        std::size_t n = 0, pos = 0;
        while ((pos = text.find(needle, pos)) != std::string::npos) {
            ++n;
            pos += needle.size();
        }
        return n;
    };
    REQUIRE(count("make_union(") == 1);
    REQUIRE(count("StackingEstimator(estimator=") == 3);
    REQUIRE(count("FunctionTransformer(copy)") == 1);
    REQUIRE(count("# Identity (skip)") == 1);
    REQUIRE(count("exported_pipeline = make_pipeline(") == 1);
}

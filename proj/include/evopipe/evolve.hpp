#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "evopipe/dataset.hpp"
#include "evopipe/operators.hpp"
#include "evopipe/pipeline.hpp"
#include "evopipe/rng.hpp"

namespace evopipe {

struct Fitness {
    double cv_accuracy = 0.0;  // maximize
    int complexity = 1;        // minimize
    bool failed = false;       // failed implies cv_accuracy == 0

    bool operator==(const Fitness&) const = default;
};

inline bool dominates(const Fitness& a, const Fitness& b) {
    return a.cv_accuracy >= b.cv_accuracy && a.complexity <= b.complexity &&
           (a.cv_accuracy > b.cv_accuracy || a.complexity < b.complexity);
}

struct Individual {
    PipelineTree tree;
    std::optional<Fitness> fitness;
    int birth_generation = 0;
};

struct GpConfig {
    std::size_t population_size = 100;
    int generations = 100;
    double mutation_rate = 0.9;
    double crossover_rate = 0.1;
    int cv_folds = 5;
    double eval_timeout_s = 60.0;
    std::uint64_t seed = 0;
    std::optional<TemplateConstraint> pipeline_template;
    bool single_estimator_mode = false;
    Registry registry;
    std::size_t n_workers = 1;
};

inline void check_config(const GpConfig& cfg) {
    if (cfg.population_size < 2) throw ConfigError("population_size must be at least 2");
    if (cfg.mutation_rate < 0 || cfg.crossover_rate < 0 ||
        cfg.mutation_rate + cfg.crossover_rate > 1.0)
        throw ConfigError("mutation_rate + crossover_rate must be in [0, 1]");
    if (cfg.cv_folds < 2) throw ConfigError("cv_folds must be at least 2");
    if (cfg.registry.classifiers().empty()) throw ConfigError("registry has no classifier");
    if (cfg.pipeline_template) {
        if (cfg.single_estimator_mode)
            throw ConfigError("template and single-estimator mode are mutually exclusive");
        if (cfg.pipeline_template->slots.size() + 1 > kMaxPipelineNodes)
            throw ConfigError("template has more slots than the pipeline size bound allows");
        for (std::size_t i = 0; i < cfg.pipeline_template->slots.size(); ++i)
            slot_candidates(*cfg.pipeline_template, i, cfg.registry);  // throws when unsatisfiable
    }
}

// --- Tree generation ------------------------------------------------------------

namespace detail {

inline const OperatorSpec* pick_spec(const std::vector<const OperatorSpec*>& specs, Rng& rng) {
    return specs[rng.index(specs.size())];
}

// Grow method: structural operators become less likely as depth increases; Source
// weight grows with depth so recursion terminates well before the hard bounds.
inline PipelineNode grow_child(const Registry& registry, Rng& rng, std::size_t depth,
                               std::size_t budget) {
    enum Option { OptSource, OptSelector, OptTransformer, OptStack, OptUnion };
    std::vector<std::pair<Option, std::size_t>> weighted;  // (option, weight)
    weighted.push_back({OptSource, 1 + depth});
    if (budget >= 2 && depth + 1 <= kMaxPipelineDepth) {
        weighted.push_back({OptSelector, 1});
        weighted.push_back({OptTransformer, 1});
        weighted.push_back({OptStack, 1});
        if (budget >= 3) weighted.push_back({OptUnion, 1});
    }
    std::size_t total = 0;
    for (auto& [o, w] : weighted) total += w;
    std::size_t draw = rng.next_below(total);
    Option choice = OptSource;
    for (auto& [o, w] : weighted) {
        if (draw < w) {
            choice = o;
            break;
        }
        draw -= w;
    }

    switch (choice) {
        case OptSource:
            return PipelineNode::source();
        case OptSelector: {
            auto inst = sample_instance(*pick_spec(registry.of_class(OperatorKindClass::Selector), rng), rng);
            return PipelineNode::unary(NodeKind::Selector, std::move(inst),
                                       grow_child(registry, rng, depth + 1, budget - 1));
        }
        case OptTransformer: {
            auto inst = sample_instance(*pick_spec(registry.of_class(OperatorKindClass::Transformer), rng), rng);
            return PipelineNode::unary(NodeKind::Transformer, std::move(inst),
                                       grow_child(registry, rng, depth + 1, budget - 1));
        }
        case OptStack: {
            auto inst = sample_instance(*pick_spec(registry.classifiers(), rng), rng);
            return PipelineNode::unary(NodeKind::Stack, std::move(inst),
                                       grow_child(registry, rng, depth + 1, budget - 1));
        }
        case OptUnion: {
            std::size_t branches = 2;
            if (budget >= 4 && rng.uniform01() < 0.2) branches = 3;
            const std::size_t per_branch = (budget - 1) / branches;
            std::vector<PipelineNode> kids;
            kids.reserve(branches);
            for (std::size_t b = 0; b < branches; ++b)
                kids.push_back(grow_child(registry, rng, depth + 1, per_branch));
            return PipelineNode::union_of(std::move(kids));
        }
    }
    return PipelineNode::source();
}

inline NodeKind slot_node_kind(const OperatorSpec& spec, bool is_last) {
    if (is_last) return NodeKind::ClassifierRoot;
    switch (spec.kind_class) {
        case OperatorKindClass::Selector: return NodeKind::Selector;
        case OperatorKindClass::Transformer: return NodeKind::Transformer;
        case OperatorKindClass::Identity: return NodeKind::Identity;
        default: return NodeKind::Stack;  // mid-pipeline classifiers run as stacks
    }
}

inline PipelineTree template_tree(const TemplateConstraint& tc, const Registry& registry, Rng& rng) {
    PipelineNode node = PipelineNode::source();
    for (std::size_t i = 0; i < tc.slots.size(); ++i) {
        auto candidates = slot_candidates(tc, i, registry);
        const OperatorSpec* spec = pick_spec(candidates, rng);
        node = PipelineNode::unary(slot_node_kind(*spec, i + 1 == tc.slots.size()),
                                   sample_instance(*spec, rng), std::move(node));
    }
    return PipelineTree{std::move(node)};
}

}  // namespace detail

inline PipelineTree generate_tree(const GpConfig& cfg, Rng& rng) {
    if (cfg.single_estimator_mode)
        return PipelineTree{PipelineNode::unary(
            NodeKind::ClassifierRoot,
            sample_instance(*detail::pick_spec(cfg.registry.classifiers(), rng), rng),
            PipelineNode::source())};
    if (cfg.pipeline_template) return detail::template_tree(*cfg.pipeline_template, cfg.registry, rng);

    auto root_inst = sample_instance(*detail::pick_spec(cfg.registry.classifiers(), rng), rng);
    PipelineNode child = detail::grow_child(cfg.registry, rng, 1, kMaxPipelineNodes - 1);
    return PipelineTree{
        PipelineNode::unary(NodeKind::ClassifierRoot, std::move(root_inst), std::move(child))};
}

inline std::vector<Individual> init_population(const GpConfig& cfg) {
    check_config(cfg);
    std::vector<Individual> pop;
    pop.reserve(cfg.population_size);
    for (std::size_t i = 0; i < cfg.population_size; ++i) {
        Rng rng(hash_seed(cfg.seed, "init", i));
        pop.push_back(Individual{generate_tree(cfg, rng), std::nullopt, 0});
    }
    return pop;
}

// --- Variation ------------------------------------------------------------------

namespace detail {

using NodePath = std::vector<std::size_t>;

inline PipelineNode* node_at(PipelineNode& root, std::span<const std::size_t> path) {
    PipelineNode* n = &root;
    for (std::size_t idx : path) n = &n->children[idx];
    return n;
}
inline const PipelineNode* node_at(const PipelineNode& root, std::span<const std::size_t> path) {
    const PipelineNode* n = &root;
    for (std::size_t idx : path) n = &n->children[idx];
    return n;
}

inline void collect_paths(const PipelineNode& n, NodePath& cur, std::vector<NodePath>& out) {
    out.push_back(cur);
    for (std::size_t i = 0; i < n.children.size(); ++i) {
        cur.push_back(i);
        collect_paths(n.children[i], cur, out);
        cur.pop_back();
    }
}

inline std::vector<NodePath> all_paths(const PipelineTree& t) {
    std::vector<NodePath> out;
    NodePath cur;
    collect_paths(t.root, cur, out);
    return out;
}

inline std::vector<const OperatorSpec*> replacement_candidates(const GpConfig& cfg,
                                                               const PipelineNode& node,
                                                               std::size_t chain_slot) {
    const Registry& registry = cfg.registry;
    if (cfg.pipeline_template) return slot_candidates(*cfg.pipeline_template, chain_slot, registry);
    switch (node.kind) {
        case NodeKind::Selector: return registry.of_class(OperatorKindClass::Selector);
        case NodeKind::Transformer: return registry.of_class(OperatorKindClass::Transformer);
        case NodeKind::Identity: return registry.of_class(OperatorKindClass::Identity);
        case NodeKind::Stack:
        case NodeKind::ClassifierRoot: return registry.classifiers();
        default: return {};
    }
}

// Template trees are linear: the slot index of a node at depth d (path length d)
// counts from the Source upward.
inline std::size_t template_slot_of(const TemplateConstraint& tc, const NodePath& path) {
    return tc.slots.size() - 1 - path.size();
}

}  // namespace detail

enum class MutationKind { HpResample, NodeReplace, Insert, Shrink };

// Applies exactly one mutation drawn uniformly from the applicable subset of
// {hyperparameter-resample, node-replace, insert, shrink}.
inline Individual mutate(const Individual& ind, const GpConfig& cfg, std::uint64_t rng_seed) {
    Rng rng(hash_seed(rng_seed, "mutate"));
    PipelineTree tree = ind.tree;
    const Registry& registry = cfg.registry;
    const auto paths = detail::all_paths(tree);

    // hp-resample targets: (path, parameter key)
    std::vector<std::pair<detail::NodePath, std::string>> hp_targets;
    // node-replace targets
    std::vector<detail::NodePath> replace_targets;
    // shrink targets: non-root unary operator nodes
    std::vector<detail::NodePath> shrink_targets;
    // insert targets: edges (parent path, child index)
    std::vector<std::pair<detail::NodePath, std::size_t>> insert_edges;

    const std::size_t total_nodes = node_count(tree);
    for (const auto& path : paths) {
        const PipelineNode* n = detail::node_at(tree.root, path);
        if (n->kind != NodeKind::Source && n->kind != NodeKind::Union)
            for (const auto& [key, _] : n->inst.hp) hp_targets.push_back({path, key});
        if (n->kind != NodeKind::Source && n->kind != NodeKind::Union) {
            const std::size_t slot =
                cfg.pipeline_template ? detail::template_slot_of(*cfg.pipeline_template, path) : 0;
            if (!detail::replacement_candidates(cfg, *n, slot).empty())
                replace_targets.push_back(path);
        }
        if (!cfg.pipeline_template && !path.empty() && n->children.size() == 1 &&
            n->kind != NodeKind::ClassifierRoot)
            shrink_targets.push_back(path);
        if (!cfg.pipeline_template)
            for (std::size_t i = 0; i < n->children.size(); ++i) {
                const PipelineNode& child = n->children[i];
                const bool fits = total_nodes + 1 <= kMaxPipelineNodes &&
                                  path.size() + 2 + max_depth(child) <= kMaxPipelineDepth;
                if (fits) insert_edges.push_back({path, i});
            }
    }
    if (cfg.single_estimator_mode) {
        insert_edges.clear();
        shrink_targets.clear();
    }

    std::vector<MutationKind> applicable;
    if (!hp_targets.empty()) applicable.push_back(MutationKind::HpResample);
    if (!replace_targets.empty()) applicable.push_back(MutationKind::NodeReplace);
    if (!insert_edges.empty()) applicable.push_back(MutationKind::Insert);
    if (!shrink_targets.empty()) applicable.push_back(MutationKind::Shrink);
    if (applicable.empty()) return Individual{std::move(tree), std::nullopt, ind.birth_generation};

    switch (applicable[rng.index(applicable.size())]) {
        case MutationKind::HpResample: {
            const auto& [path, key] = hp_targets[rng.index(hp_targets.size())];
            PipelineNode* n = detail::node_at(tree.root, path);
            const auto& choices = registry.require(n->inst.spec_name).space.at(key);
            n->inst.hp[key] = choices[rng.index(choices.size())];
            break;
        }
        case MutationKind::NodeReplace: {
            const auto& path = replace_targets[rng.index(replace_targets.size())];
            PipelineNode* n = detail::node_at(tree.root, path);
            const std::size_t slot =
                cfg.pipeline_template ? detail::template_slot_of(*cfg.pipeline_template, path) : 0;
            auto candidates = detail::replacement_candidates(cfg, *n, slot);
            const OperatorSpec* spec = candidates[rng.index(candidates.size())];
            n->inst = sample_instance(*spec, rng);
            break;
        }
        case MutationKind::Insert: {
            const auto& [parent_path, child_idx] = insert_edges[rng.index(insert_edges.size())];
            enum { InsSelector, InsTransformer, InsStack };
            const int ins = static_cast<int>(rng.index(3));
            PipelineNode* parent = detail::node_at(tree.root, parent_path);
            PipelineNode old_child = std::move(parent->children[child_idx]);
            PipelineNode fresh;
            if (ins == InsSelector)
                fresh = PipelineNode::unary(
                    NodeKind::Selector,
                    sample_instance(*detail::pick_spec(registry.of_class(OperatorKindClass::Selector), rng), rng),
                    std::move(old_child));
            else if (ins == InsTransformer)
                fresh = PipelineNode::unary(
                    NodeKind::Transformer,
                    sample_instance(*detail::pick_spec(registry.of_class(OperatorKindClass::Transformer), rng), rng),
                    std::move(old_child));
            else
                fresh = PipelineNode::unary(NodeKind::Stack,
                                            sample_instance(*detail::pick_spec(registry.classifiers(), rng), rng),
                                            std::move(old_child));
            parent->children[child_idx] = std::move(fresh);
            break;
        }
        case MutationKind::Shrink: {
            const auto& path = shrink_targets[rng.index(shrink_targets.size())];
            detail::NodePath parent_path(path.begin(), path.end() - 1);
            PipelineNode* parent = detail::node_at(tree.root, parent_path);
            PipelineNode* doomed = &parent->children[path.back()];
            PipelineNode grandchild = std::move(doomed->children[0]);
            parent->children[path.back()] = std::move(grandchild);
            break;
        }
    }
    return Individual{std::move(tree), std::nullopt, ind.birth_generation};
}

// One-offspring subtree exchange: a random non-root operator node of `a` is
// replaced by a kind-compatible subtree of `b`. Falls back to mutate(a) when no
// compatible pair exists or the graft would break the size/depth bounds.
inline Individual crossover(const Individual& a, const Individual& b, const GpConfig& cfg,
                            std::uint64_t rng_seed) {
    Rng rng(hash_seed(rng_seed, "crossover"));

    std::vector<detail::NodePath> a_nodes;
    for (auto& p : detail::all_paths(a.tree))
        if (!p.empty() && detail::node_at(a.tree.root, p)->kind != NodeKind::Source)
            a_nodes.push_back(p);
    if (a_nodes.empty()) return mutate(a, cfg, rng_seed);

    const auto& pick = a_nodes[rng.index(a_nodes.size())];
    const NodeKind kind = detail::node_at(a.tree.root, pick)->kind;

    std::vector<detail::NodePath> b_nodes;
    for (auto& p : detail::all_paths(b.tree)) {
        if (p.empty()) continue;
        if (detail::node_at(b.tree.root, p)->kind != kind) continue;
        if (cfg.pipeline_template && p != pick) continue;  // template trees swap slot-for-slot
        b_nodes.push_back(p);
    }
    if (b_nodes.empty()) return mutate(a, cfg, rng_seed);

    const auto& donor_path = b_nodes[rng.index(b_nodes.size())];
    PipelineTree tree = a.tree;
    *detail::node_at(tree.root, pick) = *detail::node_at(b.tree.root, donor_path);

    if (node_count(tree) > kMaxPipelineNodes || max_depth(tree) > kMaxPipelineDepth)
        return mutate(a, cfg, rng_seed);
    return Individual{std::move(tree), std::nullopt, a.birth_generation};
}

// --- Evaluation -----------------------------------------------------------------

// Atomic get-or-compute map keyed on the canonical export text of a tree. The
// first caller computes; concurrent callers for the same key block on its future.
class EvaluationCache {
public:
    Fitness get_or_compute(const std::string& key, const std::function<Fitness()>& compute) {
        std::shared_future<Fitness> fut;
        std::promise<Fitness> prom;
        bool owner = false;
        {
            std::lock_guard lock(mu_);
            auto it = memo_.find(key);
            if (it == memo_.end()) {
                fut = prom.get_future().share();
                memo_.emplace(key, fut);
                owner = true;
                ++misses_;
            } else {
                fut = it->second;
                ++hits_;
            }
        }
        if (owner) {
            try {
                prom.set_value(compute());
            } catch (...) {
                prom.set_exception(std::current_exception());
            }
        }
        return fut.get();
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return memo_.size();
    }
    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_future<Fitness>> memo_;
    std::atomic<std::size_t> hits_ = 0;
    std::atomic<std::size_t> misses_ = 0;
};

inline Individual evaluate(Individual ind, const Dataset& ds_train, const GpConfig& cfg,
                           EvaluationCache& cache) {
    if (ind.fitness) return ind;
    const std::string key = export_pipeline(ind.tree);
    ind.fitness = cache.get_or_compute(key, [&]() -> Fitness {
        Fitness f;
        f.complexity = complexity(ind.tree);
        Deadline deadline;
        if (cfg.eval_timeout_s > 0)
            deadline = std::chrono::steady_clock::now() +
                       std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                           std::chrono::duration<double>(cfg.eval_timeout_s));
        try {
            f.cv_accuracy = cv_score(cfg.registry, ind.tree, ds_train, cfg.cv_folds,
                                     hash_seed(cfg.seed, "eval"), deadline);
        } catch (const std::exception&) {
            f.cv_accuracy = 0.0;
            f.failed = true;
        }
        return f;
    });
    return ind;
}

inline void evaluate_all(std::vector<Individual>& pop, const Dataset& ds_train, const GpConfig& cfg,
                         EvaluationCache& cache) {
    const std::size_t workers = std::max<std::size_t>(1, cfg.n_workers);
    if (workers == 1 || pop.size() < 2) {
        for (auto& ind : pop) ind = evaluate(std::move(ind), ds_train, cfg, cache);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        threads.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < pop.size(); i = next.fetch_add(1))
                pop[i] = evaluate(std::move(pop[i]), ds_train, cfg, cache);
        });
    for (auto& t : threads) t.join();
}

// --- NSGA-II --------------------------------------------------------------------

// Deb's fast non-dominated sort. Front order and within-front order are by index,
// so output is deterministic.
inline std::vector<std::vector<std::size_t>> fast_nondominated_sort(std::span<const Fitness> pop) {
    const std::size_t n = pop.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> dom_count(n, 0);
    std::vector<std::vector<std::size_t>> fronts;

    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (dominates(pop[i], pop[j]))
                dominated[i].push_back(j);
            else if (dominates(pop[j], pop[i]))
                ++dom_count[i];
        }
        if (dom_count[i] == 0) current.push_back(i);
    }
    while (!current.empty()) {
        fronts.push_back(current);
        std::vector<std::size_t> nxt;
        for (std::size_t i : current)
            for (std::size_t j : dominated[i])
                if (--dom_count[j] == 0) nxt.push_back(j);
        std::sort(nxt.begin(), nxt.end());
        current = std::move(nxt);
    }
    return fronts;
}

// NSGA-II crowding distance within one front. Boundary individuals per objective
// get +infinity; a zero objective range contributes nothing.
inline std::vector<double> crowding_distance(std::span<const Fitness> front) {
    const std::size_t n = front.size();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        return dist;
    }
    auto accumulate = [&](auto objective) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double va = objective(front[a]), vb = objective(front[b]);
            if (va != vb) return va < vb;
            return a < b;
        });
        dist[order.front()] = std::numeric_limits<double>::infinity();
        dist[order.back()] = std::numeric_limits<double>::infinity();
        const double range = objective(front[order.back()]) - objective(front[order.front()]);
        if (range <= 0.0) return;
        for (std::size_t k = 1; k + 1 < n; ++k)
            dist[order[k]] +=
                (objective(front[order[k + 1]]) - objective(front[order[k - 1]])) / range;
    };
    accumulate([](const Fitness& f) { return f.cv_accuracy; });
    accumulate([](const Fitness& f) { return static_cast<double>(f.complexity); });
    return dist;
}

// mu+lambda environmental selection: admit whole fronts, split the last one by
// descending crowding distance with index ties going low-first.
inline std::vector<Individual> select_survivors(std::vector<Individual> pool, std::size_t mu) {
    if (pool.size() < mu) throw ConfigError("select_survivors: pool smaller than mu");
    std::vector<Fitness> fits;
    fits.reserve(pool.size());
    for (const auto& ind : pool) {
        if (!ind.fitness) throw ConfigError("select_survivors: unevaluated individual");
        fits.push_back(*ind.fitness);
    }
    auto fronts = fast_nondominated_sort(fits);

    std::vector<Individual> out;
    out.reserve(mu);
    for (const auto& front : fronts) {
        if (out.size() == mu) break;
        if (out.size() + front.size() <= mu) {
            for (std::size_t i : front) out.push_back(std::move(pool[i]));
            continue;
        }
        std::vector<Fitness> ff;
        ff.reserve(front.size());
        for (std::size_t i : front) ff.push_back(fits[i]);
        auto cd = crowding_distance(ff);
        std::vector<std::size_t> order(front.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (cd[a] != cd[b]) return cd[a] > cd[b];
            return front[a] < front[b];
        });
        for (std::size_t k = 0; out.size() < mu; ++k) out.push_back(std::move(pool[front[order[k]]]));
        break;
    }
    return out;
}

// --- Generation loop --------------------------------------------------------------

struct GenerationRecord {
    int generation = 0;
    double best_accuracy = 0.0;
    double mean_accuracy = 0.0;
    std::size_t front1_size = 0;
    double elapsed_s = 0.0;
};

using ProgressSink = std::function<void(const GenerationRecord&, const std::vector<Individual>&)>;

struct EvolutionResult {
    std::vector<Individual> population;
    std::vector<Individual> pareto_front;
    Individual best;
    std::vector<GenerationRecord> log;
};

namespace detail {

inline GenerationRecord make_record(int gen, const std::vector<Individual>& pop,
                                    std::chrono::steady_clock::time_point start) {
    GenerationRecord rec;
    rec.generation = gen;
    double sum = 0.0;
    std::vector<Fitness> fits;
    fits.reserve(pop.size());
    for (const auto& ind : pop) {
        rec.best_accuracy = std::max(rec.best_accuracy, ind.fitness->cv_accuracy);
        sum += ind.fitness->cv_accuracy;
        fits.push_back(*ind.fitness);
    }
    rec.mean_accuracy = sum / static_cast<double>(pop.size());
    rec.front1_size = fast_nondominated_sort(fits)[0].size();
    rec.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

inline std::size_t best_index(const std::vector<Individual>& pop) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pop.size(); ++i) {
        const Fitness& f = *pop[i].fitness;
        const Fitness& g = *pop[best].fitness;
        if (f.cv_accuracy > g.cv_accuracy ||
            (f.cv_accuracy == g.cv_accuracy && f.complexity < g.complexity))
            best = i;
    }
    return best;
}

}  // namespace detail

// The GP loop: evaluate, emit a progress record, breed population_size offspring
// (mutation / crossover / copy by the configured rates), evaluate them, and keep
// the NSGA-II mu+lambda survivors. Offspring seeds derive from (master seed,
// generation, offspring index), so results do not depend on evaluation order or
// worker count.
inline EvolutionResult run_evolution(const GpConfig& cfg, const Dataset& ds_train,
                                     const ProgressSink& sink = {}) {
    check_config(cfg);
    const auto start = std::chrono::steady_clock::now();
    EvaluationCache cache;
    EvolutionResult result;

    std::vector<Individual> pop = init_population(cfg);
    evaluate_all(pop, ds_train, cfg, cache);
    result.log.push_back(detail::make_record(0, pop, start));
    if (sink) sink(result.log.back(), pop);

    const std::size_t mu = cfg.population_size;
    for (int gen = 1; gen <= cfg.generations; ++gen) {
        std::vector<Individual> offspring;
        offspring.reserve(mu);
        for (std::size_t i = 0; i < mu; ++i) {
            Rng rng(hash_seed(cfg.seed, "offspring", gen, i));
            const double u = rng.uniform01();
            Individual child;
            if (u < cfg.mutation_rate) {
                child = mutate(pop[rng.index(mu)], cfg, hash_seed(cfg.seed, "mut", gen, i));
            } else if (u < cfg.mutation_rate + cfg.crossover_rate) {
                const std::size_t i1 = rng.index(mu);
                std::size_t i2 = rng.index(mu - 1);
                if (i2 >= i1) ++i2;
                child = crossover(pop[i1], pop[i2], cfg, hash_seed(cfg.seed, "cx", gen, i));
            } else {
                child = pop[rng.index(mu)];  // reproduction: straight copy
            }
            child.birth_generation = gen;
            offspring.push_back(std::move(child));
        }
        evaluate_all(offspring, ds_train, cfg, cache);

        std::vector<Individual> pool = std::move(pop);
        pool.insert(pool.end(), std::make_move_iterator(offspring.begin()),
                    std::make_move_iterator(offspring.end()));
        pop = select_survivors(std::move(pool), mu);

        result.log.push_back(detail::make_record(gen, pop, start));
        if (sink) sink(result.log.back(), pop);
    }

    std::vector<Fitness> fits;
    fits.reserve(pop.size());
    for (const auto& ind : pop) fits.push_back(*ind.fitness);
    const auto fronts = fast_nondominated_sort(fits);
    for (std::size_t i : fronts[0]) result.pareto_front.push_back(pop[i]);
    result.best = pop[detail::best_index(pop)];
    result.population = std::move(pop);
    return result;
}

}  // namespace evopipe

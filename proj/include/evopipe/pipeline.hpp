#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evopipe/dataset.hpp"
#include "evopipe/errors.hpp"
#include "evopipe/operators.hpp"
#include "evopipe/rng.hpp"

namespace evopipe {

enum class NodeKind { Source, Selector, Transformer, Identity, Stack, Union, ClassifierRoot };

inline const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Source: return "Source";
        case NodeKind::Selector: return "Selector";
        case NodeKind::Transformer: return "Transformer";
        case NodeKind::Identity: return "Identity";
        case NodeKind::Stack: return "Stack";
        case NodeKind::Union: return "Union";
        case NodeKind::ClassifierRoot: return "ClassifierRoot";
    }
    return "?";
}

// One pipeline-tree node. Value semantics throughout: GP edits work on copies and
// never share subtrees. Stack and ClassifierRoot carry a classifier instance;
// Source and Union carry none.
struct PipelineNode {
    NodeKind kind = NodeKind::Source;
    OperatorInstance inst;
    std::vector<PipelineNode> children;

    bool operator==(const PipelineNode&) const = default;

    static PipelineNode source() { return {}; }
    static PipelineNode unary(NodeKind kind, OperatorInstance inst, PipelineNode child) {
        PipelineNode n;
        n.kind = kind;
        n.inst = std::move(inst);
        n.children.push_back(std::move(child));
        return n;
    }
    static PipelineNode union_of(std::vector<PipelineNode> branches) {
        PipelineNode n;
        n.kind = NodeKind::Union;
        n.inst.spec_name = "Union";
        n.children = std::move(branches);
        return n;
    }
};

struct PipelineTree {
    PipelineNode root;

    bool operator==(const PipelineTree&) const = default;
};

// GP bloat bounds: total node count (Sources included) and edge depth.
inline constexpr std::size_t kMaxPipelineNodes = 10;
inline constexpr std::size_t kMaxPipelineDepth = 5;

inline std::size_t node_count(const PipelineNode& n) {
    std::size_t total = 1;
    for (const auto& c : n.children) total += node_count(c);
    return total;
}
inline std::size_t node_count(const PipelineTree& t) { return node_count(t.root); }

inline std::size_t max_depth(const PipelineNode& n) {
    std::size_t deepest = 0;
    for (const auto& c : n.children) deepest = std::max(deepest, 1 + max_depth(c));
    return deepest;
}
inline std::size_t max_depth(const PipelineTree& t) { return max_depth(t.root); }

// Operator-node count, the complexity objective. Source leaves are free; Union
// and Identity each count as one.
inline int complexity(const PipelineNode& n) {
    int total = n.kind == NodeKind::Source ? 0 : 1;
    for (const auto& c : n.children) total += complexity(c);
    return total;
}
inline int complexity(const PipelineTree& t) { return complexity(t.root); }

// Path of child indices from the root, e.g. "0/1" = second child of first child.
inline std::string path_string(std::span<const std::size_t> path) {
    if (path.empty()) return "(root)";
    std::string s;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) s += '/';
        s += std::to_string(path[i]);
    }
    return s;
}

// Per-node seeds hash the node's path so a GP edit only re-randomizes the
// subtree it touched.
inline std::uint64_t node_seed(std::uint64_t master, std::span<const std::size_t> path) {
    std::uint64_t h = hash_seed(master, "node");
    for (std::size_t idx : path) h = mix_u64(h, idx + 1);
    return h;
}

struct Violation {
    std::string path;
    std::string message;
};

namespace detail {

inline std::optional<Violation> validate_node(const PipelineNode& n, const Registry& registry,
                                              std::vector<std::size_t>& path, bool is_root) {
    auto fail = [&](std::string msg) -> std::optional<Violation> {
        return Violation{path_string(path), std::move(msg)};
    };

    if (is_root && n.kind != NodeKind::ClassifierRoot) return fail("root must be a ClassifierRoot");
    if (!is_root && n.kind == NodeKind::ClassifierRoot)
        return fail("ClassifierRoot below the root");

    switch (n.kind) {
        case NodeKind::Source:
            if (!n.children.empty()) return fail("Source must be a leaf");
            break;
        case NodeKind::Union:
            if (n.children.size() < 2) return fail("Union needs at least 2 branches");
            break;
        default:
            if (n.children.size() != 1)
                return fail(std::string(node_kind_name(n.kind)) + " needs exactly 1 child");
            break;
    }
    if (n.kind != NodeKind::Source && n.children.empty())
        return fail("leaf is not a Source");

    if (n.kind != NodeKind::Source && n.kind != NodeKind::Union) {
        const OperatorSpec* spec = registry.find(n.inst.spec_name);
        if (!spec) return fail("unknown operator '" + n.inst.spec_name + "'");
        const OperatorKindClass expected = [&] {
            switch (n.kind) {
                case NodeKind::Selector: return OperatorKindClass::Selector;
                case NodeKind::Transformer: return OperatorKindClass::Transformer;
                case NodeKind::Identity: return OperatorKindClass::Identity;
                default: return OperatorKindClass::Classifier;  // Stack, ClassifierRoot
            }
        }();
        if (spec->kind_class != expected)
            return fail("operator '" + n.inst.spec_name + "' is a " +
                        kind_class_name(spec->kind_class) + ", node needs a " +
                        kind_class_name(expected));
        if (!hp_valid(*spec, n.inst.hp))
            return fail("hyperparameters for '" + n.inst.spec_name +
                        "' are outside the declared space");
    }

    for (std::size_t i = 0; i < n.children.size(); ++i) {
        path.push_back(i);
        if (auto v = validate_node(n.children[i], registry, path, false)) return v;
        path.pop_back();
    }
    return std::nullopt;
}

}  // namespace detail

// Structural validation. Returns the first violating node path, or nullopt when ok.
inline std::optional<Violation> validate(const PipelineTree& tree, const Registry& registry) {
    if (const std::size_t nodes = node_count(tree); nodes > kMaxPipelineNodes)
        return Violation{"(root)", "node count " + std::to_string(nodes) + " exceeds bound " +
                                       std::to_string(kMaxPipelineNodes)};
    if (const std::size_t depth = max_depth(tree); depth > kMaxPipelineDepth)
        return Violation{"(root)", "depth " + std::to_string(depth) + " exceeds bound " +
                                       std::to_string(kMaxPipelineDepth)};
    std::vector<std::size_t> path;
    return detail::validate_node(tree.root, registry, path, true);
}

using Deadline = std::optional<std::chrono::steady_clock::time_point>;

class TimeoutError : public FitError {
public:
    using FitError::FitError;
};

inline void check_deadline(const Deadline& deadline, const char* where) {
    if (deadline && std::chrono::steady_clock::now() > *deadline)
        throw TimeoutError(std::string("evaluation timed out at ") + where);
}

struct FittedNode {
    NodeKind kind = NodeKind::Source;
    std::optional<FittedOperator> op;  // feature operators and stacks
    ModelPtr root_model;               // ClassifierRoot only
    std::vector<FittedNode> children;
};

struct FittedPipeline {
    PipelineTree tree;
    FittedNode root;
    std::size_t d_in = 0;
    int n_classes = 0;
};

namespace detail {

struct NodeFitResult {
    FittedNode fitted;
    Matrix output;
};

inline NodeFitResult fit_node(const Registry& registry, const PipelineNode& node, const Matrix& x,
                              std::span<const int> y, int n_classes, std::uint64_t master_seed,
                              std::vector<std::size_t>& path, const Deadline& deadline) {
    FittedNode fitted;
    fitted.kind = node.kind;

    if (node.kind == NodeKind::Source) return {std::move(fitted), x};

    std::vector<Matrix> child_outputs;
    child_outputs.reserve(node.children.size());
    for (std::size_t i = 0; i < node.children.size(); ++i) {
        path.push_back(i);
        NodeFitResult r = fit_node(registry, node.children[i], x, y, n_classes, master_seed, path, deadline);
        path.pop_back();
        fitted.children.push_back(std::move(r.fitted));
        child_outputs.push_back(std::move(r.output));
    }

    if (node.kind == NodeKind::Union) return {std::move(fitted), hconcat(child_outputs)};

    check_deadline(deadline, "node fit");
    const Matrix& input = child_outputs[0];
    const std::uint64_t seed = node_seed(master_seed, path);
    try {
        if (node.kind == NodeKind::ClassifierRoot) {
            fitted.root_model =
                registry.fit_classifier(node.inst.spec_name, node.inst.hp, input, y, seed, n_classes);
            return {std::move(fitted), Matrix{}};
        }
        fitted.op = fit_operator(registry, node.inst, input, y, seed, n_classes);
        Matrix out = transform(*fitted.op, input);
        if (out.cols() == 0) throw FitError("operator produced an empty feature matrix");
        return {std::move(fitted), std::move(out)};
    } catch (const TimeoutError&) {
        throw;
    } catch (const std::exception& e) {
        throw FitError("pipeline fit failed at node " + path_string(path) + " (" +
                       node.inst.spec_name + "): " + e.what());
    }
}

inline Matrix transform_node(const FittedNode& node, const Matrix& x) {
    if (node.kind == NodeKind::Source) return x;
    std::vector<Matrix> child_outputs;
    child_outputs.reserve(node.children.size());
    for (const auto& c : node.children) child_outputs.push_back(transform_node(c, x));
    if (node.kind == NodeKind::Union) return hconcat(child_outputs);
    return transform(*node.op, child_outputs[0]);
}

}  // namespace detail

// Depth-first fit from the leaves up. Deterministic: per-node seeds derive from
// (seed, node path) alone.
inline FittedPipeline fit_pipeline(const Registry& registry, const PipelineTree& tree,
                                   const Matrix& x, std::span<const int> y, std::uint64_t seed,
                                   int n_classes = 0, const Deadline& deadline = {}) {
    if (auto v = validate(tree, registry))
        throw FitError("invalid pipeline at " + v->path + ": " + v->message);
    if (x.rows() != y.size()) throw FitError("fit_pipeline: row/label count mismatch");
    const int c = n_classes > 0 ? n_classes : detail::infer_classes(y);

    std::vector<std::size_t> path;
    auto r = detail::fit_node(registry, tree.root, x, y, c, seed, path, deadline);
    FittedPipeline fp;
    fp.tree = tree;
    fp.root = std::move(r.fitted);
    fp.d_in = x.cols();
    fp.n_classes = c;
    return fp;
}

inline std::vector<int> predict_pipeline(const FittedPipeline& fp, const Matrix& x) {
    if (x.cols() != fp.d_in)
        throw FitError("predict_pipeline: input width " + std::to_string(x.cols()) +
                       " does not match fit-time width " + std::to_string(fp.d_in));
    Matrix features = x;
    if (!fp.root.children.empty()) features = detail::transform_node(fp.root.children[0], x);
    return fp.root.root_model->predict(features);
}

inline Matrix predict_proba_pipeline(const FittedPipeline& fp, const Matrix& x) {
    if (x.cols() != fp.d_in) throw FitError("predict_proba_pipeline: input width mismatch");
    Matrix features = x;
    if (!fp.root.children.empty()) features = detail::transform_node(fp.root.children[0], x);
    return fp.root.root_model->predict_proba(features);
}

// Mean held-out-fold accuracy. A fold whose fit or predict fails contributes 0;
// only a timeout escapes, as TimeoutError.
inline double cv_score(const Registry& registry, const PipelineTree& tree, const Dataset& ds,
                       int k, std::uint64_t seed, const Deadline& deadline = {}) {
    FoldAssignment fa = kfold(ds, k, seed);
    double total = 0.0;
    for (int fold = 0; fold < k; ++fold) {
        check_deadline(deadline, "fold start");
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < fa.fold_of.size(); ++i)
            (fa.fold_of[i] == fold ? test_idx : train_idx).push_back(i);

        Matrix train_x = ds.features.take_rows(train_idx);
        Matrix test_x = ds.features.take_rows(test_idx);
        std::vector<int> train_y, test_y;
        train_y.reserve(train_idx.size());
        test_y.reserve(test_idx.size());
        for (auto i : train_idx) train_y.push_back(ds.labels[i]);
        for (auto i : test_idx) test_y.push_back(ds.labels[i]);

        try {
            FittedPipeline fp = fit_pipeline(registry, tree, train_x, train_y,
                                             hash_seed(seed, "fold", fold), ds.n_classes, deadline);
            total += accuracy(predict_pipeline(fp, test_x), test_y);
        } catch (const TimeoutError&) {
            throw;
        } catch (const std::exception&) {
            // failed fold scores 0
        }
    }
    return total / static_cast<double>(k);
}

// --- Canonical export / import -------------------------------------------------

struct ExportMeta {
    std::optional<double> cv_score;
    std::optional<std::string> dataset;
    std::optional<std::uint64_t> seed;

    bool operator==(const ExportMeta&) const = default;
};

inline constexpr const char* kExportHeader = "evopipe-export v1";

namespace detail {

// Shortest representation that parses back to the identical double. Doubles always
// carry a '.' or exponent so import can tell them from integers.
inline std::string render_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline std::string render_hp_value(const HpValue& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&v)) return render_double(*d);
    const auto& s = std::get<std::string>(v);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string render_hp(const Hyperparameters& hp) {
    std::string out;
    for (const auto& [k, v] : hp) {  // std::map: keys already sorted
        out += ' ';
        out += k;
        out += '=';
        out += render_hp_value(v);
    }
    return out;
}

inline void render_tree_node(const PipelineNode& n, int depth, std::string& out) {
    out.append(static_cast<std::size_t>(2 + 2 * depth), ' ');
    out += node_kind_name(n.kind);
    if (n.kind == NodeKind::Selector || n.kind == NodeKind::Transformer ||
        n.kind == NodeKind::Stack || n.kind == NodeKind::ClassifierRoot) {
        out += ' ';
        out += n.inst.spec_name;
        out += render_hp(n.inst.hp);
    }
    out += '\n';
    for (const auto& c : n.children) render_tree_node(c, depth + 1, out);
}

inline std::string render_call(const std::string& name, const Hyperparameters& hp) {
    std::string out = name + "(";
    bool first = true;
    for (const auto& [k, v] : hp) {
        if (!first) out += ", ";
        first = false;
        out += k + "=" + render_hp_value(v);
    }
    out += ")";
    return out;
}

// Pseudo-script rendering in the style of generated sklearn pipelines. This is
// documentation, not a program; import ignores it and export regenerates it.
struct ScriptChain {
    std::vector<const PipelineNode*> steps;  // outermost first
    const PipelineNode* bottom = nullptr;    // Source or Union
};

inline ScriptChain collect_chain(const PipelineNode& top) {
    ScriptChain ch;
    const PipelineNode* cur = &top;
    while (cur->kind != NodeKind::Source && cur->kind != NodeKind::Union) {
        ch.steps.push_back(cur);
        cur = &cur->children[0];
    }
    ch.bottom = cur;
    return ch;
}

inline std::string render_step_call(const PipelineNode& s) {
    switch (s.kind) {
        case NodeKind::Identity:
            return "FunctionTransformer(copy)";
        case NodeKind::Stack:
            return "StackingEstimator(estimator=" + render_call(s.inst.spec_name, s.inst.hp) + ")";
        default:
            return render_call(s.inst.spec_name, s.inst.hp);
    }
}

inline void emit_script_arg(const PipelineNode& s, int indent, bool last, std::string& out) {
    std::string line = render_step_call(s);
    if (!last) line += ",";
    if (s.kind == NodeKind::Identity) line += "  # Identity (skip)";
    out += std::string(static_cast<std::size_t>(indent), ' ') + line + "\n";
}

inline void render_union(const PipelineNode& u, int indent, bool last, std::string& out);

inline void render_branch(const PipelineNode& branch, int indent, bool last, std::string& out) {
    const ScriptChain ch = collect_chain(branch);
    const bool has_union = ch.bottom->kind == NodeKind::Union;
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    if (!has_union && ch.steps.empty()) {  // bare Source branch: raw features pass through
        out += pad + "FunctionTransformer(copy)" + (last ? "" : ",") + "\n";
        return;
    }
    if (!has_union && ch.steps.size() == 1) {
        emit_script_arg(*ch.steps[0], indent, last, out);
        return;
    }
    out += pad + "make_pipeline(\n";
    if (has_union) render_union(*ch.bottom, indent + 4, ch.steps.empty(), out);
    for (std::size_t i = ch.steps.size(); i-- > 0;)
        emit_script_arg(*ch.steps[i], indent + 4, i == 0, out);
    out += pad + ")" + (last ? "" : ",") + "\n";
}

inline void render_union(const PipelineNode& u, int indent, bool last, std::string& out) {
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    out += pad + "make_union(\n";
    for (std::size_t i = 0; i < u.children.size(); ++i)
        render_branch(u.children[i], indent + 4, i + 1 == u.children.size(), out);
    out += pad + ")" + (last ? "" : ",") + "\n";
}

inline std::string render_script(const PipelineTree& tree, const ExportMeta& meta) {
    std::string out;
    if (meta.cv_score)
        out += "# Average CV score on the training set was: " + render_double(*meta.cv_score) + "\n";
    const PipelineNode& root = tree.root;
    const ScriptChain ch = collect_chain(root.children[0]);
    if (ch.bottom->kind == NodeKind::Source && ch.steps.empty()) {
        out += "exported_pipeline = " + render_call(root.inst.spec_name, root.inst.hp) + "\n";
        return out;
    }
    out += "exported_pipeline = make_pipeline(\n";
    if (ch.bottom->kind == NodeKind::Union) render_union(*ch.bottom, 4, false, out);
    for (std::size_t i = ch.steps.size(); i-- > 0;) emit_script_arg(*ch.steps[i], 4, false, out);
    out += "    " + render_call(root.inst.spec_name, root.inst.hp) + "\n";
    out += ")\n";
    return out;
}

}  // namespace detail

// Canonical text artifact: versioned header, sorted metadata, indented node tree,
// rendered pseudo-script. export(import(text)) is byte-identical for any artifact
// this function produced.
inline std::string export_pipeline(const PipelineTree& tree, const ExportMeta& meta = {}) {
    std::string out = std::string(kExportHeader) + "\n";
    if (meta.cv_score || meta.dataset || meta.seed) {
        out += "meta\n";
        if (meta.cv_score) out += "  cv_score " + detail::render_double(*meta.cv_score) + "\n";
        if (meta.dataset) out += "  dataset " + *meta.dataset + "\n";
        if (meta.seed) out += "  seed " + std::to_string(*meta.seed) + "\n";
    }
    out += "tree\n";
    detail::render_tree_node(tree.root, 0, out);
    out += "script\n";
    std::istringstream script(detail::render_script(tree, meta));
    std::string line;
    while (std::getline(script, line)) out += "  " + line + "\n";
    return out;
}

inline std::string export_pipeline(const FittedPipeline& fp, const ExportMeta& meta = {}) {
    return export_pipeline(fp.tree, meta);
}

namespace detail {

inline HpValue parse_hp_value(std::string_view text, std::size_t line_no) {
    if (!text.empty() && text.front() == '"') {
        if (text.size() < 2 || text.back() != '"')
            throw ParseError("line " + std::to_string(line_no) + ": unterminated string value");
        std::string s;
        for (std::size_t i = 1; i + 1 < text.size(); ++i) {
            if (text[i] == '\\' && i + 2 < text.size()) ++i;
            s += text[i];
        }
        return s;
    }
    if (text.find_first_of(".eEn") != std::string_view::npos) {
        double d = 0.0;
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
        if (ec != std::errc{} || p != text.data() + text.size())
            throw ParseError("line " + std::to_string(line_no) + ": bad number '" +
                             std::string(text) + "'");
        return d;
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
    if (ec != std::errc{} || p != text.data() + text.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + std::string(text) +
                         "'");
    return i;
}

// Splits "key=value key=value" where string values are quoted and may contain
// spaces. Column numbers are not tracked inside values; line numbers suffice.
inline Hyperparameters parse_hp_tokens(std::string_view rest, std::size_t line_no) {
    Hyperparameters hp;
    std::size_t i = 0;
    while (i < rest.size()) {
        while (i < rest.size() && rest[i] == ' ') ++i;
        if (i >= rest.size()) break;
        const std::size_t eq = rest.find('=', i);
        if (eq == std::string_view::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected key=value near '" +
                             std::string(rest.substr(i)) + "'");
        const std::string key(rest.substr(i, eq - i));
        std::size_t end;
        if (eq + 1 < rest.size() && rest[eq + 1] == '"') {
            end = eq + 2;
            while (end < rest.size() && rest[end] != '"') {
                if (rest[end] == '\\') ++end;
                ++end;
            }
            if (end >= rest.size())
                throw ParseError("line " + std::to_string(line_no) + ": unterminated string value");
            ++end;
        } else {
            end = rest.find(' ', eq + 1);
            if (end == std::string_view::npos) end = rest.size();
        }
        hp[key] = parse_hp_value(rest.substr(eq + 1, end - (eq + 1)), line_no);
        i = end;
    }
    return hp;
}

inline std::optional<NodeKind> node_kind_from(std::string_view name) {
    for (NodeKind k : {NodeKind::Source, NodeKind::Selector, NodeKind::Transformer,
                       NodeKind::Identity, NodeKind::Stack, NodeKind::Union,
                       NodeKind::ClassifierRoot})
        if (name == node_kind_name(k)) return k;
    return std::nullopt;
}

}  // namespace detail

// Parses a canonical artifact back into a tree plus metadata and validates it
// against the registry.
inline std::pair<PipelineTree, ExportMeta> import_pipeline(const std::string& text,
                                                           const Registry& registry) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };

    if (!next_line() || line != kExportHeader)
        throw ParseError("line 1: expected '" + std::string(kExportHeader) + "'");

    ExportMeta meta;
    bool have_line = next_line();
    if (have_line && line == "meta") {
        while ((have_line = next_line()) && line.rfind("  ", 0) == 0) {
            std::string_view body(line);
            body.remove_prefix(2);
            const std::size_t sp = body.find(' ');
            if (sp == std::string_view::npos)
                throw ParseError("line " + std::to_string(line_no) + ": bad meta entry");
            const std::string_view key = body.substr(0, sp);
            const std::string_view value = body.substr(sp + 1);
            if (key == "cv_score") {
                double d = 0.0;
                auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), d);
                if (ec != std::errc{} || p != value.data() + value.size())
                    throw ParseError("line " + std::to_string(line_no) + ": bad cv_score");
                meta.cv_score = d;
            } else if (key == "dataset") {
                meta.dataset = std::string(value);
            } else if (key == "seed") {
                std::uint64_t s = 0;
                auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), s);
                if (ec != std::errc{} || p != value.data() + value.size())
                    throw ParseError("line " + std::to_string(line_no) + ": bad seed");
                meta.seed = s;
            } else {
                throw ParseError("line " + std::to_string(line_no) + ": unknown meta key '" +
                                 std::string(key) + "'");
            }
        }
    }
    if (!have_line || line != "tree")
        throw ParseError("line " + std::to_string(line_no) + ": expected 'tree' section");

    struct Level {
        PipelineNode* node;
        int depth;
    };
    std::optional<PipelineNode> root;
    std::vector<Level> stack;

    while ((have_line = next_line())) {
        if (line == "script" || line.empty()) break;
        std::size_t indent = 0;
        while (indent < line.size() && line[indent] == ' ') ++indent;
        if (indent < 2 || indent % 2 != 0)
            throw ParseError("line " + std::to_string(line_no) + ": bad tree indentation (column " +
                             std::to_string(indent + 1) + ")");
        const int depth = static_cast<int>(indent / 2) - 1;
        std::string_view body(line);
        body.remove_prefix(indent);

        const std::size_t sp = body.find(' ');
        const std::string_view kind_name = sp == std::string_view::npos ? body : body.substr(0, sp);
        auto kind = detail::node_kind_from(kind_name);
        if (!kind)
            throw ParseError("line " + std::to_string(line_no) + ": unknown node kind '" +
                             std::string(kind_name) + "'");

        PipelineNode node;
        node.kind = *kind;
        if (*kind == NodeKind::Identity) node.inst.spec_name = "Identity";
        if (*kind == NodeKind::Union) node.inst.spec_name = "Union";
        if (*kind == NodeKind::Selector || *kind == NodeKind::Transformer ||
            *kind == NodeKind::Stack || *kind == NodeKind::ClassifierRoot) {
            if (sp == std::string_view::npos)
                throw ParseError("line " + std::to_string(line_no) + ": " +
                                 std::string(kind_name) + " needs an operator name");
            std::string_view rest = body.substr(sp + 1);
            const std::size_t sp2 = rest.find(' ');
            node.inst.spec_name =
                std::string(sp2 == std::string_view::npos ? rest : rest.substr(0, sp2));
            if (sp2 != std::string_view::npos)
                node.inst.hp = detail::parse_hp_tokens(rest.substr(sp2 + 1), line_no);
        }

        if (depth == 0) {
            if (root) throw ParseError("line " + std::to_string(line_no) + ": multiple root nodes");
            root = std::move(node);
            stack = {{&*root, 0}};
            continue;
        }
        while (!stack.empty() && stack.back().depth >= depth) stack.pop_back();
        if (stack.empty() || stack.back().depth != depth - 1)
            throw ParseError("line " + std::to_string(line_no) + ": node depth skips a level");
        PipelineNode* parent = stack.back().node;
        parent->children.push_back(std::move(node));
        stack.push_back({&parent->children.back(), depth});
    }
    if (!root) throw ParseError("artifact has no tree nodes (truncated?)");

    PipelineTree tree{std::move(*root)};
    if (auto v = validate(tree, registry))
        throw ParseError("validation failed at " + v->path + ": " + v->message);
    return {std::move(tree), std::move(meta)};
}

// The canonical residual-block topology: three stacked LR layers on one branch,
// an identity skip on the other, merged and fed to a final LR.
inline PipelineTree make_residual_block_tree(const Hyperparameters& lr1, const Hyperparameters& lr2,
                                             const Hyperparameters& lr3,
                                             const Hyperparameters& lr4) {
    auto lr_inst = [](const Hyperparameters& hp) {
        return OperatorInstance{"LogisticRegressionNN", hp};
    };
    PipelineNode chain = PipelineNode::unary(
        NodeKind::Stack, lr_inst(lr3),
        PipelineNode::unary(NodeKind::Stack, lr_inst(lr2),
                            PipelineNode::unary(NodeKind::Stack, lr_inst(lr1),
                                                PipelineNode::source())));
    PipelineNode skip = PipelineNode::unary(NodeKind::Identity, OperatorInstance{"Identity", {}},
                                            PipelineNode::source());
    std::vector<PipelineNode> branches;
    branches.push_back(std::move(chain));
    branches.push_back(std::move(skip));
    PipelineNode root = PipelineNode::unary(NodeKind::ClassifierRoot, lr_inst(lr4),
                                            PipelineNode::union_of(std::move(branches)));
    return PipelineTree{std::move(root)};
}

}  // namespace evopipe

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "evopipe/dataset.hpp"
#include "evopipe/evolve.hpp"
#include "evopipe/pipeline.hpp"

namespace evopipe {

// One cell of the experiment grid.
struct ExperimentConfig {
    std::string dataset;    // PMLB / synthetic dataset name; empty when data_path is set
    std::string data_path;  // local CSV path
    bool nn_enabled = false;
    std::string template_str;  // empty = free structure
    EstimatorFilter estimator_filter = EstimatorFilter::All;
    bool single_estimator_mode = false;
    int generations = 5;
    std::size_t population_size = 20;
    int cv_folds = 5;
    double train_fraction = 0.8;
    std::uint64_t seed = 42;
    int replicates = 3;
    double eval_timeout_s = 60.0;
};

// Mechanical family labels mirroring the four experiment types: a single neural
// estimator is NN, a single shallow estimator is Shallow, free-form search is
// TPOT or TPOT-NN depending on whether the neural estimators are enabled.
inline std::string family_label(const ExperimentConfig& cfg) {
    const bool neural_filter = cfg.estimator_filter == EstimatorFilter::LrOnly ||
                               cfg.estimator_filter == EstimatorFilter::MlpOnly;
    if (cfg.single_estimator_mode) return neural_filter ? "NN" : "Shallow";
    return cfg.nn_enabled ? "TPOT-NN" : "TPOT";
}

inline std::string display_dataset(const ExperimentConfig& cfg) {
    if (!cfg.dataset.empty()) return cfg.dataset;
    return std::filesystem::path(cfg.data_path).stem().string();
}

inline void check_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.dataset.empty() && cfg.data_path.empty())
        throw ConfigError("experiment needs a dataset name or a data path");
    if (!cfg.dataset.empty() && !cfg.data_path.empty())
        throw ConfigError("dataset name and data path are mutually exclusive");
    if (cfg.replicates < 1) throw ConfigError("replicates must be at least 1");
    if (cfg.single_estimator_mode && !cfg.template_str.empty())
        throw ConfigError("template and single-estimator mode are mutually exclusive");
    const bool neural_filter = cfg.estimator_filter == EstimatorFilter::LrOnly ||
                               cfg.estimator_filter == EstimatorFilter::MlpOnly;
    if (neural_filter && !cfg.nn_enabled)
        throw ConfigError("estimator filter requests a neural classifier but nn_enabled is false");
}

// Filesystem-safe identifier for one config; doubles as the result file stem.
inline std::string config_id(const ExperimentConfig& cfg) {
    std::string id = display_dataset(cfg) + "_" + family_label(cfg) + "_" +
                     estimator_filter_name(cfg.estimator_filter) + "_p" +
                     std::to_string(cfg.population_size) + "_g" + std::to_string(cfg.generations) +
                     "_f" + std::to_string(cfg.cv_folds) + "_r" + std::to_string(cfg.replicates) +
                     "_s" + std::to_string(cfg.seed);
    if (!cfg.template_str.empty()) id += "_t" + std::to_string(hash_str(7, cfg.template_str) % 100000);
    for (char& ch : id)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.')
            ch = '-';
    return id;
}

struct ReplicateRecord {
    std::uint64_t seed = 0;
    double cv_accuracy = 0.0;
    double test_accuracy = 0.0;
    double duration_s = 0.0;
    int complexity = 1;
    std::vector<GenerationRecord> gen_log;  // persisted without elapsed times
    std::string pipeline_export;
};

struct Summary {
    double mean = 0.0, min = 0.0, max = 0.0, std_dev = 0.0;
};

inline Summary summarize(std::span<const double> values) {
    Summary s;
    s.min = values[0];
    s.max = values[0];
    for (double v : values) {
        s.mean += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.mean /= static_cast<double>(values.size());
    for (double v : values) s.std_dev += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(s.std_dev / static_cast<double>(values.size()));
    return s;
}

struct ExperimentResult {
    ExperimentConfig config;
    std::string family;
    std::vector<ReplicateRecord> replicates;
    Summary test_accuracy_summary;
    Summary duration_summary;
};

// --- Dataset resolution -----------------------------------------------------------

// Synthetic dataset names resolved without touching the network or disk. The
// noisy variant is the desk-scale hill/valley benchmark.
inline constexpr std::uint64_t kSyntheticSeed = 97;

inline std::optional<Dataset> make_synthetic(const std::string& name) {
    if (name == "synthetic-hill-valley-noisy") return make_hill_valley(400, 50, true, kSyntheticSeed);
    if (name == "synthetic-hill-valley") return make_hill_valley(400, 50, false, kSyntheticSeed);
    return std::nullopt;
}

// Fallback used for names that are neither synthetic nor cached; the CLI wires
// the HTTP fetch in here so this header stays network-free.
using DatasetFetcher = std::function<Dataset(const std::string& name)>;

inline Dataset resolve_dataset(const ExperimentConfig& cfg, const std::filesystem::path& cache_dir,
                               const DatasetFetcher& fetcher = {}) {
    if (!cfg.data_path.empty()) return load_csv(cfg.data_path);
    if (auto ds = make_synthetic(cfg.dataset)) return std::move(*ds);
    const auto cached = pmlb_cache_path(cache_dir, cfg.dataset);
    if (std::filesystem::exists(cached)) return load_pmlb_file(cached, cfg.dataset);
    if (fetcher) return fetcher(cfg.dataset);
    throw IoError("dataset '" + cfg.dataset + "' is not cached under " + cache_dir.string() +
                  " and no fetcher is configured");
}

// --- Experiment execution ----------------------------------------------------------

inline GpConfig gp_config_for(const ExperimentConfig& cfg, std::uint64_t replicate_seed,
                              std::size_t eval_workers) {
    GpConfig gp;
    gp.population_size = cfg.population_size;
    gp.generations = cfg.generations;
    gp.cv_folds = cfg.cv_folds;
    gp.eval_timeout_s = cfg.eval_timeout_s;
    gp.seed = replicate_seed;
    gp.single_estimator_mode = cfg.single_estimator_mode;
    gp.registry = default_registry(cfg.nn_enabled, cfg.estimator_filter);
    if (!cfg.template_str.empty())
        gp.pipeline_template = parse_template(cfg.template_str, gp.registry);
    gp.n_workers = eval_workers;
    return gp;
}

// Runs one experiment: per replicate r, split with seed+r, evolve on the train
// side, then score the best-by-accuracy pipeline exactly once on the held-out
// rows. Everything except durations is deterministic for a fixed config.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& ds,
                                       std::size_t eval_workers = 1,
                                       const ProgressSink& sink = {}) {
    check_experiment_config(cfg);
    ExperimentResult result;
    result.config = cfg;
    result.family = family_label(cfg);

    for (int r = 0; r < cfg.replicates; ++r) {
        const std::uint64_t rep_seed = cfg.seed + static_cast<std::uint64_t>(r);
        const auto t0 = std::chrono::steady_clock::now();

        auto [train, test] = train_test_split(ds, cfg.train_fraction, rep_seed);
        GpConfig gp = gp_config_for(cfg, rep_seed, eval_workers);
        EvolutionResult evo = run_evolution(gp, train, sink);

        ReplicateRecord rec;
        rec.seed = rep_seed;
        rec.cv_accuracy = evo.best.fitness->cv_accuracy;
        rec.complexity = evo.best.fitness->complexity;
        rec.gen_log = evo.log;
        try {
            FittedPipeline fp = fit_pipeline(gp.registry, evo.best.tree, train.features,
                                             train.labels, hash_seed(rep_seed, "final_fit"),
                                             ds.n_classes);
            rec.test_accuracy = accuracy(predict_pipeline(fp, test.features), test.labels);
        } catch (const std::exception&) {
            rec.test_accuracy = 0.0;  // a pipeline that cannot refit scores zero
        }
        rec.duration_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        ExportMeta meta;
        meta.cv_score = rec.cv_accuracy;
        meta.dataset = display_dataset(cfg);
        meta.seed = rep_seed;
        rec.pipeline_export = export_pipeline(evo.best.tree, meta);
        result.replicates.push_back(std::move(rec));
    }

    std::vector<double> accs, durs;
    for (const auto& rec : result.replicates) {
        accs.push_back(rec.test_accuracy);
        durs.push_back(rec.duration_s);
    }
    result.test_accuracy_summary = summarize(accs);
    result.duration_summary = summarize(durs);
    return result;
}

// --- Result persistence -------------------------------------------------------------

inline constexpr const char* kResultHeader = "evopipe-result v1";

namespace detail {

inline std::string render_bool(bool b) { return b ? "true" : "false"; }

inline std::string render_result(const ExperimentResult& r) {
    const auto& cfg = r.config;
    std::string out = std::string(kResultHeader) + "\n";
    out += "config\n";
    out += "  cv_folds " + std::to_string(cfg.cv_folds) + "\n";
    if (!cfg.data_path.empty()) out += "  data_path " + cfg.data_path + "\n";
    if (!cfg.dataset.empty()) out += "  dataset " + cfg.dataset + "\n";
    out += "  estimators " + std::string(estimator_filter_name(cfg.estimator_filter)) + "\n";
    out += "  eval_timeout_s " + render_double(cfg.eval_timeout_s) + "\n";
    out += "  generations " + std::to_string(cfg.generations) + "\n";
    out += "  nn_enabled " + render_bool(cfg.nn_enabled) + "\n";
    out += "  population_size " + std::to_string(cfg.population_size) + "\n";
    out += "  replicates " + std::to_string(cfg.replicates) + "\n";
    out += "  seed " + std::to_string(cfg.seed) + "\n";
    out += "  single_estimator_mode " + render_bool(cfg.single_estimator_mode) + "\n";
    if (!cfg.template_str.empty()) out += "  template " + cfg.template_str + "\n";
    out += "  train_fraction " + render_double(cfg.train_fraction) + "\n";
    out += "family " + r.family + "\n";
    for (std::size_t i = 0; i < r.replicates.size(); ++i) {
        const auto& rec = r.replicates[i];
        out += "replicate " + std::to_string(i) + "\n";
        out += "  seed " + std::to_string(rec.seed) + "\n";
        out += "  cv_accuracy " + render_double(rec.cv_accuracy) + "\n";
        out += "  test_accuracy " + render_double(rec.test_accuracy) + "\n";
        out += "  duration_s " + render_double(rec.duration_s) + "\n";
        out += "  complexity " + std::to_string(rec.complexity) + "\n";
        out += "  generations_log\n";
        for (const auto& g : rec.gen_log)
            out += "    " + std::to_string(g.generation) + " " + render_double(g.best_accuracy) +
                   " " + render_double(g.mean_accuracy) + " " + std::to_string(g.front1_size) +
                   "\n";
        out += "  pipeline\n";
        std::istringstream pipe(rec.pipeline_export);
        std::string line;
        while (std::getline(pipe, line)) out += "    " + line + "\n";
    }
    out += "summary\n";
    auto emit_summary = [&](const char* key, const Summary& s) {
        out += std::string("  ") + key + " mean " + render_double(s.mean) + " min " +
               render_double(s.min) + " max " + render_double(s.max) + " std " +
               render_double(s.std_dev) + "\n";
    };
    emit_summary("test_accuracy", r.test_accuracy_summary);
    emit_summary("duration_s", r.duration_summary);
    return out;
}

inline double parse_double_or_throw(std::string_view s, std::size_t line_no) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError("result line " + std::to_string(line_no) + ": bad number '" +
                         std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int_or_throw(std::string_view s, std::size_t line_no) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError("result line " + std::to_string(line_no) + ": bad integer '" +
                         std::string(s) + "'");
    return v;
}

}  // namespace detail

inline ExperimentResult parse_result(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto next = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    auto split_kv = [&](std::string_view body) -> std::pair<std::string_view, std::string_view> {
        const std::size_t sp = body.find(' ');
        if (sp == std::string_view::npos) return {body, {}};
        return {body.substr(0, sp), body.substr(sp + 1)};
    };

    if (!next() || line != kResultHeader)
        throw ParseError("result line 1: expected '" + std::string(kResultHeader) + "'");
    if (!next() || line != "config") throw ParseError("result line 2: expected 'config'");

    ExperimentResult r;
    bool have = false;
    while ((have = next()) && line.rfind("  ", 0) == 0) {
        auto [key, value] = split_kv(std::string_view(line).substr(2));
        auto& cfg = r.config;
        if (key == "cv_folds") cfg.cv_folds = static_cast<int>(detail::parse_int_or_throw(value, line_no));
        else if (key == "data_path") cfg.data_path = std::string(value);
        else if (key == "dataset") cfg.dataset = std::string(value);
        else if (key == "estimators") {
            bool found = false;
            for (auto f : {EstimatorFilter::All, EstimatorFilter::LrOnly, EstimatorFilter::MlpOnly,
                           EstimatorFilter::NbOnly, EstimatorFilter::TreeOnly, EstimatorFilter::KnnOnly})
                if (value == estimator_filter_name(f)) {
                    cfg.estimator_filter = f;
                    found = true;
                }
            if (!found)
                throw ParseError("result line " + std::to_string(line_no) + ": unknown filter");
        } else if (key == "eval_timeout_s") cfg.eval_timeout_s = detail::parse_double_or_throw(value, line_no);
        else if (key == "generations") cfg.generations = static_cast<int>(detail::parse_int_or_throw(value, line_no));
        else if (key == "nn_enabled") cfg.nn_enabled = value == "true";
        else if (key == "population_size") cfg.population_size = static_cast<std::size_t>(detail::parse_int_or_throw(value, line_no));
        else if (key == "replicates") cfg.replicates = static_cast<int>(detail::parse_int_or_throw(value, line_no));
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_int_or_throw(value, line_no));
        else if (key == "single_estimator_mode") cfg.single_estimator_mode = value == "true";
        else if (key == "template") cfg.template_str = std::string(value);
        else if (key == "train_fraction") cfg.train_fraction = detail::parse_double_or_throw(value, line_no);
        else throw ParseError("result line " + std::to_string(line_no) + ": unknown config key '" + std::string(key) + "'");
    }
    if (!have || line.rfind("family ", 0) != 0)
        throw ParseError("result line " + std::to_string(line_no) + ": expected 'family'");
    r.family = line.substr(7);

    have = next();
    while (have && line.rfind("replicate ", 0) == 0) {
        ReplicateRecord rec;
        while ((have = next()) && line.rfind("  ", 0) == 0 && line.rfind("    ", 0) != 0) {
            auto [key, value] = split_kv(std::string_view(line).substr(2));
            if (key == "seed") rec.seed = static_cast<std::uint64_t>(detail::parse_int_or_throw(value, line_no));
            else if (key == "cv_accuracy") rec.cv_accuracy = detail::parse_double_or_throw(value, line_no);
            else if (key == "test_accuracy") rec.test_accuracy = detail::parse_double_or_throw(value, line_no);
            else if (key == "duration_s") rec.duration_s = detail::parse_double_or_throw(value, line_no);
            else if (key == "complexity") rec.complexity = static_cast<int>(detail::parse_int_or_throw(value, line_no));
            else if (key == "generations_log") {
                while ((have = next()) && line.rfind("    ", 0) == 0) {
                    std::istringstream row(line.substr(4));
                    GenerationRecord g;
                    std::string a, b, c, d;
                    if (!(row >> a >> b >> c >> d))
                        throw ParseError("result line " + std::to_string(line_no) + ": bad generation row");
                    g.generation = static_cast<int>(detail::parse_int_or_throw(a, line_no));
                    g.best_accuracy = detail::parse_double_or_throw(b, line_no);
                    g.mean_accuracy = detail::parse_double_or_throw(c, line_no);
                    g.front1_size = static_cast<std::size_t>(detail::parse_int_or_throw(d, line_no));
                    rec.gen_log.push_back(g);
                }
                if (!have || line != "  pipeline")
                    throw ParseError("result line " + std::to_string(line_no) + ": expected 'pipeline'");
                while ((have = next()) && line.rfind("    ", 0) == 0)
                    rec.pipeline_export += line.substr(4) + "\n";
                break;
            } else {
                throw ParseError("result line " + std::to_string(line_no) + ": unknown replicate key '" + std::string(key) + "'");
            }
        }
        r.replicates.push_back(std::move(rec));
    }
    if (!have || line != "summary")
        throw ParseError("result line " + std::to_string(line_no) + ": expected 'summary'");
    auto parse_summary = [&](const char* key) -> Summary {
        if (!next()) throw ParseError("result: truncated summary");
        std::istringstream row(line);
        std::string k, mk, mv, ik, iv, xk, xv, sk, sv;
        if (!(row >> k >> mk >> mv >> ik >> iv >> xk >> xv >> sk >> sv) || k != key)
            throw ParseError("result line " + std::to_string(line_no) + ": bad summary row");
        Summary s;
        s.mean = detail::parse_double_or_throw(mv, line_no);
        s.min = detail::parse_double_or_throw(iv, line_no);
        s.max = detail::parse_double_or_throw(xv, line_no);
        s.std_dev = detail::parse_double_or_throw(sv, line_no);
        return s;
    };
    r.test_accuracy_summary = parse_summary("test_accuracy");
    r.duration_summary = parse_summary("duration_s");
    return r;
}

inline std::string serialize_result(const ExperimentResult& r) { return detail::render_result(r); }

inline ExperimentResult load_result(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open result file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_result(buf.str());
}

namespace detail {

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write file: " + tmp.string());
        out << content;
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace detail

struct ResultPaths {
    std::filesystem::path result_file;
    std::filesystem::path table_file;
};

inline constexpr const char* kFlatTableHeader =
    "dataset,family,replicate,seed,cv_accuracy,test_accuracy,duration_s,complexity";

// One structured result file plus one flat per-replicate CSV, both written
// atomically (temp file, then rename).
inline ResultPaths write_results(const ExperimentResult& r, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir))
        throw IoError("output directory is not writable: " + out_dir.string());
    const std::string id = config_id(r.config);
    ResultPaths paths{out_dir / (id + ".result.txt"), out_dir / (id + ".replicates.csv")};

    detail::atomic_write(paths.result_file, serialize_result(r));

    std::string csv = std::string(kFlatTableHeader) + "\n";
    const std::string ds = display_dataset(r.config);
    for (std::size_t i = 0; i < r.replicates.size(); ++i) {
        const auto& rec = r.replicates[i];
        csv += ds + "," + r.family + "," + std::to_string(i) + "," + std::to_string(rec.seed) +
               "," + detail::render_double(rec.cv_accuracy) + "," +
               detail::render_double(rec.test_accuracy) + "," +
               detail::render_double(rec.duration_s) + "," + std::to_string(rec.complexity) + "\n";
    }
    detail::atomic_write(paths.table_file, csv);
    return paths;
}

// Result text with wall-clock fields removed; two runs of the same config must
// agree on this payload byte for byte.
inline std::string strip_durations(const std::string& result_text) {
    std::istringstream in(result_text);
    std::string line, out;
    while (std::getline(in, line)) {
        std::string_view body(line);
        while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
        if (body.rfind("duration_s", 0) == 0) continue;
        out += line + "\n";
    }
    return out;
}

// --- Grid runner ----------------------------------------------------------------

struct GridEntry {
    ExperimentConfig config;
    std::string status;  // "done", "skipped (exists)", or "failed: <msg>"
    std::optional<ExperimentResult> result;
};

// Runs a list of configs, persisting each result as it completes. Completed
// configs (result file already present) are skipped, which makes interrupted
// grids resumable. A failing experiment is recorded and does not abort the rest.
inline std::vector<GridEntry> run_grid(const std::vector<ExperimentConfig>& grid,
                                       const std::filesystem::path& out_dir, std::size_t workers,
                                       const std::filesystem::path& cache_dir,
                                       const DatasetFetcher& fetcher = {},
                                       const std::function<void(const std::string&)>& log = {}) {
    if (grid.empty()) throw ConfigError("empty experiment grid");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);

    // Datasets are resolved once per distinct source, up front, so worker threads
    // never touch the resolver concurrently.
    std::map<std::string, Dataset> datasets;
    for (const auto& cfg : grid) {
        check_experiment_config(cfg);
        const std::string key = cfg.data_path.empty() ? cfg.dataset : cfg.data_path;
        if (!datasets.count(key)) datasets.emplace(key, resolve_dataset(cfg, cache_dir, fetcher));
    }

    std::vector<GridEntry> entries(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) entries[i].config = grid[i];

    std::mutex log_mu;
    auto say = [&](const std::string& msg) {
        if (!log) return;
        std::lock_guard lock(log_mu);
        log(msg);
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < grid.size(); i = next.fetch_add(1)) {
            GridEntry& entry = entries[i];
            const std::string id = config_id(entry.config);
            const auto result_file = out_dir / (id + ".result.txt");
            if (std::filesystem::exists(result_file)) {
                entry.status = "skipped (exists)";
                entry.result = load_result(result_file);
                say(id + ": skipped (exists)");
                continue;
            }
            try {
                const std::string key =
                    entry.config.data_path.empty() ? entry.config.dataset : entry.config.data_path;
                ExperimentResult res = run_experiment(entry.config, datasets.at(key), 1);
                write_results(res, out_dir);
                entry.result = std::move(res);
                entry.status = "done";
                say(id + ": done");
            } catch (const std::exception& e) {
                entry.status = std::string("failed: ") + e.what();
                detail::atomic_write(out_dir / (id + ".error.txt"), entry.status + "\n");
                say(id + ": " + entry.status);
            }
        }
    };

    const std::size_t n_workers = std::max<std::size_t>(1, std::min(workers, grid.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    std::string manifest;
    for (const auto& entry : entries)
        manifest += config_id(entry.config) + " " + entry.status + "\n";
    detail::atomic_write(out_dir / "grid-manifest.txt", manifest);
    return entries;
}

// The desk-scale default grid: two datasets by the four experiment families.
inline std::vector<ExperimentConfig> desk_scale_grid(std::uint64_t seed = 42, int replicates = 3,
                                                     std::size_t population = 20,
                                                     int generations = 5) {
    std::vector<ExperimentConfig> grid;
    for (const char* ds : {"breast-cancer-wisconsin", "synthetic-hill-valley-noisy"}) {
        auto base = ExperimentConfig{};
        base.dataset = ds;
        base.seed = seed;
        base.replicates = replicates;
        base.population_size = population;
        base.generations = generations;

        ExperimentConfig nn = base;  // NN: a single MLP classifier, GP tunes hyperparameters
        nn.nn_enabled = true;
        nn.estimator_filter = EstimatorFilter::MlpOnly;
        nn.single_estimator_mode = true;
        grid.push_back(nn);

        ExperimentConfig tpot = base;  // TPOT: free structure, shallow operators only
        grid.push_back(tpot);

        ExperimentConfig tpot_nn = base;  // TPOT-NN: free structure, neural estimators added
        tpot_nn.nn_enabled = true;
        grid.push_back(tpot_nn);

        ExperimentConfig shallow = base;  // Shallow: a single GaussianNB estimator
        shallow.estimator_filter = EstimatorFilter::NbOnly;
        shallow.single_estimator_mode = true;
        grid.push_back(shallow);
    }
    return grid;
}

// --- Reporting ------------------------------------------------------------------

namespace detail {

inline std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline std::string pad_right(std::string s, std::size_t width) {
    while (s.size() < width) s += ' ';
    return s;
}

inline std::string table1_family_name(const std::string& family) {
    if (family == "NN") return "NN (single estimator)";
    if (family == "Shallow") return "Shallow (single estimator)";
    return family;
}

}  // namespace detail

// Aligned text tables per dataset: test accuracy and training duration per
// family (mean / min / max / std), plus the NN-vs-TPOT-NN accuracy spread ratio.
inline std::string report_summary(const std::vector<std::filesystem::path>& result_files) {
    if (result_files.empty()) throw ConfigError("report needs at least one result file");

    struct FamilyData {
        std::vector<double> accs, durs;
    };
    std::map<std::string, std::map<std::string, FamilyData>> by_dataset;
    for (const auto& path : result_files) {
        ExperimentResult r = load_result(path);
        auto& fam = by_dataset[display_dataset(r.config)][r.family];
        for (const auto& rec : r.replicates) {
            fam.accs.push_back(rec.test_accuracy);
            fam.durs.push_back(rec.duration_s);
        }
    }

    constexpr std::size_t kFam = 28, kCol = 12;
    std::string out;
    for (const auto& [dataset, families] : by_dataset) {
        out += "dataset: " + dataset + "\n";
        auto header = [&](const char* title) {
            out += "  " + std::string(title) + "\n";
            out += "  " + detail::pad_right("family", kFam) + detail::pad_right("mean", kCol) +
                   detail::pad_right("min", kCol) + detail::pad_right("max", kCol) +
                   detail::pad_right("std", kCol) + "\n";
        };
        header("test accuracy");
        for (const auto& [family, data] : families) {
            const Summary s = summarize(data.accs);
            out += "  " + detail::pad_right(detail::table1_family_name(family), kFam) +
                   detail::pad_right(detail::fixed4(s.mean), kCol) +
                   detail::pad_right(detail::fixed4(s.min), kCol) +
                   detail::pad_right(detail::fixed4(s.max), kCol) +
                   detail::pad_right(detail::fixed4(s.std_dev), kCol) + "\n";
        }
        header("training time (s)");
        for (const auto& [family, data] : families) {
            const Summary s = summarize(data.durs);
            out += "  " + detail::pad_right(detail::table1_family_name(family), kFam) +
                   detail::pad_right(detail::fixed4(s.mean), kCol) +
                   detail::pad_right(detail::fixed4(s.min), kCol) +
                   detail::pad_right(detail::fixed4(s.max), kCol) +
                   detail::pad_right(detail::fixed4(s.std_dev), kCol) + "\n";
        }
        const auto nn = families.find("NN");
        const auto tpot_nn = families.find("TPOT-NN");
        if (nn != families.end() && tpot_nn != families.end()) {
            const double nn_std = summarize(nn->second.accs).std_dev;
            const double tn_std = summarize(tpot_nn->second.accs).std_dev;
            std::string ratio;
            if (nn_std == tn_std) ratio = detail::fixed4(1.0);
            else if (tn_std == 0.0) ratio = "inf";
            else ratio = detail::fixed4(nn_std / tn_std);
            out += "  accuracy std ratio (NN / TPOT-NN): " + ratio + "\n";
        }
        out += "\n";
    }
    return out;
}

}  // namespace evopipe

// evopipe command line: run experiments, run the desk-scale grid, report result
// tables, and fit / apply exported pipelines.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evopipe/evopipe.hpp"
#include "evopipe/pmlb.hpp"

namespace {

struct CommonOpts {
    std::string dataset;
    std::string data_path;
    std::string cache_dir = "data";
    std::string base_url = evopipe::kDefaultPmlbBaseUrl;
};

void add_data_opts(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--dataset", opts.dataset, "dataset name (PMLB or synthetic-hill-valley[-noisy])");
    cmd->add_option("--data-path", opts.data_path, "local CSV file (target = last column)");
    cmd->add_option("--cache-dir", opts.cache_dir, "PMLB cache directory")->capture_default_str();
    cmd->add_option("--base-url", opts.base_url, "PMLB download base URL")->capture_default_str();
}

evopipe::DatasetFetcher make_fetcher(const CommonOpts& opts) {
    return [opts](const std::string& name) {
        std::cerr << "fetching " << name << " from " << opts.base_url << "\n";
        return evopipe::fetch_pmlb(name, opts.cache_dir, opts.base_url);
    };
}

evopipe::EstimatorFilter parse_filter(const std::string& s) {
    for (auto f : {evopipe::EstimatorFilter::All, evopipe::EstimatorFilter::LrOnly,
                   evopipe::EstimatorFilter::MlpOnly, evopipe::EstimatorFilter::NbOnly,
                   evopipe::EstimatorFilter::TreeOnly, evopipe::EstimatorFilter::KnnOnly})
        if (s == evopipe::estimator_filter_name(f)) return f;
    throw CLI::ValidationError("--estimators", "unknown filter '" + s + "'");
}

void print_result(const evopipe::ExperimentResult& res) {
    std::cout << "family: " << res.family << "\n";
    for (std::size_t i = 0; i < res.replicates.size(); ++i) {
        const auto& rec = res.replicates[i];
        std::cout << "  replicate " << i << ": seed=" << rec.seed
                  << " cv=" << rec.cv_accuracy << " test=" << rec.test_accuracy
                  << " complexity=" << rec.complexity << " duration=" << rec.duration_s << "s\n";
    }
    std::cout << "  test accuracy mean=" << res.test_accuracy_summary.mean
              << " min=" << res.test_accuracy_summary.min
              << " max=" << res.test_accuracy_summary.max
              << " std=" << res.test_accuracy_summary.std_dev << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evopipe: genetic-programming pipeline search with NSGA-II selection"};
    app.require_subcommand(1);

    // --- run -------------------------------------------------------------
    auto* run = app.add_subcommand("run", "run one experiment configuration");
    CommonOpts run_data;
    add_data_opts(run, run_data);
    evopipe::ExperimentConfig cfg;
    std::string estimators = "all";
    std::size_t workers = 1;
    std::string out_dir = "results";
    run->add_flag("--nn", cfg.nn_enabled, "enable the neural estimators");
    run->add_option("--template", cfg.template_str, "pipeline template, e.g. Selector-Transformer-Classifier");
    run->add_option("--estimators", estimators, "classifier filter: all, lr, mlp (also nb, tree, knn)")
        ->capture_default_str();
    run->add_flag("--single-estimator", cfg.single_estimator_mode,
                  "pipelines are a single classifier; GP tunes hyperparameters only");
    run->add_option("--generations", cfg.generations)->capture_default_str();
    run->add_option("--population", cfg.population_size)->capture_default_str();
    run->add_option("--cv-folds", cfg.cv_folds)->capture_default_str();
    run->add_option("--train-fraction", cfg.train_fraction)->capture_default_str();
    run->add_option("--seed", cfg.seed)->capture_default_str();
    run->add_option("--replicates", cfg.replicates)->capture_default_str();
    run->add_option("--timeout", cfg.eval_timeout_s, "per-evaluation timeout in seconds")
        ->capture_default_str();
    run->add_option("--workers", workers, "concurrent pipeline evaluations")->capture_default_str();
    run->add_option("--out", out_dir, "directory for result files")->capture_default_str();

    // --- grid ------------------------------------------------------------
    auto* grid_cmd = app.add_subcommand("grid", "run the desk-scale experiment grid");
    CommonOpts grid_data;
    add_data_opts(grid_cmd, grid_data);
    std::uint64_t grid_seed = 42;
    int grid_replicates = 3, grid_generations = 5;
    std::size_t grid_population = 20, grid_workers = 1;
    std::string grid_out = "results";
    grid_cmd->add_option("--seed", grid_seed)->capture_default_str();
    grid_cmd->add_option("--replicates", grid_replicates)->capture_default_str();
    grid_cmd->add_option("--population", grid_population)->capture_default_str();
    grid_cmd->add_option("--generations", grid_generations)->capture_default_str();
    grid_cmd->add_option("--workers", grid_workers, "experiments run in parallel")->capture_default_str();
    grid_cmd->add_option("--out", grid_out)->capture_default_str();

    // --- report ----------------------------------------------------------
    auto* report_cmd = app.add_subcommand("report", "summary tables from result files");
    std::vector<std::string> report_inputs;
    report_cmd->add_option("paths", report_inputs, "result files or directories")->required();

    // --- fit -------------------------------------------------------------
    auto* fit_cmd = app.add_subcommand("fit", "fit one exported pipeline on a dataset");
    CommonOpts fit_data;
    add_data_opts(fit_cmd, fit_data);
    std::string fit_pipeline_path;
    std::uint64_t fit_seed = 42;
    int fit_cv_folds = 5;
    fit_cmd->add_option("--pipeline", fit_pipeline_path, "pipeline export file")->required();
    fit_cmd->add_option("--seed", fit_seed)->capture_default_str();
    fit_cmd->add_option("--cv-folds", fit_cv_folds)->capture_default_str();

    // --- predict ----------------------------------------------------------
    auto* predict_cmd = app.add_subcommand("predict", "fit an exported pipeline and label new rows");
    CommonOpts predict_data;
    add_data_opts(predict_cmd, predict_data);
    std::string predict_pipeline_path, predict_path, predict_out;
    std::uint64_t predict_seed = 42;
    predict_cmd->add_option("--pipeline", predict_pipeline_path, "pipeline export file")->required();
    predict_cmd->add_option("--predict-path", predict_path, "feature-only CSV to label")->required();
    predict_cmd->add_option("--out", predict_out, "output file (default: stdout)");
    predict_cmd->add_option("--seed", predict_seed)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            cfg.dataset = run_data.dataset;
            cfg.data_path = run_data.data_path;
            cfg.estimator_filter = parse_filter(estimators);
            evopipe::check_experiment_config(cfg);
            evopipe::Dataset ds =
                evopipe::resolve_dataset(cfg, run_data.cache_dir, make_fetcher(run_data));
            std::cout << "dataset " << evopipe::display_dataset(cfg) << ": " << ds.n_rows()
                      << " rows, " << ds.n_features() << " features, " << ds.n_classes
                      << " classes\n";
            evopipe::ExperimentResult res = evopipe::run_experiment(cfg, ds, workers);
            auto paths = evopipe::write_results(res, out_dir);
            print_result(res);
            std::cout << "wrote " << paths.result_file.string() << "\n";
            std::cout << "wrote " << paths.table_file.string() << "\n";
        } else if (*grid_cmd) {
            auto grid = evopipe::desk_scale_grid(grid_seed, grid_replicates, grid_population,
                                                 grid_generations);
            auto entries = evopipe::run_grid(grid, grid_out, grid_workers, grid_data.cache_dir,
                                             make_fetcher(grid_data),
                                             [](const std::string& msg) { std::cout << msg << "\n"; });
            std::cout << "grid finished; manifest at "
                      << (std::filesystem::path(grid_out) / "grid-manifest.txt").string() << "\n";
            std::vector<std::filesystem::path> files;
            for (const auto& entry : entries)
                if (entry.result)
                    files.push_back(std::filesystem::path(grid_out) /
                                    (evopipe::config_id(entry.config) + ".result.txt"));
            if (!files.empty()) std::cout << "\n" << evopipe::report_summary(files);
        } else if (*report_cmd) {
            std::vector<std::filesystem::path> files;
            for (const auto& input : report_inputs) {
                std::filesystem::path p(input);
                if (std::filesystem::is_directory(p)) {
                    for (const auto& e : std::filesystem::directory_iterator(p))
                        if (e.path().string().ends_with(".result.txt")) files.push_back(e.path());
                } else {
                    files.push_back(p);
                }
            }
            std::sort(files.begin(), files.end());
            std::cout << evopipe::report_summary(files);
        } else if (*fit_cmd) {
            evopipe::ExperimentConfig data_cfg;
            data_cfg.dataset = fit_data.dataset;
            data_cfg.data_path = fit_data.data_path;
            evopipe::Dataset ds =
                evopipe::resolve_dataset(data_cfg, fit_data.cache_dir, make_fetcher(fit_data));
            std::ifstream in(fit_pipeline_path);
            if (!in) throw evopipe::IoError("cannot open pipeline file: " + fit_pipeline_path);
            std::ostringstream buf;
            buf << in.rdbuf();
            auto registry = evopipe::default_registry(true, evopipe::EstimatorFilter::All);
            auto [tree, meta] = evopipe::import_pipeline(buf.str(), registry);
            auto fp = evopipe::fit_pipeline(registry, tree, ds.features, ds.labels, fit_seed,
                                            ds.n_classes);
            const double train_acc =
                evopipe::accuracy(evopipe::predict_pipeline(fp, ds.features), ds.labels);
            const double cv =
                evopipe::cv_score(registry, tree, ds, fit_cv_folds, fit_seed);
            std::cout << "complexity: " << evopipe::complexity(tree) << "\n";
            std::cout << "train accuracy: " << train_acc << "\n";
            std::cout << "cv accuracy (" << fit_cv_folds << "-fold): " << cv << "\n";
            if (meta.cv_score) std::cout << "recorded cv score: " << *meta.cv_score << "\n";
        } else if (*predict_cmd) {
            evopipe::ExperimentConfig data_cfg;
            data_cfg.dataset = predict_data.dataset;
            data_cfg.data_path = predict_data.data_path;
            evopipe::Dataset ds = evopipe::resolve_dataset(data_cfg, predict_data.cache_dir,
                                                           make_fetcher(predict_data));
            std::ifstream in(predict_pipeline_path);
            if (!in) throw evopipe::IoError("cannot open pipeline file: " + predict_pipeline_path);
            std::ostringstream buf;
            buf << in.rdbuf();
            auto registry = evopipe::default_registry(true, evopipe::EstimatorFilter::All);
            auto [tree, meta] = evopipe::import_pipeline(buf.str(), registry);
            auto fp = evopipe::fit_pipeline(registry, tree, ds.features, ds.labels, predict_seed,
                                            ds.n_classes);
            auto [features, names] = evopipe::load_csv_features(predict_path);
            auto labels = evopipe::predict_pipeline(fp, features);
            std::ostringstream preds;
            preds << "prediction\n";
            for (int v : labels) preds << v << "\n";
            if (predict_out.empty()) {
                std::cout << preds.str();
            } else {
                std::ofstream out(predict_out);
                if (!out) throw evopipe::IoError("cannot write " + predict_out);
                out << preds.str();
                std::cout << "wrote " << labels.size() << " predictions to " << predict_out << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

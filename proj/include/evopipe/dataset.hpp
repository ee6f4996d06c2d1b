#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "evopipe/errors.hpp"
#include "evopipe/matrix.hpp"
#include "evopipe/rng.hpp"

namespace evopipe {

// The unit flowing through pipelines. Immutable after construction; shared freely
// across concurrent pipeline evaluations.
struct Dataset {
    Matrix features;                         // n x d
    std::vector<int> labels;                 // class indices in [0, n_classes)
    std::vector<std::string> feature_names;  // d names
    int n_classes = 0;
    std::string name;

    std::size_t n_rows() const { return features.rows(); }
    std::size_t n_features() const { return features.cols(); }
};

struct FoldAssignment {
    std::vector<int> fold_of;  // length n, values in [0, k)
    int k = 0;
};

inline double accuracy(std::span<const int> predicted, std::span<const int> actual) {
    if (predicted.size() != actual.size())
        throw std::invalid_argument("accuracy: length mismatch (" + std::to_string(predicted.size()) +
                                    " vs " + std::to_string(actual.size()) + ")");
    if (predicted.empty()) throw std::invalid_argument("accuracy: empty vectors");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == actual[i];
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

namespace detail {

inline std::vector<std::string> split_line(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    for (auto& cell : out) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t lead = 0;
        while (lead < cell.size() && cell[lead] == ' ') ++lead;
        cell.erase(0, lead);
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return v;
}

// Shared delimited-text parser behind both the CSV loader and the PMLB reader.
// 1-based row/column numbers in error messages refer to the file as written.
inline Dataset parse_delimited(std::istream& in, char sep, const std::string& target_column,
                               const std::string& name, const std::string& origin) {
    std::string header_line;
    if (!std::getline(in, header_line) || header_line.empty())
        throw ParseError(origin + ": missing header row");
    std::vector<std::string> header = split_line(header_line, sep);

    std::size_t target_idx;
    if (target_column.empty()) {
        target_idx = header.size() - 1;
    } else {
        auto it = std::find(header.begin(), header.end(), target_column);
        if (it == header.end())
            throw ParseError(origin + ": target column '" + target_column + "' not found");
        target_idx = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<std::string> feature_names;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (j != target_idx) feature_names.push_back(header[j]);

    std::vector<double> values;
    std::vector<std::string> raw_targets;
    std::string line;
    std::size_t row = 1;  // header was row 1
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        std::vector<std::string> cells = split_line(line, sep);
        if (cells.size() != header.size())
            throw ParseError(origin + ": row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j == target_idx) {
                raw_targets.push_back(cells[j]);
                continue;
            }
            auto v = parse_double(cells[j]);
            if (!v)
                throw ParseError(origin + ": row " + std::to_string(row) + ", column " +
                                 std::to_string(j + 1) + " ('" + header[j] +
                                 "'): cannot parse '" + cells[j] + "' as a number");
            if (!std::isfinite(*v))
                throw ParseError(origin + ": row " + std::to_string(row) + ", column " +
                                 std::to_string(j + 1) + ": non-finite value");
            values.push_back(*v);
        }
    }
    if (raw_targets.empty()) throw ParseError(origin + ": no data rows");

    // Labels re-encoded to contiguous {0..c-1} by sorted order of distinct raw values.
    std::map<std::string, int> encoding;
    for (const auto& t : raw_targets) encoding.emplace(t, 0);
    if (encoding.size() < 2) throw ParseError(origin + ": target column has a single class");
    int next = 0;
    for (auto& [raw, code] : encoding) code = next++;

    Dataset ds;
    ds.name = name;
    ds.feature_names = std::move(feature_names);
    ds.n_classes = next;
    ds.features = Matrix(raw_targets.size(), ds.feature_names.size(), std::move(values));
    ds.labels.reserve(raw_targets.size());
    for (const auto& t : raw_targets) ds.labels.push_back(encoding.at(t));
    return ds;
}

inline std::string read_gzip_file(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw IoError("cannot open gzip file: " + path.string());
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    int err = 0;
    gzerror(f, &err);
    gzclose(f);
    if (n < 0 || err != Z_OK)
        throw ParseError("gzip decompression failed for " + path.string());
    return out;
}

inline void write_gzip_file(const std::filesystem::path& path, std::string_view content) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot write gzip file: " + path.string());
    if (!content.empty() &&
        gzwrite(f, content.data(), static_cast<unsigned>(content.size())) <= 0) {
        gzclose(f);
        throw IoError("gzip write failed for " + path.string());
    }
    if (gzclose(f) != Z_OK) throw IoError("gzip close failed for " + path.string());
}

}  // namespace detail

// Local CSV ingestion: header row, comma separator, target by name or last column.
inline Dataset load_csv(const std::filesystem::path& path, const std::string& target_column = "") {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    return detail::parse_delimited(in, ',', target_column, path.stem().string(), path.string());
}

inline Dataset load_csv_text(const std::string& text, const std::string& target_column,
                             const std::string& name) {
    std::istringstream in(text);
    return detail::parse_delimited(in, ',', target_column, name, name);
}

// Feature-only CSV (no target column); used to feed predictions.
inline std::pair<Matrix, std::vector<std::string>> load_csv_features(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line) || header_line.empty())
        throw ParseError(path.string() + ": missing header row");
    std::vector<std::string> names = detail::split_line(header_line, ',');

    std::vector<double> values;
    std::string line;
    std::size_t row = 1, n = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        auto cells = detail::split_line(line, ',');
        if (cells.size() != names.size())
            throw ParseError(path.string() + ": row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(names.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            auto v = detail::parse_double(cells[j]);
            if (!v || !std::isfinite(*v))
                throw ParseError(path.string() + ": row " + std::to_string(row) + ", column " +
                                 std::to_string(j + 1) + ": cannot parse '" + cells[j] + "'");
            values.push_back(*v);
        }
        ++n;
    }
    return {Matrix(n, names.size(), std::move(values)), std::move(names)};
}

// PMLB-format file already on disk: gzip-compressed TSV with a literal "target" column.
inline Dataset load_pmlb_file(const std::filesystem::path& path, const std::string& name) {
    std::string text = detail::read_gzip_file(path);
    std::istringstream in(text);
    return detail::parse_delimited(in, '\t', "target", name, path.string());
}

inline std::filesystem::path pmlb_cache_path(const std::filesystem::path& cache_dir,
                                             const std::string& name) {
    return cache_dir / (name + ".tsv.gz");
}

inline std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double train_fraction,
                                                    std::uint64_t seed) {
    const std::size_t n = ds.n_rows();
    if (n < 2) throw ConfigError("train_test_split: need at least 2 rows");
    const auto n_train =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    if (n_train < 1 || n_train >= n)
        throw ConfigError("train_test_split: fraction " + std::to_string(train_fraction) +
                          " leaves an empty side for n=" + std::to_string(n));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(hash_seed(seed, "split"));
    rng.shuffle(order);

    auto take = [&](std::size_t begin, std::size_t end) {
        Dataset part;
        part.name = ds.name;
        part.feature_names = ds.feature_names;
        part.n_classes = ds.n_classes;
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
        part.features = ds.features.take_rows(idx);
        part.labels.reserve(idx.size());
        for (auto i : idx) part.labels.push_back(ds.labels[i]);
        return part;
    };
    return {take(0, n_train), take(n_train, n)};
}

// Seeded shuffle, then round-robin assignment; fold sizes differ by at most one.
inline FoldAssignment kfold(const Dataset& ds, int k, std::uint64_t seed) {
    const std::size_t n = ds.n_rows();
    if (k < 2 || static_cast<std::size_t>(k) > n)
        throw ConfigError("kfold: k=" + std::to_string(k) + " out of range for n=" +
                          std::to_string(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(hash_seed(seed, "kfold"));
    rng.shuffle(order);
    FoldAssignment fa;
    fa.k = k;
    fa.fold_of.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) fa.fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return fa;
}

// Synthetic hill/valley sequences: flat seeded-uniform baseline plus one Gaussian
// bump (hill, label 1) or dip (valley, label 0) centered at a seeded-random
// position. Fixed generator constants: bump width 10% of length, amplitude 1.0,
// baseline offset uniform in [0, 0.5), noise sigma 5% of amplitude when noisy.
inline Dataset make_hill_valley(std::size_t n, std::size_t length, bool noisy, std::uint64_t seed) {
    if (length < 8 || n < 2) throw ConfigError("make_hill_valley: degenerate sizes");
    const double amplitude = 1.0;
    const double width = 0.10 * static_cast<double>(length);
    const double sigma = width / 2.0;

    Dataset ds;
    ds.name = noisy ? "hill-valley-noisy" : "hill-valley";
    ds.n_classes = 2;
    ds.feature_names.reserve(length);
    for (std::size_t j = 0; j < length; ++j) ds.feature_names.push_back("x" + std::to_string(j));
    ds.features = Matrix(n, length);
    ds.labels.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(hash_seed(seed, "hv", i));
        const int label = static_cast<int>(i % 2);  // alternating keeps classes balanced within 1
        const double baseline = rng.uniform(0.0, 0.5);
        const double center = rng.uniform(width, static_cast<double>(length) - width);
        const double sign = label == 1 ? 1.0 : -1.0;
        auto row = ds.features.row(i);
        for (std::size_t j = 0; j < length; ++j) {
            const double d = (static_cast<double>(j) - center) / sigma;
            row[j] = baseline + sign * amplitude * std::exp(-0.5 * d * d);
        }
        if (noisy)
            for (std::size_t j = 0; j < length; ++j) row[j] += rng.normal(0.0, 0.05 * amplitude);
        ds.labels[i] = label;
    }
    return ds;
}

}  // namespace evopipe

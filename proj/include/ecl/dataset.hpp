#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecl/matrix.hpp"
#include "ecl/rng.hpp"

namespace ecl {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

enum class Geometry { gaussian_blobs, concentric_rings };

inline Geometry geometry_from_string(const std::string& s) {
    if (s == "gaussian-blobs") return Geometry::gaussian_blobs;
    if (s == "concentric-rings") return Geometry::concentric_rings;
    throw std::invalid_argument("geometry must be 'gaussian-blobs' or 'concentric-rings' (got '" + s + "')");
}

inline const char* geometry_name(Geometry g) {
    return g == Geometry::gaussian_blobs ? "gaussian-blobs" : "concentric-rings";
}

struct DatasetConfig {
    int num_classes = 5;   // C
    int feature_dim = 2;   // k
    int n_max = 1000;      // largest class total
    double alpha = 50.0;   // imbalance factor N_max / N_min
    Geometry geometry = Geometry::gaussian_blobs;
    std::uint64_t seed = 1;

    // Geometry shape knobs. Blob centers sit on a circle of blob_radius in
    // the first two feature dims; rings are spaced ring_gap apart.
    double blob_radius = 3.0;
    double blob_sigma = 1.0;
    double ring_gap = 2.0;
    double ring_sigma = 0.25;
};

/// Labeled feature vectors with per-class 3:1:1 split tags. Rows are stored
/// class-major (all class 0, then class 1, ...), train rows first within a
/// class, which makes generation and the CSV layout deterministic.
struct Dataset {
    Matrix features;             // N x k
    std::vector<int> labels;     // N, values in [0, C)
    std::vector<Split> split;    // N
    std::vector<int> class_counts;  // per-class count of the TRAIN split
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    int feature_dim() const { return static_cast<int>(features.cols()); }

    std::vector<int> total_class_counts() const {
        std::vector<int> t(num_classes, 0);
        for (int y : labels) ++t[y];
        return t;
    }

    std::vector<std::size_t> split_indices(Split s) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == s) idx.push_back(i);
        return idx;
    }

    /// Standard deviation pooled over every train-split feature entry;
    /// augmentation noise is expressed in units of this scale.
    double train_feature_std() const {
        double mean = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < size(); ++i) {
            if (split[i] != Split::train) continue;
            for (double x : features.row(i)) {
                mean += x;
                ++n;
            }
        }
        if (n == 0) return 0.0;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < size(); ++i) {
            if (split[i] != Split::train) continue;
            for (double x : features.row(i)) var += (x - mean) * (x - mean);
        }
        return std::sqrt(var / static_cast<double>(n));
    }
};

namespace detail {
// Substream tags for dataset generation.
inline constexpr std::uint64_t kDataClassTag = 0x64617461ULL;   // per-class sample noise
inline constexpr std::uint64_t kDataPhaseTag = 0x70686173ULL;   // center layout phase
}  // namespace detail

/// Per-class totals N_c = round(n_max * alpha^(-c/(C-1))): geometric decay
/// from n_max down to n_max/alpha.
inline std::vector<int> long_tail_class_totals(int num_classes, int n_max, double alpha) {
    std::vector<int> totals(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        const double frac = static_cast<double>(c) / static_cast<double>(num_classes - 1);
        totals[c] = static_cast<int>(std::llround(n_max * std::pow(alpha, -frac)));
    }
    return totals;
}

inline Dataset generate(const DatasetConfig& cfg) {
    if (cfg.num_classes < 2) throw std::invalid_argument("num_classes (C) must be >= 2");
    if (cfg.feature_dim < 1) throw std::invalid_argument("feature_dim (k) must be >= 1");
    if (cfg.n_max < cfg.num_classes) throw std::invalid_argument("n_max must be >= num_classes");
    if (cfg.alpha < 1.0)
        throw std::invalid_argument("alpha must be >= 1 (got " + fmt_g17(cfg.alpha) + ")");

    const int C = cfg.num_classes;
    const int k = cfg.feature_dim;
    const std::vector<int> totals = long_tail_class_totals(C, cfg.n_max, cfg.alpha);
    for (int c = 0; c < C; ++c) {
        if (totals[c] < 5)
            throw std::invalid_argument("class " + std::to_string(c) + " rounds to " +
                                        std::to_string(totals[c]) +
                                        " samples; need >= 5 for a 3:1:1 split");
    }

    std::size_t total = 0;
    for (int t : totals) total += static_cast<std::size_t>(t);

    Dataset ds;
    ds.num_classes = C;
    ds.features = Matrix(total, static_cast<std::size_t>(k));
    ds.labels.resize(total);
    ds.split.resize(total);
    ds.class_counts.assign(C, 0);

    // Layout phase is a deterministic function of the seed alone.
    Rng phase_rng(Rng::derive(cfg.seed, detail::kDataPhaseTag));
    const double phase = 2.0 * std::numbers::pi * phase_rng.uniform();

    std::size_t row = 0;
    for (int c = 0; c < C; ++c) {
        const int n_c = totals[c];
        const int n_test = n_c / 5;
        const int n_val = n_c / 5;
        const int n_train = n_c - n_val - n_test;
        ds.class_counts[c] = n_train;

        Rng rng(Rng::derive(cfg.seed, detail::kDataClassTag, static_cast<std::uint64_t>(c)));
        for (int i = 0; i < n_c; ++i, ++row) {
            auto x = ds.features.row(row);
            if (cfg.geometry == Geometry::gaussian_blobs) {
                const double theta = phase + 2.0 * std::numbers::pi * c / C;
                for (int j = 0; j < k; ++j) x[j] = cfg.blob_sigma * rng.normal();
                x[0] += cfg.blob_radius * std::cos(theta);
                if (k >= 2) x[1] += cfg.blob_radius * std::sin(theta);
            } else {
                const double radius = cfg.ring_gap * (c + 1) + cfg.ring_sigma * rng.normal();
                const double theta = phase + 2.0 * std::numbers::pi * rng.uniform();
                x[0] = radius * std::cos(theta);
                if (k >= 2) x[1] = radius * std::sin(theta);
                for (int j = 2; j < k; ++j) x[j] = cfg.ring_sigma * rng.normal();
            }
            ds.labels[row] = c;
            ds.split[row] = i < n_train            ? Split::train
                            : i < n_train + n_val  ? Split::val
                                                   : Split::test;
        }
    }
    return ds;
}

inline std::string dataset_csv(const Dataset& ds) {
    std::string out;
    const int k = ds.feature_dim();
    for (int j = 0; j < k; ++j) {
        out += 'f';
        out += std::to_string(j);
        out += ',';
    }
    out += "label,split\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double x : ds.features.row(i)) {
            out += fmt_g17(x);
            out += ',';
        }
        out += std::to_string(ds.labels[i]);
        out += ',';
        out += split_name(ds.split[i]);
        out += '\n';
    }
    return out;
}

inline void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << dataset_csv(ds);
}

inline Dataset load_dataset_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset '" + path + "'");
    std::string header;
    if (!std::getline(f, header)) throw std::runtime_error("empty dataset file '" + path + "'");

    int k = 0;
    {
        std::stringstream hs(header);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(hs, col, ',')) cols.push_back(col);
        if (cols.size() < 3 || cols[cols.size() - 2] != "label" || cols.back() != "split")
            throw std::runtime_error("dataset header must be f0,...,label,split");
        k = static_cast<int>(cols.size()) - 2;
    }

    std::vector<double> feats;
    std::vector<int> labels;
    std::vector<Split> split;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        for (int j = 0; j < k; ++j) {
            if (!std::getline(ls, cell, ',')) throw std::runtime_error("short row in '" + path + "'");
            feats.push_back(std::strtod(cell.c_str(), nullptr));
        }
        if (!std::getline(ls, cell, ',')) throw std::runtime_error("missing label in '" + path + "'");
        labels.push_back(std::stoi(cell));
        if (!std::getline(ls, cell, ',')) cell.clear();
        if (cell == "train") split.push_back(Split::train);
        else if (cell == "val") split.push_back(Split::val);
        else if (cell == "test") split.push_back(Split::test);
        else throw std::runtime_error("bad split tag '" + cell + "' in '" + path + "'");
    }

    Dataset ds;
    const std::size_t n = labels.size();
    ds.features = Matrix(n, static_cast<std::size_t>(k));
    std::copy(feats.begin(), feats.end(), ds.features.data());
    ds.labels = std::move(labels);
    ds.split = std::move(split);
    int max_label = -1;
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.labels[i] < 0) throw std::runtime_error("negative label in '" + path + "'");
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = max_label + 1;
    ds.class_counts.assign(ds.num_classes, 0);
    for (std::size_t i = 0; i < n; ++i)
        if (ds.split[i] == Split::train) ++ds.class_counts[ds.labels[i]];
    for (int c = 0; c < ds.num_classes; ++c)
        if (ds.class_counts[c] == 0)
            throw std::runtime_error("class " + std::to_string(c) + " has no train samples");
    return ds;
}

}  // namespace ecl

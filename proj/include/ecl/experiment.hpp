#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ecl/checkpoint.hpp"
#include "ecl/dataset.hpp"
#include "ecl/gradcheck.hpp"
#include "ecl/metrics.hpp"
#include "ecl/trainer.hpp"

namespace ecl {

/// Invalid or malformed experiment configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One JSON file drives an entire experiment: dataset recipe, training
/// hyperparameters, method selection and the multi-seed protocol.
struct ExperimentConfig {
    DatasetConfig data;
    TrainConfig train;                     // train.method mirrors "method"
    std::vector<Method> methods;           // compare runs; defaults to {method}
    std::vector<std::uint64_t> seeds;      // compare seeds
    std::string output_dir = "out";
    std::optional<std::string> dataset_csv;
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& scope, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key))
            throw ConfigError(scope.empty() ? "unknown config key '" + key + "'"
                                            : scope + ": unknown key '" + key + "'");
    }
}

inline std::string key_path(const std::string& scope, const std::string& key) {
    return scope.empty() ? key : scope + "." + key;
}

inline double get_number(const json& obj, const std::string& scope, const std::string& key,
                         double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) throw ConfigError(key_path(scope, key) + ": expected a number");
    return obj[key].get<double>();
}

inline int get_int(const json& obj, const std::string& scope, const std::string& key, int fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) throw ConfigError(key_path(scope, key) + ": expected an integer");
    return obj[key].get<int>();
}

inline std::uint64_t get_seed(const json& obj, const std::string& scope, const std::string& key,
                              std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer() || obj[key].is_number_float())
        throw ConfigError(key_path(scope, key) + ": expected an integer seed");
    return obj[key].get<std::uint64_t>();
}

inline std::string get_string(const json& obj, const std::string& scope, const std::string& key,
                              const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) throw ConfigError(key_path(scope, key) + ": expected a string");
    return obj[key].get<std::string>();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    using nlohmann::json;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    detail::check_keys(root, "",
                       {"data", "train", "method", "methods", "seeds", "output_dir", "dataset_csv"});

    ExperimentConfig cfg;

    if (root.contains("data")) {
        const json& d = root["data"];
        if (!d.is_object()) throw ConfigError("data: expected an object");
        detail::check_keys(d, "data",
                           {"C", "k", "Nmax", "alpha", "geometry", "seed", "blob_radius",
                            "blob_sigma", "ring_gap", "ring_sigma"});
        cfg.data.num_classes = detail::get_int(d, "data", "C", cfg.data.num_classes);
        cfg.data.feature_dim = detail::get_int(d, "data", "k", cfg.data.feature_dim);
        cfg.data.n_max = detail::get_int(d, "data", "Nmax", cfg.data.n_max);
        cfg.data.alpha = detail::get_number(d, "data", "alpha", cfg.data.alpha);
        cfg.data.seed = detail::get_seed(d, "data", "seed", cfg.data.seed);
        cfg.data.blob_radius = detail::get_number(d, "data", "blob_radius", cfg.data.blob_radius);
        cfg.data.blob_sigma = detail::get_number(d, "data", "blob_sigma", cfg.data.blob_sigma);
        cfg.data.ring_gap = detail::get_number(d, "data", "ring_gap", cfg.data.ring_gap);
        cfg.data.ring_sigma = detail::get_number(d, "data", "ring_sigma", cfg.data.ring_sigma);
        if (d.contains("geometry")) {
            try {
                cfg.data.geometry = geometry_from_string(detail::get_string(d, "data", "geometry", ""));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("data.geometry: ") + e.what());
            }
        }
        if (cfg.data.num_classes < 2) throw ConfigError("data.C: must be >= 2");
        if (cfg.data.feature_dim < 1) throw ConfigError("data.k: must be >= 1");
        if (cfg.data.alpha < 1.0)
            throw ConfigError("data.alpha: must be >= 1 (got " + fmt_g17(cfg.data.alpha) + ")");
        if (cfg.data.n_max < cfg.data.num_classes) throw ConfigError("data.Nmax: must be >= data.C");
    }

    if (root.contains("train")) {
        const json& t = root["train"];
        if (!t.is_object()) throw ConfigError("train: expected an object");
        detail::check_keys(t, "train",
                           {"E", "E1", "E2", "B", "lr0", "weight_decay", "tau", "lambda", "mu", "d",
                            "seed", "encoder_hidden", "feature_dim", "proj_hidden", "sigma1",
                            "sigma2", "rot_max", "ce_views"});
        TrainConfig& tc = cfg.train;
        tc.epochs = detail::get_int(t, "train", "E", tc.epochs);
        tc.stage1_end = detail::get_int(t, "train", "E1", tc.stage1_end);
        tc.stage2_end = detail::get_int(t, "train", "E2", tc.stage2_end);
        tc.batch_size = detail::get_int(t, "train", "B", tc.batch_size);
        tc.lr0 = detail::get_number(t, "train", "lr0", tc.lr0);
        tc.weight_decay = detail::get_number(t, "train", "weight_decay", tc.weight_decay);
        tc.tau = detail::get_number(t, "train", "tau", tc.tau);
        tc.lambda = detail::get_number(t, "train", "lambda", tc.lambda);
        tc.mu = detail::get_number(t, "train", "mu", tc.mu);
        tc.embed_dim = detail::get_int(t, "train", "d", tc.embed_dim);
        tc.seed = detail::get_seed(t, "train", "seed", tc.seed);
        tc.feature_dim = detail::get_int(t, "train", "feature_dim", tc.feature_dim);
        tc.proj_hidden = detail::get_int(t, "train", "proj_hidden", tc.proj_hidden);
        tc.augment.sigma1 = detail::get_number(t, "train", "sigma1", tc.augment.sigma1);
        tc.augment.sigma2 = detail::get_number(t, "train", "sigma2", tc.augment.sigma2);
        tc.augment.rot_max = detail::get_number(t, "train", "rot_max", tc.augment.rot_max);
        if (t.contains("encoder_hidden")) {
            if (!t["encoder_hidden"].is_array()) throw ConfigError("train.encoder_hidden: expected an array");
            tc.encoder_hidden.clear();
            for (const auto& v : t["encoder_hidden"]) {
                if (!v.is_number_integer()) throw ConfigError("train.encoder_hidden: expected integers");
                tc.encoder_hidden.push_back(v.get<int>());
            }
        }
        if (t.contains("ce_views")) {
            const std::string v = detail::get_string(t, "train", "ce_views", "view1");
            if (v == "view1") tc.ce_views = CeViews::view1;
            else if (v == "both") tc.ce_views = CeViews::both;
            else throw ConfigError("train.ce_views: must be 'view1' or 'both'");
        }
        if (!(0 < tc.stage1_end && tc.stage1_end < tc.stage2_end && tc.stage2_end < tc.epochs))
            throw ConfigError("train.E1/E2/E: need 0 < E1 < E2 < E");
        if (tc.batch_size < 2) throw ConfigError("train.B: must be >= 2");
        if (tc.lr0 < 0.0) throw ConfigError("train.lr0: must be >= 0");
        if (tc.tau <= 0.0) throw ConfigError("train.tau: must be > 0");
        if (tc.lambda < 0.0) throw ConfigError("train.lambda: must be >= 0");
        if (tc.mu < 0.0) throw ConfigError("train.mu: must be >= 0");
        if (tc.embed_dim < 2) throw ConfigError("train.d: must be >= 2");
    }

    try {
        cfg.train.method = method_from_string(detail::get_string(root, "", "method", "ecl"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("method: ") + e.what());
    }

    if (root.contains("methods")) {
        if (!root["methods"].is_array()) throw ConfigError("methods: expected an array");
        for (const auto& v : root["methods"]) {
            if (!v.is_string()) throw ConfigError("methods: expected strings");
            try {
                cfg.methods.push_back(method_from_string(v.get<std::string>()));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("methods: ") + e.what());
            }
        }
    }
    if (cfg.methods.empty()) cfg.methods.push_back(cfg.train.method);

    if (root.contains("seeds")) {
        if (!root["seeds"].is_array()) throw ConfigError("seeds: expected an array");
        for (const auto& v : root["seeds"]) {
            if (!v.is_number_integer()) throw ConfigError("seeds: expected integers");
            cfg.seeds.push_back(v.get<std::uint64_t>());
        }
    }

    cfg.output_dir = detail::get_string(root, "", "output_dir", cfg.output_dir);
    if (root.contains("dataset_csv"))
        cfg.dataset_csv = detail::get_string(root, "", "dataset_csv", "");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_experiment_config(text);
}

/// Dataset per config: an explicit CSV wins over the generator recipe.
inline Dataset experiment_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset_csv) return load_dataset_csv(*cfg.dataset_csv);
    try {
        return generate(cfg.data);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("data: ") + e.what());
    }
}

inline void run_generate(const ExperimentConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    Dataset ds;
    try {
        ds = generate(cfg.data);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("data: ") + e.what());
    }
    detail::write_file(std::filesystem::path(out_dir) / "dataset.csv", dataset_csv(ds));
}

/// Trains one run and writes history.csv, checkpoint.bin, metrics.json and
/// confusion.svg (test-split report from the best-val-accuracy checkpoint).
inline MetricsReport run_train_once(const Dataset& ds, const TrainConfig& tc,
                                    const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const TrainResult result = train(ds, tc);
    const MetricsReport test = evaluate(result.params, ds, Split::test);
    const auto dir = std::filesystem::path(out_dir);
    detail::write_file(dir / "history.csv", history_csv(result.history));
    save_checkpoint((dir / "checkpoint.bin").string(), result.params, result.bank);
    detail::write_file(dir / "metrics.json", report_json(test));
    detail::write_file(dir / "confusion.svg", confusion_svg(test));
    return test;
}

inline void run_train(const ExperimentConfig& cfg, const std::string& out_dir) {
    const Dataset ds = experiment_dataset(cfg);
    run_train_once(ds, cfg.train, out_dir);
}

/// Re-evaluates a saved checkpoint on the test split.
inline void run_evaluate(const ExperimentConfig& cfg, const std::string& out_dir) {
    const Dataset ds = experiment_dataset(cfg);
    const auto dir = std::filesystem::path(out_dir);
    auto [params, bank] = load_checkpoint((dir / "checkpoint.bin").string());
    const MetricsReport test = evaluate(params, ds, Split::test);
    detail::write_file(dir / "metrics_eval.json", report_json(test));
    detail::write_file(dir / "confusion_eval.svg", confusion_svg(test));
}

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& std_out) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    std_out = xs.size() < 2 ? 0.0 : std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline std::string pad_right(std::string s, std::size_t width) {
    while (s.size() < width) s += ' ';
    return s;
}

}  // namespace detail

/// Builds the mean (std) comparison table: one row per method, metric order
/// Acc / Pre / Sen / F1 / AUC. CSV carries raw fractions at full precision;
/// the text table shows percent with two decimals.
inline std::pair<std::string, std::string> summary_table(
    const std::vector<std::pair<std::string, std::vector<MetricsReport>>>& rows) {
    std::string csv =
        "method,acc_mean,acc_std,pre_mean,pre_std,sen_mean,sen_std,f1_mean,f1_std,auc_mean,auc_std\n";
    const char* names[5] = {"Acc", "Pre", "Sen", "F1", "AUC"};

    std::size_t method_width = 7;  // "Methods"
    for (const auto& [method, _] : rows) method_width = std::max(method_width, method.size());
    const std::size_t col = 16;

    std::string text = detail::pad_right("Methods", method_width + 2);
    for (const char* n : names) text += detail::pad_right(n, col);
    text += '\n';

    for (const auto& [method, reports] : rows) {
        csv += method;
        text += detail::pad_right(method, method_width + 2);
        for (int metric = 0; metric < 5; ++metric) {
            std::vector<double> xs;
            xs.reserve(reports.size());
            for (const MetricsReport& r : reports) {
                const double v = metric == 0   ? r.acc
                                 : metric == 1 ? r.pre
                                 : metric == 2 ? r.sen
                                 : metric == 3 ? r.f1
                                               : r.auc;
                xs.push_back(v);
            }
            double mean = 0.0, sd = 0.0;
            detail::mean_std(xs, mean, sd);
            csv += ',' + fmt_g17(mean) + ',' + fmt_g17(sd);
            char cell[48];
            std::snprintf(cell, sizeof(cell), "%.2f (%.2f)", 100.0 * mean, 100.0 * sd);
            text += detail::pad_right(cell, col);
        }
        csv += '\n';
        text += '\n';
    }
    return {csv, text};
}

/// Trains every (method, seed) pair on the shared dataset and emits the
/// summary table. Runs execute in parallel worker threads, capped by
/// ECL_LAB_THREADS; outputs are seed-scoped so workers never contend.
inline std::string run_compare(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (cfg.seeds.size() < 2) throw ConfigError("seeds: compare needs at least 2 seeds");
    std::vector<Method> methods = cfg.methods;
    std::sort(methods.begin(), methods.end(),
              [](Method a, Method b) { return std::string(method_name(a)) < method_name(b); });
    methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

    const Dataset ds = experiment_dataset(cfg);
    std::filesystem::create_directories(out_dir);

    struct Run {
        Method method;
        std::uint64_t seed;
        std::string dir;
    };
    std::vector<Run> runs;
    for (Method m : methods)
        for (std::uint64_t s : cfg.seeds)
            runs.push_back({m, s,
                            (std::filesystem::path(out_dir) / method_name(m) /
                             ("seed" + std::to_string(s)))
                                .string()});

    std::vector<MetricsReport> results(runs.size());
    std::vector<std::exception_ptr> errors(runs.size());

    std::size_t threads = std::min<std::size_t>(runs.size(), std::thread::hardware_concurrency()
                                                                 ? std::thread::hardware_concurrency()
                                                                 : 1);
    if (const char* cap = std::getenv("ECL_LAB_THREADS")) {
        const long v = std::strtol(cap, nullptr, 10);
        if (v >= 1) threads = std::min<std::size_t>(threads, static_cast<std::size_t>(v));
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= runs.size()) return;
            try {
                TrainConfig tc = cfg.train;
                tc.method = runs[i].method;
                tc.seed = runs[i].seed;
                results[i] = run_train_once(ds, tc, runs[i].dir);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);  // finished runs stay on disk

    std::vector<std::pair<std::string, std::vector<MetricsReport>>> rows;
    std::size_t i = 0;
    for (Method m : methods) {
        std::vector<MetricsReport> reports;
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) reports.push_back(results[i++]);
        rows.emplace_back(method_name(m), std::move(reports));
    }
    const auto [csv, text] = summary_table(rows);
    detail::write_file(std::filesystem::path(out_dir) / "summary.csv", csv);
    detail::write_file(std::filesystem::path(out_dir) / "summary.txt", text);
    return text;
}

/// Returns 0 when every analytic gradient is within threshold, 1 otherwise.
inline int run_gradcheck_cmd(std::uint64_t seed, const std::string& out_dir, std::ostream& os) {
    const GradCheckReport rep = run_gradcheck(seed);
    const std::string text = gradcheck_json(rep).dump(2) + "\n";
    std::filesystem::create_directories(out_dir);
    detail::write_file(std::filesystem::path(out_dir) / "gradcheck.json", text);
    os << text;
    if (!rep.pass) {
        for (const auto* e : {&rep.bhp, &rep.scl, &rep.bwce, &rep.network})
            if (!e->pass) os << "FAIL worst coordinate: " << e->worst << " (rel error "
                             << fmt_g17(e->max_rel_error) << ")\n";
        return 1;
    }
    return 0;
}

}  // namespace ecl

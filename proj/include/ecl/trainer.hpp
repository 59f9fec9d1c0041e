#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecl/dataset.hpp"
#include "ecl/losses.hpp"
#include "ecl/metrics.hpp"
#include "ecl/network.hpp"
#include "ecl/proxy.hpp"
#include "ecl/sampler.hpp"

namespace ecl {

enum class Method { ecl, ce, scl };

inline Method method_from_string(const std::string& s) {
    if (s == "ecl") return Method::ecl;
    if (s == "ce") return Method::ce;
    if (s == "scl") return Method::scl;
    throw std::invalid_argument("method must be 'ecl', 'ce' or 'scl' (got '" + s + "')");
}

inline const char* method_name(Method m) {
    switch (m) {
        case Method::ecl: return "ecl";
        case Method::ce: return "ce";
        case Method::scl: return "scl";
    }
    return "?";
}

struct TrainConfig {
    int epochs = 60;       // E
    int stage1_end = 12;   // E1
    int stage2_end = 30;   // E2
    int batch_size = 64;   // B
    double lr0 = 0.002;
    double weight_decay = 1e-4;
    double tau = 0.1;      // 0.01 is the paper-faithful setting
    double lambda = 1.0;
    double mu = 2.0;
    int embed_dim = 16;    // d
    std::uint64_t seed = 1;
    std::vector<int> encoder_hidden = {64, 64};
    int feature_dim = 32;
    int proj_hidden = 32;
    AugmentConfig augment;
    CeViews ce_views = CeViews::view1;
    Method method = Method::ecl;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double lr = 0.0;
    double loss_total = 0.0;
    double loss_bhp = 0.0;
    double loss_bwce = 0.0;
    MetricsReport val;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    int best_epoch = 0;  // 1-based, earliest on ties
    double best_val_acc = 0.0;
};

struct TrainResult {
    NetworkParams params;  // best-validation-accuracy checkpoint
    ProxyBank bank;
    TrainHistory history;
};

/// Cosine decay over the epoch index (0-based): lr0 at epoch 0, lr0/2 at
/// the midpoint, approaching 0 by the final epoch.
inline double lr_schedule(int epoch_index, const TrainConfig& cfg) {
    if (epoch_index < 0 || epoch_index >= cfg.epochs)
        throw std::invalid_argument("lr_schedule: epoch index out of range");
    return cfg.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch_index / cfg.epochs));
}

namespace detail {
inline Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        double m = row[0];
        for (double x : row) m = std::max(m, x);
        double z = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) {
            p(r, c) = std::exp(row[c] - m);
            z += p(r, c);
        }
        for (std::size_t c = 0; c < row.size(); ++c) p(r, c) /= z;
    }
    return p;
}
}  // namespace detail

/// Metrics on one split with raw (un-augmented) features; class scores are
/// softmax probabilities, predictions the argmax (lowest index on ties).
inline MetricsReport evaluate(const NetworkParams& params, const Dataset& ds, Split split) {
    const auto idx = ds.split_indices(split);
    if (idx.empty()) throw std::invalid_argument("evaluate: empty split");
    Matrix X(idx.size(), ds.features.cols());
    std::vector<int> y_true(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t c = 0; c < ds.features.cols(); ++c) X(i, c) = ds.features(idx[i], c);
        y_true[i] = ds.labels[idx[i]];
    }
    const ForwardTrace t = forward(params, X, X.rows(), /*with_embeddings=*/false);
    const Matrix probs = detail::softmax_rows(t.logits);
    std::vector<int> y_pred(idx.size());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c)
            if (probs(i, c) > probs(i, best)) best = c;
        y_pred[i] = static_cast<int>(best);
    }
    return report(y_true, y_pred, probs);
}

/// Runs the full training loop: per-iteration SGD on the network, gradient
/// accumulation plus one cycle update per epoch for the proxies, curriculum
/// weights on the cross-entropy branch, validation every epoch, and
/// best-validation-accuracy checkpoint selection.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    if (!(0 < cfg.stage1_end && cfg.stage1_end < cfg.stage2_end && cfg.stage2_end < cfg.epochs))
        throw std::invalid_argument("train: need 0 < E1 < E2 < E");
    if (cfg.batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
    if (cfg.lr0 < 0.0) throw std::invalid_argument("train: lr0 must be >= 0");
    if (cfg.tau <= 0.0) throw std::invalid_argument("train: tau must be > 0");
    if (cfg.lambda < 0.0 || cfg.mu < 0.0) throw std::invalid_argument("train: lambda/mu must be >= 0");

    const int C = ds.num_classes;
    const auto train_idx = ds.split_indices(Split::train);
    const int iterations = static_cast<int>(train_idx.size()) / cfg.batch_size;  // drop-last
    if (iterations < 1)
        throw std::invalid_argument("train: batch_size exceeds the train split (" +
                                    std::to_string(train_idx.size()) + " samples)");

    NetworkShape shape;
    shape.input_dim = ds.feature_dim();
    shape.encoder_hidden = cfg.encoder_hidden;
    shape.feature_dim = cfg.feature_dim;
    shape.proj_hidden = cfg.proj_hidden;
    shape.embed_dim = cfg.embed_dim;
    shape.num_classes = C;

    NetworkParams params = init_network(shape, cfg.seed);
    ProxyBank bank = init_proxy_bank(allocate_proxies(ds.class_counts), cfg.embed_dim, cfg.seed);

    TrainResult result;
    result.history.best_val_acc = -1.0;
    std::optional<std::vector<double>> latest_f1;
    const bool curriculum_on = cfg.method == Method::ecl;
    const double lambda_eff = cfg.method == Method::ce ? 0.0 : cfg.lambda;

    for (int ei = 0; ei < cfg.epochs; ++ei) {
        const int epoch = ei + 1;
        const double lr = lr_schedule(ei, cfg);

        std::vector<double> weights(C, 1.0);
        if (curriculum_on) {
            CurriculumState st;
            st.epoch = epoch;
            st.stage1_end = cfg.stage1_end;
            st.stage2_end = cfg.stage2_end;
            st.total_epochs = cfg.epochs;
            st.train_class_counts = ds.class_counts;
            st.val_f1 = latest_f1;
            weights = curriculum_weights(st);
        }

        EpochSampler sampler(ds, cfg.seed, ei);
        double sum_total = 0.0, sum_contrast = 0.0, sum_bwce = 0.0;

        for (int t = 0; t < iterations; ++t) {
            const AugmentedBatch batch = sampler.next_batch(cfg.batch_size, cfg.augment);
            const ForwardTrace trace = forward(params, batch, cfg.ce_views);

            std::vector<int> labels2(2 * batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i)
                labels2[i] = labels2[batch.size() + i] = batch.labels[i];
            const std::vector<int> ce_labels(labels2.begin(), labels2.begin() + trace.logit_rows);

            LossOutput contrast;
            if (cfg.method == Method::ecl)
                contrast = bhp_loss(trace.embeddings, labels2, bank.proxies, cfg.tau);
            else if (cfg.method == Method::scl)
                contrast = scl_loss(trace.embeddings, labels2, cfg.tau);
            const LossOutput bwce = bwce_loss(trace.logits, ce_labels, weights);
            const LossOutput combined = combined_loss(contrast, bwce, lambda_eff, cfg.mu);

            if (!std::isfinite(combined.value))
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", iteration " + std::to_string(t + 1) +
                                         " (bhp=" + fmt_g17(contrast.value) +
                                         ", bwce=" + fmt_g17(bwce.value) + ")");

            NetworkGrads grads = backward(params, trace, combined.d_embeddings, combined.d_logits);
            sgd_step(params, grads, lr, cfg.weight_decay);
            if (cfg.method == Method::ecl) accumulate(bank, combined.d_proxies, lr);

            sum_total += combined.value;
            sum_contrast += contrast.value;
            sum_bwce += bwce.value;
        }

        if (cfg.method == Method::ecl) cycle_update(bank, iterations);

        const MetricsReport val = evaluate(params, ds, Split::val);
        std::vector<double> f1(C);
        for (int c = 0; c < C; ++c) f1[c] = val.per_class[c].f1;
        latest_f1 = std::move(f1);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.loss_total = sum_total / iterations;
        rec.loss_bhp = sum_contrast / iterations;
        rec.loss_bwce = sum_bwce / iterations;
        rec.val = val;
        result.history.records.push_back(std::move(rec));

        if (val.acc > result.history.best_val_acc) {
            result.history.best_val_acc = val.acc;
            result.history.best_epoch = epoch;
            result.params = params;
            result.bank = bank;
        }
    }
    return result;
}

inline std::string history_csv(const TrainHistory& h) {
    std::string out = "epoch,lr,loss_total,loss_bhp,loss_bwce,val_acc,val_pre,val_sen,val_f1,val_auc\n";
    for (const EpochRecord& r : h.records) {
        out += std::to_string(r.epoch);
        for (double v : {r.lr, r.loss_total, r.loss_bhp, r.loss_bwce, r.val.acc, r.val.pre, r.val.sen,
                         r.val.f1, r.val.auc}) {
            out += ',';
            out += fmt_g17(v);
        }
        out += '\n';
    }
    return out;
}

}  // namespace ecl

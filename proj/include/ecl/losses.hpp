#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecl/matrix.hpp"

namespace ecl {

/// Scalar loss plus exact gradients for whichever inputs participated.
/// Unused gradient blocks stay empty.
struct LossOutput {
    double value = 0.0;
    Matrix d_embeddings;             // n x d
    std::vector<Matrix> d_proxies;   // per class, N^p_c x d
    Matrix d_logits;                 // B x C
};

/// Per-class accounting of the positive-term coefficients, exposed so the
/// equal-contribution structure of the loss can be asserted directly.
struct BhpDiagnostics {
    std::vector<double> class_positive_mass;  // sum of positive coefficients
    std::vector<int> class_anchor_count;      // non-skipped anchors per class
    int skipped_anchors = 0;
};

namespace detail {

struct ContrastivePoints {
    // Samples first (batch order), then proxies grouped by class.
    std::size_t n_samples = 0;
    std::vector<int> cls;                           // class of every point
    std::vector<std::vector<std::size_t>> members;  // point ids per class, ascending
    std::size_t total = 0;

    std::span<const double> vec(const Matrix& embeddings, const std::vector<Matrix>& proxies,
                                std::size_t id) const {
        if (id < n_samples) return embeddings.row(id);
        std::size_t off = id - n_samples;
        for (const Matrix& p : proxies) {
            if (off < p.rows()) return p.row(off);
            off -= p.rows();
        }
        throw std::logic_error("contrastive point id out of range");
    }
};

inline ContrastivePoints index_points(const std::vector<int>& labels, int num_classes,
                                      const std::vector<Matrix>& proxies) {
    ContrastivePoints pts;
    pts.n_samples = labels.size();
    pts.members.resize(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw std::invalid_argument("label " + std::to_string(labels[i]) + " out of range [0, " +
                                        std::to_string(num_classes) + ")");
        pts.cls.push_back(labels[i]);
        pts.members[labels[i]].push_back(i);
    }
    std::size_t id = labels.size();
    for (int c = 0; c < num_classes; ++c) {
        const std::size_t rows = c < static_cast<int>(proxies.size()) ? proxies[c].rows() : 0;
        for (std::size_t k = 0; k < rows; ++k, ++id) {
            pts.cls.push_back(c);
            pts.members[c].push_back(id);
        }
    }
    pts.total = id;
    return pts;
}

}  // namespace detail

/// Balanced-hybrid-proxy loss. Anchors run over samples and proxies alike;
/// positives are every other same-class point. The partition term averages
/// each class's similarities with weight 1/(2B_c + N^p_c - 1) — the printed
/// form, with the anchor left out of its own class sum and a max(1, .)
/// guard for foreign classes that would otherwise divide by zero. Computed
/// in max-subtracted log-sum-exp form throughout.
inline LossOutput bhp_loss(const Matrix& embeddings, const std::vector<int>& labels,
                           const std::vector<Matrix>& proxies, double tau,
                           BhpDiagnostics* diag = nullptr) {
    if (tau <= 0.0) throw std::invalid_argument("tau must be > 0");
    if (embeddings.rows() != labels.size())
        throw std::invalid_argument("bhp_loss: labels/embeddings size mismatch");
    const int C = static_cast<int>(proxies.size());
    if (C == 0) throw std::invalid_argument("bhp_loss: proxy snapshot must list every class");
    const std::size_t d = embeddings.cols();
    for (const Matrix& p : proxies)
        if (p.rows() > 0 && p.cols() != d)
            throw std::invalid_argument("bhp_loss: proxy dim does not match embedding dim");

    const auto pts = detail::index_points(labels, C, proxies);
    if (pts.total < 2) throw std::invalid_argument("bhp_loss: need at least 2 points");

    // Class-member counts and normalizers (positives count of any anchor in
    // class c, and the printed per-class denominator weight).
    std::vector<std::size_t> class_size(C);
    std::vector<double> n_pos(C), class_weight(C);
    for (int c = 0; c < C; ++c) {
        class_size[c] = pts.members[c].size();
        n_pos[c] = static_cast<double>(class_size[c]) - 1.0;
        class_weight[c] = 1.0 / std::max<double>(1.0, static_cast<double>(class_size[c]) - 1.0);
    }

    // Anchors with an empty positive set are skipped and leave the outer
    // normalizer; count them up front so gradients can be scaled in one pass.
    std::size_t active = 0;
    for (std::size_t i = 0; i < pts.total; ++i)
        if (n_pos[pts.cls[i]] > 0.0) ++active;
    if (active == 0) throw std::invalid_argument("bhp_loss: degenerate batch (no anchor has positives)");
    const double outer = 1.0 / static_cast<double>(active);

    LossOutput out;
    out.d_embeddings = Matrix(embeddings.rows(), d);
    out.d_proxies.reserve(proxies.size());
    for (const Matrix& p : proxies) out.d_proxies.emplace_back(p.rows(), p.cols());

    if (diag) {
        diag->class_positive_mass.assign(C, 0.0);
        diag->class_anchor_count.assign(C, 0);
        diag->skipped_anchors = static_cast<int>(pts.total - active);
    }

    auto grad_row = [&](std::size_t id) {
        if (id < pts.n_samples) return out.d_embeddings.row(id);
        std::size_t off = id - pts.n_samples;
        for (Matrix& g : out.d_proxies) {
            if (off < g.rows()) return g.row(off);
            off -= g.rows();
        }
        throw std::logic_error("gradient row out of range");
    };

    std::vector<std::vector<double>> contribs(C);  // per anchor class
    std::vector<double> sims(pts.total);
    std::vector<double> bucket;

    for (std::size_t i = 0; i < pts.total; ++i) {
        const int ci = pts.cls[i];
        if (n_pos[ci] <= 0.0) continue;
        const auto si = pts.vec(embeddings, proxies, i);

        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < pts.total; ++k) {
            if (k == i) continue;
            sims[k] = dot(pts.vec(embeddings, proxies, k), si) / tau;
            m = std::max(m, sims[k]);
        }

        // Partition term E in shifted space: per class, anchor excluded.
        double denom = 0.0;
        for (int c = 0; c < C; ++c) {
            bucket.clear();
            for (std::size_t k : pts.members[c])
                if (k != i) bucket.push_back(std::exp(sims[k] - m));
            std::sort(bucket.begin(), bucket.end());
            double s = 0.0;
            for (double x : bucket) s += x;
            denom += class_weight[c] * s;
        }
        const double log_e = m + std::log(denom);

        bucket.clear();
        for (std::size_t k : pts.members[ci])
            if (k != i) bucket.push_back(sims[k]);
        std::sort(bucket.begin(), bucket.end());
        double pos_sum = 0.0;
        for (double x : bucket) pos_sum += x;

        const double inv_npos = 1.0 / n_pos[ci];
        contribs[ci].push_back(inv_npos * pos_sum - log_e);

        if (diag) {
            ++diag->class_anchor_count[ci];
            for (std::size_t j = 0; j < pts.members[ci].size() - 1; ++j)
                diag->class_positive_mass[ci] += inv_npos;
        }

        // dLoss/d sim_k = -outer * (positive coefficient - softmax mass).
        auto gi = grad_row(i);
        for (std::size_t k = 0; k < pts.total; ++k) {
            if (k == i) continue;
            const double q = class_weight[pts.cls[k]] * std::exp(sims[k] - m) / denom;
            const double pos_coef = pts.cls[k] == ci ? inv_npos : 0.0;
            const double coef = -outer * (pos_coef - q) / tau;
            const auto sk = pts.vec(embeddings, proxies, k);
            auto gk = grad_row(k);
            for (std::size_t j = 0; j < d; ++j) {
                gi[j] += coef * sk[j];
                gk[j] += coef * si[j];
            }
        }
    }

    double total = 0.0;
    for (int c = 0; c < C; ++c) {
        std::sort(contribs[c].begin(), contribs[c].end());
        for (double x : contribs[c]) total += x;
    }
    out.value = -outer * total;
    return out;
}

/// Plain supervised contrastive loss over the batch embeddings (no proxies,
/// no class averaging in the denominator): the reference head-heavy loss.
inline LossOutput scl_loss(const Matrix& embeddings, const std::vector<int>& labels, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("tau must be > 0");
    if (embeddings.rows() != labels.size())
        throw std::invalid_argument("scl_loss: labels/embeddings size mismatch");
    if (embeddings.rows() < 2) throw std::invalid_argument("scl_loss: need at least 2 samples");

    int C = 0;
    for (int y : labels) {
        if (y < 0) throw std::invalid_argument("scl_loss: negative label");
        C = std::max(C, y + 1);
    }
    const auto pts = detail::index_points(labels, C, {});
    const std::size_t n = pts.total;
    const std::size_t d = embeddings.cols();

    std::vector<double> n_pos(C);
    for (int c = 0; c < C; ++c) n_pos[c] = static_cast<double>(pts.members[c].size()) - 1.0;

    std::size_t active = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (n_pos[pts.cls[i]] > 0.0) ++active;
    if (active == 0) throw std::invalid_argument("scl_loss: degenerate batch (no anchor has positives)");
    const double outer = 1.0 / static_cast<double>(active);

    LossOutput out;
    out.d_embeddings = Matrix(n, d);

    std::vector<std::vector<double>> contribs(C);
    std::vector<double> sims(n);
    std::vector<double> bucket;

    for (std::size_t i = 0; i < n; ++i) {
        const int ci = pts.cls[i];
        if (n_pos[ci] <= 0.0) continue;
        const auto si = embeddings.row(i);

        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            sims[k] = dot(embeddings.row(k), si) / tau;
            m = std::max(m, sims[k]);
        }

        bucket.clear();
        for (std::size_t k = 0; k < n; ++k)
            if (k != i) bucket.push_back(std::exp(sims[k] - m));
        std::sort(bucket.begin(), bucket.end());
        double denom = 0.0;
        for (double x : bucket) denom += x;
        const double log_e = m + std::log(denom);

        bucket.clear();
        for (std::size_t k : pts.members[ci])
            if (k != i) bucket.push_back(sims[k]);
        std::sort(bucket.begin(), bucket.end());
        double pos_sum = 0.0;
        for (double x : bucket) pos_sum += x;

        const double inv_npos = 1.0 / n_pos[ci];
        contribs[ci].push_back(inv_npos * pos_sum - log_e);

        auto gi = out.d_embeddings.row(i);
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            const double q = std::exp(sims[k] - m) / denom;
            const double pos_coef = pts.cls[k] == ci ? inv_npos : 0.0;
            const double coef = -outer * (pos_coef - q) / tau;
            const auto sk = embeddings.row(k);
            auto gk = out.d_embeddings.row(k);
            for (std::size_t j = 0; j < d; ++j) {
                gi[j] += coef * sk[j];
                gk[j] += coef * si[j];
            }
        }
    }

    double total = 0.0;
    for (int c = 0; c < C; ++c) {
        std::sort(contribs[c].begin(), contribs[c].end());
        for (double x : contribs[c]) total += x;
    }
    out.value = -outer * total;
    return out;
}

/// Epoch position within the three curriculum stages plus whatever feedback
/// stage 3 needs. Epochs are 1-based; stage boundaries close on the right
/// (stage 1 is e <= E1, stage 2 ends at E2, stage 3 at E).
struct CurriculumState {
    int epoch = 1;        // e, 1-based
    int stage1_end = 12;  // E1
    int stage2_end = 30;  // E2
    int total_epochs = 60;  // E
    std::vector<int> train_class_counts;          // N_c
    std::optional<std::vector<double>> val_f1;    // f^e_c, required in stage 3
};

/// Eq.-style three-stage class weights: uniform, then inverse-frequency
/// ramp, then inverse-validation-f1 ramp. Exponents 0 and 1 bypass pow so
/// the boundary values are exact.
inline std::vector<double> curriculum_weights(const CurriculumState& st) {
    const int C = static_cast<int>(st.train_class_counts.size());
    if (C < 1) throw std::invalid_argument("curriculum_weights: no classes");
    if (!(0 < st.stage1_end && st.stage1_end < st.stage2_end && st.stage2_end < st.total_epochs))
        throw std::invalid_argument("curriculum_weights: need 0 < E1 < E2 < E");
    if (st.epoch < 1 || st.epoch > st.total_epochs)
        throw std::invalid_argument("curriculum_weights: epoch out of range");
    for (int n : st.train_class_counts)
        if (n <= 0) throw std::invalid_argument("curriculum_weights: non-positive class count");

    std::vector<double> w(C, 1.0);
    if (st.epoch <= st.stage1_end) return w;

    auto ramp = [C, &w](const std::vector<double>& inv, double t) {
        double s = 0.0;
        for (double x : inv) s += x;
        for (int c = 0; c < C; ++c) {
            const double base = static_cast<double>(C) * inv[c] / s;
            w[c] = t == 1.0 ? base : std::pow(base, t);
        }
    };

    if (st.epoch <= st.stage2_end) {
        std::vector<double> inv(C);
        for (int c = 0; c < C; ++c) inv[c] = 1.0 / static_cast<double>(st.train_class_counts[c]);
        ramp(inv, static_cast<double>(st.epoch - st.stage1_end) /
                      static_cast<double>(st.stage2_end - st.stage1_end));
        return w;
    }

    if (!st.val_f1) throw std::runtime_error("curriculum_weights: stage 3 requires validation f1 scores");
    if (static_cast<int>(st.val_f1->size()) != C)
        throw std::invalid_argument("curriculum_weights: f1 vector size mismatch");
    std::vector<double> inv(C);
    for (int c = 0; c < C; ++c) {
        const double f = std::max((*st.val_f1)[c], 0.01);  // classes scored 0 stay finite
        inv[c] = 1.0 / f;
    }
    ramp(inv, static_cast<double>(st.epoch - st.stage2_end) /
                  static_cast<double>(st.total_epochs - st.stage2_end));
    return w;
}

/// Class-weighted cross-entropy, mean over the batch, log-sum-exp stable.
inline LossOutput bwce_loss(const Matrix& logits, const std::vector<int>& labels,
                            const std::vector<double>& class_weights) {
    const std::size_t B = logits.rows();
    const std::size_t C = logits.cols();
    if (B == 0) throw std::invalid_argument("bwce_loss: empty batch");
    if (labels.size() != B) throw std::invalid_argument("bwce_loss: labels size mismatch");
    if (class_weights.size() != C) throw std::invalid_argument("bwce_loss: weights size mismatch");
    if (!all_finite(logits)) throw std::invalid_argument("bwce_loss: non-finite logits");

    LossOutput out;
    out.d_logits = Matrix(B, C);
    std::vector<double> terms(B);
    for (std::size_t i = 0; i < B; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= static_cast<int>(C))
            throw std::invalid_argument("bwce_loss: label " + std::to_string(y) + " out of range [0, " +
                                        std::to_string(C) + ")");
        auto row = logits.row(i);
        double m = row[0];
        for (double x : row) m = std::max(m, x);
        double z = 0.0;
        for (double x : row) z += std::exp(x - m);
        const double lse = m + std::log(z);
        const double wi = class_weights[y];
        terms[i] = wi * (lse - row[y]);

        const double scale = wi / static_cast<double>(B);
        for (std::size_t c = 0; c < C; ++c) {
            const double p = std::exp(row[c] - m) / z;
            out.d_logits(i, c) = scale * (p - (static_cast<int>(c) == y ? 1.0 : 0.0));
        }
    }
    out.value = sorted_sum(std::move(terms)) / static_cast<double>(B);
    return out;
}

/// Loss = lambda * L_BHP + mu * L_BWCE; gradients combine linearly.
inline LossOutput combined_loss(const LossOutput& bhp, const LossOutput& bwce, double lambda,
                                double mu) {
    if (lambda < 0.0 || mu < 0.0) throw std::invalid_argument("combined_loss: lambda and mu must be >= 0");
    LossOutput out;
    out.value = lambda * bhp.value + mu * bwce.value;
    out.d_embeddings = bhp.d_embeddings;
    for (std::size_t i = 0; i < out.d_embeddings.size(); ++i) out.d_embeddings.data()[i] *= lambda;
    out.d_proxies = bhp.d_proxies;
    for (Matrix& g : out.d_proxies)
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= lambda;
    out.d_logits = bwce.d_logits;
    for (std::size_t i = 0; i < out.d_logits.size(); ++i) out.d_logits.data()[i] *= mu;
    return out;
}

}  // namespace ecl

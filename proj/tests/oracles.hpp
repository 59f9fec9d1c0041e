#pragma once

// Independent brute-force oracles for the test suites. These deliberately
// re-derive every value with naive direct summation (no log-sum-exp, no
// shared code with the library paths they check).

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ecl/matrix.hpp"

namespace oracle {

inline double naive_dot(const ecl::Matrix& a, std::size_t ra, const ecl::Matrix& b, std::size_t rb) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(ra, j) * b(rb, j);
    return s;
}

// Direct summation of the balanced-hybrid-proxy loss: anchors over samples
// and proxies, per-class averaged partition term with the anchor excluded
// from its own class and the printed "- 1" normalizer guarded by max(1, .).
inline double bhp_direct(const ecl::Matrix& Z, const std::vector<int>& labels,
                         const std::vector<ecl::Matrix>& proxies, double tau) {
    const int C = static_cast<int>(proxies.size());
    struct Point {
        std::vector<double> v;
        int cls;
    };
    std::vector<Point> pts;
    for (std::size_t i = 0; i < Z.rows(); ++i) {
        Point p;
        p.cls = labels[i];
        for (std::size_t j = 0; j < Z.cols(); ++j) p.v.push_back(Z(i, j));
        pts.push_back(std::move(p));
    }
    for (int c = 0; c < C; ++c)
        for (std::size_t k = 0; k < proxies[c].rows(); ++k) {
            Point p;
            p.cls = c;
            for (std::size_t j = 0; j < proxies[c].cols(); ++j) p.v.push_back(proxies[c](k, j));
            pts.push_back(std::move(p));
        }

    std::vector<int> class_size(C, 0);
    for (const Point& p : pts) ++class_size[p.cls];

    auto sim = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t j = 0; j < pts[a].v.size(); ++j) s += pts[a].v[j] * pts[b].v[j];
        return std::exp(s / tau);
    };

    int active = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const int ci = pts[i].cls;
        const int n_pos = class_size[ci] - 1;
        if (n_pos <= 0) continue;
        ++active;

        double E = 0.0;
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < pts.size(); ++k)
                if (k != i && pts[k].cls == c) s += sim(i, k);
            E += s / std::max(1, class_size[c] - 1);
        }

        double inner = 0.0;
        for (std::size_t j = 0; j < pts.size(); ++j)
            if (j != i && pts[j].cls == ci) inner += std::log(sim(i, j) / E);
        total += inner / n_pos;
    }
    return -total / active;
}

// No-proxy (BCL-style) variant: per-class-averaged denominator over batch
// samples only.
inline double bcl_direct(const ecl::Matrix& Z, const std::vector<int>& labels, double tau) {
    int C = 0;
    for (int y : labels) C = std::max(C, y + 1);
    std::vector<int> class_size(C, 0);
    for (int y : labels) ++class_size[y];

    auto sim = [&](std::size_t a, std::size_t b) {
        return std::exp(naive_dot(Z, a, Z, b) / tau);
    };

    int active = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < Z.rows(); ++i) {
        const int ci = labels[i];
        const int n_pos = class_size[ci] - 1;
        if (n_pos <= 0) continue;
        ++active;
        double E = 0.0;
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < Z.rows(); ++k)
                if (k != i && labels[k] == c) s += sim(i, k);
            E += s / std::max(1, class_size[c] - 1);
        }
        double inner = 0.0;
        for (std::size_t j = 0; j < Z.rows(); ++j)
            if (j != i && labels[j] == ci) inner += std::log(sim(i, j) / E);
        total += inner / n_pos;
    }
    return -total / active;
}

// Standard supervised contrastive loss, anchor excluded from the
// (un-averaged) denominator.
inline double scl_direct(const ecl::Matrix& Z, const std::vector<int>& labels, double tau) {
    std::vector<int> class_size;
    for (int y : labels) {
        if (y >= static_cast<int>(class_size.size())) class_size.resize(y + 1, 0);
        ++class_size[y];
    }
    auto sim = [&](std::size_t a, std::size_t b) {
        return std::exp(naive_dot(Z, a, Z, b) / tau);
    };
    int active = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < Z.rows(); ++i) {
        const int n_pos = class_size[labels[i]] - 1;
        if (n_pos <= 0) continue;
        ++active;
        double denom = 0.0;
        for (std::size_t k = 0; k < Z.rows(); ++k)
            if (k != i) denom += sim(i, k);
        double inner = 0.0;
        for (std::size_t j = 0; j < Z.rows(); ++j)
            if (j != i && labels[j] == labels[i]) inner += std::log(sim(i, j) / denom);
        total += inner / n_pos;
    }
    return -total / active;
}

struct MetricsOracle {
    double acc, pre, sen, f1, auc;
    std::vector<double> precision, recall, f1s, aucs;
};

// Metric formulas straight from their definitions; AUC by explicit
// positive-negative pair counting with 1/2 credit for ties.
inline MetricsOracle metrics_direct(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                    const ecl::Matrix& scores) {
    const int C = static_cast<int>(scores.cols());
    const std::size_t n = y_true.size();
    MetricsOracle m{};

    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (y_true[i] == y_pred[i]) ++correct;
    m.acc = static_cast<double>(correct) / static_cast<double>(n);

    for (int c = 0; c < C; ++c) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (y_pred[i] == c && y_true[i] == c) tp += 1;
            if (y_pred[i] == c && y_true[i] != c) fp += 1;
            if (y_pred[i] != c && y_true[i] == c) fn += 1;
        }
        const double prec = tp + fp == 0 ? 0.0 : tp / (tp + fp);
        const double rec = tp / (tp + fn);
        const double f = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);

        double pairs = 0.0, wins = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (y_true[i] != c) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (y_true[j] == c) continue;
                pairs += 1.0;
                if (scores(i, c) > scores(j, c)) wins += 1.0;
                else if (scores(i, c) == scores(j, c)) wins += 0.5;
            }
        }
        m.precision.push_back(prec);
        m.recall.push_back(rec);
        m.f1s.push_back(f);
        m.aucs.push_back(wins / pairs);
    }
    for (int c = 0; c < C; ++c) {
        m.pre += m.precision[c];
        m.sen += m.recall[c];
        m.f1 += m.f1s[c];
        m.auc += m.aucs[c];
    }
    m.pre /= C;
    m.sen /= C;
    m.f1 /= C;
    m.auc /= C;
    return m;
}

// Central finite difference of a scalar function with respect to one
// in-place coordinate.
inline double fd(const std::function<double()>& f, double& x, double h = 1e-5) {
    const double orig = x;
    x = orig + h;
    const double fp = f();
    x = orig - h;
    const double fm = f();
    x = orig;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace oracle

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecl/matrix.hpp"

namespace ecl {

struct ClassScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
};

struct MetricsReport {
    double acc = 0.0;
    double pre = 0.0;  // macro precision
    double sen = 0.0;  // macro recall
    double f1 = 0.0;   // macro f1
    double auc = 0.0;  // macro one-vs-rest AUC
    std::vector<ClassScore> per_class;
    std::vector<std::vector<long long>> confusion;        // [true][pred]
    std::vector<std::vector<double>> confusion_normalized;  // rows sum to 1
};

namespace detail {

/// One-vs-rest AUC as the Mann-Whitney rank statistic; ties get rank
/// averages, which credits tied positive/negative pairs with 1/2.
inline double rank_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::size_t n_pos = 0;
    for (bool p : positive) n_pos += p ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("AUC undefined: class has no positives or no negatives");

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k)
            if (positive[order[k]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

inline std::string fmt_fixed(double x, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
    return buf;
}

}  // namespace detail

/// Builds the full report: accuracy, per-class precision/recall/f1 with the
/// 0/0 -> 0 convention, rank AUC, macro averages and confusion matrices.
/// Every class must appear in true_labels or the macro scores are undefined.
inline MetricsReport report(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                            const Matrix& class_scores) {
    const std::size_t n = y_true.size();
    if (n == 0) throw std::invalid_argument("report: empty label set");
    if (y_pred.size() != n || class_scores.rows() != n)
        throw std::invalid_argument("report: length mismatch");
    const int C = static_cast<int>(class_scores.cols());
    if (C < 2) throw std::invalid_argument("report: need at least 2 classes");
    if (!all_finite(class_scores)) throw std::invalid_argument("report: non-finite scores");

    std::vector<long long> true_count(C, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (y_true[i] < 0 || y_true[i] >= C || y_pred[i] < 0 || y_pred[i] >= C)
            throw std::invalid_argument("report: label out of range");
        ++true_count[y_true[i]];
    }
    for (int c = 0; c < C; ++c)
        if (true_count[c] == 0)
            throw std::invalid_argument("report: class " + std::to_string(c) +
                                        " absent from true labels; macro scores undefined");

    MetricsReport r;
    r.confusion.assign(C, std::vector<long long>(C, 0));
    long long correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ++r.confusion[y_true[i]][y_pred[i]];
        if (y_true[i] == y_pred[i]) ++correct;
    }
    r.acc = static_cast<double>(correct) / static_cast<double>(n);

    r.confusion_normalized.assign(C, std::vector<double>(C, 0.0));
    for (int c = 0; c < C; ++c)
        for (int p = 0; p < C; ++p)
            r.confusion_normalized[c][p] =
                static_cast<double>(r.confusion[c][p]) / static_cast<double>(true_count[c]);

    r.per_class.resize(C);
    std::vector<double> col(n);
    std::vector<bool> pos(n);
    for (int c = 0; c < C; ++c) {
        long long tp = r.confusion[c][c];
        long long fp = 0, fn = 0;
        for (int o = 0; o < C; ++o) {
            if (o == c) continue;
            fp += r.confusion[o][c];
            fn += r.confusion[c][o];
        }
        ClassScore& s = r.per_class[c];
        s.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        s.f1 = s.precision + s.recall == 0.0 ? 0.0
                                             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = class_scores(i, static_cast<std::size_t>(c));
            pos[i] = y_true[i] == c;
        }
        s.auc = detail::rank_auc(col, pos);
    }

    for (const ClassScore& s : r.per_class) {
        r.pre += s.precision;
        r.sen += s.recall;
        r.f1 += s.f1;
        r.auc += s.auc;
    }
    r.pre /= C;
    r.sen /= C;
    r.f1 /= C;
    r.auc /= C;
    return r;
}

inline nlohmann::ordered_json report_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["acc"] = r.acc;
    j["pre"] = r.pre;
    j["sen"] = r.sen;
    j["f1"] = r.f1;
    j["auc"] = r.auc;
    j["per_class"] = nlohmann::ordered_json::array();
    for (const ClassScore& s : r.per_class) {
        nlohmann::ordered_json e;
        e["precision"] = s.precision;
        e["recall"] = s.recall;
        e["f1"] = s.f1;
        e["auc"] = s.auc;
        j["per_class"].push_back(e);
    }
    j["confusion"] = r.confusion;
    j["confusion_normalized"] = r.confusion_normalized;
    return j;
}

inline std::string report_json(const MetricsReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline std::string confusion_csv(const MetricsReport& r) {
    std::string out;
    for (const auto& row : r.confusion) {
        for (std::size_t p = 0; p < row.size(); ++p) {
            if (p) out += ',';
            out += std::to_string(row[p]);
        }
        out += '\n';
    }
    return out;
}

/// Row-normalized confusion heatmap, values printed to 2 decimals. Output
/// is a pure function of the report, so identical reports give identical
/// bytes.
inline std::string confusion_svg(const MetricsReport& r) {
    const int C = static_cast<int>(r.confusion.size());
    const int cell = 56, left = 72, top = 56, right = 16, bottom = 64;
    const int width = left + C * cell + right;
    const int height = top + C * cell + bottom;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\">\n";
    svg += "<rect width=\"" + std::to_string(width) + "\" height=\"" + std::to_string(height) +
           "\" fill=\"white\"/>\n";

    for (int t = 0; t < C; ++t) {
        for (int p = 0; p < C; ++p) {
            const double v = r.confusion_normalized[t][p];
            // white -> dark blue ramp
            const int red = static_cast<int>(std::lround(255.0 - v * (255.0 - 8.0)));
            const int grn = static_cast<int>(std::lround(255.0 - v * (255.0 - 48.0)));
            const int blu = static_cast<int>(std::lround(255.0 - v * (255.0 - 107.0)));
            const int x = left + p * cell, y = top + t * cell;
            svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
                   std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"rgb(" +
                   std::to_string(red) + "," + std::to_string(grn) + "," + std::to_string(blu) +
                   ")\" stroke=\"#cccccc\"/>\n";
            const char* color = v > 0.5 ? "white" : "black";
            svg += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
                   std::to_string(y + cell / 2 + 5) +
                   "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" fill=\"" +
                   color + "\">" + detail::fmt_fixed(v, 2) + "</text>\n";
        }
    }

    for (int c = 0; c < C; ++c) {
        svg += "<text x=\"" + std::to_string(left + c * cell + cell / 2) + "\" y=\"" +
               std::to_string(top - 10) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
               std::to_string(c) + "</text>\n";
        svg += "<text x=\"" + std::to_string(left - 12) + "\" y=\"" +
               std::to_string(top + c * cell + cell / 2 + 5) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"14\">" +
               std::to_string(c) + "</text>\n";
    }
    svg += "<text x=\"" + std::to_string(left + C * cell / 2) + "\" y=\"" +
           std::to_string(top + C * cell + 36) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">Predicted</text>\n";
    svg += "<text x=\"18\" y=\"" + std::to_string(top + C * cell / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\" transform=\"rotate(-90 18 " +
           std::to_string(top + C * cell / 2) + ")\">True</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace ecl

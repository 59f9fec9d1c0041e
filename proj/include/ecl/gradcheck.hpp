#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecl/losses.hpp"
#include "ecl/matrix.hpp"
#include "ecl/network.hpp"
#include "ecl/rng.hpp"

namespace ecl {

/// Central-difference verification of every analytic gradient in the lab.
/// Relative error uses a unit floor, |a - n| / max(1, |a|, |n|), so
/// near-zero coordinates compare absolutely and large ones relatively.
struct GradCheckEntry {
    double max_rel_error = 0.0;
    std::string worst;  // coordinate of the largest error
    bool pass = true;
};

struct GradCheckReport {
    std::uint64_t seed = 0;
    int configs = 0;
    double h = 0.0;
    double threshold = 0.0;
    GradCheckEntry bhp, scl, bwce, network;
    bool pass = true;
};

namespace detail {

inline constexpr std::uint64_t kGradCheckTag = 0x67636b31ULL;

struct CoordSpan {
    std::string name;
    double* data;
    std::size_t size;
};

inline void fd_compare(const std::function<double()>& value, const std::vector<CoordSpan>& coords,
                       const std::vector<const double*>& analytic, double h,
                       const std::string& config_tag, GradCheckEntry& entry) {
    for (std::size_t t = 0; t < coords.size(); ++t) {
        for (std::size_t i = 0; i < coords[t].size; ++i) {
            double& x = coords[t].data[i];
            const double orig = x;
            x = orig + h;
            const double fp = value();
            x = orig - h;
            const double fm = value();
            x = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[t][i];
            const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (err > entry.max_rel_error) {
                entry.max_rel_error = err;
                entry.worst = config_tag + " " + coords[t].name + "[" + std::to_string(i) + "]";
            }
        }
    }
}

inline Matrix random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = m.row(r);
        double norm = 0.0;
        do {
            for (double& x : row) x = rng.normal();
            norm = std::sqrt(dot(row, row));
        } while (norm < 1e-3);
        for (double& x : row) x /= norm;
    }
    return m;
}

}  // namespace detail

/// Runs the finite-difference suites for bhp_loss, scl_loss, bwce_loss and
/// the full network backward pass over `configs` random configurations
/// (temperature cycling through 0.01 / 0.1 / 1).
inline GradCheckReport run_gradcheck(std::uint64_t seed = 2024, int configs = 20, double h = 1e-5,
                                     double threshold = 1e-6) {
    GradCheckReport rep;
    rep.seed = seed;
    rep.configs = configs;
    rep.h = h;
    rep.threshold = threshold;

    constexpr double taus[3] = {0.01, 0.1, 1.0};
    // Test hook: lets the CLI's negative-control path prove a broken
    // gradient is actually caught.
    const bool corrupt = std::getenv("ECL_GRADCHECK_CORRUPT") != nullptr;

    for (int cfg = 0; cfg < configs; ++cfg) {
        Rng rng(Rng::derive(seed, detail::kGradCheckTag, static_cast<std::uint64_t>(cfg)));
        const double tau = taus[cfg % 3];
        const int C = 2 + static_cast<int>(rng.below(3));
        const std::size_t B = 2 + rng.below(4);
        const std::size_t n = 2 * B;
        const std::size_t d = 3 + rng.below(3);
        const std::string tag = "config " + std::to_string(cfg) + ":";

        std::vector<int> labels2(n);
        for (std::size_t i = 0; i < B; ++i) {
            const int y = i < static_cast<std::size_t>(C) ? static_cast<int>(i)
                                                          : static_cast<int>(rng.below(C));
            labels2[i] = labels2[B + i] = y;
        }
        std::vector<Matrix> proxies;
        for (int c = 0; c < C; ++c)
            proxies.push_back(detail::random_unit_rows(1 + rng.below(3), d, rng));

        {  // bhp: gradients w.r.t. embeddings and proxies
            Matrix Z = detail::random_unit_rows(n, d, rng);
            LossOutput out = bhp_loss(Z, labels2, proxies, tau);
            if (corrupt && cfg == 0) out.d_embeddings.data()[0] += 1e-3;
            std::vector<detail::CoordSpan> coords{{"embeddings", Z.data(), Z.size()}};
            std::vector<const double*> grads{out.d_embeddings.data()};
            for (int c = 0; c < C; ++c) {
                coords.push_back({"proxy/" + std::to_string(c), proxies[c].data(), proxies[c].size()});
                grads.push_back(out.d_proxies[c].data());
            }
            detail::fd_compare([&] { return bhp_loss(Z, labels2, proxies, tau).value; }, coords,
                               grads, h, tag, rep.bhp);
        }
        {  // scl
            Matrix Z = detail::random_unit_rows(n, d, rng);
            const LossOutput out = scl_loss(Z, labels2, tau);
            detail::fd_compare([&] { return scl_loss(Z, labels2, tau).value; },
                               {{"embeddings", Z.data(), Z.size()}}, {out.d_embeddings.data()}, h,
                               tag, rep.scl);
        }

        std::vector<double> weights(C);
        for (int c = 0; c < C; ++c) weights[c] = 0.2 + 1.6 * rng.uniform();
        {  // bwce
            Matrix logits(B, static_cast<std::size_t>(C));
            for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = 2.0 * rng.normal();
            const std::vector<int> labels(labels2.begin(), labels2.begin() + B);
            const LossOutput out = bwce_loss(logits, labels, weights);
            detail::fd_compare([&] { return bwce_loss(logits, labels, weights).value; },
                               {{"logits", logits.data(), logits.size()}}, {out.d_logits.data()}, h,
                               tag, rep.bwce);
        }

        {  // full network: combined loss through forward/backward
            NetworkShape shape;
            shape.input_dim = 2 + static_cast<int>(rng.below(3));
            shape.encoder_hidden = {3 + static_cast<int>(rng.below(4)), 3 + static_cast<int>(rng.below(4))};
            shape.feature_dim = 3 + static_cast<int>(rng.below(3));
            shape.proj_hidden = 3 + static_cast<int>(rng.below(3));
            shape.embed_dim = static_cast<int>(d);
            shape.num_classes = C;
            NetworkParams params = init_network(shape, rng.next_u64());

            Matrix inputs(n, static_cast<std::size_t>(shape.input_dim));
            for (std::size_t i = 0; i < inputs.size(); ++i) inputs.data()[i] = rng.normal();
            const std::vector<int> ce_labels(labels2.begin(), labels2.begin() + B);
            const double lambda = 0.7, mu = 1.3;

            auto scalar = [&]() {
                const ForwardTrace t = forward(params, inputs, B);
                const double c_val = bhp_loss(t.embeddings, labels2, proxies, tau).value;
                const double b_val = bwce_loss(t.logits, ce_labels, weights).value;
                return lambda * c_val + mu * b_val;
            };

            const ForwardTrace t = forward(params, inputs, B);
            LossOutput contrast = bhp_loss(t.embeddings, labels2, proxies, tau);
            LossOutput bw = bwce_loss(t.logits, ce_labels, weights);
            const LossOutput combined = combined_loss(contrast, bw, lambda, mu);
            NetworkGrads grads = backward(params, t, combined.d_embeddings, combined.d_logits);

            auto prefs = param_tensors(params);
            auto grefs = param_tensors(grads);
            std::vector<detail::CoordSpan> coords;
            std::vector<const double*> analytic;
            for (std::size_t i = 0; i < prefs.size(); ++i) {
                coords.push_back({prefs[i].name, prefs[i].data, prefs[i].size});
                analytic.push_back(grefs[i].data);
            }
            detail::fd_compare(scalar, coords, analytic, h, tag, rep.network);
        }
    }

    for (GradCheckEntry* e : {&rep.bhp, &rep.scl, &rep.bwce, &rep.network}) {
        e->pass = e->max_rel_error <= threshold;
        rep.pass = rep.pass && e->pass;
    }
    return rep;
}

inline nlohmann::ordered_json gradcheck_json(const GradCheckReport& rep) {
    nlohmann::ordered_json j;
    j["seed"] = rep.seed;
    j["configs"] = rep.configs;
    j["h"] = rep.h;
    j["threshold"] = rep.threshold;
    auto entry = [](const GradCheckEntry& e) {
        nlohmann::ordered_json o;
        o["max_rel_error"] = e.max_rel_error;
        o["worst"] = e.worst;
        o["pass"] = e.pass;
        return o;
    };
    j["bhp"] = entry(rep.bhp);
    j["scl"] = entry(rep.scl);
    j["bwce"] = entry(rep.bwce);
    j["network"] = entry(rep.network);
    j["pass"] = rep.pass;
    return j;
}

}  // namespace ecl

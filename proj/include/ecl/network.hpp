#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecl/matrix.hpp"
#include "ecl/rng.hpp"
#include "ecl/sampler.hpp"

namespace ecl {

struct DenseLayer {
    Matrix weight;             // out x in
    std::vector<double> bias;  // out

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }
};

/// Which augmented view(s) feed the classifier head.
enum class CeViews { view1, both };

struct NetworkShape {
    int input_dim = 2;                       // k
    std::vector<int> encoder_hidden = {64, 64};
    int feature_dim = 32;                    // encoder output
    int proj_hidden = 32;                    // hidden width of h
    int embed_dim = 16;                      // d
    int num_classes = 5;                     // C
};

/// Shared MLP encoder (ReLU), one-hidden-layer projection head h to the
/// unit sphere, and a single linear classifier g on the encoder features.
struct NetworkParams {
    std::vector<DenseLayer> encoder;  // ReLU after every layer
    DenseLayer proj_hidden;           // ReLU
    DenseLayer proj_out;              // linear; rows are L2-normalized after
    DenseLayer classifier;            // linear logits
};

using NetworkGrads = NetworkParams;

/// Flat view of one parameter tensor, used by the optimizer, the gradient
/// checker and the checkpoint writer so they all agree on naming and order.
struct TensorRef {
    std::string name;
    double* data;
    std::size_t size;
    std::vector<std::size_t> shape;
};

inline std::vector<TensorRef> param_tensors(NetworkParams& p) {
    std::vector<TensorRef> refs;
    auto add = [&refs](const std::string& name, DenseLayer& l) {
        refs.push_back({name + "/weight", l.weight.data(), l.weight.size(), {l.weight.rows(), l.weight.cols()}});
        refs.push_back({name + "/bias", l.bias.data(), l.bias.size(), {l.bias.size()}});
    };
    for (std::size_t i = 0; i < p.encoder.size(); ++i) add("encoder/" + std::to_string(i), p.encoder[i]);
    add("proj/hidden", p.proj_hidden);
    add("proj/out", p.proj_out);
    add("classifier", p.classifier);
    return refs;
}

namespace detail {
inline constexpr std::uint64_t kNetworkInitTag = 0x6e657469ULL;

inline DenseLayer make_layer(std::size_t out, std::size_t in) {
    DenseLayer l;
    l.weight = Matrix(out, in);
    l.bias.assign(out, 0.0);
    return l;
}

inline void he_uniform(DenseLayer& l, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim()));
    for (std::size_t i = 0; i < l.weight.size(); ++i)
        l.weight.data()[i] = limit * (2.0 * rng.uniform() - 1.0);
}

/// out = in * W^T + b, rows independent, inner loop in fixed column order.
inline Matrix dense_forward(const DenseLayer& l, const Matrix& in) {
    Matrix out(in.rows(), l.out_dim());
    for (std::size_t r = 0; r < in.rows(); ++r) {
        auto x = in.row(r);
        for (std::size_t o = 0; o < l.out_dim(); ++o)
            out(r, o) = l.bias[o] + dot(l.weight.row(o), x);
    }
    return out;
}

inline Matrix relu(const Matrix& pre) {
    Matrix out = pre;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out.data()[i] < 0.0) out.data()[i] = 0.0;
    return out;
}

inline void check_finite(const Matrix& m, const std::string& where) {
    if (!all_finite(m)) throw std::runtime_error("non-finite activation in " + where);
}
}  // namespace detail

inline NetworkParams init_network(const NetworkShape& shape, std::uint64_t seed) {
    if (shape.input_dim < 1 || shape.feature_dim < 1 || shape.proj_hidden < 1 ||
        shape.embed_dim < 2 || shape.num_classes < 2)
        throw std::invalid_argument("init_network: invalid shape");
    NetworkParams p;
    std::size_t in = static_cast<std::size_t>(shape.input_dim);
    for (int h : shape.encoder_hidden) {
        if (h < 1) throw std::invalid_argument("init_network: encoder hidden size must be >= 1");
        p.encoder.push_back(detail::make_layer(static_cast<std::size_t>(h), in));
        in = static_cast<std::size_t>(h);
    }
    p.encoder.push_back(detail::make_layer(static_cast<std::size_t>(shape.feature_dim), in));
    p.proj_hidden = detail::make_layer(shape.proj_hidden, shape.feature_dim);
    p.proj_out = detail::make_layer(shape.embed_dim, shape.proj_hidden);
    p.classifier = detail::make_layer(shape.num_classes, shape.feature_dim);

    Rng rng(Rng::derive(seed, detail::kNetworkInitTag));
    for (DenseLayer& l : p.encoder) detail::he_uniform(l, rng);
    detail::he_uniform(p.proj_hidden, rng);
    detail::he_uniform(p.proj_out, rng);
    detail::he_uniform(p.classifier, rng);
    return p;
}

inline NetworkGrads zero_grads_like(const NetworkParams& p) {
    NetworkGrads g = p;
    auto refs = param_tensors(g);
    for (auto& t : refs)
        for (std::size_t i = 0; i < t.size; ++i) t.data[i] = 0.0;
    return g;
}

/// Everything the backward pass needs, cached once per forward.
struct ForwardTrace {
    Matrix inputs;                   // n x k
    std::vector<Matrix> enc_pre;     // pre-activations per encoder layer
    Matrix features;                 // n x feat_dim (post-ReLU)
    Matrix proj_hidden_pre;          // n x proj_hidden
    Matrix embed_pre;                // n x d, pre-normalization
    std::vector<double> embed_norm;  // per-row L2 norm of embed_pre
    Matrix embeddings;               // n x d, unit rows (Z)
    Matrix logits;                   // logit_rows x C
    std::size_t logit_rows = 0;
    bool has_embeddings = false;
};

/// Runs `inputs` through the shared encoder; the first `logit_rows` rows
/// also pass the classifier. Embeddings can be skipped for plain evaluation.
inline ForwardTrace forward(const NetworkParams& params, const Matrix& inputs,
                            std::size_t logit_rows, bool with_embeddings = true) {
    if (inputs.cols() != params.encoder.front().in_dim())
        throw std::invalid_argument("forward: input dim " + std::to_string(inputs.cols()) +
                                    " does not match encoder input dim " +
                                    std::to_string(params.encoder.front().in_dim()));
    if (logit_rows > inputs.rows()) throw std::invalid_argument("forward: logit_rows out of range");

    ForwardTrace t;
    t.inputs = inputs;
    Matrix act = inputs;
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        Matrix pre = detail::dense_forward(params.encoder[l], act);
        detail::check_finite(pre, "encoder layer " + std::to_string(l));
        act = detail::relu(pre);
        t.enc_pre.push_back(std::move(pre));
    }
    t.features = std::move(act);

    if (with_embeddings) {
        t.proj_hidden_pre = detail::dense_forward(params.proj_hidden, t.features);
        detail::check_finite(t.proj_hidden_pre, "projection hidden layer");
        Matrix hidden = detail::relu(t.proj_hidden_pre);
        t.embed_pre = detail::dense_forward(params.proj_out, hidden);
        detail::check_finite(t.embed_pre, "projection output layer");

        t.embeddings = t.embed_pre;
        t.embed_norm.resize(t.embed_pre.rows());
        for (std::size_t r = 0; r < t.embed_pre.rows(); ++r) {
            auto row = t.embeddings.row(r);
            const double norm = std::sqrt(dot(row, row));
            if (norm < 1e-12)
                throw std::runtime_error("zero-vector cannot be normalized (embedding row " +
                                         std::to_string(r) + ")");
            t.embed_norm[r] = norm;
            for (double& x : row) x /= norm;
        }
        t.has_embeddings = true;
    }

    t.logit_rows = logit_rows;
    if (logit_rows > 0) {
        Matrix head_in(logit_rows, t.features.cols());
        for (std::size_t r = 0; r < logit_rows; ++r)
            for (std::size_t c = 0; c < t.features.cols(); ++c) head_in(r, c) = t.features(r, c);
        t.logits = detail::dense_forward(params.classifier, head_in);
        detail::check_finite(t.logits, "classifier");
    }
    return t;
}

/// Stacks the two views (view1 rows first) and routes view1 — or both —
/// to the classifier.
inline ForwardTrace forward(const NetworkParams& params, const AugmentedBatch& batch,
                            CeViews ce_views = CeViews::view1) {
    const std::size_t b = batch.size();
    const std::size_t k = batch.view1.cols();
    Matrix stacked(2 * b, k);
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t c = 0; c < k; ++c) {
            stacked(r, c) = batch.view1(r, c);
            stacked(b + r, c) = batch.view2(r, c);
        }
    return forward(params, stacked, ce_views == CeViews::view1 ? b : 2 * b);
}

/// Reverse-mode pass. d_embeddings is the cotangent of the normalized Z
/// (empty matrix if unused); d_logits likewise. Returns gradients for every
/// parameter, including the (I - z z^T)/||u|| normalization Jacobian.
inline NetworkGrads backward(const NetworkParams& params, const ForwardTrace& t,
                             const Matrix& d_embeddings, const Matrix& d_logits) {
    const std::size_t n = t.inputs.rows();
    if (!d_embeddings.empty()) {
        if (!t.has_embeddings) throw std::invalid_argument("backward: trace has no embeddings");
        if (d_embeddings.rows() != n || d_embeddings.cols() != t.embeddings.cols())
            throw std::invalid_argument("backward: d_embeddings shape mismatch");
    }
    if (!d_logits.empty() &&
        (d_logits.rows() != t.logit_rows || d_logits.cols() != params.classifier.out_dim()))
        throw std::invalid_argument("backward: d_logits shape mismatch");

    NetworkGrads g = zero_grads_like(params);
    Matrix d_feat(n, t.features.cols());

    if (!d_logits.empty()) {
        for (std::size_t r = 0; r < d_logits.rows(); ++r) {
            for (std::size_t o = 0; o < d_logits.cols(); ++o) {
                const double dl = d_logits(r, o);
                if (dl == 0.0) continue;
                g.classifier.bias[o] += dl;
                for (std::size_t j = 0; j < t.features.cols(); ++j) {
                    g.classifier.weight(o, j) += dl * t.features(r, j);
                    d_feat(r, j) += dl * params.classifier.weight(o, j);
                }
            }
        }
    }

    if (!d_embeddings.empty()) {
        const std::size_t d = t.embeddings.cols();
        const std::size_t ph = params.proj_hidden.out_dim();
        Matrix hidden_act = detail::relu(t.proj_hidden_pre);
        Matrix d_hidden(n, ph);
        for (std::size_t r = 0; r < n; ++r) {
            auto z = t.embeddings.row(r);
            auto dz = d_embeddings.row(r);
            const double z_dot = dot(dz, z);
            // du = (dz - (dz . z) z) / ||u||
            std::vector<double> du(d);
            for (std::size_t j = 0; j < d; ++j) du[j] = (dz[j] - z_dot * z[j]) / t.embed_norm[r];

            for (std::size_t o = 0; o < d; ++o) {
                g.proj_out.bias[o] += du[o];
                for (std::size_t j = 0; j < ph; ++j) {
                    g.proj_out.weight(o, j) += du[o] * hidden_act(r, j);
                    d_hidden(r, j) += du[o] * params.proj_out.weight(o, j);
                }
            }
        }
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t o = 0; o < ph; ++o) {
                const double dpre = t.proj_hidden_pre(r, o) > 0.0 ? d_hidden(r, o) : 0.0;
                if (dpre == 0.0) continue;
                g.proj_hidden.bias[o] += dpre;
                for (std::size_t j = 0; j < t.features.cols(); ++j) {
                    g.proj_hidden.weight(o, j) += dpre * t.features(r, j);
                    d_feat(r, j) += dpre * params.proj_hidden.weight(o, j);
                }
            }
        }
    }

    // Encoder: walk layers backwards; input of layer l is relu(enc_pre[l-1]).
    Matrix d_act = std::move(d_feat);
    for (std::size_t li = params.encoder.size(); li-- > 0;) {
        const DenseLayer& layer = params.encoder[li];
        const Matrix& pre = t.enc_pre[li];
        const Matrix in_act = li == 0 ? t.inputs : detail::relu(t.enc_pre[li - 1]);
        Matrix d_in(n, layer.in_dim());
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const double dpre = pre(r, o) > 0.0 ? d_act(r, o) : 0.0;
                if (dpre == 0.0) continue;
                g.encoder[li].bias[o] += dpre;
                for (std::size_t j = 0; j < layer.in_dim(); ++j) {
                    g.encoder[li].weight(o, j) += dpre * in_act(r, j);
                    d_in(r, j) += dpre * layer.weight(o, j);
                }
            }
        }
        d_act = std::move(d_in);
    }
    return g;
}

/// theta <- theta - lr * (grad + weight_decay * theta)
inline void sgd_step(NetworkParams& params, NetworkGrads& grads, double lr, double weight_decay) {
    auto p = param_tensors(params);
    auto g = param_tensors(grads);
    for (std::size_t t = 0; t < p.size(); ++t) {
        if (p[t].size != g[t].size) throw std::invalid_argument("sgd_step: tensor shape mismatch");
        for (std::size_t i = 0; i < p[t].size; ++i)
            p[t].data[i] -= lr * (g[t].data[i] + weight_decay * p[t].data[i]);
    }
}

}  // namespace ecl

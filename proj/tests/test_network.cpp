#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "ecl/checkpoint.hpp"
#include "ecl/network.hpp"
#include "ecl/proxy.hpp"
#include "ecl/rng.hpp"

#include "oracles.hpp"

using namespace ecl;

namespace {

DenseLayer identity_layer(std::size_t dim) {
    DenseLayer l;
    l.weight = Matrix(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) l.weight(i, i) = 1.0;
    l.bias.assign(dim, 0.0);
    return l;
}

NetworkParams identity_network() {
    NetworkParams p;
    p.encoder.push_back(identity_layer(2));
    p.proj_hidden = identity_layer(2);
    p.proj_out = identity_layer(2);
    p.classifier = identity_layer(2);
    return p;
}

Matrix random_inputs(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("all-zero parameters cannot produce embeddings") {
    NetworkShape shape;
    shape.input_dim = 2;
    shape.encoder_hidden = {4};
    shape.feature_dim = 4;
    shape.proj_hidden = 4;
    shape.embed_dim = 3;
    shape.num_classes = 2;
    NetworkParams p = init_network(shape, 1);
    for (auto& t : param_tensors(p))
        for (std::size_t i = 0; i < t.size; ++i) t.data[i] = 0.0;

    Matrix x(1, 2);
    x(0, 0) = 1.0;
    x(0, 1) = 2.0;
    CHECK_THROWS_WITH(forward(p, x, 1),
                      Catch::Matchers::ContainsSubstring("zero-vector cannot be normalized"));
    // logits-only evaluation of the same degenerate network is fine
    CHECK_NOTHROW(forward(p, x, 1, /*with_embeddings=*/false));
}

TEST_CASE("an already-unit input through identity layers is a normalization fixed point") {
    const NetworkParams p = identity_network();
    Matrix x(1, 2);
    x(0, 0) = 0.6;
    x(0, 1) = 0.8;
    const ForwardTrace t = forward(p, x, 1);
    CHECK(t.embeddings(0, 0) == Catch::Approx(0.6).margin(1e-12));
    CHECK(t.embeddings(0, 1) == Catch::Approx(0.8).margin(1e-12));
    CHECK(std::abs(std::sqrt(dot(t.embeddings.row(0), t.embeddings.row(0))) - 1.0) < 1e-9);
}

TEST_CASE("duplicate rows produce identical embeddings") {
    NetworkShape shape;
    shape.input_dim = 3;
    shape.encoder_hidden = {6};
    shape.feature_dim = 5;
    shape.proj_hidden = 4;
    shape.embed_dim = 4;
    shape.num_classes = 2;
    const NetworkParams p = init_network(shape, 7);

    Rng rng(3);
    Matrix x = random_inputs(4, 3, rng);
    for (std::size_t j = 0; j < 3; ++j) x(2, j) = x(0, j);
    const ForwardTrace t = forward(p, x, 4);
    for (std::size_t j = 0; j < t.embeddings.cols(); ++j)
        CHECK(t.embeddings(0, j) == t.embeddings(2, j));
    for (std::size_t j = 0; j < t.logits.cols(); ++j) CHECK(t.logits(0, j) == t.logits(2, j));
}

TEST_CASE("embedding rows are always unit norm") {
    NetworkShape shape;
    shape.input_dim = 2;
    shape.embed_dim = 8;
    shape.num_classes = 3;
    const NetworkParams p = init_network(shape, 11);
    Rng rng(5);
    const ForwardTrace t = forward(p, random_inputs(10, 2, rng), 5);
    for (std::size_t r = 0; r < t.embeddings.rows(); ++r)
        CHECK(std::abs(std::sqrt(dot(t.embeddings.row(r), t.embeddings.row(r))) - 1.0) < 1e-9);
}

TEST_CASE("non-finite activations abort with the layer identified") {
    NetworkShape shape;
    shape.input_dim = 2;
    shape.num_classes = 2;
    const NetworkParams p = init_network(shape, 1);
    Matrix x(1, 2);
    x(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH(forward(p, x, 1), Catch::Matchers::ContainsSubstring("encoder layer 0"));
}

TEST_CASE("zero cotangents give zero parameter gradients") {
    NetworkShape shape;
    shape.input_dim = 2;
    shape.encoder_hidden = {5, 4};
    shape.feature_dim = 4;
    shape.proj_hidden = 3;
    shape.embed_dim = 3;
    shape.num_classes = 3;
    NetworkParams p = init_network(shape, 2);
    Rng rng(8);
    const ForwardTrace t = forward(p, random_inputs(6, 2, rng), 3);

    Matrix dz(6, 3), dl(3, 3);
    NetworkGrads g = backward(p, t, dz, dl);
    for (auto& tr : param_tensors(g))
        for (std::size_t i = 0; i < tr.size; ++i) CHECK(tr.data[i] == 0.0);
}

TEST_CASE("linear layer gradient is the input vector") {
    // encoder = identity, classifier w: d(logit_0)/d(classifier row 0) = features = x
    NetworkParams p = identity_network();
    Matrix x(1, 2);
    x(0, 0) = 0.3;
    x(0, 1) = 0.7;
    const ForwardTrace t = forward(p, x, 1, /*with_embeddings=*/false);

    Matrix dz, dl(1, 2);
    dl(0, 0) = 1.0;
    const NetworkGrads g = backward(p, t, dz, dl);
    CHECK(g.classifier.weight(0, 0) == 0.3);
    CHECK(g.classifier.weight(0, 1) == 0.7);
    CHECK(g.classifier.bias[0] == 1.0);
    CHECK(g.classifier.weight(1, 0) == 0.0);
}

TEST_CASE("backward rejects mismatched cotangent shapes") {
    NetworkShape shape;
    shape.input_dim = 2;
    shape.num_classes = 2;
    const NetworkParams p = init_network(shape, 3);
    Rng rng(4);
    const ForwardTrace t = forward(p, random_inputs(4, 2, rng), 2);
    Matrix bad_dz(4, 99), dl;
    CHECK_THROWS_AS(backward(p, t, bad_dz, dl), std::invalid_argument);
    Matrix dz, bad_dl(99, 2);
    CHECK_THROWS_AS(backward(p, t, dz, bad_dl), std::invalid_argument);
}

TEST_CASE("analytic parameter gradients match central differences") {
    Rng seeds(1234);
    for (int trial = 0; trial < 5; ++trial) {
        NetworkShape shape;
        shape.input_dim = 2 + static_cast<int>(seeds.below(2));
        shape.encoder_hidden = {4 + static_cast<int>(seeds.below(3)), 4};
        shape.feature_dim = 4;
        shape.proj_hidden = 4;
        shape.embed_dim = 3;
        shape.num_classes = 2 + static_cast<int>(seeds.below(2));
        NetworkParams p = init_network(shape, seeds.next_u64());

        Rng rng(seeds.next_u64());
        const std::size_t n = 6;
        const Matrix x = random_inputs(n, shape.input_dim, rng);
        const std::size_t logit_rows = 3;

        // fixed random cotangent weights turn the outputs into one scalar
        Matrix wz(n, shape.embed_dim), wl(logit_rows, shape.num_classes);
        for (std::size_t i = 0; i < wz.size(); ++i) wz.data()[i] = rng.normal();
        for (std::size_t i = 0; i < wl.size(); ++i) wl.data()[i] = rng.normal();

        auto scalar = [&]() {
            const ForwardTrace t = forward(p, x, logit_rows);
            double s = 0.0;
            for (std::size_t i = 0; i < wz.size(); ++i) s += wz.data()[i] * t.embeddings.data()[i];
            for (std::size_t i = 0; i < wl.size(); ++i) s += wl.data()[i] * t.logits.data()[i];
            return s;
        };

        const ForwardTrace t = forward(p, x, logit_rows);
        NetworkGrads g = backward(p, t, wz, wl);

        auto prefs = param_tensors(p);
        auto grefs = param_tensors(g);
        double worst = 0.0;
        for (std::size_t ti = 0; ti < prefs.size(); ++ti)
            for (std::size_t i = 0; i < prefs[ti].size; ++i) {
                const double numeric = oracle::fd(scalar, prefs[ti].data[i]);
                worst = std::max(worst, oracle::rel_err(grefs[ti].data[i], numeric));
            }
        INFO("trial " << trial);
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("checkpoints round-trip bitwise") {
    NetworkShape shape;
    shape.input_dim = 3;
    shape.encoder_hidden = {7, 5};
    shape.feature_dim = 6;
    shape.proj_hidden = 4;
    shape.embed_dim = 4;
    shape.num_classes = 4;
    NetworkParams p = init_network(shape, 77);
    ProxyBank bank = init_proxy_bank({1, 2, 3, 7}, 4, 77);

    const std::string path = "roundtrip_checkpoint.bin";
    save_checkpoint(path, p, bank);
    auto [p2, bank2] = load_checkpoint(path);

    auto a = param_tensors(p);
    auto b = param_tensors(p2);
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        REQUIRE(a[t].name == b[t].name);
        REQUIRE(a[t].size == b[t].size);
        for (std::size_t i = 0; i < a[t].size; ++i) CHECK(a[t].data[i] == b[t].data[i]);
    }
    REQUIRE(bank2.counts() == bank.counts());
    for (std::size_t c = 0; c < bank.proxies.size(); ++c) CHECK(bank.proxies[c] == bank2.proxies[c]);

    // saving the loaded state reproduces the file bytes
    CHECK(checkpoint_bytes(p, bank) == checkpoint_bytes(p2, bank2));
    std::remove(path.c_str());
}

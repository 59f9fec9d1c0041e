#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "ecl/proxy.hpp"
#include "ecl/rng.hpp"

using namespace ecl;

TEST_CASE("proxy allocation follows the reversed-imbalance rule") {
    CHECK(allocate_proxies({1000, 500, 100, 20}) == std::vector<int>{1, 2, 3, 7});
    CHECK(allocate_proxies({100, 100}) == std::vector<int>{1, 1});
    CHECK(allocate_proxies({1000, 999}) == std::vector<int>{1, 2});
    CHECK_THROWS_AS(allocate_proxies({}), std::invalid_argument);
    CHECK_THROWS_AS(allocate_proxies({10, 0}), std::invalid_argument);
}

TEST_CASE("proxy allocation properties over random count vectors") {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const int C = 2 + static_cast<int>(rng.below(8));
        std::vector<int> counts(C);
        for (int& n : counts) n = 1 + static_cast<int>(rng.below(5000));
        const auto proxies = allocate_proxies(counts);
        const int n_max = *std::max_element(counts.begin(), counts.end());

        int max_holders = 0;
        for (int c = 0; c < C; ++c) {
            if (counts[c] == n_max) {
                ++max_holders;
                CHECK(proxies[c] == 1);
            } else {
                CHECK(proxies[c] >= 2);
                // tail enhancement
                if (counts[c] * 10 <= n_max) CHECK(proxies[c] >= 3);
            }
            // monotone: rarer non-max classes never get fewer proxies
            for (int c2 = 0; c2 < C; ++c2)
                if (counts[c] != n_max && counts[c2] != n_max && counts[c] <= counts[c2])
                    CHECK(proxies[c] >= proxies[c2]);
        }
        CHECK(max_holders >= 1);
    }
}

TEST_CASE("proxy bank init is unit-norm and deterministic") {
    const auto counts = std::vector<int>{1, 2, 7};
    const ProxyBank bank = init_proxy_bank(counts, 8, 5);
    CHECK(bank.counts() == counts);
    CHECK(bank.dim() == 8);
    for (const Matrix& m : bank.proxies)
        for (std::size_t r = 0; r < m.rows(); ++r)
            CHECK(std::abs(std::sqrt(dot(m.row(r), m.row(r))) - 1.0) < 1e-9);
    for (const Matrix& m : bank.grad_accum)
        for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.data()[i] == 0.0);

    const ProxyBank again = init_proxy_bank(counts, 8, 5);
    for (std::size_t c = 0; c < counts.size(); ++c) CHECK(bank.proxies[c] == again.proxies[c]);

    CHECK_THROWS_AS(init_proxy_bank(counts, 1, 5), std::invalid_argument);
}

TEST_CASE("proxy init directions are angularly uniform (chi-square, 1%)") {
    const ProxyBank bank = init_proxy_bank({1000}, 2, 31);
    constexpr int bins = 16;
    std::vector<int> hist(bins, 0);
    for (std::size_t r = 0; r < 1000; ++r) {
        const double angle = std::atan2(bank.proxies[0](r, 1), bank.proxies[0](r, 0));
        int b = static_cast<int>((angle + std::numbers::pi) / (2 * std::numbers::pi) * bins);
        b = std::min(std::max(b, 0), bins - 1);
        ++hist[b];
    }
    const double expected = 1000.0 / bins;
    double chi2 = 0.0;
    for (int b = 0; b < bins; ++b)
        chi2 += (hist[b] - expected) * (hist[b] - expected) / expected;
    // chi-square critical value, 15 dof at the 1% level
    CHECK(chi2 < 30.578);
}

namespace {
std::vector<Matrix> random_grads(const ProxyBank& bank, Rng& rng) {
    std::vector<Matrix> g;
    for (const Matrix& p : bank.proxies) {
        Matrix m(p.rows(), p.cols());
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
        g.push_back(std::move(m));
    }
    return g;
}
}  // namespace

TEST_CASE("accumulate sums lr-scaled gradients without touching proxies") {
    ProxyBank bank = init_proxy_bank({2, 3}, 4, 1);
    const auto proxies_before = bank.proxies;
    Rng rng(2);

    SECTION("zero gradients leave the accumulator at zero") {
        std::vector<Matrix> zeros;
        for (const Matrix& p : bank.proxies) zeros.emplace_back(p.rows(), p.cols());
        for (int t = 0; t < 5; ++t) accumulate(bank, zeros, 0.1);
        for (const Matrix& m : bank.grad_accum)
            for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.data()[i] == 0.0);
        CHECK(bank.epoch_iteration_count == 5);
    }

    SECTION("two steps accumulate lr * (g1 + g2)") {
        const auto g1 = random_grads(bank, rng);
        const auto g2 = random_grads(bank, rng);
        const double lr = 0.05;
        accumulate(bank, g1, lr);
        accumulate(bank, g2, lr);
        for (std::size_t c = 0; c < bank.proxies.size(); ++c)
            for (std::size_t i = 0; i < bank.grad_accum[c].size(); ++i)
                CHECK(std::abs(bank.grad_accum[c].data()[i] -
                               lr * (g1[c].data()[i] + g2[c].data()[i])) < 1e-12);
        CHECK(bank.proxies == proxies_before);
    }

    SECTION("50 random accumulations match an order-identical re-summation") {
        std::vector<std::vector<Matrix>> grads;
        std::vector<double> lrs;
        for (int t = 0; t < 50; ++t) {
            grads.push_back(random_grads(bank, rng));
            lrs.push_back(0.001 + rng.uniform());
            accumulate(bank, grads.back(), lrs.back());
        }
        for (std::size_t c = 0; c < bank.proxies.size(); ++c) {
            Matrix expect(bank.proxies[c].rows(), bank.proxies[c].cols());
            for (int t = 0; t < 50; ++t)
                for (std::size_t i = 0; i < expect.size(); ++i)
                    expect.data()[i] += lrs[t] * grads[t][c].data()[i];
            for (std::size_t i = 0; i < expect.size(); ++i)
                CHECK(std::abs(bank.grad_accum[c].data()[i] - expect.data()[i]) <= 1e-12);
        }
        CHECK(bank.proxies == proxies_before);
    }

    SECTION("shape and finiteness violations abort") {
        auto bad = random_grads(bank, rng);
        bad[0] = Matrix(bad[0].rows() + 1, bad[0].cols());
        CHECK_THROWS_AS(accumulate(bank, bad, 0.1), std::invalid_argument);

        auto nan = random_grads(bank, rng);
        nan[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_WITH(accumulate(bank, nan, 0.1), Catch::Matchers::ContainsSubstring("iteration"));
    }
}

TEST_CASE("cycle update applies the accumulated step once per epoch") {
    Rng rng(9);

    SECTION("zero accumulator leaves proxies bitwise unchanged") {
        ProxyBank bank = init_proxy_bank({1, 2}, 4, 3);
        const auto before = bank.proxies;
        std::vector<Matrix> zeros;
        for (const Matrix& p : bank.proxies) zeros.emplace_back(p.rows(), p.cols());
        accumulate(bank, zeros, 0.1);
        cycle_update(bank, 1);
        CHECK(bank.proxies == before);
    }

    SECTION("T = 1 equals a plain SGD step followed by normalization") {
        ProxyBank bank = init_proxy_bank({1, 2}, 4, 3);
        const auto start = bank.proxies;
        const auto g = random_grads(bank, rng);
        const double lr = 0.3;
        accumulate(bank, g, lr);
        cycle_update(bank, 1);

        for (std::size_t c = 0; c < start.size(); ++c)
            for (std::size_t r = 0; r < start[c].rows(); ++r) {
                std::vector<double> expect(start[c].cols());
                for (std::size_t j = 0; j < expect.size(); ++j)
                    expect[j] = start[c](r, j) - lr * g[c](r, j);
                double norm = 0.0;
                for (double x : expect) norm += x * x;
                norm = std::sqrt(norm);
                for (std::size_t j = 0; j < expect.size(); ++j)
                    CHECK(std::abs(bank.proxies[c](r, j) - expect[j] / norm) < 1e-12);
            }
    }

    SECTION("a two-iteration epoch equals one summed step, not two sequential steps") {
        ProxyBank bank = init_proxy_bank({2}, 4, 3);
        const auto start = bank.proxies;
        const auto g1 = random_grads(bank, rng);
        const auto g2 = random_grads(bank, rng);
        const double lr = 0.25;
        accumulate(bank, g1, lr);
        accumulate(bank, g2, lr);
        cycle_update(bank, 2);

        // one-step oracle with summed gradients
        Matrix summed(start[0].rows(), start[0].cols());
        for (std::size_t r = 0; r < summed.rows(); ++r) {
            std::vector<double> v(summed.cols());
            for (std::size_t j = 0; j < v.size(); ++j)
                v[j] = start[0](r, j) - (lr * g1[0](r, j) + lr * g2[0](r, j));
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < v.size(); ++j) summed(r, j) = v[j] / norm;
        }
        for (std::size_t r = 0; r < summed.rows(); ++r)
            for (std::size_t j = 0; j < summed.cols(); ++j)
                CHECK(std::abs(bank.proxies[0](r, j) - summed(r, j)) <= 1e-12);

        // sequential per-iteration oracle (normalize between steps) differs
        Matrix seq = start[0];
        for (const auto* g : {&g1, &g2}) {
            for (std::size_t r = 0; r < seq.rows(); ++r) {
                auto row = seq.row(r);
                for (std::size_t j = 0; j < row.size(); ++j) row[j] -= lr * (*g)[0](r, j);
                double norm = std::sqrt(dot(row, row));
                for (double& x : row) x /= norm;
            }
        }
        double diff = 0.0;
        for (std::size_t i = 0; i < seq.size(); ++i)
            diff = std::max(diff, std::abs(seq.data()[i] - bank.proxies[0].data()[i]));
        CHECK(diff > 1e-8);
    }

    SECTION("100 random epochs match the re-summation oracle") {
        for (int epoch = 0; epoch < 100; ++epoch) {
            ProxyBank bank = init_proxy_bank({1, 3}, 5, 100 + epoch);
            const auto start = bank.proxies;
            const int T = 1 + static_cast<int>(rng.below(6));
            std::vector<Matrix> total;
            for (const Matrix& p : bank.proxies) total.emplace_back(p.rows(), p.cols());
            for (int t = 0; t < T; ++t) {
                const auto g = random_grads(bank, rng);
                const double lr = 0.01 + 0.2 * rng.uniform();
                CHECK(bank.proxies == start);  // frozen mid-epoch
                accumulate(bank, g, lr);
                for (std::size_t c = 0; c < g.size(); ++c)
                    for (std::size_t i = 0; i < g[c].size(); ++i)
                        total[c].data()[i] += lr * g[c].data()[i];
            }
            cycle_update(bank, T);
            for (std::size_t c = 0; c < start.size(); ++c)
                for (std::size_t r = 0; r < start[c].rows(); ++r) {
                    std::vector<double> v(start[c].cols());
                    for (std::size_t j = 0; j < v.size(); ++j)
                        v[j] = start[c](r, j) - total[c](r, j);
                    double norm = 0.0;
                    for (double x : v) norm += x * x;
                    norm = std::sqrt(norm);
                    for (std::size_t j = 0; j < v.size(); ++j)
                        CHECK(std::abs(bank.proxies[c](r, j) - v[j] / norm) <= 1e-12);
                }
            // accumulator cleared, norms restored
            for (const Matrix& m : bank.grad_accum)
                for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.data()[i] == 0.0);
            for (const Matrix& m : bank.proxies)
                for (std::size_t r = 0; r < m.rows(); ++r)
                    CHECK(std::abs(std::sqrt(dot(m.row(r), m.row(r))) - 1.0) < 1e-9);
            CHECK(bank.epoch_iteration_count == 0);
        }
    }

    SECTION("mid-epoch cycle update aborts") {
        ProxyBank bank = init_proxy_bank({1, 1}, 4, 3);
        const auto g = random_grads(bank, rng);
        accumulate(bank, g, 0.1);
        accumulate(bank, g, 0.1);
        CHECK_THROWS_AS(cycle_update(bank, 3), std::runtime_error);
    }
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecl/matrix.hpp"
#include "ecl/rng.hpp"

namespace ecl {

/// Reversed-imbalance proxy allocation: the class with the most train
/// samples gets a single proxy, every other class gets
/// floor(N_max / (10 N_c)) + 2, so rarer classes get more proxies.
inline std::vector<int> allocate_proxies(const std::vector<int>& class_counts) {
    if (class_counts.empty()) throw std::invalid_argument("allocate_proxies: empty class list");
    int n_max = 0;
    for (int n : class_counts) {
        if (n < 1) throw std::invalid_argument("allocate_proxies: class count must be >= 1");
        n_max = std::max(n_max, n);
    }
    std::vector<int> proxies(class_counts.size());
    for (std::size_t c = 0; c < class_counts.size(); ++c) {
        proxies[c] = class_counts[c] == n_max ? 1 : n_max / (10 * class_counts[c]) + 2;
    }
    return proxies;
}

/// The learnable proxy set P. Proxies stay frozen between cycle updates;
/// per-iteration lr-scaled gradients pile up in grad_accum and land all at
/// once at the epoch boundary.
struct ProxyBank {
    std::vector<Matrix> proxies;     // proxies[c]: N^p_c x d, unit rows
    std::vector<Matrix> grad_accum;  // same shapes
    int epoch_iteration_count = 0;

    int num_classes() const { return static_cast<int>(proxies.size()); }
    int dim() const { return proxies.empty() ? 0 : static_cast<int>(proxies[0].cols()); }

    std::vector<int> counts() const {
        std::vector<int> c(proxies.size());
        for (std::size_t i = 0; i < proxies.size(); ++i) c[i] = static_cast<int>(proxies[i].rows());
        return c;
    }
};

namespace detail {
inline constexpr std::uint64_t kProxyInitTag = 0x70727879ULL;

inline void normalize_row(std::span<double> row) {
    double norm = std::sqrt(dot(row, row));
    if (norm < 1e-12) throw std::runtime_error("zero-vector cannot be normalized");
    for (double& x : row) x /= norm;
}
}  // namespace detail

/// Draws each proxy from an isotropic standard Gaussian and projects it onto
/// the unit sphere. Deterministic given the seed.
inline ProxyBank init_proxy_bank(const std::vector<int>& proxy_counts, int d, std::uint64_t seed) {
    if (d < 2) throw std::invalid_argument("init_proxy_bank: embedding dim must be >= 2");
    ProxyBank bank;
    Rng rng(Rng::derive(seed, detail::kProxyInitTag));
    bank.proxies.reserve(proxy_counts.size());
    bank.grad_accum.reserve(proxy_counts.size());
    for (int n : proxy_counts) {
        Matrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
        for (std::size_t i = 0; i < m.rows(); ++i) {
            auto row = m.row(i);
            for (double& x : row) x = rng.normal();
            detail::normalize_row(row);
        }
        bank.proxies.push_back(std::move(m));
        bank.grad_accum.emplace_back(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
    }
    return bank;
}

/// One iteration's contribution: grad_accum += lr * grads. Proxies are not
/// touched until cycle_update.
inline void accumulate(ProxyBank& bank, const std::vector<Matrix>& grads, double lr) {
    if (lr < 0.0) throw std::invalid_argument("accumulate: lr must be >= 0");
    if (grads.size() != bank.proxies.size())
        throw std::invalid_argument("accumulate: gradient class count mismatch");
    for (std::size_t c = 0; c < grads.size(); ++c) {
        if (!grads[c].same_shape(bank.proxies[c]))
            throw std::invalid_argument("accumulate: gradient shape mismatch at class " + std::to_string(c));
        if (!all_finite(grads[c]))
            throw std::runtime_error("accumulate: non-finite proxy gradient at class " + std::to_string(c) +
                                     ", iteration " + std::to_string(bank.epoch_iteration_count + 1));
    }
    for (std::size_t c = 0; c < grads.size(); ++c) {
        double* acc = bank.grad_accum[c].data();
        const double* g = grads[c].data();
        for (std::size_t i = 0; i < grads[c].size(); ++i) acc[i] += lr * g[i];
    }
    ++bank.epoch_iteration_count;
}

/// Epoch-boundary update: proxies -= accumulated lr-scaled gradients, then
/// each proxy is re-normalized and the accumulator cleared. Refuses to run
/// mid-epoch so the freeze contract is enforced, not just assumed.
inline void cycle_update(ProxyBank& bank, int iterations_in_epoch) {
    if (bank.epoch_iteration_count != iterations_in_epoch)
        throw std::runtime_error("cycle_update called after " + std::to_string(bank.epoch_iteration_count) +
                                 " iterations, expected " + std::to_string(iterations_in_epoch));
    for (std::size_t c = 0; c < bank.proxies.size(); ++c) {
        Matrix& p = bank.proxies[c];
        Matrix& acc = bank.grad_accum[c];
        for (std::size_t i = 0; i < p.rows(); ++i) {
            auto row = p.row(i);
            auto a = acc.row(i);
            bool moved = false;
            for (double x : a) moved |= x != 0.0;
            if (!moved) continue;  // untouched proxies keep their exact bits
            for (std::size_t j = 0; j < row.size(); ++j) row[j] -= a[j];
            detail::normalize_row(row);
            for (double& x : a) x = 0.0;
        }
    }
    bank.epoch_iteration_count = 0;
}

}  // namespace ecl

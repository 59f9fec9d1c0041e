#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "ecl/dataset.hpp"
#include "ecl/matrix.hpp"
#include "ecl/rng.hpp"

namespace ecl {

/// Two stochastic views of the same underlying samples, labels shared.
struct AugmentedBatch {
    Matrix view1;  // B x k, weak jitter
    Matrix view2;  // B x k, strong jitter (+ small rotation when k == 2)
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

struct AugmentConfig {
    double sigma1 = 0.05;  // weak-view noise, in units of the train feature std
    double sigma2 = 0.10;  // strong-view noise
    double rot_max = std::numbers::pi / 12.0;  // strong-view |rotation| bound, k == 2 only
};

namespace detail {
inline constexpr std::uint64_t kShuffleTag = 0x73687566ULL;
inline constexpr std::uint64_t kAugmentTag = 0x6175676dULL;
}  // namespace detail

/// Walks the train split of one epoch: Fisher-Yates shuffle keyed by
/// (seed, epoch), then consecutive without-replacement batches. Batches keep
/// the raw long-tailed class mix; nothing is re-balanced here.
class EpochSampler {
public:
    EpochSampler(const Dataset& ds, std::uint64_t seed, int epoch_index)
        : ds_(&ds),
          aug_rng_(Rng::derive(seed, detail::kAugmentTag, static_cast<std::uint64_t>(epoch_index))),
          noise_scale_(ds.train_feature_std()) {
        order_ = ds.split_indices(Split::train);
        Rng shuffle_rng(Rng::derive(seed, detail::kShuffleTag, static_cast<std::uint64_t>(epoch_index)));
        fisher_yates_shuffle(order_, shuffle_rng);
    }

    std::size_t remaining() const { return order_.size() - cursor_; }
    std::size_t epoch_size() const { return order_.size(); }

    /// Draws the next `b` samples and applies the two view policies. Throws
    /// when fewer than `b` samples remain; a drop-last caller checks
    /// remaining() and simply stops early.
    AugmentedBatch next_batch(std::size_t b, const AugmentConfig& aug) {
        if (b == 0) throw std::invalid_argument("batch size must be positive");
        if (b > remaining())
            throw std::invalid_argument("batch of " + std::to_string(b) + " requested but only " +
                                        std::to_string(remaining()) + " samples remain in the epoch");
        const int k = ds_->feature_dim();
        AugmentedBatch batch;
        batch.view1 = Matrix(b, static_cast<std::size_t>(k));
        batch.view2 = Matrix(b, static_cast<std::size_t>(k));
        batch.labels.resize(b);

        const double s1 = aug.sigma1 * noise_scale_;
        const double s2 = aug.sigma2 * noise_scale_;
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t src = order_[cursor_++];
            auto x = ds_->features.row(src);
            auto v1 = batch.view1.row(i);
            auto v2 = batch.view2.row(i);
            batch.labels[i] = ds_->labels[src];

            for (int j = 0; j < k; ++j) v1[j] = x[j] + s1 * aug_rng_.normal();

            for (int j = 0; j < k; ++j) v2[j] = x[j];
            if (k == 2) {
                const double theta = aug.rot_max * (2.0 * aug_rng_.uniform() - 1.0);
                const double c = std::cos(theta), s = std::sin(theta);
                const double x0 = v2[0], x1 = v2[1];
                v2[0] = c * x0 - s * x1;
                v2[1] = s * x0 + c * x1;
            }
            for (int j = 0; j < k; ++j) v2[j] += s2 * aug_rng_.normal();
        }
        return batch;
    }

private:
    const Dataset* ds_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    Rng aug_rng_;
    double noise_scale_;
};

}  // namespace ecl

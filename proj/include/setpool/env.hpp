#ifndef SETPOOL_ENV_HPP
#define SETPOOL_ENV_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "setpool/nn.hpp"

namespace setpool {

/// Classifier head scoring aggregated features; the drop in its
/// cross-entropy loss is the reward signal. lambda weighs the hinge
/// regularizer max(0, 1 - a_t).
struct RewardHead {
  DenseNet classifier;  // embed_dim -> hidden -> num identities
  double lambda = 0.1;
};

RewardHead make_reward_head(std::size_t embed_dim, std::size_t num_classes, Rng& rng,
                            double lambda = 0.1, std::size_t hidden = 64);

/// One set traversal. Weights start at 1 and are overwritten as the cursor
/// walks the traversal order; un-visited items keep weight 1.
struct EpisodeState {
  std::vector<std::vector<double>> features;
  std::vector<double> weights;
  std::vector<std::size_t> order;  // permutation of item indices
  std::size_t cursor = 0;          // position in `order`
  std::size_t label = 0;           // identity index in the head's class space

  std::size_t current_item() const { return order[cursor]; }
  bool done() const { return cursor >= order.size(); }
};

/// In-input-order traversal (evaluation); pass an Rng for a random
/// permutation (training).
EpisodeState make_episode(std::vector<std::vector<double>> features, std::size_t label,
                          Rng* shuffle_rng = nullptr);

/// Weighted average sum(a_i f_i) / sum(a_i). Falls back to the uniform mean
/// when the total weight is below 1e-6, where the ratio is undefined.
std::vector<double> aggregate(const std::vector<std::vector<double>>& features,
                              std::span<const double> weights);

/// Elementwise max across the set; pooling baseline, not a convex combination.
std::vector<double> max_pool(const std::vector<std::vector<double>>& features);

/// Observation at the cursor: concat(leave-one-out context, f_t). The current
/// item enters the context denominator with its (still 1) weight excluded.
/// Single-item sets see a zero context.
std::vector<double> build_state(const EpisodeState& state);

struct StepOutcome {
  std::vector<double> next_state;  // empty when done
  double reward = 0.0;
  bool done = false;
};

/// Applies the action as the current item's weight, rewards the loss delta
/// of the head plus lambda * max(0, 1 - a), and advances the cursor.
/// Out-of-range actions clamp to [0,1] (counted, warned once).
StepOutcome step(EpisodeState& state, double action, const RewardHead& head,
                 std::optional<double> termination_threshold = std::nullopt);

std::uint64_t clamped_action_count();

bool softmax_terminated(const RewardHead& head, std::span<const double> aggregated,
                        double threshold);

/// One mean cross-entropy gradient step on the classifier over the batch.
double train_reward_head(RewardHead& head,
                         const std::vector<std::vector<double>>& aggregated,
                         std::span<const std::size_t> labels, double learning_rate);

}  // namespace setpool

#endif

#ifndef SETPOOL_PIPELINE_HPP
#define SETPOOL_PIPELINE_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "setpool/checkpoint.hpp"
#include "setpool/eval.hpp"

namespace setpool {

/// One set readied for episodes: raw per-item features (projected under
/// ML-PGR), plus the episode view where each video segment is collapsed to a
/// temporal-attention pseudo-item so the agent can weigh it like a still.
struct PreparedSet {
  std::uint64_t set_id = 0;
  std::uint32_t identity = 0;
  Split split = Split::kTrain;
  std::size_t label = 0;  // contiguous class index over training identities
  bool label_known = false;

  std::vector<std::vector<double>> features;  // raw items
  std::vector<double> yaws;
  std::vector<std::int64_t> duplicate_of;
  std::vector<float> sigmas;

  std::vector<std::vector<double>> episode_features;
  // raw indices behind each episode item with their within-item weights
  // (a still maps to itself with weight 1; a segment maps to its frames with
  // the temporal attention weights, which sum to 1)
  std::vector<std::vector<std::pair<std::size_t, double>>> episode_members;
};

std::vector<PreparedSet> prepare_sets(const FeatureSetCollection& collection,
                                      const ExperimentConfig& config,
                                      const DenseNet& projection,
                                      const TempConvNet& temporal);

enum class ActionMode { kSample, kMode, kBinary };

struct EpisodeOutput {
  Trajectory trajectory;
  std::vector<double> episode_weights;  // one per episode item
  std::vector<double> raw_weights;      // expanded to raw items
  double reward_sum = 0.0;
  std::size_t traversed = 0;
  std::size_t episode_items = 0;
};

/// Rolls one episode over the set. With an rng the traversal order is a
/// fresh permutation and kSample draws stochastic actions; without, traversal
/// is input order (evaluation). Weight expansion: a segment's frames receive
/// the segment weight times their attention share, which reproduces the
/// two-stage combine under plain aggregation.
EpisodeOutput run_episode(const PreparedSet& set, const AgentParams& agent,
                          const RewardHead& head, ActionMode mode,
                          std::optional<double> termination_threshold, Rng* rng);

struct TrainState {
  ExperimentConfig config;
  Rng rng;
  double lr = 0.0;  // log-uniform draw, re-derivable from the seed
  RewardHead head;
  AgentParams agent;
  AveragePolicy average;
  TempConvNet temporal;
  DenseNet projection;
  ReplayPool pool{1};
  std::uint64_t episode = 0;

  // data-derived, rebuilt rather than checkpointed
  std::vector<PreparedSet> train_sets;
  std::vector<std::vector<double>> train_items;  // per-item head training pool
  std::vector<std::size_t> train_item_labels;
  std::size_t num_classes = 0;
};

/// Fresh state: builds nets, runs the head warmup, prepares training sets.
TrainState init_train_state(const ExperimentConfig& config,
                            const FeatureSetCollection& collection);

/// Resumed state: everything from the checkpoint, data views rebuilt.
TrainState train_state_from_checkpoint(const Checkpoint& checkpoint,
                                       const FeatureSetCollection& collection);

Checkpoint to_checkpoint(const TrainState& state);

struct MetricsRow {
  std::uint64_t episode = 0;
  double reward = 0.0;
  double mean_abs_td = 0.0;
  double mean_kl = 0.0;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

/// Runs RL episodes until state.episode reaches until_episode, emitting one
/// row per episode. Throws NumericError if a reward or diagnostic goes NaN.
void train_episodes(TrainState& state, std::uint64_t until_episode,
                    const MetricsSink& sink);

/// Supervised temporal-attention phase over the training video segments.
/// No-op (returns false) when the data holds no multi-frame segments.
bool run_temporal_phase(TrainState& state, std::uint64_t steps);

/// ML-PGR projection training over probe/gallery pairs drawn from the
/// training split. Rebuilds the prepared sets afterwards.
void run_mlpgr_phase(TrainState& state, std::uint64_t steps);

struct EvalOptions {
  Protocol protocol = Protocol::kClosedId;
  Baseline baseline = Baseline::kDac;
  PgrMode pgr = PgrMode::kNone;
  bool use_termination = false;  // honored for closed-id only
  double termination_threshold = 0.5;
  EvalGrid grid;
  std::uint64_t seed = 0;  // open-set withholding draw
};

struct EvalResult {
  std::vector<std::pair<std::string, double>> summary;
  std::vector<RocPoint> roc;
  std::vector<std::pair<std::size_t, double>> cmc_points;
  std::vector<WeightTraceRow> traces;
  double mean_traversed = 0.0;
  double mean_set_size = 0.0;
};

EvalResult evaluate(const Checkpoint& checkpoint, const FeatureSetCollection& collection,
                    const EvalOptions& options);

/// Generator parameters with the experiment seed applied.
GenConfig effective_gen_config(const ExperimentConfig& config);

}  // namespace setpool

#endif

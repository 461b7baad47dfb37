#include "setpool/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "setpool/errors.hpp"
#include "setpool/mathfn.hpp"

namespace setpool {

namespace {

// distinct sub-streams derived from the experiment seed
constexpr std::uint64_t kTrainSalt = 0x747261696e5f5f31ULL;
constexpr std::uint64_t kLrSalt = 0x6c725f647261775fULL;
constexpr std::uint64_t kOpenSetSalt = 0x6f70656e5f736574ULL;

std::unordered_map<std::uint32_t, std::size_t> train_label_map(
    const std::vector<SetView>& sets) {
  std::vector<std::uint32_t> identities;
  for (const SetView& s : sets)
    if (s.split == Split::kTrain) identities.push_back(s.identity);
  std::sort(identities.begin(), identities.end());
  identities.erase(std::unique(identities.begin(), identities.end()), identities.end());
  std::unordered_map<std::uint32_t, std::size_t> map;
  for (std::size_t i = 0; i < identities.size(); ++i) map[identities[i]] = i;
  return map;
}

void collect_train_items(TrainState& state) {
  state.train_items.clear();
  state.train_item_labels.clear();
  for (const PreparedSet& set : state.train_sets) {
    for (const auto& f : set.features) {
      state.train_items.push_back(f);
      state.train_item_labels.push_back(set.label);
    }
  }
}

double mean_abs_td_of(const AgentParams& agent, const Trajectory& traj) {
  if (traj.empty()) return 0.0;
  double sum = 0.0;
  for (const Transition& tr : traj) sum += std::abs(td_error(agent, tr));
  return sum / static_cast<double>(traj.size());
}

}  // namespace

GenConfig effective_gen_config(const ExperimentConfig& config) {
  GenConfig gen = config.dataset;
  gen.seed = config.seed;
  return gen;
}

std::vector<PreparedSet> prepare_sets(const FeatureSetCollection& collection,
                                      const ExperimentConfig& config,
                                      const DenseNet& projection,
                                      const TempConvNet& temporal) {
  const auto views = group_sets(collection);
  const auto labels = train_label_map(views);
  const bool project = config.pgr == PgrMode::kMetricLearning;

  std::vector<PreparedSet> prepared;
  prepared.reserve(views.size());
  for (const SetView& view : views) {
    PreparedSet set;
    set.set_id = view.set_id;
    set.identity = view.identity;
    set.split = view.split;
    if (const auto it = labels.find(view.identity); it != labels.end()) {
      set.label = it->second;
      set.label_known = true;
    }

    set.features.reserve(view.size);
    for (std::size_t i = 0; i < view.size; ++i) {
      std::vector<double> f = embedding_as_double(view[i]);
      if (project) f = forward(projection, f);
      set.features.push_back(std::move(f));
      set.yaws.push_back(view[i].yaw_degrees);
      set.duplicate_of.push_back(view[i].duplicate_of);
      set.sigmas.push_back(view[i].quality_sigma);
    }

    if (config.temporal_enabled) {
      // group contiguous frames per segment, stills stay singletons
      std::map<std::uint32_t, std::vector<std::size_t>> segments;
      for (std::size_t i = 0; i < view.size; ++i) {
        if (view[i].media == Media::kVideo) {
          segments[view[i].segment_id].push_back(i);
        } else {
          set.episode_features.push_back(set.features[i]);
          set.episode_members.push_back({{i, 1.0}});
        }
      }
      for (const auto& [segment_id, indices] : segments) {
        std::vector<std::vector<double>> frames;
        for (std::size_t idx : indices) frames.push_back(set.features[idx]);
        const std::vector<double> attention = temporal_attention(temporal, frames);
        std::vector<double> pseudo(frames.front().size(), 0.0);
        std::vector<std::pair<std::size_t, double>> members;
        for (std::size_t f = 0; f < frames.size(); ++f) {
          for (std::size_t d = 0; d < pseudo.size(); ++d)
            pseudo[d] += attention[f] * frames[f][d];
          members.emplace_back(indices[f], attention[f]);
        }
        set.episode_features.push_back(std::move(pseudo));
        set.episode_members.push_back(std::move(members));
      }
    } else {
      for (std::size_t i = 0; i < view.size; ++i) {
        set.episode_features.push_back(set.features[i]);
        set.episode_members.push_back({{i, 1.0}});
      }
    }
    prepared.push_back(std::move(set));
  }
  return prepared;
}

EpisodeOutput run_episode(const PreparedSet& set, const AgentParams& agent,
                          const RewardHead& head, ActionMode mode,
                          std::optional<double> termination_threshold, Rng* rng) {
  EpisodeOutput out;
  out.episode_items = set.episode_features.size();
  EpisodeState episode = make_episode(set.episode_features, set.label, rng);
  while (!episode.done()) {
    const std::vector<double> obs = build_state(episode);
    const PolicyDistribution dist = policy_forward(agent, obs);
    double action = 0.0;
    double log_prob = 0.0;
    switch (mode) {
      case ActionMode::kSample: {
        if (rng == nullptr)
          throw std::invalid_argument("run_episode: sampling requires an rng");
        const auto [a, lp] = sample_action(dist, *rng);
        action = a;
        log_prob = lp;
        break;
      }
      case ActionMode::kMode:
        action = mode_action(dist);
        log_prob = beta_log_prob(dist, action);
        break;
      case ActionMode::kBinary:
        action = mode_action(dist) >= 0.5 ? 1.0 : 0.0;
        log_prob = beta_log_prob(dist, action);
        break;
    }
    const StepOutcome outcome = step(episode, action, head, termination_threshold);
    Transition tr;
    tr.state = obs;
    tr.action = action;
    tr.behavior_log_prob = log_prob;
    tr.reward = outcome.reward;
    tr.next_state = outcome.next_state;
    tr.done = outcome.done;
    out.trajectory.push_back(std::move(tr));
    out.reward_sum += outcome.reward;
    ++out.traversed;
    if (outcome.done) break;
  }

  out.episode_weights = episode.weights;
  // a still's share is 1; a frame's share is its attention weight, and the
  // attention weights of a segment sum to 1, so plain aggregation over these
  // expanded weights equals the two-stage combine
  out.raw_weights.assign(set.features.size(), 1.0);
  for (std::size_t e = 0; e < set.episode_members.size(); ++e)
    for (const auto& [raw_idx, share] : set.episode_members[e])
      out.raw_weights[raw_idx] = episode.weights[e] * share;
  return out;
}

TrainState init_train_state(const ExperimentConfig& config,
                            const FeatureSetCollection& collection) {
  validate(config);
  TrainState state;
  state.config = config;
  state.rng = Rng(config.seed ^ kTrainSalt);

  Rng lr_rng(config.seed ^ kLrSalt);
  state.lr = std::exp(lr_rng.uniform(std::log(config.lr_min), std::log(config.lr_max)));

  const std::size_t embed_dim = collection.embed_dim;
  const auto labels = train_label_map(group_sets(collection));
  state.num_classes = labels.size();
  if (state.num_classes == 0)
    throw std::invalid_argument("init_train_state: data has no training split");

  state.head = make_reward_head(embed_dim, state.num_classes, state.rng, config.lambda);
  state.agent = make_agent(embed_dim, state.rng, config.gamma);
  state.average = make_average_policy(state.agent);
  state.temporal = make_temp_conv(embed_dim, state.rng);
  state.projection = make_projection_head(embed_dim);
  state.pool = ReplayPool(config.pool_capacity);

  state.train_sets = prepare_sets(collection, config, state.projection, state.temporal);
  std::erase_if(state.train_sets,
                [](const PreparedSet& s) { return s.split != Split::kTrain; });
  if (state.train_sets.empty())
    throw std::invalid_argument("init_train_state: data has no training sets");
  collect_train_items(state);

  // item-level warmup: the head learns the identity cores of the embedding
  // space, staying sensitive to aggregate displacement, instead of fitting
  // (and becoming robust to) noisy set means
  for (std::uint64_t step = 0; step < config.head_warmup; ++step)
    train_reward_head(state.head, state.train_items, state.train_item_labels,
                      config.head_warmup_lr);
  return state;
}

namespace {

void rebuild_data_views(TrainState& state, const FeatureSetCollection& collection) {
  state.train_sets = prepare_sets(collection, state.config, state.projection, state.temporal);
  std::erase_if(state.train_sets,
                [](const PreparedSet& s) { return s.split != Split::kTrain; });
  collect_train_items(state);
}

}  // namespace

TrainState train_state_from_checkpoint(const Checkpoint& checkpoint,
                                       const FeatureSetCollection& collection) {
  TrainState state;
  state.config = checkpoint.config;
  state.rng.set_state(checkpoint.rng_state);
  Rng lr_rng(checkpoint.config.seed ^ kLrSalt);
  state.lr = std::exp(
      lr_rng.uniform(std::log(checkpoint.config.lr_min), std::log(checkpoint.config.lr_max)));
  state.head = checkpoint.head;
  state.agent = checkpoint.agent;
  state.average = checkpoint.average;
  state.temporal = checkpoint.temporal;
  state.projection = checkpoint.projection;
  state.pool = ReplayPool(checkpoint.config.pool_capacity);
  for (const Trajectory& traj : checkpoint.replay) state.pool.add(traj);
  state.episode = checkpoint.episode;
  state.num_classes = checkpoint.head.classifier.output_dim();
  rebuild_data_views(state, collection);
  return state;
}

Checkpoint to_checkpoint(const TrainState& state) {
  Checkpoint ckpt;
  ckpt.config = state.config;
  ckpt.episode = state.episode;
  ckpt.rng_state = state.rng.state();
  ckpt.head = state.head;
  ckpt.agent = state.agent;
  ckpt.average = state.average;
  ckpt.temporal = state.temporal;
  ckpt.projection = state.projection;
  ckpt.replay = state.pool.entries();
  return ckpt;
}

void train_episodes(TrainState& state, std::uint64_t until_episode, const MetricsSink& sink) {
  const ExperimentConfig& cfg = state.config;
  const std::optional<double> termination =
      cfg.termination == TerminationMode::kSoftmax
          ? std::optional<double>(cfg.termination_threshold)
          : std::nullopt;

  while (state.episode < until_episode) {
    const std::size_t pick = state.rng.uniform_index(state.train_sets.size());
    const PreparedSet& set = state.train_sets[pick];

    EpisodeOutput rollout = run_episode(set, state.agent, state.head, ActionMode::kSample,
                                        termination, &state.rng);
    if (!std::isfinite(rollout.reward_sum))
      throw NumericError("train_episodes: episode reward is not finite");

    if (cfg.train_mode == TrainMode::kOffPolicy) state.pool.add(rollout.trajectory);

    // head step: this episode's weighted aggregate plus a few raw items, so
    // the head tracks the policy's aggregates without losing its item cores
    std::vector<std::vector<double>> batch;
    std::vector<std::size_t> batch_labels;
    batch.push_back(aggregate(set.features, rollout.raw_weights));
    batch_labels.push_back(set.label);
    for (int extra = 0; extra < 7; ++extra) {
      const std::size_t other = state.rng.uniform_index(state.train_items.size());
      batch.push_back(state.train_items[other]);
      batch_labels.push_back(state.train_item_labels[other]);
    }
    train_reward_head(state.head, batch, batch_labels, cfg.head_lr);

    MetricsRow row;
    row.episode = state.episode + 1;
    row.reward = rollout.reward_sum;
    row.mean_abs_td = mean_abs_td_of(state.agent, rollout.trajectory);

    if (cfg.train_mode == TrainMode::kOnPolicy) {
      a2c_update(state.agent, rollout.trajectory, state.lr,
                 state.lr * cfg.value_lr_scale);
    } else if (state.pool.size() >= cfg.replay_min) {
      const ReplayDiagnostics diag =
          replay_train_step(state.agent, state.average, state.pool, cfg.trust, state.lr,
                            state.lr * cfg.value_lr_scale, cfg.batch_size, state.rng);
      row.mean_kl = diag.mean_kl;
    }

    if (!std::isfinite(row.mean_abs_td) || !std::isfinite(row.mean_kl))
      throw NumericError("train_episodes: diagnostics are not finite");

    ++state.episode;
    if (sink) sink(row);
  }
}

bool run_temporal_phase(TrainState& state, std::uint64_t steps) {
  // segments are grouped into episode items only when temporal is enabled
  std::vector<TemporalEpisode> segments;
  for (const PreparedSet& set : state.train_sets) {
    for (const auto& members : set.episode_members) {
      if (members.size() < 2) continue;
      TemporalEpisode episode;
      for (const auto& [raw_idx, share] : members)
        episode.frames.push_back(set.features[raw_idx]);
      episode.label = set.label;
      segments.push_back(std::move(episode));
    }
  }
  if (segments.empty()) return false;

  for (std::uint64_t step = 0; step < steps; ++step) {
    std::vector<TemporalEpisode> batch;
    for (int b = 0; b < 8; ++b)
      batch.push_back(segments[state.rng.uniform_index(segments.size())]);
    train_temporal(state.temporal, batch, state.head, state.config.temporal_lr);
  }
  return true;
}

void run_mlpgr_phase(TrainState& state, std::uint64_t steps) {
  // index training sets by identity for genuine-pair lookup
  std::unordered_map<std::uint32_t, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < state.train_sets.size(); ++i)
    by_identity[state.train_sets[i].identity].push_back(i);

  for (std::uint64_t step = 0; step < steps; ++step) {
    std::vector<MlPgrPair> batch;
    for (int b = 0; b < 8; ++b) {
      const std::size_t probe_idx = state.rng.uniform_index(state.train_sets.size());
      const PreparedSet& probe = state.train_sets[probe_idx];
      std::size_t gallery_idx = probe_idx;
      const bool want_genuine = b % 2 == 0;
      if (want_genuine) {
        const auto& peers = by_identity[probe.identity];
        gallery_idx = peers[state.rng.uniform_index(peers.size())];
      } else {
        // rejection-sample a different identity; fine with >= 2 identities
        for (int tries = 0; tries < 64; ++tries) {
          gallery_idx = state.rng.uniform_index(state.train_sets.size());
          if (state.train_sets[gallery_idx].identity != probe.identity) break;
        }
      }
      const PreparedSet& gallery = state.train_sets[gallery_idx];
      MlPgrPair pair;
      pair.probe_features = probe.features;
      pair.probe_yaws = probe.yaws;
      pair.probe_label = probe.label;
      pair.gallery_features = gallery.features;
      pair.gallery_yaws = gallery.yaws;
      pair.gallery_label = gallery.label;
      batch.push_back(std::move(pair));
    }
    ml_pgr_train(state.projection, batch, state.head, state.config.pgr_thresholds,
                 state.config.pgr_lr);
  }
  // projected feature space changed; later phases must see it
  // (prepare_sets projects only under PgrMode::kMetricLearning)
}

EvalResult evaluate(const Checkpoint& checkpoint, const FeatureSetCollection& collection,
                    const EvalOptions& options) {
  const ExperimentConfig& cfg = checkpoint.config;
  if (options.use_termination && options.protocol == Protocol::kOpenId)
    throw ConfigError("softmax termination cannot be used with open-id evaluation");

  std::vector<PreparedSet> prepared =
      prepare_sets(collection, cfg, checkpoint.projection, checkpoint.temporal);

  // pose direction for PF-PGR mirroring: re-derivable for generated datasets,
  // estimated from the data otherwise
  std::vector<double> u_pose;
  if (options.pgr == PgrMode::kParameterFree) {
    if (cfg.dataset_path.empty()) {
      u_pose = pose_direction_for(effective_gen_config(cfg));
    } else {
      u_pose = estimate_pose_direction(collection);
    }
  }

  const bool termination_active =
      options.use_termination && options.protocol == Protocol::kClosedId;
  const std::optional<double> termination =
      termination_active ? std::optional<double>(options.termination_threshold)
                         : std::nullopt;

  EvalResult result;
  std::size_t traversed_total = 0;
  std::size_t items_total = 0;
  std::size_t episodes_run = 0;

  std::vector<SetDescriptor> probes;
  std::vector<SetDescriptor> gallery;
  std::vector<std::size_t> probe_labels;
  std::vector<bool> probe_label_known;

  for (const PreparedSet& set : prepared) {
    if (set.split == Split::kTrain) continue;
    std::vector<double> raw_weights(set.features.size(), 1.0);
    if (options.baseline == Baseline::kDac || options.baseline == Baseline::kDacBinary) {
      const ActionMode mode =
          options.baseline == Baseline::kDac ? ActionMode::kMode : ActionMode::kBinary;
      EpisodeOutput out =
          run_episode(set, checkpoint.agent, checkpoint.head, mode, termination, nullptr);
      raw_weights = out.raw_weights;
      traversed_total += out.traversed;
      items_total += out.episode_items;
      ++episodes_run;
      for (std::size_t i = 0; i < set.features.size(); ++i) {
        WeightTraceRow row;
        row.set_id = set.set_id;
        row.item_index = i;
        row.duplicate_of = set.duplicate_of[i];
        row.quality_sigma = set.sigmas[i];
        row.final_weight = raw_weights[i];
        result.traces.push_back(row);
      }
    } else {
      traversed_total += set.episode_features.size();
      items_total += set.episode_features.size();
      ++episodes_run;
    }

    SetDescriptor desc;
    desc.identity = set.identity;
    desc.aggregate = options.baseline == Baseline::kMaxPool
                         ? max_pool(set.features)
                         : aggregate(set.features, raw_weights);
    if (options.pgr == PgrMode::kParameterFree)
      desc.pose = pose_split(set.features, raw_weights, set.yaws, u_pose);
    if (options.pgr == PgrMode::kMetricLearning) {
      desc.features = set.features;
      desc.weights = raw_weights;
      if (set.split == Split::kGallery)
        desc.centroids = centroid_triple(set.features, raw_weights, set.yaws);
    }
    if (set.split == Split::kProbe) {
      probes.push_back(std::move(desc));
      probe_labels.push_back(set.label);
      probe_label_known.push_back(set.label_known);
    } else {
      gallery.push_back(std::move(desc));
    }
  }

  if (probes.empty()) throw std::invalid_argument("evaluate: data has no probe sets");
  if (gallery.empty()) throw std::invalid_argument("evaluate: data has no gallery sets");

  if (episodes_run > 0) {
    result.mean_traversed =
        static_cast<double>(traversed_total) / static_cast<double>(episodes_run);
    result.mean_set_size =
        static_cast<double>(items_total) / static_cast<double>(episodes_run);
  }

  SetScorer scorer;
  switch (options.pgr) {
    case PgrMode::kNone:
      scorer = l2_similarity;
      break;
    case PgrMode::kParameterFree:
      scorer = pf_pgr_similarity_score;
      break;
    case PgrMode::kMetricLearning:
      // probe items join the pose group of the nearest gallery centroid,
      // then the minimum center-wise distance scores the pair
      scorer = [](const SetDescriptor& probe, const SetDescriptor& gal) {
        if (!gal.centroids)
          throw std::invalid_argument("ml scoring: gallery descriptor lacks centroids");
        const CentroidTriple probe_triple =
            assign_and_centroid(probe.features, probe.weights, *gal.centroids);
        return -ml_pgr_similarity(probe_triple, *gal.centroids, probe.aggregate,
                                  gal.aggregate);
      };
      break;
  }

  auto check_finite = [](double v) {
    if (!std::isfinite(v)) throw NumericError("evaluate: non-finite similarity score");
    return v;
  };

  switch (options.protocol) {
    case Protocol::kVerify: {
      std::vector<ScoredPair> pairs = verification_pairs(probes, gallery, scorer);
      for (const ScoredPair& p : pairs) check_finite(p.score);
      for (double far : options.grid.far)
        result.summary.emplace_back("tar@far=" + std::to_string(far),
                                    tar_at_far(pairs, far));
      result.roc = roc_curve(pairs);
      break;
    }
    case Protocol::kClosedId: {
      const std::vector<bool> mated(probes.size(), true);
      const IdentificationRun run = rank_probes(probes, gallery, mated, scorer);
      for (std::size_t k : options.grid.ranks) {
        if (k > run.probes.front().ranking.size()) continue;  // beyond gallery identities
        const double v = cmc(run, k);
        result.cmc_points.emplace_back(k, v);
        result.summary.emplace_back("cmc@rank=" + std::to_string(k), v);
      }
      // softmax route over the head, the paper's closed-set decision rule
      std::vector<std::vector<double>> probe_aggregates;
      std::vector<std::size_t> labels;
      for (std::size_t p = 0; p < probes.size(); ++p) {
        if (!probe_label_known[p])
          throw std::invalid_argument("evaluate: closed-id probe identity unseen in training");
        probe_aggregates.push_back(probes[p].aggregate);
        labels.push_back(probe_labels[p]);
      }
      result.summary.emplace_back(
          "rank1_softmax",
          closed_set_accuracy(checkpoint.head, probe_aggregates, labels));
      result.summary.emplace_back("mean_traversed", result.mean_traversed);
      result.summary.emplace_back("mean_set_size", result.mean_set_size);
      break;
    }
    case Protocol::kOpenId: {
      // withhold a fraction of probe identities from the gallery
      std::vector<std::uint32_t> identities;
      for (const SetDescriptor& p : probes) identities.push_back(p.identity);
      std::sort(identities.begin(), identities.end());
      identities.erase(std::unique(identities.begin(), identities.end()), identities.end());
      Rng withhold_rng(options.seed ^ kOpenSetSalt);
      const std::vector<std::size_t> perm = withhold_rng.permutation(identities.size());
      const std::size_t n_withheld = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(options.grid.open_impostor_fraction *
                                                   static_cast<double>(identities.size()))));
      std::unordered_set<std::uint32_t> withheld;
      for (std::size_t i = 0; i < n_withheld && i < identities.size(); ++i)
        withheld.insert(identities[perm[i]]);

      std::vector<SetDescriptor> open_gallery;
      for (const SetDescriptor& g : gallery)
        if (!withheld.count(g.identity)) open_gallery.push_back(g);
      if (open_gallery.empty())
        throw std::invalid_argument("evaluate: open-id withheld every gallery identity");
      std::vector<bool> mated(probes.size());
      for (std::size_t p = 0; p < probes.size(); ++p)
        mated[p] = withheld.count(probes[p].identity) == 0;

      const IdentificationRun run = rank_probes(probes, open_gallery, mated, scorer);
      for (double fpir : options.grid.fpir)
        result.summary.emplace_back("tpir@fpir=" + std::to_string(fpir),
                                    tpir_at_fpir(run, fpir));
      result.summary.emplace_back("rank1_mated", cmc(run, 1));
      break;
    }
  }
  return result;
}

}  // namespace setpool

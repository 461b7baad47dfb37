#include "setpool/env.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace setpool {

namespace {

constexpr double kWeightFloor = 1e-6;

std::atomic<std::uint64_t> g_clamped_actions{0};

// gradient of mean cross-entropy at the logits: softmax(o) - onehot(y)
std::vector<double> ce_logit_gradient(std::span<const double> logits, std::size_t label) {
  std::vector<double> g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

}  // namespace

RewardHead make_reward_head(std::size_t embed_dim, std::size_t num_classes, Rng& rng,
                            double lambda, std::size_t hidden) {
  RewardHead head;
  head.classifier = make_dense_net({embed_dim, hidden, num_classes},
                                   {Activation::kRelu, Activation::kIdentity}, rng);
  head.lambda = lambda;
  return head;
}

EpisodeState make_episode(std::vector<std::vector<double>> features, std::size_t label,
                          Rng* shuffle_rng) {
  if (features.empty()) throw std::invalid_argument("make_episode: empty feature set");
  EpisodeState state;
  state.weights.assign(features.size(), 1.0);
  if (shuffle_rng != nullptr) {
    state.order = shuffle_rng->permutation(features.size());
  } else {
    state.order.resize(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) state.order[i] = i;
  }
  state.features = std::move(features);
  state.label = label;
  return state;
}

std::vector<double> aggregate(const std::vector<std::vector<double>>& features,
                              std::span<const double> weights) {
  if (features.empty() || features.size() != weights.size())
    throw std::invalid_argument("aggregate: features and weights must be nonempty and aligned");
  const std::size_t dim = features.front().size();
  std::vector<double> out(dim, 0.0);
  double total = 0.0;
  for (double w : weights) total += w;
  if (total < kWeightFloor) {
    // degenerate mass, only reachable through replayed or all-zero actions
    for (const auto& f : features)
      for (std::size_t i = 0; i < dim; ++i) out[i] += f[i];
    for (double& x : out) x /= static_cast<double>(features.size());
    return out;
  }
  for (std::size_t t = 0; t < features.size(); ++t) {
    const double w = weights[t];
    const auto& f = features[t];
    for (std::size_t i = 0; i < dim; ++i) out[i] += w * f[i];
  }
  for (double& x : out) x /= total;
  return out;
}

std::vector<double> max_pool(const std::vector<std::vector<double>>& features) {
  if (features.empty()) throw std::invalid_argument("max_pool: empty feature set");
  std::vector<double> out = features.front();
  for (std::size_t t = 1; t < features.size(); ++t)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], features[t][i]);
  return out;
}

std::vector<double> build_state(const EpisodeState& state) {
  if (state.done()) throw std::invalid_argument("build_state: episode already done");
  const std::size_t t = state.current_item();
  const std::size_t dim = state.features.front().size();

  std::vector<double> context(dim, 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < state.features.size(); ++i) {
    if (i == t) continue;
    mass += state.weights[i];
    for (std::size_t d = 0; d < dim; ++d) context[d] += state.weights[i] * state.features[i][d];
  }
  if (state.features.size() > 1) {
    if (mass >= kWeightFloor) {
      for (double& x : context) x /= mass;
    } else {
      // same floor rule as aggregate: uniform mean over the other items
      std::fill(context.begin(), context.end(), 0.0);
      for (std::size_t i = 0; i < state.features.size(); ++i) {
        if (i == t) continue;
        for (std::size_t d = 0; d < dim; ++d) context[d] += state.features[i][d];
      }
      for (double& x : context) x /= static_cast<double>(state.features.size() - 1);
    }
  }
  std::vector<double> obs;
  obs.reserve(2 * dim);
  obs.insert(obs.end(), context.begin(), context.end());
  obs.insert(obs.end(), state.features[t].begin(), state.features[t].end());
  return obs;
}

std::uint64_t clamped_action_count() { return g_clamped_actions.load(); }

bool softmax_terminated(const RewardHead& head, std::span<const double> aggregated,
                        double threshold) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw std::invalid_argument("softmax_terminated: threshold must lie in (0, 1]");
  const std::vector<double> probs = softmax(forward(head.classifier, aggregated));
  return *std::max_element(probs.begin(), probs.end()) >= threshold;
}

StepOutcome step(EpisodeState& state, double action, const RewardHead& head,
                 std::optional<double> termination_threshold) {
  if (state.done()) throw std::invalid_argument("step: episode already done");
  if (action < 0.0 || action > 1.0) {
    if (g_clamped_actions.fetch_add(1) == 0)
      std::fprintf(stderr, "setpool: warning: action %g outside [0,1], clamping\n", action);
    action = std::clamp(action, 0.0, 1.0);
  }

  const std::size_t item = state.current_item();
  const std::vector<double> before = aggregate(state.features, state.weights);
  const double loss_before = cross_entropy(forward(head.classifier, before), state.label);

  state.weights[item] = action;
  const std::vector<double> after = aggregate(state.features, state.weights);
  const double loss_after = cross_entropy(forward(head.classifier, after), state.label);

  StepOutcome outcome;
  outcome.reward = (loss_before - loss_after) + head.lambda * std::max(0.0, 1.0 - action);

  ++state.cursor;
  bool done = state.done();
  if (!done && termination_threshold.has_value() &&
      softmax_terminated(head, after, *termination_threshold)) {
    done = true;
    state.cursor = state.order.size();
  }
  outcome.done = done;
  if (!done) outcome.next_state = build_state(state);
  return outcome;
}

double train_reward_head(RewardHead& head,
                         const std::vector<std::vector<double>>& aggregated,
                         std::span<const std::size_t> labels, double learning_rate) {
  if (aggregated.empty() || aggregated.size() != labels.size())
    throw std::invalid_argument("train_reward_head: empty or misaligned batch");
  Gradients total = zero_gradients_like(head.classifier);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(aggregated.size());
  ForwardTrace trace;
  for (std::size_t n = 0; n < aggregated.size(); ++n) {
    const std::vector<double>& logits = forward(head.classifier, aggregated[n], trace);
    loss += cross_entropy(logits, labels[n]) * inv;
    const std::vector<double> upstream = ce_logit_gradient(logits, labels[n]);
    Gradients g = backward(head.classifier, aggregated[n], trace, upstream);
    accumulate(total, g, inv);
  }
  apply_gradient(head.classifier, total, -learning_rate);
  return loss;
}

}  // namespace setpool

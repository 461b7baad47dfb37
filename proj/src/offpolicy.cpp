#include "setpool/offpolicy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "setpool/mathfn.hpp"

namespace setpool {

namespace {

constexpr double kShapeOffset = 1.0 + 1e-3;

std::vector<double> truncated_ratios(const AgentParams& params, const Trajectory& traj,
                                     double c, std::size_t* clipped = nullptr) {
  std::vector<double> ratios(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const double current = beta_log_prob(policy_forward(params, traj[t].state),
                                         traj[t].action);
    ratios[t] = is_ratio(current, traj[t].behavior_log_prob, c);
    if (clipped != nullptr && ratios[t] == c) ++*clipped;
  }
  return ratios;
}

}  // namespace

void ReplayPool::add(Trajectory trajectory) {
  if (capacity_ == 0) return;
  entries_.push_back(std::move(trajectory));
  while (entries_.size() > capacity_) entries_.pop_front();
}

const Trajectory& ReplayPool::sample(Rng& rng) const {
  if (entries_.empty()) throw std::invalid_argument("ReplayPool::sample: empty pool");
  return entries_[rng.uniform_index(entries_.size())];
}

AveragePolicy make_average_policy(const AgentParams& params) {
  return AveragePolicy{params.trunk, params.policy_branch};
}

PolicyDistribution average_policy_forward(const AveragePolicy& avg,
                                          std::span<const double> state) {
  const std::vector<double> hidden = forward(avg.trunk, state);
  const std::vector<double> out = forward(avg.policy_branch, hidden);
  return PolicyDistribution{softplus(out[0]) + kShapeOffset, softplus(out[1]) + kShapeOffset};
}

double is_ratio(double current_log_prob, double behavior_log_prob, double c) {
  return std::min(std::exp(current_log_prob - behavior_log_prob), c);
}

double off_policy_return(std::span<const double> rewards, std::span<const double> ratios,
                         double gamma, std::size_t t) {
  if (rewards.size() != ratios.size())
    throw std::invalid_argument("off_policy_return: misaligned reward/ratio sequences");
  if (t >= rewards.size())
    throw std::invalid_argument("off_policy_return: start index out of range");
  double value = rewards[t];
  double discount = 1.0;
  double ratio_product = 1.0;
  for (std::size_t k = t + 1; k < rewards.size(); ++k) {
    discount *= gamma;
    ratio_product *= ratios[k];
    value += discount * ratio_product * rewards[k];
  }
  return value;
}

std::vector<double> off_value_gradient(const AgentParams& params, const Trajectory& traj,
                                       double c) {
  std::vector<double> total(value_path_size(params), 0.0);
  if (traj.empty()) return total;
  const std::vector<double> ratios = truncated_ratios(params, traj, c);
  std::vector<double> rewards(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) rewards[t] = traj[t].reward;

  PathScratch scratch;
  double leading_product = 1.0;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    leading_product *= ratios[t];
    const double ret = off_policy_return(rewards, ratios, params.gamma, t);
    const double value = value_forward(params, traj[t].state);
    accumulate_value_gradient(params, traj[t].state, (ret - value) * leading_product,
                              total, scratch);
  }
  return total;
}

std::vector<double> off_policy_gradient(const AgentParams& params, const Trajectory& traj,
                                        double c) {
  std::vector<double> total(policy_path_size(params), 0.0);
  const std::vector<double> ratios = truncated_ratios(params, traj, c);
  PathScratch scratch;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const double delta = td_error(params, traj[t]);
    accumulate_policy_log_prob_gradient(params, traj[t].state, traj[t].action,
                                        ratios[t] * delta, total, scratch);
  }
  return total;
}

std::vector<double> kl_gradient(const AgentParams& params, const AveragePolicy& avg,
                                std::span<const double> state) {
  std::vector<double> total(policy_path_size(params), 0.0);
  PathScratch scratch;
  accumulate_kl_gradient(params, avg, state, 1.0, total, scratch);
  return total;
}

void accumulate_kl_gradient(const AgentParams& params, const AveragePolicy& avg,
                            std::span<const double> state, double scale,
                            std::span<double> total, PathScratch& scratch) {
  const PolicyDistribution ref = average_policy_forward(avg, state);

  const std::vector<double>& hidden = forward(params.trunk, state, scratch.trunk);
  const std::vector<double>& out =
      forward(params.policy_branch, hidden, scratch.branch);
  const double a2 = softplus(out[0]) + kShapeOffset;
  const double b2 = softplus(out[1]) + kShapeOffset;

  // d KL(ref || q) / d shape of q, then chain through softplus
  const double dkl_da2 = digamma(a2) - digamma(a2 + b2) - digamma(ref.alpha) +
                         digamma(ref.alpha + ref.beta);
  const double dkl_db2 = digamma(b2) - digamma(a2 + b2) - digamma(ref.beta) +
                         digamma(ref.alpha + ref.beta);
  const double upstream[2] = {dkl_da2 * sigmoid(out[0]), dkl_db2 * sigmoid(out[1])};
  backward(params.policy_branch, hidden, scratch.branch,
           std::span<const double>(upstream, 2), scratch.branch_grads);
  backward(params.trunk, state, scratch.trunk, scratch.branch_grads.input,
           scratch.trunk_grads);
  std::size_t pos = 0;
  for (const Gradients* grads : {&scratch.trunk_grads, &scratch.branch_grads}) {
    for (const LayerGrad& lg : grads->layers) {
      for (double w : lg.weights) total[pos++] += scale * w;
      for (double b : lg.bias) total[pos++] += scale * b;
    }
  }
}

std::vector<double> trust_region_project(std::span<const double> g,
                                         std::span<const double> k, double xi) {
  if (g.size() != k.size())
    throw std::invalid_argument("trust_region_project: g and k length mismatch");
  if (xi <= 0.0) throw std::invalid_argument("trust_region_project: xi must be positive");
  const double k_norm2 = dot(k, k);
  std::vector<double> z(g.begin(), g.end());
  if (k_norm2 == 0.0) return z;
  const double kg = dot(k, g);
  if (kg <= xi) return z;
  const double factor = (kg - xi) / k_norm2;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] -= factor * k[i];
  return z;
}

void soft_update_average(AveragePolicy& avg, const AgentParams& params, double alpha) {
  auto blend = [alpha](DenseNet& target, const DenseNet& source) {
    if (target.param_count() != source.param_count())
      throw std::invalid_argument("soft_update_average: shape mismatch");
    std::vector<double> t = flatten_params(target);
    const std::vector<double> s = flatten_params(source);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = alpha * t[i] + (1.0 - alpha) * s[i];
    set_params(target, t);
  };
  blend(avg.trunk, params.trunk);
  blend(avg.policy_branch, params.policy_branch);
}

ReplayDiagnostics replay_train_step(AgentParams& params, AveragePolicy& avg,
                                    const ReplayPool& pool, const TrustRegionConfig& config,
                                    double lr_policy, double lr_value,
                                    std::size_t batch_size, Rng& rng) {
  ReplayDiagnostics diag;
  if (pool.empty() || batch_size == 0) return diag;

  std::vector<double> policy_grad(policy_path_size(params), 0.0);
  std::vector<double> value_grad(value_path_size(params), 0.0);
  std::vector<double> kl_grad_mean(policy_path_size(params), 0.0);
  PathScratch kl_scratch;
  std::size_t clipped = 0;
  std::size_t total_steps = 0;

  for (std::size_t b = 0; b < batch_size; ++b) {
    const Trajectory& traj = pool.sample(rng);
    (void)truncated_ratios(params, traj, config.c, &clipped);
    total_steps += traj.size();

    const std::vector<double> pg = off_policy_gradient(params, traj, config.c);
    for (std::size_t i = 0; i < policy_grad.size(); ++i) policy_grad[i] += pg[i];
    const std::vector<double> vg = off_value_gradient(params, traj, config.c);
    for (std::size_t i = 0; i < value_grad.size(); ++i) value_grad[i] += vg[i];

    for (const Transition& tr : traj) {
      accumulate_kl_gradient(params, avg, tr.state, 1.0, kl_grad_mean, kl_scratch);
      diag.mean_kl += beta_kl(average_policy_forward(avg, tr.state),
                              policy_forward(params, tr.state));
    }
  }

  const double inv_batch = 1.0 / static_cast<double>(batch_size);
  for (double& x : policy_grad) x *= inv_batch;
  for (double& x : value_grad) x *= inv_batch;
  if (total_steps > 0) {
    const double inv_steps = 1.0 / static_cast<double>(total_steps);
    for (double& x : kl_grad_mean) x *= inv_steps;
    diag.mean_kl *= inv_steps;
    diag.truncation_rate = static_cast<double>(clipped) / static_cast<double>(total_steps);
  }

  const std::vector<double> projected =
      trust_region_project(policy_grad, kl_grad_mean, config.xi);
  apply_policy_path(params, projected, lr_policy);
  apply_value_path(params, value_grad, lr_value);
  soft_update_average(avg, params, config.alpha);

  diag.batch_steps = total_steps;
  diag.applied = true;
  return diag;
}

}  // namespace setpool

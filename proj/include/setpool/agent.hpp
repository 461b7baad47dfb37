#ifndef SETPOOL_AGENT_HPP
#define SETPOOL_AGENT_HPP

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "setpool/nn.hpp"

namespace setpool {

/// Shared trunk with policy and value branches. The trunk is part of both
/// the policy path (trunk + policy_branch) and the value path
/// (trunk + value_branch); flat gradient vectors below follow that split.
struct AgentParams {
  DenseNet trunk;          // 2*embed_dim -> 100 -> 100, relu
  DenseNet policy_branch;  // 100 -> 64 -> 16 -> 2 shape parameters
  DenseNet value_branch;   // 100 -> 64 -> 16 -> 1
  double gamma = 0.999;
};

AgentParams make_agent(std::size_t embed_dim, Rng& rng, double gamma = 0.999);

/// Beta distribution on [0,1]; the softplus(x) + 1 + 1e-3 mapping keeps both
/// shapes above 1, so the density is unimodal with an interior mode.
struct PolicyDistribution {
  double alpha = 2.0;
  double beta = 2.0;
};

PolicyDistribution policy_forward(const AgentParams& params, std::span<const double> state);

double beta_log_prob(const PolicyDistribution& dist, double action);
double beta_entropy(const PolicyDistribution& dist);
/// Closed-form KL(p || q) between two Beta distributions.
double beta_kl(const PolicyDistribution& p, const PolicyDistribution& q);

/// Returns (action, log-density at the action).
std::pair<double, double> sample_action(const PolicyDistribution& dist, Rng& rng);
/// (alpha-1)/(alpha+beta-2), the deterministic evaluation action.
double mode_action(const PolicyDistribution& dist);

double value_forward(const AgentParams& params, std::span<const double> state);

struct Transition {
  std::vector<double> state;
  double action = 0.0;
  double behavior_log_prob = 0.0;
  double reward = 0.0;
  std::vector<double> next_state;  // unused when done
  bool done = false;
};

using Trajectory = std::vector<Transition>;

/// r + gamma * V(s') - V(s), with V(s') := 0 on terminal transitions.
double td_error(const AgentParams& params, const Transition& transition);

// --- flat parameter/gradient plumbing over the two paths ---

std::size_t policy_path_size(const AgentParams& params);
std::vector<double> policy_path_params(const AgentParams& params);
void apply_policy_path(AgentParams& params, std::span<const double> flat, double scale);

std::size_t value_path_size(const AgentParams& params);
void apply_value_path(AgentParams& params, std::span<const double> flat, double scale);

/// Gradient of log pi(action | state) over [trunk, policy_branch] parameters.
std::vector<double> policy_log_prob_gradient(const AgentParams& params,
                                             std::span<const double> state, double action,
                                             double* log_prob_out = nullptr);

/// Gradient of V(state) over [trunk, value_branch] parameters.
std::vector<double> value_gradient(const AgentParams& params, std::span<const double> state,
                                   double* value_out = nullptr);

/// Reusable buffers for the accumulate variants below; the training loops
/// hold one per thread to keep the per-step cost allocation-free.
struct PathScratch {
  ForwardTrace trunk;
  ForwardTrace branch;
  Gradients branch_grads;
  Gradients trunk_grads;
};

/// total += scale * grad log pi(action | state); returns the log-probability.
double accumulate_policy_log_prob_gradient(const AgentParams& params,
                                           std::span<const double> state, double action,
                                           double scale, std::span<double> total,
                                           PathScratch& scratch);

/// total += scale * grad V(state); returns V(state).
double accumulate_value_gradient(const AgentParams& params, std::span<const double> state,
                                 double scale, std::span<double> total,
                                 PathScratch& scratch);

/// sum_t delta_t * grad log pi(a_t | s_t): the ascent direction of the
/// advantage policy objective with the TD error standing in for A(s,a).
std::vector<double> a2c_policy_gradient(const AgentParams& params, const Trajectory& traj);

/// Gradient of sum_t delta_t^2 with targets r + gamma V(s') held constant.
std::vector<double> a2c_value_loss_gradient(const AgentParams& params, const Trajectory& traj);

struct A2CDiagnostics {
  double mean_abs_td = 0.0;
  double mean_entropy = 0.0;
};

/// On-policy update. Throws if any stored behavior log-prob disagrees with
/// the current policy by more than 1e-6 (stale trajectory).
A2CDiagnostics a2c_update(AgentParams& params, const Trajectory& traj, double lr_policy,
                          double lr_value);

}  // namespace setpool

#endif

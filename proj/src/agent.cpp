#include "setpool/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "setpool/mathfn.hpp"

namespace setpool {

namespace {

constexpr double kShapeOffset = 1.0 + 1e-3;
constexpr double kActionEps = 1e-12;

std::vector<double> concat(std::vector<double> a, const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// backprop an upstream at the branch output through branch then trunk,
// returning the flat [trunk, branch] gradient; traces avoid re-running the
// forward passes
std::vector<double> path_gradient_traced(const DenseNet& trunk, const DenseNet& branch,
                                         std::span<const double> state,
                                         const ForwardTrace& trunk_trace,
                                         const ForwardTrace& branch_trace,
                                         std::span<const double> upstream) {
  const std::vector<double>& hidden = trunk_trace.post.back();
  Gradients branch_grads = backward(branch, hidden, branch_trace, upstream);
  Gradients trunk_grads = backward(trunk, state, trunk_trace, branch_grads.input);
  return concat(flatten_grads(trunk_grads), flatten_grads(branch_grads));
}

}  // namespace

AgentParams make_agent(std::size_t embed_dim, Rng& rng, double gamma) {
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::invalid_argument("make_agent: gamma must lie in [0, 1)");
  AgentParams params;
  params.trunk = make_dense_net({2 * embed_dim, 100, 100},
                                {Activation::kRelu, Activation::kRelu}, rng);
  params.policy_branch = make_dense_net(
      {100, 64, 16, 2}, {Activation::kRelu, Activation::kRelu, Activation::kIdentity}, rng);
  params.value_branch = make_dense_net(
      {100, 64, 16, 1}, {Activation::kRelu, Activation::kRelu, Activation::kIdentity}, rng);
  params.gamma = gamma;
  return params;
}

PolicyDistribution policy_forward(const AgentParams& params, std::span<const double> state) {
  const std::vector<double> hidden = forward(params.trunk, state);
  const std::vector<double> out = forward(params.policy_branch, hidden);
  return PolicyDistribution{softplus(out[0]) + kShapeOffset, softplus(out[1]) + kShapeOffset};
}

double beta_log_prob(const PolicyDistribution& dist, double action) {
  const double a = std::clamp(action, kActionEps, 1.0 - kActionEps);
  return (dist.alpha - 1.0) * std::log(a) + (dist.beta - 1.0) * std::log1p(-a) -
         log_beta_fn(dist.alpha, dist.beta);
}

double beta_entropy(const PolicyDistribution& dist) {
  const double a = dist.alpha;
  const double b = dist.beta;
  return log_beta_fn(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) +
         (a + b - 2.0) * digamma(a + b);
}

double beta_kl(const PolicyDistribution& p, const PolicyDistribution& q) {
  const double a1 = p.alpha, b1 = p.beta, a2 = q.alpha, b2 = q.beta;
  return log_beta_fn(a2, b2) - log_beta_fn(a1, b1) + (a1 - a2) * digamma(a1) +
         (b1 - b2) * digamma(b1) + (a2 - a1 + b2 - b1) * digamma(a1 + b1);
}

std::pair<double, double> sample_action(const PolicyDistribution& dist, Rng& rng) {
  const double a = std::clamp(rng.beta(dist.alpha, dist.beta), 0.0, 1.0);
  return {a, beta_log_prob(dist, a)};
}

double mode_action(const PolicyDistribution& dist) {
  return (dist.alpha - 1.0) / (dist.alpha + dist.beta - 2.0);
}

double value_forward(const AgentParams& params, std::span<const double> state) {
  const std::vector<double> hidden = forward(params.trunk, state);
  return forward(params.value_branch, hidden)[0];
}

double td_error(const AgentParams& params, const Transition& transition) {
  const double next_value =
      transition.done ? 0.0 : value_forward(params, transition.next_state);
  return transition.reward + params.gamma * next_value -
         value_forward(params, transition.state);
}

std::size_t policy_path_size(const AgentParams& params) {
  return params.trunk.param_count() + params.policy_branch.param_count();
}

std::vector<double> policy_path_params(const AgentParams& params) {
  return concat(flatten_params(params.trunk), flatten_params(params.policy_branch));
}

void apply_policy_path(AgentParams& params, std::span<const double> flat, double scale) {
  if (flat.size() != policy_path_size(params))
    throw std::invalid_argument("apply_policy_path: size mismatch");
  const std::size_t trunk_n = params.trunk.param_count();
  std::vector<double> trunk_params = flatten_params(params.trunk);
  for (std::size_t i = 0; i < trunk_n; ++i) trunk_params[i] += scale * flat[i];
  set_params(params.trunk, trunk_params);
  std::vector<double> branch_params = flatten_params(params.policy_branch);
  for (std::size_t i = 0; i < branch_params.size(); ++i)
    branch_params[i] += scale * flat[trunk_n + i];
  set_params(params.policy_branch, branch_params);
}

std::size_t value_path_size(const AgentParams& params) {
  return params.trunk.param_count() + params.value_branch.param_count();
}

void apply_value_path(AgentParams& params, std::span<const double> flat, double scale) {
  if (flat.size() != value_path_size(params))
    throw std::invalid_argument("apply_value_path: size mismatch");
  const std::size_t trunk_n = params.trunk.param_count();
  std::vector<double> trunk_params = flatten_params(params.trunk);
  for (std::size_t i = 0; i < trunk_n; ++i) trunk_params[i] += scale * flat[i];
  set_params(params.trunk, trunk_params);
  std::vector<double> branch_params = flatten_params(params.value_branch);
  for (std::size_t i = 0; i < branch_params.size(); ++i)
    branch_params[i] += scale * flat[trunk_n + i];
  set_params(params.value_branch, branch_params);
}

namespace {

std::vector<double> log_prob_gradient_traced(const AgentParams& params,
                                             std::span<const double> state, double action,
                                             const ForwardTrace& trunk_trace,
                                             const ForwardTrace& branch_trace,
                                             double* log_prob_out) {
  const std::vector<double>& out = branch_trace.post.back();
  const PolicyDistribution dist{softplus(out[0]) + kShapeOffset,
                                softplus(out[1]) + kShapeOffset};
  const double a = std::clamp(action, kActionEps, 1.0 - kActionEps);
  if (log_prob_out != nullptr) *log_prob_out = beta_log_prob(dist, a);

  const double psi_ab = digamma(dist.alpha + dist.beta);
  const double dl_dalpha = std::log(a) - digamma(dist.alpha) + psi_ab;
  const double dl_dbeta = std::log1p(-a) - digamma(dist.beta) + psi_ab;
  // chain through softplus
  const std::vector<double> upstream = {dl_dalpha * sigmoid(out[0]),
                                        dl_dbeta * sigmoid(out[1])};
  return path_gradient_traced(params.trunk, params.policy_branch, state, trunk_trace,
                              branch_trace, upstream);
}

}  // namespace

std::vector<double> policy_log_prob_gradient(const AgentParams& params,
                                             std::span<const double> state, double action,
                                             double* log_prob_out) {
  ForwardTrace trunk_trace, branch_trace;
  forward(params.trunk, state, trunk_trace);
  forward(params.policy_branch, trunk_trace.post.back(), branch_trace);
  return log_prob_gradient_traced(params, state, action, trunk_trace, branch_trace,
                                  log_prob_out);
}

namespace {

// total += scale * [flatten(trunk_grads), flatten(branch_grads)]
void add_flat(const Gradients& trunk_grads, const Gradients& branch_grads, double scale,
              std::span<double> total) {
  std::size_t pos = 0;
  for (const Gradients* grads : {&trunk_grads, &branch_grads}) {
    for (const LayerGrad& lg : grads->layers) {
      for (double w : lg.weights) total[pos++] += scale * w;
      for (double b : lg.bias) total[pos++] += scale * b;
    }
  }
}

// everything a transition's updates need, from one trunk pass per state
struct StepEval {
  ForwardTrace trunk;
  ForwardTrace policy;
  ForwardTrace value;
  PolicyDistribution dist;
  double delta = 0.0;
};

StepEval eval_step(const AgentParams& params, const Transition& tr) {
  StepEval ev;
  forward(params.trunk, tr.state, ev.trunk);
  const std::vector<double>& hidden = ev.trunk.post.back();
  const std::vector<double>& out = forward(params.policy_branch, hidden, ev.policy);
  ev.dist = PolicyDistribution{softplus(out[0]) + kShapeOffset,
                               softplus(out[1]) + kShapeOffset};
  const double value_s = forward(params.value_branch, hidden, ev.value)[0];
  const double value_next = tr.done ? 0.0 : value_forward(params, tr.next_state);
  ev.delta = tr.reward + params.gamma * value_next - value_s;
  return ev;
}

std::vector<double> value_gradient_traced(const AgentParams& params,
                                          std::span<const double> state,
                                          const StepEval& ev) {
  const std::vector<double> upstream = {1.0};
  return path_gradient_traced(params.trunk, params.value_branch, state, ev.trunk,
                              ev.value, upstream);
}

}  // namespace

std::vector<double> value_gradient(const AgentParams& params, std::span<const double> state,
                                   double* value_out) {
  ForwardTrace trunk_trace, value_trace;
  forward(params.trunk, state, trunk_trace);
  const std::vector<double>& out =
      forward(params.value_branch, trunk_trace.post.back(), value_trace);
  if (value_out != nullptr) *value_out = out[0];
  const std::vector<double> upstream = {1.0};
  return path_gradient_traced(params.trunk, params.value_branch, state, trunk_trace,
                              value_trace, upstream);
}

double accumulate_policy_log_prob_gradient(const AgentParams& params,
                                           std::span<const double> state, double action,
                                           double scale, std::span<double> total,
                                           PathScratch& scratch) {
  forward(params.trunk, state, scratch.trunk);
  const std::vector<double>& out =
      forward(params.policy_branch, scratch.trunk.post.back(), scratch.branch);
  const PolicyDistribution dist{softplus(out[0]) + kShapeOffset,
                                softplus(out[1]) + kShapeOffset};
  const double a = std::clamp(action, kActionEps, 1.0 - kActionEps);
  const double psi_ab = digamma(dist.alpha + dist.beta);
  const double dl_dalpha = std::log(a) - digamma(dist.alpha) + psi_ab;
  const double dl_dbeta = std::log1p(-a) - digamma(dist.beta) + psi_ab;
  const double upstream[2] = {dl_dalpha * sigmoid(out[0]), dl_dbeta * sigmoid(out[1])};
  backward(params.policy_branch, scratch.trunk.post.back(), scratch.branch,
           std::span<const double>(upstream, 2), scratch.branch_grads);
  backward(params.trunk, state, scratch.trunk, scratch.branch_grads.input,
           scratch.trunk_grads);
  add_flat(scratch.trunk_grads, scratch.branch_grads, scale, total);
  return beta_log_prob(dist, a);
}

double accumulate_value_gradient(const AgentParams& params, std::span<const double> state,
                                 double scale, std::span<double> total,
                                 PathScratch& scratch) {
  forward(params.trunk, state, scratch.trunk);
  const std::vector<double>& out =
      forward(params.value_branch, scratch.trunk.post.back(), scratch.branch);
  const double upstream[1] = {1.0};
  backward(params.value_branch, scratch.trunk.post.back(), scratch.branch,
           std::span<const double>(upstream, 1), scratch.branch_grads);
  backward(params.trunk, state, scratch.trunk, scratch.branch_grads.input,
           scratch.trunk_grads);
  add_flat(scratch.trunk_grads, scratch.branch_grads, scale, total);
  return out[0];
}

std::vector<double> a2c_policy_gradient(const AgentParams& params, const Trajectory& traj) {
  std::vector<double> total(policy_path_size(params), 0.0);
  for (const Transition& tr : traj) {
    const StepEval ev = eval_step(params, tr);
    const std::vector<double> g =
        log_prob_gradient_traced(params, tr.state, tr.action, ev.trunk, ev.policy, nullptr);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += ev.delta * g[i];
  }
  return total;
}

std::vector<double> a2c_value_loss_gradient(const AgentParams& params, const Trajectory& traj) {
  std::vector<double> total(value_path_size(params), 0.0);
  for (const Transition& tr : traj) {
    const StepEval ev = eval_step(params, tr);
    const std::vector<double> g = value_gradient_traced(params, tr.state, ev);
    // d/dw (target - V)^2 = -2 delta dV/dw
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += -2.0 * ev.delta * g[i];
  }
  return total;
}

A2CDiagnostics a2c_update(AgentParams& params, const Trajectory& traj, double lr_policy,
                          double lr_value) {
  A2CDiagnostics diag;
  if (traj.empty()) return diag;

  std::vector<double> policy_grad(policy_path_size(params), 0.0);
  std::vector<double> value_grad(value_path_size(params), 0.0);
  PathScratch scratch;
  for (const Transition& tr : traj) {
    const double value_next = tr.done ? 0.0 : value_forward(params, tr.next_state);
    const double value_s = value_forward(params, tr.state);
    const double delta = tr.reward + params.gamma * value_next - value_s;

    const double log_prob = accumulate_policy_log_prob_gradient(
        params, tr.state, tr.action, delta, policy_grad, scratch);
    if (std::abs(log_prob - tr.behavior_log_prob) > 1e-6)
      throw std::invalid_argument(
          "a2c_update: trajectory is stale (behavior log-prob differs from current policy)");
    accumulate_value_gradient(params, tr.state, -2.0 * delta, value_grad, scratch);

    diag.mean_abs_td += std::abs(delta);
    diag.mean_entropy += beta_entropy(policy_forward(params, tr.state));
  }
  diag.mean_abs_td /= static_cast<double>(traj.size());
  diag.mean_entropy /= static_cast<double>(traj.size());

  apply_policy_path(params, policy_grad, lr_policy);
  apply_value_path(params, value_grad, -lr_value);
  return diag;
}

}  // namespace setpool

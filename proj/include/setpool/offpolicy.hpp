#ifndef SETPOOL_OFFPOLICY_HPP
#define SETPOOL_OFFPOLICY_HPP

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "setpool/agent.hpp"

namespace setpool {

struct TrustRegionConfig {
  double xi = 1.0;      // KL-constraint magnitude
  double alpha = 0.995; // average-policy soft-update rate
  double c = 5.0;       // importance-sampling truncation threshold
};

/// Ring of trajectories with oldest-first eviction. Steps keep the behavior
/// policy's log-probability from rollout time.
class ReplayPool {
 public:
  explicit ReplayPool(std::size_t capacity) : capacity_(capacity) {}

  void add(Trajectory trajectory);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const Trajectory& at(std::size_t i) const { return entries_[i]; }
  const Trajectory& sample(Rng& rng) const;
  const std::deque<Trajectory>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<Trajectory> entries_;
};

/// Snapshot of the policy path (trunk + policy branch) maintained as a slow
/// running average of past policies.
struct AveragePolicy {
  DenseNet trunk;
  DenseNet policy_branch;
};

AveragePolicy make_average_policy(const AgentParams& params);

PolicyDistribution average_policy_forward(const AveragePolicy& avg,
                                          std::span<const double> state);

/// min(exp(current - behavior), c)
double is_ratio(double current_log_prob, double behavior_log_prob, double c);

/// Off-policy Monte-Carlo return from step t: the k-th future reward is
/// discounted by gamma^k and rescaled by the product of the truncated ratios
/// at steps t+1 .. t+k. ratios[t] itself is never used.
double off_policy_return(std::span<const double> rewards, std::span<const double> ratios,
                         double gamma, std::size_t t);

/// sum_t (Rbar_t - V(s_t)) grad V(s_t) prod_{i<=t} rho_i over the value path.
std::vector<double> off_value_gradient(const AgentParams& params, const Trajectory& traj,
                                       double c);

/// sum_t rho_t grad log pi(a_t|s_t) delta_t over the policy path.
std::vector<double> off_policy_gradient(const AgentParams& params, const Trajectory& traj,
                                        double c);

/// Gradient, over the live policy path, of KL(pi_avg(s) || pi_theta(s)).
std::vector<double> kl_gradient(const AgentParams& params, const AveragePolicy& avg,
                                std::span<const double> state);

/// total += scale * that gradient, reusing scratch buffers.
void accumulate_kl_gradient(const AgentParams& params, const AveragePolicy& avg,
                            std::span<const double> state, double scale,
                            std::span<double> total, PathScratch& scratch);

/// Closed-form projection: g unchanged while k.g <= xi, otherwise g minus the
/// smallest multiple of k restoring k.z = xi. Zero k returns g.
std::vector<double> trust_region_project(std::span<const double> g,
                                         std::span<const double> k, double xi);

/// theta_a <- alpha * theta_a + (1 - alpha) * theta, elementwise.
void soft_update_average(AveragePolicy& avg, const AgentParams& params, double alpha);

struct ReplayDiagnostics {
  double mean_kl = 0.0;
  double truncation_rate = 0.0;  // fraction of ratios that hit c
  std::size_t batch_steps = 0;
  bool applied = false;
};

/// One replay update: uniform batch of trajectories, projected policy step,
/// off-policy value step, average-policy soft update. Empty pool is a no-op.
ReplayDiagnostics replay_train_step(AgentParams& params, AveragePolicy& avg,
                                    const ReplayPool& pool, const TrustRegionConfig& config,
                                    double lr_policy, double lr_value,
                                    std::size_t batch_size, Rng& rng);

}  // namespace setpool

#endif

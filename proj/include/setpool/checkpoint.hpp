#ifndef SETPOOL_CHECKPOINT_HPP
#define SETPOOL_CHECKPOINT_HPP

#include <deque>
#include <string>

#include "setpool/agent.hpp"
#include "setpool/config.hpp"
#include "setpool/env.hpp"
#include "setpool/offpolicy.hpp"
#include "setpool/pgr.hpp"
#include "setpool/temporal.hpp"

namespace setpool {

/// Full training state: save -> load -> save is byte-identical, and resuming
/// from a checkpoint continues the exact RNG stream.
struct Checkpoint {
  ExperimentConfig config;
  std::uint64_t episode = 0;
  Rng::State rng_state{};
  RewardHead head;
  AgentParams agent;
  AveragePolicy average;
  TempConvNet temporal;
  DenseNet projection;
  std::deque<Trajectory> replay;  // off-policy pool contents, oldest first
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Total trainable parameter count across all components.
std::size_t checkpoint_param_count(const Checkpoint& checkpoint);

}  // namespace setpool

#endif

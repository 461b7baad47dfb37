#ifndef SETPOOL_CONFIG_HPP
#define SETPOOL_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "setpool/offpolicy.hpp"
#include "setpool/pgr.hpp"
#include "setpool/synth.hpp"

namespace setpool {

enum class TrainMode { kOnPolicy, kOffPolicy };
enum class TerminationMode { kFullTraversal, kSoftmax };
enum class PgrMode { kNone, kParameterFree, kMetricLearning };
enum class Protocol { kVerify, kClosedId, kOpenId };
enum class Baseline { kMeanPool, kMaxPool, kDac, kDacBinary };

struct EvalGrid {
  std::vector<double> far = {0.01, 0.1};
  std::vector<double> fpir = {0.01, 0.1};
  std::vector<std::size_t> ranks = {1, 5, 10};
  double open_impostor_fraction = 0.2;  // probe identities withheld from gallery
};

/// Everything one run needs. Plain-text config files hold `key value` lines
/// with dotted keys; unknown or duplicate keys are errors and the version
/// line is mandatory, so typos cannot silently change a run.
struct ExperimentConfig {
  std::uint32_t version = 1;
  std::uint64_t seed = 0;

  // dataset: a generator description, or a SETF path when dataset_path set.
  // The generator's seed always follows the experiment seed.
  std::string dataset_path;
  GenConfig dataset;

  // agent + reward
  double gamma = 0.999;
  double lambda = 0.1;
  double lr_min = 1e-4;
  double lr_max = 5.011872336272725e-4;  // 10^-3.3
  double value_lr_scale = 1.0;           // value step = lr * scale

  // training loop
  TrainMode train_mode = TrainMode::kOnPolicy;
  std::uint64_t episodes = 2000;
  double head_lr = 0.02;
  double head_warmup_lr = 0.2;
  std::uint64_t head_warmup = 1500;

  // off-policy machinery
  TrustRegionConfig trust;
  std::uint64_t pool_capacity = 5000;
  std::uint64_t batch_size = 16;
  std::uint64_t replay_min = 8;

  TerminationMode termination = TerminationMode::kFullTraversal;
  double termination_threshold = 0.6;

  PgrMode pgr = PgrMode::kNone;
  MlPgrThresholds pgr_thresholds;
  std::uint64_t pgr_train_steps = 300;
  double pgr_lr = 0.05;

  bool temporal_enabled = false;
  std::uint64_t temporal_train_steps = 500;
  double temporal_lr = 0.05;

  Protocol protocol = Protocol::kVerify;
  EvalGrid grid;
};

/// Parses the text form; throws ConfigError on unknown keys, duplicates,
/// bad values, or a missing/unsupported version.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Canonical text form: every key in fixed order, doubles at full precision.
/// parse(serialize(c)) reproduces c exactly.
std::string serialize_config(const ExperimentConfig& config);

/// Cross-field invariants (softmax termination with open-id, bad thresholds).
void validate(const ExperimentConfig& config);

std::string to_string(TrainMode mode);
std::string to_string(TerminationMode mode);
std::string to_string(PgrMode mode);
std::string to_string(Protocol protocol);
std::string to_string(Baseline baseline);
Protocol protocol_from_string(const std::string& s);
Baseline baseline_from_string(const std::string& s);
PgrMode pgr_mode_from_string(const std::string& s);

}  // namespace setpool

#endif

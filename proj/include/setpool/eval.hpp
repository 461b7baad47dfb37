#ifndef SETPOOL_EVAL_HPP
#define SETPOOL_EVAL_HPP

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "setpool/env.hpp"
#include "setpool/pgr.hpp"

namespace setpool {

struct ScoredPair {
  double score = 0.0;  // higher means more likely genuine
  bool genuine = false;
};

/// True-accept rate at the smallest threshold whose impostor acceptance
/// (score >= threshold) stays within `far`. Ties accept.
double tar_at_far(std::span<const ScoredPair> pairs, double far);

/// Full curve rows (threshold, far, tar) at each distinct candidate threshold.
struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;
  double tar = 0.0;
};
std::vector<RocPoint> roc_curve(std::span<const ScoredPair> pairs);

/// One probe's gallery ranking, already sorted by descending score with ties
/// broken by gallery index. mated == false marks open-set impostor probes.
struct RankedProbe {
  std::vector<std::pair<std::uint32_t, double>> ranking;  // (identity, score)
  std::uint32_t true_identity = 0;
  bool mated = true;
};

struct IdentificationRun {
  std::vector<RankedProbe> probes;
  bool open_set = false;
};

/// Fraction of mated probes whose true identity appears in the top k.
double cmc(const IdentificationRun& run, std::size_t k);

/// Open-set: detection-and-identification rate at the smallest threshold
/// keeping impostor-probe acceptance (top-1 score >= threshold) within fpir.
double tpir_at_fpir(const IdentificationRun& run, double fpir);

/// Fraction of probes whose argmax head logit equals the label.
double closed_set_accuracy(const RewardHead& head,
                           const std::vector<std::vector<double>>& aggregated,
                           std::span<const std::size_t> labels);

struct WeightTraceRow {
  std::uint64_t set_id = 0;
  std::size_t item_index = 0;
  std::int64_t duplicate_of = -1;
  float quality_sigma = 0.0f;
  double final_weight = 1.0;
};

void write_weight_traces(std::ostream& out, std::span<const WeightTraceRow> rows);

// --- scoring kernels -------------------------------------------------------
//
// Set-to-set similarity over probe x gallery descriptor grids is the hot
// evaluation loop; the OpenMP kernel and the serial reference compute
// identical outputs (each cell is independent).

/// Everything a distance flavor might need for one set. features/weights are
/// kept for scorers that work per pair, like test-time ML-PGR pose
/// assignment of probe items against each gallery's centroids.
struct SetDescriptor {
  std::vector<double> aggregate;
  std::optional<PoseRepresentation> pose;     // pf-pgr
  std::optional<CentroidTriple> centroids;    // ml-pgr gallery side
  std::vector<std::vector<double>> features;
  std::vector<double> weights;
  std::uint32_t identity = 0;
};

using SetScorer = std::function<double(const SetDescriptor&, const SetDescriptor&)>;

/// -L2(aggregates)
double l2_similarity(const SetDescriptor& a, const SetDescriptor& b);
/// -pf_pgr_distance(pose representations)
double pf_pgr_similarity_score(const SetDescriptor& a, const SetDescriptor& b);
/// -min center-wise distance (falls back to aggregates)
double ml_pgr_similarity_score(const SetDescriptor& a, const SetDescriptor& b);

/// scores[p * gallery.size() + g], row-major. Serial reference.
std::vector<double> score_matrix_serial(const std::vector<SetDescriptor>& probes,
                                        const std::vector<SetDescriptor>& gallery,
                                        const SetScorer& scorer);

/// Same contract, parallel across cells (capped by SETPOOL_THREADS).
std::vector<double> score_matrix(const std::vector<SetDescriptor>& probes,
                                 const std::vector<SetDescriptor>& gallery,
                                 const SetScorer& scorer);

/// Verification pairs from a probe x gallery grid, genuine where identities
/// match.
std::vector<ScoredPair> verification_pairs(const std::vector<SetDescriptor>& probes,
                                           const std::vector<SetDescriptor>& gallery,
                                           const SetScorer& scorer);

/// Per-probe descending-score identity ranking (best score per identity,
/// ties by gallery index).
IdentificationRun rank_probes(const std::vector<SetDescriptor>& probes,
                              const std::vector<SetDescriptor>& gallery,
                              const std::vector<bool>& mated, const SetScorer& scorer);

}  // namespace setpool

#endif

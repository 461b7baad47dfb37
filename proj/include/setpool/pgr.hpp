#ifndef SETPOOL_PGR_HPP
#define SETPOOL_PGR_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "setpool/env.hpp"
#include "setpool/nn.hpp"
#include "setpool/synth.hpp"

namespace setpool {

/// Frontal boundary: |yaw| <= 30 degrees is frontal, beyond is profile.
constexpr double kFrontalYawLimit = 30.0;

/// Pose-stratified set summary: the general weighted aggregate plus the
/// frontal and profile group aggregates with their summed weights. Missing
/// groups carry a zero aggregate and zero mass.
struct PoseRepresentation {
  std::vector<double> general;
  std::vector<double> frontal;
  std::vector<double> profile;
  double p_frontal = 0.0;
  double p_profile = 0.0;
};

/// Splits by yaw and aggregates each group. Left-profile items (yaw < -30)
/// have their component along u_pose negated before entering the profile
/// aggregate; pass an empty u_pose to skip mirroring.
PoseRepresentation pose_split(const std::vector<std::vector<double>>& features,
                              std::span<const double> weights,
                              std::span<const double> yaws,
                              std::span<const double> u_pose);

/// Five-term set distance: L2 of the general aggregates plus the four
/// cross-pose L2 terms weighted by the p products. Always exactly five
/// distance evaluations regardless of set sizes.
double pf_pgr_distance(const PoseRepresentation& a, const PoseRepresentation& b);

/// Process-wide count of L2 evaluations made by pf_pgr_distance.
std::uint64_t pf_pgr_l2_evaluations();
void reset_pf_pgr_l2_evaluations();

/// Frontal / left / right centroids; groups can be absent.
struct CentroidTriple {
  std::array<std::vector<double>, 3> centroids;
  std::array<bool, 3> present = {false, false, false};
};

enum class PoseGroup : std::size_t { kFrontal = 0, kLeft = 1, kRight = 2 };

PoseGroup pose_group_of(double yaw_degrees);

/// Weighted per-group centroids from yaw metadata (training-time grouping).
CentroidTriple centroid_triple(const std::vector<std::vector<double>>& features,
                               std::span<const double> weights,
                               std::span<const double> yaws);

struct MlPgrThresholds {
  double beta = 1.0;  // intra-set inter-group margin
  double phi = 5.0;   // impostor center-pair margin
};

/// Margin loss over the two centroid triples. Terms whose groups are absent
/// are dropped from the sums; set literal_missing_zero to instead score the
/// absent distances as 0, for comparison.
double ml_pgr_loss(const CentroidTriple& probe, const CentroidTriple& gallery,
                   bool same_identity, const MlPgrThresholds& thresholds,
                   bool literal_missing_zero = false);

/// One training pair: two sets of raw embeddings with yaw metadata.
struct MlPgrPair {
  std::vector<std::vector<double>> probe_features;
  std::vector<double> probe_yaws;
  std::size_t probe_label = 0;
  std::vector<std::vector<double>> gallery_features;
  std::vector<double> gallery_yaws;
  std::size_t gallery_label = 0;
};

/// One gradient step on cross_entropy(head(mean projected set)) for both sets
/// plus ml_pgr_loss over equal-weight projected centroids, summed with equal
/// weights. Only the projection head trains. Returns the mean batch loss.
double ml_pgr_train(DenseNet& projection, const std::vector<MlPgrPair>& batch,
                    const RewardHead& head, const MlPgrThresholds& thresholds,
                    double learning_rate);

/// Identity-initialized square projection so training starts from the raw
/// embedding space.
DenseNet make_projection_head(std::size_t embed_dim);

/// Nearest present centroid by L2; ties break to the lowest group index.
std::size_t assign_pose_by_centroid(std::span<const double> feature,
                                    const CentroidTriple& gallery);

/// Minimum center-wise L2 distance over groups present on both sides; with no
/// common group, falls back to the distance of the overall aggregates.
double ml_pgr_similarity(const CentroidTriple& probe, const CentroidTriple& gallery,
                         std::span<const double> probe_aggregate,
                         std::span<const double> gallery_aggregate);

/// Test-time probe grouping: items join the pose group of their nearest
/// gallery centroid, then weighted centroids are formed per group.
CentroidTriple assign_and_centroid(const std::vector<std::vector<double>>& features,
                                   std::span<const double> weights,
                                   const CentroidTriple& gallery);

/// Least-squares estimate of the shared pose direction from profile items,
/// for datasets whose generator config is unavailable.
std::vector<double> estimate_pose_direction(const FeatureSetCollection& collection);

}  // namespace setpool

#endif

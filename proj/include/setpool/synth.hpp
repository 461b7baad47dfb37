#ifndef SETPOOL_SYNTH_HPP
#define SETPOOL_SYNTH_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "setpool/rng.hpp"

namespace setpool {

enum class Split : std::uint8_t { kTrain = 0, kProbe = 1, kGallery = 2 };
enum class Media : std::uint8_t { kStill = 0, kVideo = 1 };

/// Synthetic dataset knobs. Each identity gets a unit-norm latent centroid;
/// items are that centroid pushed along a shared pose direction by
/// sin(yaw) * pose_offset_scale, renormalized, then perturbed by noise of
/// magnitude sigma drawn per item from the quality range.
struct GenConfig {
  std::uint32_t num_identities = 0;
  std::uint32_t embed_dim = 128;
  std::uint32_t sets_per_identity = 1;
  std::uint32_t set_size_min = 1;
  std::uint32_t set_size_max = 1;
  double pose_offset_scale = 0.0;
  double quality_sigma_min = 0.0;
  double quality_sigma_max = 0.0;
  double redundancy_rate = 0.0;  // fraction of items that near-duplicate another
  double video_fraction = 0.0;   // fraction of items emitted as video frames
  std::uint64_t seed = 0;
};

/// Throws ConfigError on out-of-envelope values (set sizes outside [1,190],
/// sigma_min > sigma_max, non-finite or negative scales).
void validate(const GenConfig& config);

struct FeatureRecord {
  std::uint64_t set_id = 0;
  std::uint32_t identity = 0;
  Split split = Split::kTrain;
  Media media = Media::kStill;
  std::uint32_t segment_id = 0;
  std::uint32_t frame_index = 0;
  float yaw_degrees = 0.0f;
  float quality_sigma = 0.0f;
  std::int64_t duplicate_of = -1;  // item index within the set, -1 = none
  std::vector<float> embedding;

  bool operator==(const FeatureRecord&) const = default;
};

struct FeatureSetCollection {
  std::uint32_t embed_dim = 0;
  std::vector<FeatureRecord> records;  // contiguous runs per set_id

  bool operator==(const FeatureSetCollection&) const = default;
};

/// Contiguous slice of one set's records.
struct SetView {
  std::uint64_t set_id = 0;
  std::uint32_t identity = 0;
  Split split = Split::kTrain;
  const FeatureRecord* items = nullptr;
  std::size_t size = 0;

  const FeatureRecord& operator[](std::size_t i) const { return items[i]; }
};

std::vector<SetView> group_sets(const FeatureSetCollection& collection);

/// Deterministic: equal config (seed included) gives byte-equal collections.
FeatureSetCollection generate(const GenConfig& config);

/// The shared pose direction used by generate() for this config. Drawn first
/// from the seeded stream, so it can be recovered without the data.
std::vector<double> pose_direction_for(const GenConfig& config);

// SETF container, little-endian throughout. Header: "SETF", u16 version (=1),
// u32 embed_dim, u64 record count; then fixed-size records.
void write_features(const FeatureSetCollection& collection, const std::string& path);
FeatureSetCollection read_features(const std::string& path);

/// f32 storage widened to the double vectors the math paths use.
std::vector<double> embedding_as_double(const FeatureRecord& record);
std::vector<std::vector<double>> set_features(const SetView& set);

}  // namespace setpool

#endif

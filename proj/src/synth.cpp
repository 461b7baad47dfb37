#include "setpool/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "setpool/errors.hpp"
#include "setpool/mathfn.hpp"

namespace setpool {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'T', 'F'};
constexpr std::uint16_t kFormatVersion = 1;
constexpr double kPi = 3.14159265358979323846;

std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  normalize_in_place(v);
  return v;
}

// 60% near-frontal, 40% profile with guaranteed mass beyond +-30 degrees
double draw_yaw(Rng& rng) {
  if (rng.uniform() < 0.6) return rng.uniform(-30.0, 30.0);
  const double mag = 30.0 + 60.0 * (1.0 - rng.uniform());  // (30, 90]
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return sign * mag;
}

std::vector<double> pose_shifted_centroid(const std::vector<double>& centroid,
                                          const std::vector<double>& u_pose,
                                          double yaw_degrees, double scale) {
  std::vector<double> v = centroid;
  const double shift = std::sin(yaw_degrees * kPi / 180.0) * scale;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += shift * u_pose[i];
  normalize_in_place(v);
  return v;
}

std::vector<float> narrowed(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

// --- little-endian encoding helpers ---

void put_bytes(std::vector<unsigned char>& buf, const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  buf.insert(buf.end(), b, b + n);
}

template <typename T>
void put_le(std::vector<unsigned char>& buf, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
  std::reverse(bytes, bytes + sizeof(T));
#endif
  put_bytes(buf, bytes, sizeof(T));
}

struct Reader {
  const std::vector<unsigned char>& buf;
  std::size_t pos = 0;

  template <typename T>
  T get_le(const char* what) {
    if (pos + sizeof(T) > buf.size())
      throw FormatError(std::string("truncated file while reading ") + what, pos);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, buf.data() + pos, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    std::reverse(bytes, bytes + sizeof(T));
#endif
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    pos += sizeof(T);
    return value;
  }
};

}  // namespace

void validate(const GenConfig& config) {
  if (config.num_identities == 0) throw ConfigError("num_identities must be positive");
  if (config.embed_dim == 0) throw ConfigError("embed_dim must be positive");
  if (config.sets_per_identity == 0) throw ConfigError("sets_per_identity must be positive");
  if (config.set_size_min < 1 || config.set_size_max > 190 ||
      config.set_size_min > config.set_size_max)
    throw ConfigError("set_size_range must lie within [1, 190] with min <= max");
  if (!(config.quality_sigma_min <= config.quality_sigma_max))
    throw ConfigError("quality_noise_range requires sigma_min <= sigma_max");
  for (double v : {config.pose_offset_scale, config.quality_sigma_min,
                   config.quality_sigma_max}) {
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError("scales must be finite and nonnegative");
  }
  if (config.redundancy_rate < 0.0 || config.redundancy_rate > 1.0)
    throw ConfigError("redundancy_rate must lie in [0, 1]");
  if (config.video_fraction < 0.0 || config.video_fraction > 1.0)
    throw ConfigError("video_fraction must lie in [0, 1]");
}

std::vector<double> pose_direction_for(const GenConfig& config) {
  Rng rng(config.seed);
  return random_unit_vector(rng, config.embed_dim);
}

FeatureSetCollection generate(const GenConfig& config) {
  validate(config);
  Rng rng(config.seed);
  const std::size_t dim = config.embed_dim;

  // Draw order is part of the format: pose direction first, then centroids,
  // then sets in identity order.
  const std::vector<double> u_pose = random_unit_vector(rng, dim);
  std::vector<std::vector<double>> centroids(config.num_identities);
  for (auto& c : centroids) c = random_unit_vector(rng, dim);

  FeatureSetCollection collection;
  collection.embed_dim = config.embed_dim;

  std::uint64_t next_set_id = 0;
  std::uint32_t next_segment_id = 0;

  for (std::uint32_t identity = 0; identity < config.num_identities; ++identity) {
    for (std::uint32_t set_idx = 0; set_idx < config.sets_per_identity; ++set_idx) {
      // split cycle train/gallery/probe/train so 3+ sets cover all splits
      Split split = Split::kTrain;
      switch (set_idx % 4) {
        case 1: split = Split::kGallery; break;
        case 2: split = Split::kProbe; break;
        default: split = Split::kTrain; break;
      }

      const std::size_t size =
          config.set_size_min +
          rng.uniform_index(config.set_size_max - config.set_size_min + 1);
      const std::size_t n_video =
          std::min(size, static_cast<std::size_t>(
                             std::llround(config.video_fraction * static_cast<double>(size))));
      const std::size_t n_stills = size - n_video;

      struct PendingItem {
        FeatureRecord record;
        std::vector<double> pre_noise;
        double sigma = 0.0;
      };
      std::vector<PendingItem> items;
      items.reserve(size);

      for (std::size_t s = 0; s < n_stills; ++s) {
        PendingItem item;
        item.record.set_id = next_set_id;
        item.record.identity = identity;
        item.record.split = split;
        item.record.media = Media::kStill;
        const double yaw = draw_yaw(rng);
        item.record.yaw_degrees = static_cast<float>(yaw);
        item.pre_noise =
            pose_shifted_centroid(centroids[identity], u_pose, yaw, config.pose_offset_scale);
        item.sigma = rng.uniform(config.quality_sigma_min, config.quality_sigma_max);
        item.record.quality_sigma = static_cast<float>(item.sigma);
        items.push_back(std::move(item));
      }

      // near-duplicates: still items re-emitting another still's pre-noise
      // vector with doubled noise, modeling a low-quality copy
      if (config.redundancy_rate > 0.0 && n_stills >= 2) {
        std::size_t n_dup = static_cast<std::size_t>(
            std::llround(config.redundancy_rate * static_cast<double>(size)));
        n_dup = std::min(n_dup, n_stills - 1);
        for (std::size_t d = 0; d < n_dup; ++d) {
          const std::size_t dup_idx = n_stills - 1 - d;
          const std::size_t source = rng.uniform_index(n_stills - n_dup);
          PendingItem& item = items[dup_idx];
          item.record.yaw_degrees = items[source].record.yaw_degrees;
          item.record.duplicate_of = static_cast<std::int64_t>(source);
          item.pre_noise = items[source].pre_noise;
          item.sigma = 2.0 * items[source].sigma;
          item.record.quality_sigma = static_cast<float>(item.sigma);
        }
      }

      // video: consecutive frames share a base vector with a sigma/4 walk
      std::size_t remaining = n_video;
      while (remaining > 0) {
        const std::size_t seg_len = std::min(remaining, 3 + rng.uniform_index(6));
        const double yaw = draw_yaw(rng);
        const double sigma = rng.uniform(config.quality_sigma_min, config.quality_sigma_max);
        std::vector<double> base =
            pose_shifted_centroid(centroids[identity], u_pose, yaw, config.pose_offset_scale);
        for (std::size_t f = 0; f < seg_len; ++f) {
          if (f > 0) {
            const std::vector<double> drift = random_unit_vector(rng, dim);
            for (std::size_t i = 0; i < dim; ++i) base[i] += (sigma / 4.0) * drift[i];
          }
          PendingItem item;
          item.record.set_id = next_set_id;
          item.record.identity = identity;
          item.record.split = split;
          item.record.media = Media::kVideo;
          item.record.segment_id = next_segment_id;
          item.record.frame_index = static_cast<std::uint32_t>(f);
          item.record.yaw_degrees = static_cast<float>(yaw);
          item.record.quality_sigma = static_cast<float>(sigma);
          item.pre_noise = base;
          item.sigma = sigma;
          items.push_back(std::move(item));
        }
        ++next_segment_id;
        remaining -= seg_len;
      }

      for (PendingItem& item : items) {
        const std::vector<double> dir = random_unit_vector(rng, dim);
        std::vector<double> e = item.pre_noise;
        for (std::size_t i = 0; i < dim; ++i) e[i] += item.sigma * dir[i];
        item.record.embedding = narrowed(e);
        collection.records.push_back(std::move(item.record));
      }
      ++next_set_id;
    }
  }
  return collection;
}

std::vector<SetView> group_sets(const FeatureSetCollection& collection) {
  std::vector<SetView> sets;
  std::unordered_set<std::uint64_t> seen;
  std::size_t i = 0;
  const auto& recs = collection.records;
  while (i < recs.size()) {
    const std::uint64_t id = recs[i].set_id;
    if (!seen.insert(id).second)
      throw std::invalid_argument("group_sets: set_id " + std::to_string(id) +
                                  " appears in non-contiguous runs");
    std::size_t j = i;
    while (j < recs.size() && recs[j].set_id == id) {
      if (recs[j].identity != recs[i].identity || recs[j].split != recs[i].split)
        throw std::invalid_argument("group_sets: set_id " + std::to_string(id) +
                                    " maps to more than one identity or split");
      ++j;
    }
    sets.push_back(SetView{id, recs[i].identity, recs[i].split, &recs[i], j - i});
    i = j;
  }
  return sets;
}

void write_features(const FeatureSetCollection& collection, const std::string& path) {
  std::vector<unsigned char> buf;
  buf.reserve(18 + collection.records.size() * (38 + 4 * collection.embed_dim));
  put_bytes(buf, kMagic, 4);
  put_le<std::uint16_t>(buf, kFormatVersion);
  put_le<std::uint32_t>(buf, collection.embed_dim);
  put_le<std::uint64_t>(buf, collection.records.size());
  for (const FeatureRecord& r : collection.records) {
    if (r.embedding.size() != collection.embed_dim)
      throw std::invalid_argument("write_features: record embedding dim mismatch");
    put_le<std::uint64_t>(buf, r.set_id);
    put_le<std::uint32_t>(buf, r.identity);
    put_le<std::uint8_t>(buf, static_cast<std::uint8_t>(r.split));
    put_le<std::uint8_t>(buf, static_cast<std::uint8_t>(r.media));
    put_le<std::uint32_t>(buf, r.segment_id);
    put_le<std::uint32_t>(buf, r.frame_index);
    put_le<float>(buf, r.yaw_degrees);
    put_le<float>(buf, r.quality_sigma);
    put_le<std::int64_t>(buf, r.duplicate_of);
    for (float x : r.embedding) put_le<float>(buf, x);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open file for writing: " + path, 0);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("short write to " + path, buf.size());
}

FeatureSetCollection read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open file for reading: " + path, 0);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw FormatError("short read from " + path, 0);

  Reader reader{buf};
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("bad magic, expected SETF", 0);
  reader.pos = 4;
  const auto version = reader.get_le<std::uint16_t>("version");
  if (version != kFormatVersion)
    throw FormatError("unsupported format version " + std::to_string(version), 4);
  FeatureSetCollection collection;
  collection.embed_dim = reader.get_le<std::uint32_t>("embed_dim");
  if (collection.embed_dim == 0) throw FormatError("embed_dim must be positive", 6);
  const auto count = reader.get_le<std::uint64_t>("record count");

  const std::size_t record_bytes = 38 + 4 * static_cast<std::size_t>(collection.embed_dim);
  if (buf.size() - reader.pos != count * record_bytes)
    throw FormatError("payload size does not match record count", reader.pos);

  collection.records.resize(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    FeatureRecord& r = collection.records[n];
    r.set_id = reader.get_le<std::uint64_t>("set_id");
    r.identity = reader.get_le<std::uint32_t>("identity");
    const auto split = reader.get_le<std::uint8_t>("split");
    if (split > 2) throw FormatError("invalid split tag", reader.pos - 1);
    r.split = static_cast<Split>(split);
    const auto media = reader.get_le<std::uint8_t>("media");
    if (media > 1) throw FormatError("invalid media tag", reader.pos - 1);
    r.media = static_cast<Media>(media);
    r.segment_id = reader.get_le<std::uint32_t>("segment_id");
    r.frame_index = reader.get_le<std::uint32_t>("frame_index");
    r.yaw_degrees = reader.get_le<float>("yaw");
    r.quality_sigma = reader.get_le<float>("quality_sigma");
    r.duplicate_of = reader.get_le<std::int64_t>("duplicate_of");
    r.embedding.resize(collection.embed_dim);
    for (auto& x : r.embedding) x = reader.get_le<float>("embedding");
  }
  return collection;
}

std::vector<double> embedding_as_double(const FeatureRecord& record) {
  return std::vector<double>(record.embedding.begin(), record.embedding.end());
}

std::vector<std::vector<double>> set_features(const SetView& set) {
  std::vector<std::vector<double>> features;
  features.reserve(set.size);
  for (std::size_t i = 0; i < set.size; ++i)
    features.push_back(embedding_as_double(set[i]));
  return features;
}

}  // namespace setpool

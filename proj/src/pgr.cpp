#include "setpool/pgr.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "setpool/mathfn.hpp"

namespace setpool {

namespace {

constexpr double kMassEps = 1e-12;
constexpr double kDistEps = 1e-12;

std::atomic<std::uint64_t> g_l2_evaluations{0};

double counted_l2(std::span<const double> a, std::span<const double> b) {
  g_l2_evaluations.fetch_add(1, std::memory_order_relaxed);
  return l2_distance(a, b);
}

std::vector<double> mirrored(const std::vector<double>& f, std::span<const double> u_pose) {
  // reflect the component along u_pose
  const double component = dot(f, u_pose);
  std::vector<double> out = f;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= 2.0 * component * u_pose[i];
  return out;
}

// d max(margin - D, 0)^2 / d (ci, cj), accumulated in place
void add_hinge_repulsion_grad(std::vector<double>& gi, std::vector<double>& gj,
                              const std::vector<double>& ci, const std::vector<double>& cj,
                              double margin) {
  const double dist = l2_distance(ci, cj);
  if (dist >= margin || dist < kDistEps) return;
  const double coef = -2.0 * (margin - dist) / dist;
  for (std::size_t d = 0; d < ci.size(); ++d) {
    const double diff = ci[d] - cj[d];
    gi[d] += coef * diff;
    gj[d] -= coef * diff;
  }
}

}  // namespace

PoseGroup pose_group_of(double yaw_degrees) {
  if (std::abs(yaw_degrees) <= kFrontalYawLimit) return PoseGroup::kFrontal;
  return yaw_degrees < 0.0 ? PoseGroup::kLeft : PoseGroup::kRight;
}

PoseRepresentation pose_split(const std::vector<std::vector<double>>& features,
                              std::span<const double> weights,
                              std::span<const double> yaws,
                              std::span<const double> u_pose) {
  if (features.empty() || features.size() != weights.size() || features.size() != yaws.size())
    throw std::invalid_argument("pose_split: features, weights and yaws must align");
  const std::size_t dim = features.front().size();

  PoseRepresentation rep;
  rep.general = aggregate(features, weights);
  rep.frontal.assign(dim, 0.0);
  rep.profile.assign(dim, 0.0);

  for (std::size_t i = 0; i < features.size(); ++i) {
    const double w = weights[i];
    if (std::abs(yaws[i]) <= kFrontalYawLimit) {
      rep.p_frontal += w;
      for (std::size_t d = 0; d < dim; ++d) rep.frontal[d] += w * features[i][d];
    } else {
      rep.p_profile += w;
      const std::vector<double> f = (yaws[i] < 0.0 && !u_pose.empty())
                                        ? mirrored(features[i], u_pose)
                                        : features[i];
      for (std::size_t d = 0; d < dim; ++d) rep.profile[d] += w * f[d];
    }
  }
  if (rep.p_frontal > kMassEps) {
    for (double& x : rep.frontal) x /= rep.p_frontal;
  } else {
    rep.p_frontal = 0.0;
    std::fill(rep.frontal.begin(), rep.frontal.end(), 0.0);
  }
  if (rep.p_profile > kMassEps) {
    for (double& x : rep.profile) x /= rep.p_profile;
  } else {
    rep.p_profile = 0.0;
    std::fill(rep.profile.begin(), rep.profile.end(), 0.0);
  }
  return rep;
}

double pf_pgr_distance(const PoseRepresentation& a, const PoseRepresentation& b) {
  if (a.general.size() != b.general.size())
    throw std::invalid_argument("pf_pgr_distance: dimension mismatch");
  double d = counted_l2(a.general, b.general);
  d += counted_l2(a.frontal, b.frontal) * a.p_frontal * b.p_frontal;
  d += counted_l2(a.frontal, b.profile) * a.p_frontal * b.p_profile;
  d += counted_l2(a.profile, b.frontal) * a.p_profile * b.p_frontal;
  d += counted_l2(a.profile, b.profile) * a.p_profile * b.p_profile;
  return d;
}

std::uint64_t pf_pgr_l2_evaluations() { return g_l2_evaluations.load(); }
void reset_pf_pgr_l2_evaluations() { g_l2_evaluations.store(0); }

CentroidTriple centroid_triple(const std::vector<std::vector<double>>& features,
                               std::span<const double> weights,
                               std::span<const double> yaws) {
  if (features.empty() || features.size() != weights.size() || features.size() != yaws.size())
    throw std::invalid_argument("centroid_triple: features, weights and yaws must align");
  const std::size_t dim = features.front().size();
  CentroidTriple triple;
  std::array<double, 3> mass = {0.0, 0.0, 0.0};
  for (auto& c : triple.centroids) c.assign(dim, 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto g = static_cast<std::size_t>(pose_group_of(yaws[i]));
    mass[g] += weights[i];
    for (std::size_t d = 0; d < dim; ++d) triple.centroids[g][d] += weights[i] * features[i][d];
  }
  for (std::size_t g = 0; g < 3; ++g) {
    if (mass[g] > kMassEps) {
      triple.present[g] = true;
      for (double& x : triple.centroids[g]) x /= mass[g];
    } else {
      std::fill(triple.centroids[g].begin(), triple.centroids[g].end(), 0.0);
    }
  }
  return triple;
}

double ml_pgr_loss(const CentroidTriple& probe, const CentroidTriple& gallery,
                   bool same_identity, const MlPgrThresholds& thresholds,
                   bool literal_missing_zero) {
  const double l = same_identity ? 0.0 : 1.0;
  double loss = 0.0;
  static constexpr std::array<std::pair<std::size_t, std::size_t>, 3> kPairs = {
      {{0, 1}, {0, 2}, {1, 2}}};

  auto hinge_sq = [](double margin, double dist) {
    const double h = std::max(margin - dist, 0.0);
    return h * h;
  };

  for (const auto& [i, j] : kPairs) {
    if (probe.present[i] && probe.present[j]) {
      loss += hinge_sq(thresholds.beta, l2_distance(probe.centroids[i], probe.centroids[j]));
    } else if (literal_missing_zero) {
      loss += hinge_sq(thresholds.beta, 0.0);
    }
    if (gallery.present[i] && gallery.present[j]) {
      loss += hinge_sq(thresholds.beta, l2_distance(gallery.centroids[i], gallery.centroids[j]));
    } else if (literal_missing_zero) {
      loss += hinge_sq(thresholds.beta, 0.0);
    }
  }
  for (std::size_t g = 0; g < 3; ++g) {
    double dist = 0.0;
    bool have = probe.present[g] && gallery.present[g];
    if (have) {
      dist = l2_distance(probe.centroids[g], gallery.centroids[g]);
    } else if (!literal_missing_zero) {
      continue;
    }
    loss += (1.0 - l) * dist * dist + l * hinge_sq(thresholds.phi, dist);
  }
  return loss;
}

DenseNet make_projection_head(std::size_t embed_dim) {
  DenseNet net;
  DenseLayer layer;
  layer.in = embed_dim;
  layer.out = embed_dim;
  layer.act = Activation::kIdentity;
  layer.weights.assign(embed_dim * embed_dim, 0.0);
  for (std::size_t i = 0; i < embed_dim; ++i) layer.weights[i * embed_dim + i] = 1.0;
  layer.bias.assign(embed_dim, 0.0);
  net.layers.push_back(std::move(layer));
  return net;
}

namespace {

struct ProjectedSet {
  std::vector<std::vector<double>> projected;
  std::vector<double> mean;
  CentroidTriple triple;
  std::array<std::vector<std::size_t>, 3> members;
};

ProjectedSet project_set(const DenseNet& projection,
                         const std::vector<std::vector<double>>& features,
                         std::span<const double> yaws) {
  ProjectedSet out;
  out.projected.reserve(features.size());
  for (const auto& f : features) out.projected.push_back(forward(projection, f));
  out.mean.assign(out.projected.front().size(), 0.0);
  for (const auto& p : out.projected)
    for (std::size_t d = 0; d < out.mean.size(); ++d) out.mean[d] += p[d];
  for (double& x : out.mean) x /= static_cast<double>(out.projected.size());
  const std::vector<double> ones(features.size(), 1.0);
  out.triple = centroid_triple(out.projected, ones, yaws);
  for (std::size_t i = 0; i < features.size(); ++i)
    out.members[static_cast<std::size_t>(pose_group_of(yaws[i]))].push_back(i);
  return out;
}

// gradient of ml_pgr_loss (drop-term variant) with respect to every centroid
struct TripleGrad {
  std::array<std::vector<double>, 3> grads;
};

void ml_pgr_loss_centroid_grads(const CentroidTriple& probe, const CentroidTriple& gallery,
                                bool same_identity, const MlPgrThresholds& th,
                                TripleGrad& probe_grad, TripleGrad& gallery_grad) {
  const std::size_t dim = probe.centroids[0].size();
  for (std::size_t g = 0; g < 3; ++g) {
    probe_grad.grads[g].assign(dim, 0.0);
    gallery_grad.grads[g].assign(dim, 0.0);
  }
  static constexpr std::array<std::pair<std::size_t, std::size_t>, 3> kPairs = {
      {{0, 1}, {0, 2}, {1, 2}}};
  for (const auto& [i, j] : kPairs) {
    if (probe.present[i] && probe.present[j])
      add_hinge_repulsion_grad(probe_grad.grads[i], probe_grad.grads[j], probe.centroids[i],
                               probe.centroids[j], th.beta);
    if (gallery.present[i] && gallery.present[j])
      add_hinge_repulsion_grad(gallery_grad.grads[i], gallery_grad.grads[j],
                               gallery.centroids[i], gallery.centroids[j], th.beta);
  }
  for (std::size_t g = 0; g < 3; ++g) {
    if (!(probe.present[g] && gallery.present[g])) continue;
    const auto& cp = probe.centroids[g];
    const auto& cg = gallery.centroids[g];
    if (same_identity) {
      // d (dist^2) = 2 (cp - cg)
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = 2.0 * (cp[d] - cg[d]);
        probe_grad.grads[g][d] += diff;
        gallery_grad.grads[g][d] -= diff;
      }
    } else {
      add_hinge_repulsion_grad(probe_grad.grads[g], gallery_grad.grads[g], cp, cg, th.phi);
    }
  }
}

}  // namespace

double ml_pgr_train(DenseNet& projection, const std::vector<MlPgrPair>& batch,
                    const RewardHead& head, const MlPgrThresholds& thresholds,
                    double learning_rate) {
  if (batch.empty()) throw std::invalid_argument("ml_pgr_train: empty batch");
  Gradients total = zero_gradients_like(projection);
  double total_loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());

  for (const MlPgrPair& pair : batch) {
    if (pair.probe_features.empty() || pair.gallery_features.empty())
      throw std::invalid_argument("ml_pgr_train: empty set in pair");
    const ProjectedSet probe = project_set(projection, pair.probe_features, pair.probe_yaws);
    const ProjectedSet gallery =
        project_set(projection, pair.gallery_features, pair.gallery_yaws);
    const bool same = pair.probe_label == pair.gallery_label;

    // per-projected-feature upstream gradients
    std::vector<std::vector<double>> probe_up(
        probe.projected.size(), std::vector<double>(probe.mean.size(), 0.0));
    std::vector<std::vector<double>> gallery_up(
        gallery.projected.size(), std::vector<double>(gallery.mean.size(), 0.0));

    auto add_ce = [&](const ProjectedSet& set, std::size_t label,
                      std::vector<std::vector<double>>& up) -> double {
      const std::vector<double> logits = forward(head.classifier, set.mean);
      std::vector<double> dlogits = softmax(logits);
      dlogits[label] -= 1.0;
      const Gradients hg = backward(head.classifier, set.mean, dlogits);
      const double share = 1.0 / static_cast<double>(set.projected.size());
      for (auto& u : up)
        for (std::size_t d = 0; d < u.size(); ++d) u[d] += share * hg.input[d];
      return cross_entropy(logits, label);
    };
    total_loss += add_ce(probe, pair.probe_label, probe_up) * inv;
    total_loss += add_ce(gallery, pair.gallery_label, gallery_up) * inv;

    total_loss += ml_pgr_loss(probe.triple, gallery.triple, same, thresholds) * inv;
    TripleGrad probe_cg, gallery_cg;
    ml_pgr_loss_centroid_grads(probe.triple, gallery.triple, same, thresholds, probe_cg,
                               gallery_cg);
    auto spread = [](const ProjectedSet& set, const TripleGrad& cg,
                     std::vector<std::vector<double>>& up) {
      for (std::size_t g = 0; g < 3; ++g) {
        if (set.members[g].empty()) continue;
        const double share = 1.0 / static_cast<double>(set.members[g].size());
        for (std::size_t idx : set.members[g])
          for (std::size_t d = 0; d < up[idx].size(); ++d)
            up[idx][d] += share * cg.grads[g][d];
      }
    };
    spread(probe, probe_cg, probe_up);
    spread(gallery, gallery_cg, gallery_up);

    for (std::size_t i = 0; i < pair.probe_features.size(); ++i)
      accumulate(total, backward(projection, pair.probe_features[i], probe_up[i]), inv);
    for (std::size_t i = 0; i < pair.gallery_features.size(); ++i)
      accumulate(total, backward(projection, pair.gallery_features[i], gallery_up[i]), inv);
  }

  apply_gradient(projection, total, -learning_rate);
  return total_loss;
}

std::size_t assign_pose_by_centroid(std::span<const double> feature,
                                    const CentroidTriple& gallery) {
  std::size_t best = 3;
  double best_dist = 0.0;
  for (std::size_t g = 0; g < 3; ++g) {
    if (!gallery.present[g]) continue;
    const double dist = l2_distance(feature, gallery.centroids[g]);
    if (best == 3 || dist < best_dist) {
      best = g;
      best_dist = dist;
    }
  }
  if (best == 3)
    throw std::invalid_argument("assign_pose_by_centroid: no gallery centroid present");
  return best;
}

double ml_pgr_similarity(const CentroidTriple& probe, const CentroidTriple& gallery,
                         std::span<const double> probe_aggregate,
                         std::span<const double> gallery_aggregate) {
  double best = -1.0;
  for (std::size_t g = 0; g < 3; ++g) {
    if (!(probe.present[g] && gallery.present[g])) continue;
    const double dist = l2_distance(probe.centroids[g], gallery.centroids[g]);
    if (best < 0.0 || dist < best) best = dist;
  }
  if (best < 0.0) return l2_distance(probe_aggregate, gallery_aggregate);
  return best;
}

CentroidTriple assign_and_centroid(const std::vector<std::vector<double>>& features,
                                   std::span<const double> weights,
                                   const CentroidTriple& gallery) {
  if (features.empty() || features.size() != weights.size())
    throw std::invalid_argument("assign_and_centroid: features and weights must align");
  const std::size_t dim = features.front().size();
  CentroidTriple triple;
  std::array<double, 3> mass = {0.0, 0.0, 0.0};
  for (auto& c : triple.centroids) c.assign(dim, 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::size_t g = assign_pose_by_centroid(features[i], gallery);
    mass[g] += weights[i];
    for (std::size_t d = 0; d < dim; ++d) triple.centroids[g][d] += weights[i] * features[i][d];
  }
  for (std::size_t g = 0; g < 3; ++g) {
    if (mass[g] > kMassEps) {
      triple.present[g] = true;
      for (double& x : triple.centroids[g]) x /= mass[g];
    } else {
      std::fill(triple.centroids[g].begin(), triple.centroids[g].end(), 0.0);
    }
  }
  return triple;
}

std::vector<double> estimate_pose_direction(const FeatureSetCollection& collection) {
  const std::size_t dim = collection.embed_dim;
  std::vector<double> left(dim, 0.0);
  std::vector<double> right(dim, 0.0);
  std::size_t n_left = 0;
  std::size_t n_right = 0;
  for (const FeatureRecord& r : collection.records) {
    if (r.yaw_degrees > kFrontalYawLimit) {
      for (std::size_t d = 0; d < dim; ++d) right[d] += r.embedding[d];
      ++n_right;
    } else if (r.yaw_degrees < -kFrontalYawLimit) {
      for (std::size_t d = 0; d < dim; ++d) left[d] += r.embedding[d];
      ++n_left;
    }
  }
  if (n_left == 0 || n_right == 0)
    throw std::invalid_argument("estimate_pose_direction: need profile items on both sides");
  std::vector<double> dir(dim);
  for (std::size_t d = 0; d < dim; ++d)
    dir[d] = right[d] / static_cast<double>(n_right) - left[d] / static_cast<double>(n_left);
  normalize_in_place(dir);
  return dir;
}

}  // namespace setpool

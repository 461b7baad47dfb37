#include "setpool/eval.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

#include "setpool/mathfn.hpp"
#include "setpool/parallel.hpp"

namespace setpool {

namespace {

struct SplitScores {
  std::vector<double> genuine;   // sorted ascending
  std::vector<double> impostor;  // sorted ascending
};

SplitScores split_and_sort(std::span<const ScoredPair> pairs) {
  SplitScores s;
  for (const ScoredPair& p : pairs) {
    if (!std::isfinite(p.score))
      throw std::invalid_argument("scored pairs must have finite scores");
    (p.genuine ? s.genuine : s.impostor).push_back(p.score);
  }
  std::sort(s.genuine.begin(), s.genuine.end());
  std::sort(s.impostor.begin(), s.impostor.end());
  return s;
}

// fraction of sorted scores >= threshold
double accept_fraction(const std::vector<double>& sorted, double threshold) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), threshold);
  return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

std::vector<double> candidate_thresholds(const SplitScores& s) {
  std::vector<double> all;
  all.reserve(s.genuine.size() + s.impostor.size());
  all.insert(all.end(), s.genuine.begin(), s.genuine.end());
  all.insert(all.end(), s.impostor.begin(), s.impostor.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

}  // namespace

double tar_at_far(std::span<const ScoredPair> pairs, double far) {
  if (far <= 0.0 || far >= 1.0)
    throw std::invalid_argument("tar_at_far: far must lie in (0, 1)");
  const SplitScores s = split_and_sort(pairs);
  if (s.genuine.empty() || s.impostor.empty())
    throw std::invalid_argument("tar_at_far: need at least one genuine and one impostor pair");

  for (double threshold : candidate_thresholds(s)) {
    if (accept_fraction(s.impostor, threshold) <= far)
      return accept_fraction(s.genuine, threshold);
  }
  return 0.0;  // every candidate accepts too many impostors
}

std::vector<RocPoint> roc_curve(std::span<const ScoredPair> pairs) {
  const SplitScores s = split_and_sort(pairs);
  if (s.genuine.empty() || s.impostor.empty())
    throw std::invalid_argument("roc_curve: need both genuine and impostor pairs");
  std::vector<RocPoint> curve;
  for (double threshold : candidate_thresholds(s)) {
    curve.push_back(RocPoint{threshold, accept_fraction(s.impostor, threshold),
                             accept_fraction(s.genuine, threshold)});
  }
  return curve;
}

double cmc(const IdentificationRun& run, std::size_t k) {
  if (run.probes.empty()) throw std::invalid_argument("cmc: empty run");
  std::size_t mated = 0;
  std::size_t hits = 0;
  for (const RankedProbe& probe : run.probes) {
    if (!probe.mated) continue;
    if (k < 1 || k > probe.ranking.size())
      throw std::invalid_argument("cmc: k out of range for gallery size");
    ++mated;
    for (std::size_t i = 0; i < k; ++i) {
      if (probe.ranking[i].first == probe.true_identity) {
        ++hits;
        break;
      }
    }
  }
  if (mated == 0) throw std::invalid_argument("cmc: no mated probes");
  return static_cast<double>(hits) / static_cast<double>(mated);
}

double tpir_at_fpir(const IdentificationRun& run, double fpir) {
  if (!run.open_set)
    throw std::invalid_argument("tpir_at_fpir: requires an open-set run");
  if (fpir <= 0.0 || fpir >= 1.0)
    throw std::invalid_argument("tpir_at_fpir: fpir must lie in (0, 1)");
  std::vector<double> impostor_top1;
  std::vector<double> all_top1;
  for (const RankedProbe& probe : run.probes) {
    if (probe.ranking.empty()) throw std::invalid_argument("tpir_at_fpir: empty ranking");
    const double top1 = probe.ranking.front().second;
    all_top1.push_back(top1);
    if (!probe.mated) impostor_top1.push_back(top1);
  }
  if (impostor_top1.empty())
    throw std::invalid_argument("tpir_at_fpir: open-set run has no impostor probes");
  std::sort(impostor_top1.begin(), impostor_top1.end());
  std::sort(all_top1.begin(), all_top1.end());
  all_top1.erase(std::unique(all_top1.begin(), all_top1.end()), all_top1.end());

  double threshold = 0.0;
  bool feasible = false;
  for (double candidate : all_top1) {
    if (accept_fraction(impostor_top1, candidate) <= fpir) {
      threshold = candidate;
      feasible = true;
      break;
    }
  }

  std::size_t mated = 0;
  std::size_t hits = 0;
  for (const RankedProbe& probe : run.probes) {
    if (!probe.mated) continue;
    ++mated;
    if (!feasible) continue;
    if (probe.ranking.front().second >= threshold &&
        probe.ranking.front().first == probe.true_identity)
      ++hits;
  }
  if (mated == 0) throw std::invalid_argument("tpir_at_fpir: no mated probes");
  return static_cast<double>(hits) / static_cast<double>(mated);
}

double closed_set_accuracy(const RewardHead& head,
                           const std::vector<std::vector<double>>& aggregated,
                           std::span<const std::size_t> labels) {
  if (aggregated.empty() || aggregated.size() != labels.size())
    throw std::invalid_argument("closed_set_accuracy: empty or misaligned batch");
  std::size_t hits = 0;
  for (std::size_t n = 0; n < aggregated.size(); ++n) {
    const std::vector<double> logits = forward(head.classifier, aggregated[n]);
    if (labels[n] >= logits.size())
      throw std::invalid_argument("closed_set_accuracy: label outside head output range");
    const std::size_t arg = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (arg == labels[n]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(aggregated.size());
}

void write_weight_traces(std::ostream& out, std::span<const WeightTraceRow> rows) {
  out << "set_id,item_index,duplicate_of,quality_sigma,final_weight\n";
  for (const WeightTraceRow& r : rows) {
    out << r.set_id << ',' << r.item_index << ',' << r.duplicate_of << ','
        << r.quality_sigma << ',' << r.final_weight << '\n';
  }
}

double l2_similarity(const SetDescriptor& a, const SetDescriptor& b) {
  return -l2_distance(a.aggregate, b.aggregate);
}

double pf_pgr_similarity_score(const SetDescriptor& a, const SetDescriptor& b) {
  if (!a.pose || !b.pose)
    throw std::invalid_argument("pf_pgr_similarity_score: descriptors lack pose splits");
  return -pf_pgr_distance(*a.pose, *b.pose);
}

double ml_pgr_similarity_score(const SetDescriptor& a, const SetDescriptor& b) {
  if (!a.centroids || !b.centroids)
    throw std::invalid_argument("ml_pgr_similarity_score: descriptors lack centroids");
  return -ml_pgr_similarity(*a.centroids, *b.centroids, a.aggregate, b.aggregate);
}

std::vector<double> score_matrix_serial(const std::vector<SetDescriptor>& probes,
                                        const std::vector<SetDescriptor>& gallery,
                                        const SetScorer& scorer) {
  std::vector<double> scores(probes.size() * gallery.size());
  for (std::size_t p = 0; p < probes.size(); ++p)
    for (std::size_t g = 0; g < gallery.size(); ++g)
      scores[p * gallery.size() + g] = scorer(probes[p], gallery[g]);
  return scores;
}

std::vector<double> score_matrix(const std::vector<SetDescriptor>& probes,
                                 const std::vector<SetDescriptor>& gallery,
                                 const SetScorer& scorer) {
  std::vector<double> scores(probes.size() * gallery.size());
  const auto n_probes = static_cast<std::int64_t>(probes.size());
  const auto n_gallery = static_cast<std::int64_t>(gallery.size());
#pragma omp parallel for collapse(2) schedule(static) num_threads(eval_threads())
  for (std::int64_t p = 0; p < n_probes; ++p)
    for (std::int64_t g = 0; g < n_gallery; ++g)
      scores[static_cast<std::size_t>(p) * gallery.size() + static_cast<std::size_t>(g)] =
          scorer(probes[static_cast<std::size_t>(p)], gallery[static_cast<std::size_t>(g)]);
  return scores;
}

std::vector<ScoredPair> verification_pairs(const std::vector<SetDescriptor>& probes,
                                           const std::vector<SetDescriptor>& gallery,
                                           const SetScorer& scorer) {
  const std::vector<double> scores = score_matrix(probes, gallery, scorer);
  std::vector<ScoredPair> pairs;
  pairs.reserve(scores.size());
  for (std::size_t p = 0; p < probes.size(); ++p)
    for (std::size_t g = 0; g < gallery.size(); ++g)
      pairs.push_back(ScoredPair{scores[p * gallery.size() + g],
                                 probes[p].identity == gallery[g].identity});
  return pairs;
}

IdentificationRun rank_probes(const std::vector<SetDescriptor>& probes,
                              const std::vector<SetDescriptor>& gallery,
                              const std::vector<bool>& mated, const SetScorer& scorer) {
  if (mated.size() != probes.size())
    throw std::invalid_argument("rank_probes: mated flags misaligned with probes");
  const std::vector<double> scores = score_matrix(probes, gallery, scorer);

  IdentificationRun run;
  run.probes.resize(probes.size());
  for (std::size_t p = 0; p < probes.size(); ++p) {
    // best score per gallery identity, keeping the first gallery index that
    // achieved it for the deterministic tie-break
    std::unordered_map<std::uint32_t, std::pair<double, std::size_t>> best;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const double score = scores[p * gallery.size() + g];
      auto [it, inserted] = best.try_emplace(gallery[g].identity, score, g);
      if (!inserted && score > it->second.first) it->second = {score, g};
    }
    std::vector<std::pair<std::uint32_t, std::pair<double, std::size_t>>> entries(
        best.begin(), best.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      if (a.second.first != b.second.first) return a.second.first > b.second.first;
      return a.second.second < b.second.second;
    });
    RankedProbe& rp = run.probes[p];
    rp.true_identity = probes[p].identity;
    rp.mated = mated[p];
    rp.ranking.reserve(entries.size());
    for (const auto& e : entries) rp.ranking.emplace_back(e.first, e.second.first);
    if (!rp.mated) run.open_set = true;
  }
  return run;
}

}  // namespace setpool

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "setpool/mathfn.hpp"
#include "setpool/temporal.hpp"
#include "support/oracles.hpp"

using namespace setpool;

namespace {

TempConvNet seeded_net(std::size_t embed_dim, std::uint64_t seed, std::size_t hidden = 8) {
  Rng rng(seed);
  return make_temp_conv(embed_dim, rng, hidden);
}

std::vector<std::vector<double>> random_frames(std::size_t n, std::size_t dim, Rng& rng) {
  std::vector<std::vector<double>> f(n, std::vector<double>(dim));
  for (auto& fr : f)
    for (double& x : fr) x = rng.uniform(-1.0, 1.0);
  return f;
}

// straight-line padded width-3 convolution, independent of temporal.cpp
std::vector<double> oracle_scores(const TempConvNet& net,
                                  const std::vector<std::vector<double>>& frames) {
  const std::size_t T = frames.size();
  const std::size_t C = net.layer1.out_channels;
  std::vector<std::vector<double>> hidden(T, std::vector<double>(C, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t o = 0; o < C; ++o) {
      double s = net.layer1.bias[o];
      for (int w = 0; w < 3; ++w) {
        const int src = static_cast<int>(t) + w - 1;
        if (src < 0 || src >= static_cast<int>(T)) continue;
        for (std::size_t i = 0; i < net.layer1.in_channels; ++i)
          s += net.layer1.kernels[(o * net.layer1.in_channels + i) * 3 + w] *
               frames[src][i];
      }
      hidden[t][o] = s > 0.0 ? s : 0.0;
    }
  }
  std::vector<double> scores(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double s = net.layer2.bias[0];
    for (int w = 0; w < 3; ++w) {
      const int src = static_cast<int>(t) + w - 1;
      if (src < 0 || src >= static_cast<int>(T)) continue;
      for (std::size_t i = 0; i < C; ++i)
        s += net.layer2.kernels[i * 3 + w] * hidden[src][i];
    }
    scores[t] = s;
  }
  return scores;
}

}  // namespace

TEST_CASE("temporal_attention: a single frame gets weight 1") {
  const TempConvNet net = seeded_net(4, 1);
  Rng rng(2);
  const auto w = temporal_attention(net, random_frames(1, 4, rng));
  REQUIRE(w.size() == 1);
  CHECK(w[0] == doctest::Approx(1.0));
}

TEST_CASE("temporal_attention: normalization and length preservation for all lengths") {
  const TempConvNet net = seeded_net(6, 3);
  Rng rng(4);
  for (std::size_t len = 1; len <= 50; ++len) {
    const auto frames = random_frames(len, 6, rng);
    const auto scores = temporal_scores(net, frames);
    CHECK(scores.size() == len);
    const auto w = temporal_attention(net, frames);
    CHECK(w.size() == len);
    double sum = 0.0;
    for (double x : w) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("temporal_attention: rejects an empty sequence") {
  const TempConvNet net = seeded_net(4, 5);
  CHECK_THROWS_AS(temporal_attention(net, {}), std::invalid_argument);
}

TEST_CASE("temporal_scores: matches the straight-line convolution oracle") {
  const TempConvNet net = seeded_net(5, 6);
  Rng rng(7);
  const auto frames = random_frames(5, 5, rng);
  const auto got = temporal_scores(net, frames);
  const auto expected = oracle_scores(net, frames);
  REQUIRE(got.size() == expected.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("temporal_scores: receptive field spans at most two hops") {
  const TempConvNet net = seeded_net(4, 8);
  Rng rng(9);
  for (std::size_t len : {7ul, 12ul, 20ul}) {
    auto frames = random_frames(len, 4, rng);
    const auto base = temporal_scores(net, frames);
    for (std::size_t j = 0; j < len; ++j) {
      auto perturbed = frames;
      for (double& x : perturbed[j]) x += 0.37;
      const auto scores = temporal_scores(net, perturbed);
      for (std::size_t i = 0; i < len; ++i) {
        const bool in_field =
            (i > j ? i - j : j - i) <= 4;  // two stacked width-3 layers with pad 1
        if (!in_field) CHECK(scores[i] == doctest::Approx(base[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("train_temporal: zero learning rate changes nothing") {
  TempConvNet net = seeded_net(4, 10);
  Rng rng(11);
  RewardHead head = make_reward_head(4, 3, rng);
  TemporalEpisode episode{random_frames(4, 4, rng), 1};
  const auto before = flatten_params(net);
  train_temporal(net, {episode}, head, 0.0);
  CHECK(flatten_params(net) == before);
}

TEST_CASE("train_temporal: rejects an empty batch") {
  TempConvNet net = seeded_net(4, 12);
  Rng rng(13);
  RewardHead head = make_reward_head(4, 2, rng);
  CHECK_THROWS_AS(train_temporal(net, {}, head, 0.1), std::invalid_argument);
}

TEST_CASE("train_temporal: gradients match finite differences") {
  TempConvNet net = seeded_net(3, 14, 4);
  Rng rng(15);
  RewardHead head = make_reward_head(3, 3, rng);
  const TemporalEpisode episode{random_frames(5, 3, rng), 2};

  // analytic gradient recovered from an lr=1 step
  TempConvNet stepped = net;
  train_temporal(stepped, {episode}, head, 1.0);
  const auto before = flatten_params(net);
  const auto after = flatten_params(stepped);
  std::vector<double> analytic(before.size());
  for (std::size_t i = 0; i < before.size(); ++i) analytic[i] = before[i] - after[i];

  auto loss_at = [&](const std::vector<double>& flat) {
    TempConvNet perturbed = net;
    set_params(perturbed, flat);
    const auto w = temporal_attention(perturbed, episode.frames);
    std::vector<double> agg(3, 0.0);
    for (std::size_t t = 0; t < episode.frames.size(); ++t)
      for (std::size_t d = 0; d < 3; ++d) agg[d] += w[t] * episode.frames[t][d];
    return cross_entropy(forward(head.classifier, agg), episode.label);
  };
  const auto fd = oracles::finite_difference(loss_at, before);
  CHECK(oracles::grads_match(analytic, fd));
}

TEST_CASE("train_temporal: clean frame gains more than the uniform share") {
  Rng rng(16);
  const std::size_t dim = 16;
  RewardHead head = make_reward_head(dim, 4, rng);

  // 4 identities; the classifier must first know what clean looks like
  std::vector<std::vector<double>> centroids;
  for (int c = 0; c < 4; ++c) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    const double n = std::sqrt(setpool::dot(v, v));
    for (double& x : v) x /= n;
    centroids.push_back(v);
  }
  std::vector<std::vector<double>> clean_batch;
  std::vector<std::size_t> labels;
  for (int c = 0; c < 4; ++c) {
    clean_batch.push_back(centroids[c]);
    labels.push_back(c);
  }
  for (int i = 0; i < 300; ++i) train_reward_head(head, clean_batch, labels, 0.3);

  // segments: frame 0 clean, frames 1..4 heavily noised
  auto make_episode_for = [&](std::size_t label) {
    TemporalEpisode episode;
    episode.label = label;
    for (int f = 0; f < 5; ++f) {
      std::vector<double> frame = centroids[label];
      if (f != 0) {
        for (double& x : frame) x += 0.9 * rng.normal();
      }
      episode.frames.push_back(frame);
    }
    return episode;
  };

  TempConvNet net = seeded_net(dim, 17, 8);
  std::vector<TemporalEpisode> episodes;
  for (int e = 0; e < 16; ++e) episodes.push_back(make_episode_for(e % 4));
  for (int step = 0; step < 1000; ++step) train_temporal(net, episodes, head, 0.1);

  double clean_attention = 0.0;
  for (const auto& episode : episodes)
    clean_attention += temporal_attention(net, episode.frames)[0];
  clean_attention /= static_cast<double>(episodes.size());
  CHECK(clean_attention > 1.0 / 5.0);
}

TEST_CASE("combine: no segments reduces to plain aggregation") {
  Rng rng(18);
  const auto features = random_frames(3, 4, rng);
  SetPartition partition;
  partition.stills = {0, 1, 2};
  const std::vector<double> weights = {1.0, 0.5, 0.25};
  const auto combined = combine(partition, weights, {}, {}, features);
  const auto direct = aggregate(features, weights);
  for (std::size_t d = 0; d < 4; ++d)
    CHECK(combined[d] == doctest::Approx(direct[d]).epsilon(1e-12));
}

TEST_CASE("combine: one segment with uniform weights is the frame mean") {
  Rng rng(19);
  const auto features = random_frames(3, 4, rng);
  SetPartition partition;
  partition.segments = {{0u, {0, 1, 2}}};
  const std::vector<double> seg_weights = {1.0};
  const std::vector<std::vector<double>> tw = {{1.0 / 3, 1.0 / 3, 1.0 / 3}};
  const auto combined = combine(partition, {}, seg_weights, tw, features);
  const auto mean = aggregate(features, std::vector<double>(3, 1.0));
  for (std::size_t d = 0; d < 4; ++d)
    CHECK(combined[d] == doctest::Approx(mean[d]).epsilon(1e-12));
}

TEST_CASE("combine: two stills plus one segment matches the two-stage hand computation") {
  // stills at indices 0,1 with DAC weights 1 and 0.5; frames 2,3,4 with
  // temporal weights 0.2/0.3/0.5 and segment weight 1
  Rng rng(20);
  const auto features = random_frames(5, 3, rng);
  SetPartition partition;
  partition.stills = {0, 1};
  partition.segments = {{7u, {2, 3, 4}}};
  const std::vector<double> still_weights = {1.0, 0.5};
  const std::vector<double> seg_weights = {1.0};
  const std::vector<std::vector<double>> tw = {{0.2, 0.3, 0.5}};

  std::vector<double> pseudo(3, 0.0);
  for (std::size_t d = 0; d < 3; ++d)
    pseudo[d] = 0.2 * features[2][d] + 0.3 * features[3][d] + 0.5 * features[4][d];
  std::vector<double> expected(3, 0.0);
  for (std::size_t d = 0; d < 3; ++d)
    expected[d] =
        (1.0 * features[0][d] + 0.5 * features[1][d] + 1.0 * pseudo[d]) / (1.0 + 0.5 + 1.0);

  const auto combined = combine(partition, still_weights, seg_weights, tw, features);
  for (std::size_t d = 0; d < 3; ++d)
    CHECK(combined[d] == doctest::Approx(expected[d]).epsilon(1e-12));
}

TEST_CASE("combine: rejects coverage gaps") {
  Rng rng(21);
  const auto features = random_frames(4, 3, rng);
  SetPartition partition;
  partition.stills = {0, 1};
  partition.segments = {{0u, {2}}};  // item 3 uncovered
  CHECK_THROWS_AS(
      combine(partition, std::vector<double>{1.0, 1.0}, std::vector<double>{1.0},
              {{1.0}}, features),
      std::invalid_argument);
}

TEST_CASE("combine: output stays in the convex hull") {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const auto features = random_frames(5, 2, rng);
    SetPartition partition;
    partition.stills = {0, 1};
    partition.segments = {{0u, {2, 3, 4}}};
    std::vector<double> sw = {rng.uniform(), rng.uniform()};
    std::vector<double> gw = {rng.uniform()};
    if (sw[0] + sw[1] + gw[0] < 1e-6) continue;
    // random temporal weights normalized to 1
    std::vector<double> t = {rng.uniform() + 1e-9, rng.uniform() + 1e-9,
                             rng.uniform() + 1e-9};
    const double ts = t[0] + t[1] + t[2];
    for (double& x : t) x /= ts;
    const auto out = combine(partition, sw, gw, {t}, features);
    // convex hull membership in 2-d: the output is a convex combination, so
    // its coordinates stay within the bounding box and the combination of
    // extreme dot products brackets it along random directions
    for (int probe = 0; probe < 8; ++probe) {
      std::vector<double> dir = {rng.normal(), rng.normal()};
      double lo = 1e300, hi = -1e300;
      for (const auto& f : features) {
        const double proj = f[0] * dir[0] + f[1] * dir[1];
        lo = std::min(lo, proj);
        hi = std::max(hi, proj);
      }
      const double proj = out[0] * dir[0] + out[1] * dir[1];
      CHECK(proj >= lo - 1e-9);
      CHECK(proj <= hi + 1e-9);
    }
  }
}

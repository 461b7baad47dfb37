#include "setpool/temporal.hpp"

#include <cmath>
#include <stdexcept>

#include "setpool/mathfn.hpp"

namespace setpool {

namespace {

Conv1dLayer make_conv(std::size_t in_channels, std::size_t out_channels, Rng& rng) {
  Conv1dLayer layer;
  layer.in_channels = in_channels;
  layer.out_channels = out_channels;
  layer.kernels.resize(out_channels * in_channels * Conv1dLayer::kWidth);
  layer.bias.assign(out_channels, 0.0);
  const double fan_in = static_cast<double>(in_channels * Conv1dLayer::kWidth);
  const double fan_out = static_cast<double>(out_channels * Conv1dLayer::kWidth);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& w : layer.kernels) w = rng.uniform(-bound, bound);
  return layer;
}

// x indexed [time][channel]; zero padding of 1 on both ends
std::vector<std::vector<double>> conv_forward(const Conv1dLayer& layer,
                                              const std::vector<std::vector<double>>& x) {
  const std::size_t frames = x.size();
  std::vector<std::vector<double>> out(frames, std::vector<double>(layer.out_channels, 0.0));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
      double sum = layer.bias[o];
      for (std::size_t w = 0; w < Conv1dLayer::kWidth; ++w) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + w) - 1;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(frames)) continue;
        const auto& col = x[static_cast<std::size_t>(src)];
        for (std::size_t i = 0; i < layer.in_channels; ++i)
          sum += layer.at(o, i, w) * col[i];
      }
      out[t][o] = sum;
    }
  }
  return out;
}

struct ConvTrace {
  std::vector<std::vector<double>> hidden_pre;  // layer1 pre-relu
  std::vector<std::vector<double>> hidden;      // layer1 post-relu
  std::vector<double> scores;                   // layer2 output
};

ConvTrace traced_scores(const TempConvNet& net, const std::vector<std::vector<double>>& frames) {
  ConvTrace trace;
  trace.hidden_pre = conv_forward(net.layer1, frames);
  trace.hidden = trace.hidden_pre;
  for (auto& col : trace.hidden)
    for (double& v : col) v = v > 0.0 ? v : 0.0;
  const auto out2 = conv_forward(net.layer2, trace.hidden);
  trace.scores.resize(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) trace.scores[t] = out2[t][0];
  return trace;
}

}  // namespace

TempConvNet make_temp_conv(std::size_t embed_dim, Rng& rng, std::size_t hidden_channels) {
  TempConvNet net;
  net.layer1 = make_conv(embed_dim, hidden_channels, rng);
  net.layer2 = make_conv(hidden_channels, 1, rng);
  return net;
}

std::vector<double> temporal_scores(const TempConvNet& net,
                                    const std::vector<std::vector<double>>& frames) {
  if (frames.empty()) throw std::invalid_argument("temporal_scores: empty frame sequence");
  return traced_scores(net, frames).scores;
}

std::vector<double> temporal_attention(const TempConvNet& net,
                                       const std::vector<std::vector<double>>& frames) {
  return softmax(temporal_scores(net, frames));
}

double train_temporal(TempConvNet& net, const std::vector<TemporalEpisode>& batch,
                      const RewardHead& head, double learning_rate) {
  if (batch.empty()) throw std::invalid_argument("train_temporal: empty batch");

  std::vector<double> grad_k1(net.layer1.kernels.size(), 0.0);
  std::vector<double> grad_b1(net.layer1.bias.size(), 0.0);
  std::vector<double> grad_k2(net.layer2.kernels.size(), 0.0);
  std::vector<double> grad_b2(net.layer2.bias.size(), 0.0);
  double total_loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());

  for (const TemporalEpisode& episode : batch) {
    const auto& frames = episode.frames;
    if (frames.empty()) throw std::invalid_argument("train_temporal: empty episode");
    const std::size_t T = frames.size();
    const ConvTrace trace = traced_scores(net, frames);
    const std::vector<double> attention = softmax(trace.scores);

    std::vector<double> agg(frames.front().size(), 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < agg.size(); ++d) agg[d] += attention[t] * frames[t][d];

    const std::vector<double> logits = forward(head.classifier, agg);
    total_loss += cross_entropy(logits, episode.label) * inv;

    std::vector<double> dlogits = softmax(logits);
    dlogits[episode.label] -= 1.0;
    const Gradients head_grads = backward(head.classifier, agg, dlogits);
    const std::vector<double>& dagg = head_grads.input;

    std::vector<double> dattention(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) dattention[t] = dot(dagg, frames[t]);

    // softmax jacobian
    double mixed = 0.0;
    for (std::size_t t = 0; t < T; ++t) mixed += attention[t] * dattention[t];
    std::vector<double> dscores(T);
    for (std::size_t t = 0; t < T; ++t) dscores[t] = attention[t] * (dattention[t] - mixed);

    // layer2 backward
    std::vector<std::vector<double>> dhidden(T,
                                             std::vector<double>(net.layer2.in_channels, 0.0));
    for (std::size_t t = 0; t < T; ++t) {
      const double d = dscores[t];
      grad_b2[0] += d * inv;
      for (std::size_t w = 0; w < Conv1dLayer::kWidth; ++w) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + w) - 1;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        const auto s = static_cast<std::size_t>(src);
        for (std::size_t i = 0; i < net.layer2.in_channels; ++i) {
          grad_k2[i * Conv1dLayer::kWidth + w] += d * trace.hidden[s][i] * inv;
          dhidden[s][i] += d * net.layer2.at(0, i, w);
        }
      }
    }

    // relu
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t o = 0; o < net.layer1.out_channels; ++o)
        if (trace.hidden_pre[t][o] <= 0.0) dhidden[t][o] = 0.0;

    // layer1 backward
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t o = 0; o < net.layer1.out_channels; ++o) {
        const double d = dhidden[t][o];
        if (d == 0.0) continue;
        grad_b1[o] += d * inv;
        for (std::size_t w = 0; w < Conv1dLayer::kWidth; ++w) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + w) - 1;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
          const auto s = static_cast<std::size_t>(src);
          for (std::size_t i = 0; i < net.layer1.in_channels; ++i)
            grad_k1[(o * net.layer1.in_channels + i) * Conv1dLayer::kWidth + w] +=
                d * frames[s][i] * inv;
        }
      }
    }
  }

  for (std::size_t i = 0; i < grad_k1.size(); ++i)
    net.layer1.kernels[i] -= learning_rate * grad_k1[i];
  for (std::size_t i = 0; i < grad_b1.size(); ++i)
    net.layer1.bias[i] -= learning_rate * grad_b1[i];
  for (std::size_t i = 0; i < grad_k2.size(); ++i)
    net.layer2.kernels[i] -= learning_rate * grad_k2[i];
  for (std::size_t i = 0; i < grad_b2.size(); ++i)
    net.layer2.bias[i] -= learning_rate * grad_b2[i];
  return total_loss;
}

std::vector<double> flatten_params(const TempConvNet& net) {
  std::vector<double> flat;
  flat.reserve(net.param_count());
  for (const Conv1dLayer* layer : {&net.layer1, &net.layer2}) {
    flat.insert(flat.end(), layer->kernels.begin(), layer->kernels.end());
    flat.insert(flat.end(), layer->bias.begin(), layer->bias.end());
  }
  return flat;
}

void set_params(TempConvNet& net, std::span<const double> flat) {
  if (flat.size() != net.param_count())
    throw std::invalid_argument("set_params: temporal size mismatch");
  std::size_t pos = 0;
  for (Conv1dLayer* layer : {&net.layer1, &net.layer2}) {
    std::copy_n(flat.begin() + pos, layer->kernels.size(), layer->kernels.begin());
    pos += layer->kernels.size();
    std::copy_n(flat.begin() + pos, layer->bias.size(), layer->bias.begin());
    pos += layer->bias.size();
  }
}

std::vector<double> combine(const SetPartition& partition,
                            std::span<const double> still_weights,
                            std::span<const double> segment_weights,
                            const std::vector<std::vector<double>>& temporal_weights,
                            const std::vector<std::vector<double>>& features) {
  if (still_weights.size() != partition.stills.size())
    throw std::invalid_argument("combine: still weight count mismatch");
  if (segment_weights.size() != partition.segments.size() ||
      temporal_weights.size() != partition.segments.size())
    throw std::invalid_argument("combine: segment weight count mismatch");

  std::size_t covered = partition.stills.size();
  for (const auto& [seg_id, indices] : partition.segments) covered += indices.size();
  if (covered != features.size())
    throw std::invalid_argument("combine: partition does not cover the set exactly");

  std::vector<std::vector<double>> items;
  std::vector<double> weights;
  items.reserve(partition.stills.size() + partition.segments.size());
  for (std::size_t n = 0; n < partition.stills.size(); ++n) {
    const std::size_t idx = partition.stills[n];
    if (idx >= features.size()) throw std::invalid_argument("combine: still index out of range");
    items.push_back(features[idx]);
    weights.push_back(still_weights[n]);
  }
  for (std::size_t s = 0; s < partition.segments.size(); ++s) {
    const auto& indices = partition.segments[s].second;
    if (indices.empty()) throw std::invalid_argument("combine: empty segment");
    if (temporal_weights[s].size() != indices.size())
      throw std::invalid_argument("combine: temporal weight length mismatch");
    std::vector<double> pseudo(features.front().size(), 0.0);
    for (std::size_t f = 0; f < indices.size(); ++f) {
      if (indices[f] >= features.size())
        throw std::invalid_argument("combine: frame index out of range");
      const auto& frame = features[indices[f]];
      for (std::size_t d = 0; d < pseudo.size(); ++d)
        pseudo[d] += temporal_weights[s][f] * frame[d];
    }
    items.push_back(std::move(pseudo));
    weights.push_back(segment_weights[s]);
  }
  return aggregate(items, weights);
}

}  // namespace setpool

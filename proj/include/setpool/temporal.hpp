#ifndef SETPOOL_TEMPORAL_HPP
#define SETPOOL_TEMPORAL_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "setpool/env.hpp"
#include "setpool/nn.hpp"

namespace setpool {

/// Width-3 1-D convolution over time, zero padding 1, stride 1, so output
/// length always equals input length.
struct Conv1dLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  static constexpr std::size_t kWidth = 3;
  std::vector<double> kernels;  // [out][in][width]
  std::vector<double> bias;     // [out]

  double& at(std::size_t o, std::size_t i, std::size_t w) {
    return kernels[(o * in_channels + i) * kWidth + w];
  }
  double at(std::size_t o, std::size_t i, std::size_t w) const {
    return kernels[(o * in_channels + i) * kWidth + w];
  }
  std::size_t param_count() const { return kernels.size() + bias.size(); }
};

/// 64 kernels over the embedding channels, relu, then a single kernel over
/// the 64 channels producing one score per frame.
struct TempConvNet {
  Conv1dLayer layer1;
  Conv1dLayer layer2;
  std::size_t param_count() const { return layer1.param_count() + layer2.param_count(); }
};

TempConvNet make_temp_conv(std::size_t embed_dim, Rng& rng, std::size_t hidden_channels = 64);

/// Pre-softmax per-frame scores; exposed for the receptive-field tests.
std::vector<double> temporal_scores(const TempConvNet& net,
                                    const std::vector<std::vector<double>>& frames);

/// Softmax-normalized attention over the frames; sums to 1 for any length >= 1.
std::vector<double> temporal_attention(const TempConvNet& net,
                                       const std::vector<std::vector<double>>& frames);

struct TemporalEpisode {
  std::vector<std::vector<double>> frames;
  std::size_t label = 0;
};

/// One gradient step on cross_entropy(head(sum w_i f_i), label) with w the
/// attention output; gradients flow through the softmax and both conv layers.
/// The head itself is read-only here. Returns the mean batch loss.
double train_temporal(TempConvNet& net, const std::vector<TemporalEpisode>& batch,
                      const RewardHead& head, double learning_rate);

// flat parameter access, used by checkpointing and the gradient checks
std::vector<double> flatten_params(const TempConvNet& net);
void set_params(TempConvNet& net, std::span<const double> flat);

/// Splits a set into orderless stills and ordered video segments.
struct SetPartition {
  std::vector<std::size_t> stills;
  std::vector<std::pair<std::uint32_t, std::vector<std::size_t>>> segments;
};

/// Collapses each segment to one attention-weighted pseudo-feature, then
/// aggregates stills and pseudo-items with their weights. Segment weights
/// default to 1 so a fresh episode treats a segment like any unvisited item.
std::vector<double> combine(const SetPartition& partition,
                            std::span<const double> still_weights,
                            std::span<const double> segment_weights,
                            const std::vector<std::vector<double>>& temporal_weights,
                            const std::vector<std::vector<double>>& features);

}  // namespace setpool

#endif

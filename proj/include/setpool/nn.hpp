#ifndef SETPOOL_NN_HPP
#define SETPOOL_NN_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "setpool/rng.hpp"

namespace setpool {

enum class Activation { kRelu, kTanh, kIdentity };

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // row-major [out][in]
  std::vector<double> bias;     // [out]
  Activation act = Activation::kIdentity;
};

/// Fully-connected stack with chained layer dimensions. All math is double
/// precision; the nets here are small enough that gradient-check fidelity
/// matters more than speed.
struct DenseNet {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
  std::size_t param_count() const;
};

/// Builds a net with dims[0] -> dims[1] -> ... -> dims.back() and one
/// activation per layer. Weights are uniform in +-sqrt(6/(in+out)),
/// biases zero.
DenseNet make_dense_net(const std::vector<std::size_t>& dims,
                        const std::vector<Activation>& acts, Rng& rng);

struct LayerGrad {
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Per-layer gradients, shape-congruent with the net they came from, plus
/// the gradient with respect to the input vector.
struct Gradients {
  std::vector<LayerGrad> layers;
  std::vector<double> input;
};

std::vector<double> forward(const DenseNet& net, std::span<const double> x);

/// Per-layer pre- and post-activations kept for reuse: one traced forward
/// feeds any number of backward passes without recomputation.
struct ForwardTrace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
};

const std::vector<double>& forward(const DenseNet& net, std::span<const double> x,
                                   ForwardTrace& trace);

/// Gradients of <upstream, forward(net, x)> with respect to every weight,
/// bias, and x. Exact backprop, no approximation.
Gradients backward(const DenseNet& net, std::span<const double> x,
                   std::span<const double> upstream);

/// Same, reusing a trace produced by the traced forward on the same inputs.
Gradients backward(const DenseNet& net, std::span<const double> x,
                   const ForwardTrace& trace, std::span<const double> upstream);

/// Buffer-reusing variant: fills `out` (shaped on first use) instead of
/// allocating. The hot training loops run through this.
void backward(const DenseNet& net, std::span<const double> x, const ForwardTrace& trace,
              std::span<const double> upstream, Gradients& out);

/// Max-subtracted softmax; entries positive and summing to 1.
std::vector<double> softmax(std::span<const double> v);

/// -log softmax(logits)[label], computed via log-sum-exp.
double cross_entropy(std::span<const double> logits, std::size_t label);

// Flat parameter views used by the optimizers and the trust-region path.
std::vector<double> flatten_params(const DenseNet& net);
void set_params(DenseNet& net, std::span<const double> flat);
std::vector<double> flatten_grads(const Gradients& g);
void accumulate(Gradients& into, const Gradients& g, double scale = 1.0);
Gradients zero_gradients_like(const DenseNet& net);
/// net += scale * grads
void apply_gradient(DenseNet& net, const Gradients& grads, double scale);

}  // namespace setpool

#endif

#include "setpool/nn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace setpool {

namespace {

double activate(double z, Activation act) {
  switch (act) {
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kIdentity: return z;
  }
  return z;
}

double activate_grad(double z, Activation act) {
  switch (act) {
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

void run_traced_forward(const DenseNet& net, std::span<const double> x,
                        ForwardTrace& trace) {
  trace.pre.resize(net.layers.size());
  trace.post.resize(net.layers.size());
  std::span<const double> cur = x;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const DenseLayer& layer = net.layers[k];
    std::vector<double>& z = trace.pre[k];
    std::vector<double>& a = trace.post[k];
    z.resize(layer.out);
    a.resize(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* row = layer.weights.data() + o * layer.in;
      double sum = layer.bias[o];
#pragma omp simd reduction(+ : sum)
      for (std::size_t i = 0; i < layer.in; ++i) sum += row[i] * cur[i];
      z[o] = sum;
      a[o] = activate(sum, layer.act);
    }
    cur = a;
  }
}

}  // namespace

std::size_t DenseNet::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights.size() + layer.bias.size();
  return n;
}

DenseNet make_dense_net(const std::vector<std::size_t>& dims,
                        const std::vector<Activation>& acts, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("make_dense_net: need at least 2 dims");
  if (acts.size() != dims.size() - 1)
    throw std::invalid_argument("make_dense_net: one activation per layer required");
  DenseNet net;
  net.layers.resize(dims.size() - 1);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    DenseLayer& layer = net.layers[k];
    layer.in = dims[k];
    layer.out = dims[k + 1];
    layer.act = acts[k];
    layer.weights.resize(layer.in * layer.out);
    layer.bias.assign(layer.out, 0.0);
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
  }
  return net;
}

std::vector<double> forward(const DenseNet& net, std::span<const double> x) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("forward: input length does not match net input_dim");
  ForwardTrace trace;
  run_traced_forward(net, x, trace);
  return std::move(trace.post.back());
}

const std::vector<double>& forward(const DenseNet& net, std::span<const double> x,
                                   ForwardTrace& trace) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("forward: input length does not match net input_dim");
  run_traced_forward(net, x, trace);
  return trace.post.back();
}

Gradients backward(const DenseNet& net, std::span<const double> x,
                   std::span<const double> upstream) {
  ForwardTrace trace;
  run_traced_forward(net, x, trace);
  return backward(net, x, trace, upstream);
}

Gradients backward(const DenseNet& net, std::span<const double> x,
                   const ForwardTrace& trace, std::span<const double> upstream) {
  Gradients grads;
  backward(net, x, trace, upstream, grads);
  return grads;
}

void backward(const DenseNet& net, std::span<const double> x, const ForwardTrace& trace,
              std::span<const double> upstream, Gradients& out) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("backward: input length does not match net input_dim");
  if (upstream.size() != net.output_dim())
    throw std::invalid_argument("backward: upstream length does not match net output_dim");

  out.layers.resize(net.layers.size());
  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const DenseLayer& layer = net.layers[k];
    const std::vector<double>& pre = trace.pre[k];
    // delta through the activation
    for (std::size_t o = 0; o < layer.out; ++o) delta[o] *= activate_grad(pre[o], layer.act);

    std::span<const double> below =
        k == 0 ? x : std::span<const double>(trace.post[k - 1]);
    LayerGrad& lg = out.layers[k];
    lg.weights.resize(layer.weights.size());
    lg.bias.resize(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      double* wrow = lg.weights.data() + o * layer.in;
      const double d = delta[o];
      for (std::size_t i = 0; i < layer.in; ++i) wrow[i] = d * below[i];
      lg.bias[o] = d;
    }

    std::vector<double> next_delta(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* row = layer.weights.data() + o * layer.in;
      const double d = delta[o];
      for (std::size_t i = 0; i < layer.in; ++i) next_delta[i] += d * row[i];
    }
    delta = std::move(next_delta);
  }
  out.input = std::move(delta);
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size())
    throw std::invalid_argument("cross_entropy: label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double o : logits) sum += std::exp(o - mx);
  return std::log(sum) + mx - logits[label];
}

std::vector<double> flatten_params(const DenseNet& net) {
  std::vector<double> flat;
  flat.reserve(net.param_count());
  for (const auto& layer : net.layers) {
    flat.insert(flat.end(), layer.weights.begin(), layer.weights.end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void set_params(DenseNet& net, std::span<const double> flat) {
  if (flat.size() != net.param_count())
    throw std::invalid_argument("set_params: size mismatch");
  std::size_t pos = 0;
  for (auto& layer : net.layers) {
    std::copy_n(flat.begin() + pos, layer.weights.size(), layer.weights.begin());
    pos += layer.weights.size();
    std::copy_n(flat.begin() + pos, layer.bias.size(), layer.bias.begin());
    pos += layer.bias.size();
  }
}

std::vector<double> flatten_grads(const Gradients& g) {
  std::vector<double> flat;
  for (const auto& lg : g.layers) {
    flat.insert(flat.end(), lg.weights.begin(), lg.weights.end());
    flat.insert(flat.end(), lg.bias.begin(), lg.bias.end());
  }
  return flat;
}

void accumulate(Gradients& into, const Gradients& g, double scale) {
  assert(into.layers.size() == g.layers.size());
  for (std::size_t k = 0; k < g.layers.size(); ++k) {
    for (std::size_t i = 0; i < g.layers[k].weights.size(); ++i)
      into.layers[k].weights[i] += scale * g.layers[k].weights[i];
    for (std::size_t i = 0; i < g.layers[k].bias.size(); ++i)
      into.layers[k].bias[i] += scale * g.layers[k].bias[i];
  }
}

Gradients zero_gradients_like(const DenseNet& net) {
  Gradients g;
  g.layers.resize(net.layers.size());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    g.layers[k].weights.assign(net.layers[k].weights.size(), 0.0);
    g.layers[k].bias.assign(net.layers[k].bias.size(), 0.0);
  }
  return g;
}

void apply_gradient(DenseNet& net, const Gradients& grads, double scale) {
  if (grads.layers.size() != net.layers.size())
    throw std::invalid_argument("apply_gradient: layer count mismatch");
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& layer = net.layers[k];
    const auto& lg = grads.layers[k];
    if (lg.weights.size() != layer.weights.size() || lg.bias.size() != layer.bias.size())
      throw std::invalid_argument("apply_gradient: shape mismatch");
    for (std::size_t i = 0; i < layer.weights.size(); ++i)
      layer.weights[i] += scale * lg.weights[i];
    for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] += scale * lg.bias[i];
  }
}

}  // namespace setpool

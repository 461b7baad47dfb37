#include "setpool/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "setpool/errors.hpp"

namespace setpool {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'T', 'C'};
constexpr std::uint16_t kVersion = 1;

struct Writer {
  std::vector<unsigned char> buf;

  template <typename T>
  void put(T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    std::reverse(bytes, bytes + sizeof(T));
#endif
    buf.insert(buf.end(), bytes, bytes + sizeof(T));
  }

  void put_doubles(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    for (double x : v) put(x);
  }

  void put_dense(const DenseNet& net) {
    put<std::uint32_t>(static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& layer : net.layers) {
      put<std::uint32_t>(static_cast<std::uint32_t>(layer.in));
      put<std::uint32_t>(static_cast<std::uint32_t>(layer.out));
      put<std::uint8_t>(static_cast<std::uint8_t>(layer.act));
      put_doubles(layer.weights);
      put_doubles(layer.bias);
    }
  }

  void put_conv(const Conv1dLayer& layer) {
    put<std::uint32_t>(static_cast<std::uint32_t>(layer.in_channels));
    put<std::uint32_t>(static_cast<std::uint32_t>(layer.out_channels));
    put_doubles(layer.kernels);
    put_doubles(layer.bias);
  }

  void put_trajectory(const Trajectory& traj) {
    put<std::uint64_t>(traj.size());
    for (const Transition& tr : traj) {
      put_doubles(tr.state);
      put(tr.action);
      put(tr.behavior_log_prob);
      put(tr.reward);
      put_doubles(tr.next_state);
      put<std::uint8_t>(tr.done ? 1 : 0);
    }
  }
};

struct CkptReader {
  const std::vector<unsigned char>& buf;
  std::size_t pos = 0;

  template <typename T>
  T get(const char* what) {
    if (pos + sizeof(T) > buf.size())
      throw FormatError(std::string("truncated checkpoint while reading ") + what, pos);
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

  std::vector<double> get_doubles(const char* what) {
    const auto n = get<std::uint64_t>(what);
    if (pos + n * sizeof(double) > buf.size())
      throw FormatError(std::string("truncated checkpoint while reading ") + what, pos);
    std::vector<double> v(n);
    for (auto& x : v) x = get<double>(what);
    return v;
  }

  DenseNet get_dense(const char* what) {
    DenseNet net;
    const auto n_layers = get<std::uint32_t>(what);
    net.layers.resize(n_layers);
    for (auto& layer : net.layers) {
      layer.in = get<std::uint32_t>(what);
      layer.out = get<std::uint32_t>(what);
      const auto act = get<std::uint8_t>(what);
      if (act > 2) throw FormatError("invalid activation tag in checkpoint", pos - 1);
      layer.act = static_cast<Activation>(act);
      layer.weights = get_doubles(what);
      layer.bias = get_doubles(what);
      if (layer.weights.size() != layer.in * layer.out || layer.bias.size() != layer.out)
        throw FormatError("dense layer shape mismatch in checkpoint", pos);
    }
    return net;
  }

  Conv1dLayer get_conv(const char* what) {
    Conv1dLayer layer;
    layer.in_channels = get<std::uint32_t>(what);
    layer.out_channels = get<std::uint32_t>(what);
    layer.kernels = get_doubles(what);
    layer.bias = get_doubles(what);
    if (layer.kernels.size() != layer.in_channels * layer.out_channels * Conv1dLayer::kWidth ||
        layer.bias.size() != layer.out_channels)
      throw FormatError("conv layer shape mismatch in checkpoint", pos);
    return layer;
  }

  Trajectory get_trajectory(const char* what) {
    Trajectory traj(get<std::uint64_t>(what));
    for (Transition& tr : traj) {
      tr.state = get_doubles(what);
      tr.action = get<double>(what);
      tr.behavior_log_prob = get<double>(what);
      tr.reward = get<double>(what);
      tr.next_state = get_doubles(what);
      tr.done = get<std::uint8_t>(what) != 0;
    }
    return traj;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  Writer w;
  w.buf.insert(w.buf.end(), kMagic, kMagic + 4);
  w.put(kVersion);

  const std::string config_text = serialize_config(checkpoint.config);
  w.put<std::uint64_t>(config_text.size());
  w.buf.insert(w.buf.end(), config_text.begin(), config_text.end());

  w.put(checkpoint.episode);
  for (std::uint64_t word : checkpoint.rng_state) w.put(word);

  w.put_dense(checkpoint.head.classifier);
  w.put(checkpoint.head.lambda);
  w.put_dense(checkpoint.agent.trunk);
  w.put_dense(checkpoint.agent.policy_branch);
  w.put_dense(checkpoint.agent.value_branch);
  w.put(checkpoint.agent.gamma);
  w.put_dense(checkpoint.average.trunk);
  w.put_dense(checkpoint.average.policy_branch);
  w.put_conv(checkpoint.temporal.layer1);
  w.put_conv(checkpoint.temporal.layer2);
  w.put_dense(checkpoint.projection);

  w.put<std::uint64_t>(checkpoint.replay.size());
  for (const Trajectory& traj : checkpoint.replay) w.put_trajectory(traj);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path, 0);
  out.write(reinterpret_cast<const char*>(w.buf.data()),
            static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw FormatError("short write to checkpoint " + path, w.buf.size());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open checkpoint for reading: " + path, 0);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw FormatError("short read from checkpoint " + path, 0);

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("bad magic, expected SETC", 0);
  CkptReader r{buf, 4};
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);

  Checkpoint ckpt;
  const auto config_len = r.get<std::uint64_t>("config length");
  if (r.pos + config_len > buf.size())
    throw FormatError("truncated checkpoint while reading config", r.pos);
  const std::string config_text(buf.begin() + static_cast<std::ptrdiff_t>(r.pos),
                                buf.begin() + static_cast<std::ptrdiff_t>(r.pos + config_len));
  r.pos += config_len;
  ckpt.config = parse_config(config_text);

  ckpt.episode = r.get<std::uint64_t>("episode");
  for (std::uint64_t& word : ckpt.rng_state) word = r.get<std::uint64_t>("rng state");

  ckpt.head.classifier = r.get_dense("reward head");
  ckpt.head.lambda = r.get<double>("lambda");
  ckpt.agent.trunk = r.get_dense("trunk");
  ckpt.agent.policy_branch = r.get_dense("policy branch");
  ckpt.agent.value_branch = r.get_dense("value branch");
  ckpt.agent.gamma = r.get<double>("gamma");
  ckpt.average.trunk = r.get_dense("average trunk");
  ckpt.average.policy_branch = r.get_dense("average policy branch");
  ckpt.temporal.layer1 = r.get_conv("temporal layer1");
  ckpt.temporal.layer2 = r.get_conv("temporal layer2");
  ckpt.projection = r.get_dense("projection");

  const auto n_traj = r.get<std::uint64_t>("replay size");
  for (std::uint64_t i = 0; i < n_traj; ++i)
    ckpt.replay.push_back(r.get_trajectory("replay trajectory"));

  if (r.pos != buf.size())
    throw FormatError("trailing bytes after checkpoint payload", r.pos);
  return ckpt;
}

std::size_t checkpoint_param_count(const Checkpoint& checkpoint) {
  return checkpoint.head.classifier.param_count() + checkpoint.agent.trunk.param_count() +
         checkpoint.agent.policy_branch.param_count() +
         checkpoint.agent.value_branch.param_count() + checkpoint.temporal.param_count() +
         checkpoint.projection.param_count();
}

}  // namespace setpool

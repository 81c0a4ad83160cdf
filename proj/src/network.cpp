#include "ulstm/network.hpp"

#include <charconv>
#include <sstream>

#include "ulstm/ops.hpp"

namespace ulstm {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::enc_lstm:
      return "enclstm";
    case Variant::dec_lstm:
      return "declstm";
    case Variant::full_lstm:
      return "fulllstm";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  std::string lower;
  for (char ch : name) {
    if (ch != '-' && ch != '_') lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  if (lower == "enclstm") return Variant::enc_lstm;
  if (lower == "declstm") return Variant::dec_lstm;
  if (lower == "fulllstm") return Variant::full_lstm;
  throw UsageError("unknown variant '" + name + "' (expected enclstm, declstm or fulllstm)");
}

namespace {

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw UsageError("invalid " + what + " '" + text + "'");
  return v;
}

}  // namespace

Ratio Ratio::parse(const std::string& text) {
  const auto slash = text.find('/');
  Ratio r;
  if (slash == std::string::npos) {
    r.num = parse_u64(text, "ratio");
  } else {
    r.num = parse_u64(text.substr(0, slash), "ratio numerator");
    r.den = parse_u64(text.substr(slash + 1), "ratio denominator");
  }
  if (r.num == 0 || r.den == 0) throw UsageError("ratio must be positive: '" + text + "'");
  return r;
}

std::string Ratio::str() const { return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den); }

std::vector<std::size_t> NetworkConfig::depths() const {
  std::vector<std::size_t> out;
  for (std::size_t d : base_depths) out.push_back(std::max<std::size_t>(1, d * width_multiplier.num / width_multiplier.den));
  return out;
}

std::size_t NetworkConfig::recurrent_layers() const {
  return (encoder_recurrent() ? levels : 0) + (decoder_recurrent() ? levels - 1 : 0);
}

void NetworkConfig::validate() const {
  if (levels < 2) throw UsageError("network needs at least 2 levels, got " + std::to_string(levels));
  if (base_depths.size() != levels) {
    throw UsageError("depths has " + std::to_string(base_depths.size()) + " entries for " + std::to_string(levels) +
                     " levels");
  }
  if (clstm_kernels.size() != levels) {
    throw UsageError("clstm_kernels has " + std::to_string(clstm_kernels.size()) + " entries for " +
                     std::to_string(levels) + " levels");
  }
  for (std::size_t k : clstm_kernels) {
    if (k % 2 == 0) throw UsageError("C-LSTM kernel sizes must be odd");
  }
  if (num_classes < 2) throw UsageError("num_classes must be at least 2");
  if (!(leaky_slope >= 0.0)) throw UsageError("leaky_slope must be non-negative");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw UsageError("bn_momentum must lie in (0,1)");
  if (!(bn_epsilon > 0.0)) throw UsageError("bn_epsilon must be positive");
}

std::string NetworkConfig::structure_text() const {
  std::ostringstream os;
  os << "levels=" << levels << ";depths=";
  for (std::size_t d : depths()) os << d << ',';
  os << ";clstm_kernels=";
  for (std::size_t k : clstm_kernels) os << k << ',';
  os << ";variant=" << variant_name(variant) << ";classes=" << num_classes;
  return os.str();
}

template <typename T>
std::vector<NamedParam<T>> NetworkParams<T>::parameters() {
  std::vector<NamedParam<T>> out;
  auto add_block = [&out](const std::string& prefix, UnetBlock<T>& b) {
    if (b.lstm) {
      out.push_back({prefix + ".lstm.kernel", &b.lstm->kernel});
      out.push_back({prefix + ".lstm.bias", &b.lstm->bias});
    }
    if (b.pre) {
      out.push_back({prefix + ".pre.kernel", &b.pre->kernel});
      out.push_back({prefix + ".pre.bn.gamma", &b.pre->bn.gamma});
      out.push_back({prefix + ".pre.bn.beta", &b.pre->bn.beta});
    }
    out.push_back({prefix + ".post.kernel", &b.post.kernel});
    out.push_back({prefix + ".post.bn.gamma", &b.post.bn.gamma});
    out.push_back({prefix + ".post.bn.beta", &b.post.bn.beta});
  };
  for (std::size_t l = 0; l < encoder.size(); ++l) add_block("enc" + std::to_string(l), encoder[l]);
  for (std::size_t l = 0; l < decoder.size(); ++l) add_block("dec" + std::to_string(l), decoder[l]);
  out.push_back({"head.kernel", &head_kernel});
  out.push_back({"head.bias", &head_bias});
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> NetworkParams<T>::buffers() {
  std::vector<NamedBuffer<T>> out;
  auto add_block = [&out](const std::string& prefix, UnetBlock<T>& b) {
    if (b.pre) {
      out.push_back({prefix + ".pre.bn.running_mean", &b.pre->bn.running_mean});
      out.push_back({prefix + ".pre.bn.running_var", &b.pre->bn.running_var});
    }
    out.push_back({prefix + ".post.bn.running_mean", &b.post.bn.running_mean});
    out.push_back({prefix + ".post.bn.running_var", &b.post.bn.running_var});
  };
  for (std::size_t l = 0; l < encoder.size(); ++l) add_block("enc" + std::to_string(l), encoder[l]);
  for (std::size_t l = 0; l < decoder.size(); ++l) add_block("dec" + std::to_string(l), decoder[l]);
  return out;
}

template <typename T>
std::size_t NetworkParams<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.var->value().size();
  return n;
}

template <typename T>
NetworkParams<T> NetworkParams<T>::clone() const {
  NetworkParams<T> out;
  out.config = config;
  auto copy_var = [](const Var<T>& v) { return parameter(v.value()); };
  auto copy_conv = [&](const ConvBlockParams<T>& c) {
    ConvBlockParams<T> r;
    r.kernel = copy_var(c.kernel);
    r.bn = c.bn;
    r.bn.gamma = copy_var(c.bn.gamma);
    r.bn.beta = copy_var(c.bn.beta);
    return r;
  };
  auto copy_block = [&](const UnetBlock<T>& b) {
    UnetBlock<T> r;
    if (b.lstm) {
      r.lstm = *b.lstm;
      r.lstm->kernel = copy_var(b.lstm->kernel);
      r.lstm->bias = copy_var(b.lstm->bias);
    }
    if (b.pre) r.pre = copy_conv(*b.pre);
    r.post = copy_conv(b.post);
    return r;
  };
  for (const auto& b : encoder) out.encoder.push_back(copy_block(b));
  for (const auto& b : decoder) out.decoder.push_back(copy_block(b));
  out.head_kernel = copy_var(head_kernel);
  out.head_bias = copy_var(head_bias);
  return out;
}

template <typename T>
void NetworkParams<T>::zero_recurrent() {
  for (auto* blocks : {&encoder, &decoder}) {
    for (auto& b : *blocks) {
      if (b.lstm) b.lstm->zero_recurrent();
    }
  }
}

template <typename T>
NetworkParams<T> init_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x6e6574));
  const auto depth = config.depths();
  const T momentum = static_cast<T>(config.bn_momentum);
  const T eps = static_cast<T>(config.bn_epsilon);
  NetworkParams<T> p;
  p.config = config;
  auto make_block = [&](bool recurrent, std::size_t in, std::size_t out, std::size_t lstm_kernel) {
    UnetBlock<T> b;
    if (recurrent) {
      b.lstm = make_clstm<T>(in, out, lstm_kernel, rng);
    } else {
      b.pre = make_conv_block<T>(in, out, 3, momentum, eps, rng);
    }
    b.post = make_conv_block<T>(out, out, 3, momentum, eps, rng);
    return b;
  };
  for (std::size_t l = 0; l < config.levels; ++l) {
    const std::size_t in = l == 0 ? 1 : depth[l - 1];
    p.encoder.push_back(make_block(config.encoder_recurrent(), in, depth[l], config.clstm_kernels[l]));
  }
  for (std::size_t l = 0; l + 1 < config.levels; ++l) {
    p.decoder.push_back(make_block(config.decoder_recurrent(), depth[l + 1] + depth[l], depth[l], config.clstm_kernels[l]));
  }
  p.head_kernel = parameter(fan_in_uniform<T>({config.num_classes, depth[0], 1, 1}, rng));
  p.head_bias = parameter(Tensor<T>({config.num_classes}));
  return p;
}

template <typename T>
NetworkState<T> zero_state(const NetworkConfig& config, std::size_t batch, std::size_t height, std::size_t width) {
  const auto depth = config.depths();
  NetworkState<T> s;
  if (config.encoder_recurrent()) {
    for (std::size_t l = 0; l < config.levels; ++l) {
      s.layers.push_back(clstm_zero_state<T>(depth[l], batch, height >> l, width >> l));
    }
  }
  if (config.decoder_recurrent()) {
    for (std::size_t l = config.levels - 1; l-- > 0;) {
      s.layers.push_back(clstm_zero_state<T>(depth[l], batch, height >> l, width >> l));
    }
  }
  return s;
}

namespace {

template <typename T>
std::pair<Var<T>, std::optional<ClstmState<T>>> run_block(UnetBlock<T>& block, const Var<T>& x,
                                                          const std::optional<ClstmState<T>>& prev, Mode mode,
                                                          T slope) {
  if (block.recurrent()) {
    if (!prev) throw UsageError("recurrent block called without a state");
    ClstmState<T> next = clstm_step(*block.lstm, x, *prev);
    Var<T> out = conv_block(ops::leaky_relu(next.h, slope), block.post, mode, slope);
    return {out, next};
  }
  return {conv_block(conv_block(x, *block.pre, mode, slope), block.post, mode, slope), std::nullopt};
}

}  // namespace

template <typename T>
EncoderOutput<T> encoder_apply(std::size_t level, const Var<T>& x, const std::optional<ClstmState<T>>& prev,
                               NetworkParams<T>& params, Mode mode) {
  const NetworkConfig& cfg = params.config;
  if (level >= cfg.levels) throw UsageError("encoder level " + std::to_string(level) + " out of range");
  require_rank(x.dims(), 4, "encoder input");
  if (level + 1 < cfg.levels && (x.dims()[2] % 2 != 0 || x.dims()[3] % 2 != 0)) {
    throw ShapeError("encoder level " + std::to_string(level) + ": spatial extent " + shape_string(x.dims()) +
                     " cannot be pooled by 2");
  }
  auto [h, state] = run_block(params.encoder[level], x, prev, mode, static_cast<T>(cfg.leaky_slope));
  EncoderOutput<T> out{h, state, Var<T>()};
  if (level + 1 < cfg.levels) out.pooled = ops::maxpool2(h);
  return out;
}

template <typename T>
DecoderOutput<T> decoder_apply(std::size_t level, const Var<T>& y, const Var<T>& skip,
                               const std::optional<ClstmState<T>>& prev, NetworkParams<T>& params, Mode mode) {
  const NetworkConfig& cfg = params.config;
  if (level + 1 >= cfg.levels) throw UsageError("decoder level " + std::to_string(level) + " out of range");
  const Var<T> up = ops::upsample_bilinear2(y);
  if (up.dims()[2] != skip.dims().at(2) || up.dims()[3] != skip.dims().at(3)) {
    throw ShapeError("decoder level " + std::to_string(level) + ": upsampled " + shape_string(up.dims()) +
                     " does not match skip " + shape_string(skip.dims()));
  }
  auto [z, state] = run_block(params.decoder[level], ops::concat_channels(up, skip), prev, mode,
                              static_cast<T>(cfg.leaky_slope));
  return {z, state};
}

template <typename T>
FrameOutput<T> forward_frame(const Var<T>& frame, const NetworkState<T>& state, NetworkParams<T>& params, Mode mode) {
  const NetworkConfig& cfg = params.config;
  require_rank(frame.dims(), 4, "forward_frame");
  const Shape& d = frame.dims();
  if (d[1] != 1) throw ShapeError("forward_frame: expected a single-channel image, got " + shape_string(d));
  const std::size_t multiple = cfg.spatial_multiple();
  if (d[2] % multiple != 0 || d[3] % multiple != 0) {
    throw ShapeError("image size " + std::to_string(d[2]) + "x" + std::to_string(d[3]) + " is not a multiple of " +
                     std::to_string(multiple) + " (required by the " + std::to_string(cfg.levels - 1) +
                     " max-pooling layers)");
  }
  if (state.layers.size() != cfg.recurrent_layers()) {
    throw UsageError("forward_frame: state has " + std::to_string(state.layers.size()) + " recurrent layers, " +
                     variant_name(cfg.variant) + " needs " + std::to_string(cfg.recurrent_layers()));
  }
  FrameOutput<T> out;
  std::size_t slot = 0;
  std::vector<Var<T>> skips;
  Var<T> x = frame;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    std::optional<ClstmState<T>> prev;
    if (cfg.encoder_recurrent()) prev = state.layers[slot++];
    EncoderOutput<T> e = encoder_apply(l, x, prev, params, mode);
    if (e.state) out.state.layers.push_back(*e.state);
    skips.push_back(e.h);
    x = e.pooled;
  }
  Var<T> z = skips.back();
  for (std::size_t l = cfg.levels - 1; l-- > 0;) {
    std::optional<ClstmState<T>> prev;
    if (cfg.decoder_recurrent()) prev = state.layers[slot++];
    DecoderOutput<T> dec = decoder_apply(l, z, skips[l], prev, params, mode);
    if (dec.state) out.state.layers.push_back(*dec.state);
    z = dec.z;
  }
  out.logits = ops::conv2d(z, params.head_kernel, params.head_bias);
  return out;
}

template <typename T>
void stream_sequence(std::size_t count, const std::function<Tensor<T>(std::size_t)>& frame_at,
                     NetworkParams<T>& params, Mode mode,
                     const std::function<void(std::size_t, const Tensor<T>&)>& sink) {
  NoGradGuard<T> no_grad;
  NetworkState<T> state;
  for (std::size_t t = 0; t < count; ++t) {
    Var<T> frame(frame_at(t));
    if (t == 0) {
      require_rank(frame.dims(), 4, "stream_sequence");
      state = zero_state<T>(params.config, frame.dims()[0], frame.dims()[2], frame.dims()[3]);
    }
    FrameOutput<T> out = forward_frame(frame, state, params, mode);
    sink(t, out.logits.value());
    state = std::move(out.state);
  }
}

template <typename T>
Tensor<T> forward_sequence(const Tensor<T>& frames, NetworkParams<T>& params, Mode mode) {
  require_rank(frames.dims(), 5, "forward_sequence");
  const Shape& d = frames.dims();
  if (d[0] == 0) throw UsageError("forward_sequence: empty sequence");
  const std::size_t per_frame = d[1] * d[2] * d[3] * d[4];
  const std::size_t classes = params.config.num_classes;
  Tensor<T> out({d[0], d[1], classes, d[3], d[4]});
  stream_sequence<T>(
      d[0],
      [&](std::size_t t) {
        return Tensor<T>({d[1], d[2], d[3], d[4]}, frames.values().subspan(t * per_frame, per_frame));
      },
      params, mode,
      [&](std::size_t t, const Tensor<T>& logits) { std::copy_n(logits.data(), logits.size(), out.data() + t * logits.size()); });
  return out;
}

template <typename T>
Tensor<T> predict_probabilities(const Tensor<T>& logits) {
  NoGradGuard<T> no_grad;
  return ops::softmax_channels(Var<T>(logits)).value();
}

template <typename T>
std::vector<InstanceMap> segment(const Tensor<T>& probabilities, Connectivity connectivity) {
  require_rank(probabilities.dims(), 4, "segment");
  const Shape& d = probabilities.dims();
  const std::size_t hw = d[2] * d[3];
  std::vector<InstanceMap> out;
  for (std::size_t n = 0; n < d[0]; ++n) {
    BinaryMap mask(d[2], d[3], 0);
    for (std::size_t v = 0; v < hw; ++v) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < d[1]; ++k) {
        if (probabilities[(n * d[1] + k) * hw + v] > probabilities[(n * d[1] + best) * hw + v]) best = k;
      }
      mask.pixels[v] = best == 1 ? 1 : 0;
    }
    out.push_back(connected_components(mask, connectivity));
  }
  return out;
}

#define ULSTM_INSTANTIATE_NETWORK(T)                                                                               \
  template struct NetworkParams<T>;                                                                                \
  template NetworkParams<T> init_network<T>(const NetworkConfig&, std::uint64_t);                                  \
  template NetworkState<T> zero_state<T>(const NetworkConfig&, std::size_t, std::size_t, std::size_t);             \
  template EncoderOutput<T> encoder_apply<T>(std::size_t, const Var<T>&, const std::optional<ClstmState<T>>&,      \
                                             NetworkParams<T>&, Mode);                                             \
  template DecoderOutput<T> decoder_apply<T>(std::size_t, const Var<T>&, const Var<T>&,                            \
                                             const std::optional<ClstmState<T>>&, NetworkParams<T>&, Mode);        \
  template FrameOutput<T> forward_frame<T>(const Var<T>&, const NetworkState<T>&, NetworkParams<T>&, Mode);        \
  template void stream_sequence<T>(std::size_t, const std::function<Tensor<T>(std::size_t)>&, NetworkParams<T>&,   \
                                   Mode, const std::function<void(std::size_t, const Tensor<T>&)>&);               \
  template Tensor<T> forward_sequence<T>(const Tensor<T>&, NetworkParams<T>&, Mode);                               \
  template Tensor<T> predict_probabilities<T>(const Tensor<T>&);                                                   \
  template std::vector<InstanceMap> segment<T>(const Tensor<T>&, Connectivity);

ULSTM_INSTANTIATE_NETWORK(float)
ULSTM_INSTANTIATE_NETWORK(double)

#undef ULSTM_INSTANTIATE_NETWORK

}  // namespace ulstm

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ulstm/image.hpp"
#include "ulstm/layers.hpp"
#include "ulstm/metrics.hpp"

namespace ulstm {

// Where the recurrent layers sit.
enum class Variant { enc_lstm, dec_lstm, full_lstm };

std::string variant_name(Variant v);  // "enclstm", "declstm", "fulllstm"
Variant parse_variant(const std::string& name);

struct Ratio {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  static Ratio parse(const std::string& text);  // "1/16" or "2"
  std::string str() const;
};

struct NetworkConfig {
  std::size_t levels = 4;
  std::vector<std::size_t> base_depths{128, 256, 512, 1024};
  std::vector<std::size_t> clstm_kernels{3, 3, 3, 3};
  Variant variant = Variant::enc_lstm;
  Ratio width_multiplier{1, 1};
  std::size_t num_classes = 2;
  double leaky_slope = 0.01;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  // Per-level channel counts after the width multiplier, at least 1 each.
  std::vector<std::size_t> depths() const;
  // Input height and width must be multiples of this (one 2x pool per level
  // except the bottleneck).
  std::size_t spatial_multiple() const { return std::size_t{1} << (levels - 1); }
  bool encoder_recurrent() const { return variant != Variant::dec_lstm; }
  bool decoder_recurrent() const { return variant != Variant::enc_lstm; }
  std::size_t recurrent_layers() const;

  void validate() const;
  // Canonical text of every field that shapes the parameter set.
  std::string structure_text() const;
};

// One block of the U: either [C-LSTM -> leaky ReLU -> conv block] or
// [conv block -> conv block].
template <typename T>
struct UnetBlock {
  std::optional<ClstmParams<T>> lstm;
  std::optional<ConvBlockParams<T>> pre;
  ConvBlockParams<T> post;

  bool recurrent() const { return lstm.has_value(); }
};

template <typename T>
struct NamedParam {
  std::string name;
  Var<T>* var;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct NetworkParams {
  NetworkConfig config;
  std::vector<UnetBlock<T>> encoder;  // levels 0..L-1, shallow to deep
  std::vector<UnetBlock<T>> decoder;  // index l produces level l, l = 0..L-2
  Var<T> head_kernel;                 // (classes, depth0, 1, 1)
  Var<T> head_bias;                   // (classes)

  NetworkParams() = default;
  NetworkParams(const NetworkParams&) = delete;
  NetworkParams& operator=(const NetworkParams&) = delete;
  NetworkParams(NetworkParams&&) = default;
  NetworkParams& operator=(NetworkParams&&) = default;

  // Trainable leaves in a fixed order with stable dotted names.
  std::vector<NamedParam<T>> parameters();
  // Batch-norm running statistics.
  std::vector<NamedBuffer<T>> buffers();
  std::size_t parameter_count();

  // Deep copy with fresh leaves.
  NetworkParams clone() const;
  // Zeroes the recurrent kernels of every C-LSTM layer.
  void zero_recurrent();
};

template <typename T>
NetworkParams<T> init_network(const NetworkConfig& config, std::uint64_t seed);

// Recurrent state per C-LSTM layer: encoder levels shallow to deep, then
// decoder levels in execution order (deep to shallow).
template <typename T>
struct NetworkState {
  std::vector<ClstmState<T>> layers;
};

template <typename T>
NetworkState<T> zero_state(const NetworkConfig& config, std::size_t batch, std::size_t height, std::size_t width);

template <typename T>
struct EncoderOutput {
  Var<T> h;       // block output, also the skip connection
  std::optional<ClstmState<T>> state;
  Var<T> pooled;  // undefined at the bottleneck
};

template <typename T>
EncoderOutput<T> encoder_apply(std::size_t level, const Var<T>& x, const std::optional<ClstmState<T>>& prev,
                               NetworkParams<T>& params, Mode mode);

template <typename T>
struct DecoderOutput {
  Var<T> z;
  std::optional<ClstmState<T>> state;
};

// Upsamples y, concatenates the encoder skip, and runs the level's block.
template <typename T>
DecoderOutput<T> decoder_apply(std::size_t level, const Var<T>& y, const Var<T>& skip,
                               const std::optional<ClstmState<T>>& prev, NetworkParams<T>& params, Mode mode);

template <typename T>
struct FrameOutput {
  Var<T> logits;  // (N, classes, H, W)
  NetworkState<T> state;
};

template <typename T>
FrameOutput<T> forward_frame(const Var<T>& frame, const NetworkState<T>& state, NetworkParams<T>& params, Mode mode);

// Runs frames t = 0..count-1 from the zero state without recording a graph,
// handing each frame's logits to sink. Memory does not grow with count.
template <typename T>
void stream_sequence(std::size_t count, const std::function<Tensor<T>(std::size_t)>& frame_at,
                     NetworkParams<T>& params, Mode mode,
                     const std::function<void(std::size_t, const Tensor<T>&)>& sink);

// frames (T,N,1,H,W) -> logits (T,N,classes,H,W).
template <typename T>
Tensor<T> forward_sequence(const Tensor<T>& frames, NetworkParams<T>& params, Mode mode);

template <typename T>
Tensor<T> predict_probabilities(const Tensor<T>& logits);

// Per-pixel argmax, then connected components of the foreground class.
// Returns one map per batch item.
template <typename T>
std::vector<InstanceMap> segment(const Tensor<T>& probabilities, Connectivity connectivity = Connectivity::four);

}  // namespace ulstm

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ulstm/augment.hpp"
#include "ulstm/checkpoint.hpp"
#include "ulstm/data.hpp"
#include "ulstm/loss.hpp"
#include "ulstm/network.hpp"

namespace ulstm {

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-10;
};

template <typename T>
struct OptimizerState {
  RmsPropConfig config;
  std::vector<Tensor<T>> accumulators;  // one per parameter, same order
};

template <typename T>
OptimizerState<T> make_optimizer(NetworkParams<T>& params, const RmsPropConfig& config);

// acc <- decay acc + (1 - decay) g^2; theta <- theta - lr g / sqrt(acc + eps).
template <typename T>
void rmsprop_update(std::span<T> theta, std::span<const T> grad, std::span<T> acc, const RmsPropConfig& config);

// Updates every parameter from its gradient; UsageError when one has none.
template <typename T>
void rmsprop_step(const std::vector<NamedParam<T>>& params, OptimizerState<T>& opt);

// Fingerprint of the parameter layout a checkpoint was written for.
Fingerprint config_fingerprint(const NetworkConfig& config);

template <typename T>
void add_network_records(NetworkParams<T>& params, Container& c);
// Restores parameters and batch-norm buffers; CompatibilityError when the
// container was written for another configuration.
template <typename T>
void restore_network(const Container& c, NetworkParams<T>& params);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, NetworkParams<T>& params, const OptimizerState<T>& opt,
                     std::uint64_t step);
template <typename T>
std::uint64_t load_checkpoint(const std::filesystem::path& path, NetworkParams<T>& params, OptimizerState<T>& opt);
// Parameters only, for inference.
template <typename T>
NetworkParams<T> load_network(const std::filesystem::path& path, const NetworkConfig& config);

// tau frames of a batch: frames (tau,N,1,H,W); targets and weights (tau,N,H,W).
template <typename T>
struct Window {
  Tensor<T> frames;
  Tensor<T> targets;
  Tensor<T> weights;
};

template <typename T>
struct WindowResult {
  double loss = 0.0;
  NetworkState<T> state;  // detached state after the last frame
};

// Forward over the window from `initial` (treated as a constant), loss
// normalised by the window's total weight, then backward into the parameter
// gradients. With frame_independent every frame starts from the zero state.
template <typename T>
WindowResult<T> window_step(NetworkParams<T>& params, const Window<T>& window, const NetworkState<T>& initial,
                            Mode mode, bool frame_independent = false);

struct TrainConfig {
  std::size_t tau = 5;
  std::size_t batch_sequences = 3;
  std::size_t iterations = 1000;
  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 0;  // 0 disables periodic checkpoints
  RmsPropConfig optimizer;
  WeightMapParams weights;
  bool auto_class_weights = true;  // inverse class frequency over the training set
  AugmentSpec augment;
  // Ablation: zero recurrent kernels and reset the state before every frame.
  bool frame_independent = false;

  void validate() const;
};

struct LossPoint {
  std::uint64_t step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

// Stateful truncated BPTT. Each batch slot walks its own augmented sequence
// window by window, carrying the detached recurrent state; a slot that runs
// out draws a new sequence and restarts from the zero state.
template <typename T>
class Trainer {
 public:
  Trainer(std::vector<LabeledSequence> dataset, const NetworkConfig& net, const TrainConfig& config);

  // One optimizer update; returns the window loss.
  double step();
  // Runs until `iterations` updates in total; the callback may stop early by
  // returning false.
  void run(const std::function<bool(const LossPoint&)>& on_step = {});

  std::uint64_t iteration() const { return step_; }
  NetworkParams<T>& params() { return params_; }
  const OptimizerState<T>& optimizer() const { return opt_; }
  const std::vector<LossPoint>& curve() const { return curve_; }
  const TrainConfig& config() const { return config_; }
  std::pair<double, double> class_weights() const { return {weights_.wc_background, weights_.wc_foreground}; }

  void save(const std::filesystem::path& path);
  // Restores parameters, optimizer, step and stream positions so that further
  // steps reproduce an uninterrupted run.
  void load(const std::filesystem::path& path);

 private:
  struct Slot {
    std::uint64_t draw = 0;
    std::size_t position = 0;
    LabeledSequence sequence;
    std::vector<WeightMap> weights;
  };

  void fill_slot(std::size_t index, std::uint64_t draw);
  void reset_slot_state(std::size_t index);

  std::vector<LabeledSequence> dataset_;
  TrainConfig config_;
  WeightMapParams weights_;
  NetworkParams<T> params_;
  OptimizerState<T> opt_;
  std::vector<Slot> slots_;
  NetworkState<T> state_;
  std::uint64_t next_draw_ = 0;
  std::uint64_t step_ = 0;
  double wall_ms_ = 0.0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<LossPoint> curve_;
};

}  // namespace ulstm

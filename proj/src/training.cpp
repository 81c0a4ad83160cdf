#include "ulstm/training.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>

#include "ulstm/ops.hpp"

namespace ulstm {

template <typename T>
OptimizerState<T> make_optimizer(NetworkParams<T>& params, const RmsPropConfig& config) {
  OptimizerState<T> opt;
  opt.config = config;
  for (const auto& p : params.parameters()) opt.accumulators.emplace_back(p.var->dims());
  return opt;
}

template <typename T>
void rmsprop_update(std::span<T> theta, std::span<const T> grad, std::span<T> acc, const RmsPropConfig& config) {
  if (theta.size() != grad.size() || theta.size() != acc.size()) throw ShapeError("rmsprop_update: size mismatch");
  const double rho = config.decay, lr = config.learning_rate, eps = config.epsilon;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double a = rho * static_cast<double>(acc[i]) + (1.0 - rho) * g * g;
    acc[i] = static_cast<T>(a);
    theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr * g / std::sqrt(a + eps));
  }
}

template <typename T>
void rmsprop_step(const std::vector<NamedParam<T>>& params, OptimizerState<T>& opt) {
  if (params.size() != opt.accumulators.size()) throw UsageError("rmsprop_step: optimizer built for another network");
  for (const auto& p : params) {
    if (!p.var->has_grad()) throw UsageError("rmsprop_step: parameter '" + p.name + "' has no gradient");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var<T>& v = *params[i].var;
    Tensor<T>& acc = opt.accumulators[i];
    if (acc.dims() != v.dims()) throw ShapeError("rmsprop_step: accumulator shape differs for '" + params[i].name + "'");
    rmsprop_update<T>(v.mutable_value().values(), v.grad().values(), acc.values(), opt.config);
  }
}

Fingerprint config_fingerprint(const NetworkConfig& config) { return sha256(config.structure_text()); }

template <typename T>
void add_network_records(NetworkParams<T>& params, Container& c) {
  c.fingerprint = config_fingerprint(params.config);
  for (const auto& p : params.parameters()) c.records.push_back(Record::from_tensor("param/" + p.name, p.var->value()));
  for (const auto& b : params.buffers()) c.records.push_back(Record::from_tensor("buffer/" + b.name, *b.tensor));
}

namespace {

void check_fingerprint(const Container& c, const NetworkConfig& config) {
  if (c.fingerprint != config_fingerprint(config)) {
    throw CompatibilityError("checkpoint was written for a different network configuration (expected " +
                             to_hex(config_fingerprint(config)).substr(0, 16) + ", found " +
                             to_hex(c.fingerprint).substr(0, 16) + "; current: " + config.structure_text() + ")");
  }
}

template <typename T>
Tensor<T> checked_tensor(const Container& c, const std::string& name, const Shape& dims) {
  Tensor<T> t = c.at(name).to_tensor<T>();
  if (t.dims() != dims) {
    throw CompatibilityError("checkpoint record '" + name + "' has shape " + shape_string(t.dims()) + ", expected " +
                             shape_string(dims));
  }
  return t;
}

}  // namespace

template <typename T>
void restore_network(const Container& c, NetworkParams<T>& params) {
  check_fingerprint(c, params.config);
  // Read everything before touching params so a bad file leaves them intact.
  std::vector<Tensor<T>> values, buffers;
  const auto named = params.parameters();
  const auto bufs = params.buffers();
  for (const auto& p : named) values.push_back(checked_tensor<T>(c, "param/" + p.name, p.var->dims()));
  for (const auto& b : bufs) buffers.push_back(checked_tensor<T>(c, "buffer/" + b.name, b.tensor->dims()));
  for (std::size_t i = 0; i < named.size(); ++i) named[i].var->mutable_value() = std::move(values[i]);
  for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i].tensor = std::move(buffers[i]);
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, NetworkParams<T>& params, const OptimizerState<T>& opt,
                     std::uint64_t step) {
  Container c;
  add_network_records(params, c);
  const auto named = params.parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    c.records.push_back(Record::from_tensor("optim/" + named[i].name, opt.accumulators.at(i)));
  }
  c.records.push_back(Record::from_u64("train/step", {step}));
  write_container(path, c);
}

template <typename T>
std::uint64_t load_checkpoint(const std::filesystem::path& path, NetworkParams<T>& params, OptimizerState<T>& opt) {
  const Container c = read_container(path);
  check_fingerprint(c, params.config);
  const auto named = params.parameters();
  std::vector<Tensor<T>> acc;
  for (const auto& p : named) acc.push_back(checked_tensor<T>(c, "optim/" + p.name, p.var->dims()));
  const auto step = c.at("train/step").to_u64();
  if (step.size() != 1) throw FormatError("checkpoint 'train/step' must hold one value");
  restore_network(c, params);
  opt.accumulators = std::move(acc);
  return step[0];
}

template <typename T>
NetworkParams<T> load_network(const std::filesystem::path& path, const NetworkConfig& config) {
  NetworkParams<T> params = init_network<T>(config, 0);
  restore_network(read_container(path), params);
  return params;
}

template <typename T>
WindowResult<T> window_step(NetworkParams<T>& params, const Window<T>& window, const NetworkState<T>& initial,
                            Mode mode, bool frame_independent) {
  require_rank(window.frames.dims(), 5, "window frames");
  const Shape& d = window.frames.dims();
  const std::size_t tau = d[0], n = d[1], h = d[3], w = d[4];
  if (window.targets.dims() != Shape{tau, n, h, w} || window.weights.dims() != Shape{tau, n, h, w}) {
    throw ShapeError("window targets/weights must be " + shape_string({tau, n, h, w}));
  }
  double total_weight = 0.0;
  for (T v : window.weights.values()) total_weight += static_cast<double>(v);
  if (!(total_weight > 0.0)) throw UsageError("window weights sum to zero");

  Tape<T> tape;
  TapeGuard<T> guard(tape);
  NetworkState<T> state;
  for (const auto& layer : initial.layers) state.layers.push_back({detach(layer.h), detach(layer.c)});
  const std::size_t frame_size = n * h * w;
  Var<T> total;
  for (std::size_t t = 0; t < tau; ++t) {
    if (frame_independent) state = zero_state<T>(params.config, n, h, w);
    Var<T> frame(Tensor<T>({n, 1, h, w}, window.frames.values().subspan(t * frame_size, frame_size)));
    FrameOutput<T> out = forward_frame(frame, state, params, mode);
    state = std::move(out.state);
    const Tensor<T> target({n, h, w}, window.targets.values().subspan(t * frame_size, frame_size));
    const Tensor<T> weight({n, h, w}, window.weights.values().subspan(t * frame_size, frame_size));
    Var<T> nll = ops::weighted_nll_sum(out.logits, target, weight);
    total = t == 0 ? nll : ops::add(total, nll);
  }
  Var<T> loss = ops::scale(total, static_cast<T>(1.0 / total_weight));
  tape.backward(loss);
  WindowResult<T> result;
  result.loss = static_cast<double>(loss.value()[0]);
  if (!std::isfinite(result.loss)) throw NumericError("training loss became non-finite");
  for (const auto& layer : state.layers) result.state.layers.push_back({detach(layer.h), detach(layer.c)});
  return result;
}

void TrainConfig::validate() const {
  if (tau == 0) throw UsageError("tau must be at least 1");
  if (batch_sequences == 0) throw UsageError("batch_sequences must be at least 1");
  if (!(optimizer.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (!(optimizer.decay >= 0.0 && optimizer.decay < 1.0)) throw UsageError("rmsprop decay must lie in [0,1)");
  if (!(optimizer.epsilon > 0.0)) throw UsageError("rmsprop epsilon must be positive");
  if (!(weights.sigma > 0.0)) throw UsageError("weight map sigma must be positive");
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "step,loss,wall_ms\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%llu,%.9g,%.3f\n", static_cast<unsigned long long>(p.step), p.loss, p.wall_ms);
    out << buf;
  }
}

template <typename T>
Trainer<T>::Trainer(std::vector<LabeledSequence> dataset, const NetworkConfig& net, const TrainConfig& config)
    : dataset_(std::move(dataset)), config_(config), weights_(config.weights) {
  config_.validate();
  net.validate();
  if (dataset_.empty()) throw UsageError("training dataset is empty");
  std::vector<InstanceMap> all_labels;
  for (const auto& s : dataset_) {
    validate_sequence(s);
    all_labels.insert(all_labels.end(), s.labels.begin(), s.labels.end());
    if (s.length() < config_.tau) {
      throw UsageError("sequence '" + s.name + "' has " + std::to_string(s.length()) + " frames, fewer than tau = " +
                       std::to_string(config_.tau));
    }
  }
  if (config_.auto_class_weights) {
    const auto [bg, fg] = class_balance_weights(all_labels);
    weights_.wc_background = bg;
    weights_.wc_foreground = fg;
  }
  params_ = init_network<T>(net, config_.seed);
  if (config_.frame_independent) params_.zero_recurrent();
  opt_ = make_optimizer(params_, config_.optimizer);
  slots_.resize(config_.batch_sequences);
}

template <typename T>
void Trainer<T>::fill_slot(std::size_t index, std::uint64_t draw) {
  Rng rng(mix_seed(config_.seed ^ 0x5eedULL, draw));
  const std::size_t which = rng.below(dataset_.size());
  Slot& slot = slots_[index];
  slot.draw = draw;
  slot.position = 0;
  slot.sequence = augment(dataset_[which], config_.augment, rng.next(), config_.tau);
  if (slot.sequence.length() < config_.tau) throw UsageError("augmented sequence is shorter than tau");
  if (height_ == 0) {
    height_ = slot.sequence.height();
    width_ = slot.sequence.width();
  } else if (slot.sequence.height() != height_ || slot.sequence.width() != width_) {
    throw UsageError("training sequences differ in size; set a crop so every window has the same dims");
  }
  slot.weights.clear();
  for (const auto& l : slot.sequence.labels) slot.weights.push_back(compute_weight_map(l, weights_));
}

template <typename T>
void Trainer<T>::reset_slot_state(std::size_t index) {
  for (auto& layer : state_.layers) {
    for (Var<T>* v : {&layer.h, &layer.c}) {
      Tensor<T>& t = v->mutable_value();
      const std::size_t per = t.size() / t.dim(0);
      std::fill_n(t.data() + index * per, per, T(0));
    }
  }
}

template <typename T>
double Trainer<T>::step() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t tau = config_.tau;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].position + tau > slots_[i].sequence.length()) {
      fill_slot(i, next_draw_++);
      if (state_.layers.empty()) state_ = zero_state<T>(params_.config, slots_.size(), height_, width_);
      reset_slot_state(i);
    }
  }
  const std::size_t n = slots_.size(), h = height_, w = width_, plane = h * w;
  Window<T> win{Tensor<T>({tau, n, 1, h, w}), Tensor<T>({tau, n, h, w}), Tensor<T>({tau, n, h, w})};
  for (std::size_t t = 0; t < tau; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const Slot& s = slots_[i];
      const std::size_t f = s.position + t;
      const std::size_t off = (t * n + i) * plane;
      for (std::size_t v = 0; v < plane; ++v) {
        win.frames[off + v] = static_cast<T>(s.sequence.frames[f].pixels[v]);
        win.targets[off + v] = s.sequence.labels[f].pixels[v] > 0 ? T(1) : T(0);
        win.weights[off + v] = static_cast<T>(s.weights[f].pixels[v]);
      }
    }
  }
  const auto named = params_.parameters();
  for (const auto& p : named) p.var->zero_grad();
  WindowResult<T> r = window_step(params_, win, state_, Mode::train, config_.frame_independent);
  rmsprop_step(named, opt_);
  for (const auto& p : named) p.var->zero_grad();
  state_ = std::move(r.state);
  for (auto& s : slots_) s.position += tau;
  ++step_;
  wall_ms_ += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  curve_.push_back({step_, r.loss, wall_ms_});
  return r.loss;
}

template <typename T>
void Trainer<T>::run(const std::function<bool(const LossPoint&)>& on_step) {
  while (step_ < config_.iterations) {
    step();
    if (on_step && !on_step(curve_.back())) break;
  }
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path) {
  Container c;
  add_network_records(params_, c);
  const auto named = params_.parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    c.records.push_back(Record::from_tensor("optim/" + named[i].name, opt_.accumulators[i]));
  }
  c.records.push_back(Record::from_u64("train/step", {step_}));
  std::vector<std::uint64_t> stream{next_draw_, slots_.size()};
  for (const auto& s : slots_) {
    stream.push_back(s.draw);
    stream.push_back(s.position);
    stream.push_back(s.sequence.length() > 0 ? 1 : 0);
  }
  c.records.push_back(Record::from_u64("train/stream", stream));
  for (std::size_t l = 0; l < state_.layers.size(); ++l) {
    c.records.push_back(Record::from_tensor("state/" + std::to_string(l) + "/h", state_.layers[l].h.value()));
    c.records.push_back(Record::from_tensor("state/" + std::to_string(l) + "/c", state_.layers[l].c.value()));
  }
  std::vector<LossPoint> curve = curve_;
  std::vector<std::uint64_t> bits;
  for (const auto& p : curve) {
    bits.push_back(p.step);
    bits.push_back(std::bit_cast<std::uint64_t>(p.loss));
    bits.push_back(std::bit_cast<std::uint64_t>(p.wall_ms));
  }
  c.records.push_back(Record::from_u64("train/curve", bits));
  write_container(path, c);
}

template <typename T>
void Trainer<T>::load(const std::filesystem::path& path) {
  const Container c = read_container(path);
  check_fingerprint(c, params_.config);
  const auto stream = c.at("train/stream").to_u64();
  if (stream.size() < 2 || stream[1] != slots_.size() || stream.size() != 2 + 3 * slots_.size()) {
    throw CompatibilityError("checkpoint was written with a different batch_sequences setting");
  }
  std::uint64_t step = load_checkpoint(path, params_, opt_);
  next_draw_ = stream[0];
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    slots_[i] = Slot{};
    if (stream[2 + 3 * i + 2] != 0) {
      fill_slot(i, stream[2 + 3 * i]);
      slots_[i].position = stream[2 + 3 * i + 1];
    }
  }
  state_ = NetworkState<T>{};
  for (std::size_t l = 0; c.find("state/" + std::to_string(l) + "/h") != nullptr; ++l) {
    state_.layers.push_back({Var<T>(c.at("state/" + std::to_string(l) + "/h").to_tensor<T>()),
                             Var<T>(c.at("state/" + std::to_string(l) + "/c").to_tensor<T>())});
  }
  curve_.clear();
  if (const Record* r = c.find("train/curve")) {
    const auto bits = r->to_u64();
    for (std::size_t i = 0; i + 2 < bits.size(); i += 3) {
      curve_.push_back({bits[i], std::bit_cast<double>(bits[i + 1]), std::bit_cast<double>(bits[i + 2])});
    }
  }
  step_ = step;
  wall_ms_ = curve_.empty() ? 0.0 : curve_.back().wall_ms;
}

#define ULSTM_INSTANTIATE_TRAINING(T)                                                                           \
  template OptimizerState<T> make_optimizer<T>(NetworkParams<T>&, const RmsPropConfig&);                        \
  template void rmsprop_update<T>(std::span<T>, std::span<const T>, std::span<T>, const RmsPropConfig&);       \
  template void rmsprop_step<T>(const std::vector<NamedParam<T>>&, OptimizerState<T>&);                         \
  template void add_network_records<T>(NetworkParams<T>&, Container&);                                          \
  template void restore_network<T>(const Container&, NetworkParams<T>&);                                        \
  template void save_checkpoint<T>(const std::filesystem::path&, NetworkParams<T>&, const OptimizerState<T>&,   \
                                   std::uint64_t);                                                              \
  template std::uint64_t load_checkpoint<T>(const std::filesystem::path&, NetworkParams<T>&, OptimizerState<T>&); \
  template NetworkParams<T> load_network<T>(const std::filesystem::path&, const NetworkConfig&);                 \
  template WindowResult<T> window_step<T>(NetworkParams<T>&, const Window<T>&, const NetworkState<T>&, Mode, bool); \
  template class Trainer<T>;

ULSTM_INSTANTIATE_TRAINING(float)
ULSTM_INSTANTIATE_TRAINING(double)

}  // namespace ulstm

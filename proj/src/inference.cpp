#include "ulstm/inference.hpp"

#include <algorithm>

namespace ulstm {

template <typename T>
std::vector<InstanceMap> segment_sequence(const std::vector<Image>& frames, NetworkParams<T>& params,
                                          Connectivity connectivity, bool frame_independent) {
  if (frames.empty()) return {};
  const std::size_t h = frames[0].height, w = frames[0].width;
  auto to_tensor = [&](std::size_t t) {
    const Image& f = frames[t];
    if (f.height != h || f.width != w) throw ShapeError("segment_sequence: frame " + std::to_string(t) + " differs in size");
    Tensor<T> x({1, 1, h, w});
    for (std::size_t i = 0; i < f.size(); ++i) x[i] = static_cast<T>(f.pixels[i]);
    return x;
  };
  std::vector<InstanceMap> out;
  auto sink = [&](std::size_t, const Tensor<T>& logits) {
    out.push_back(segment(predict_probabilities(logits), connectivity).at(0));
  };
  if (frame_independent) {
    for (std::size_t t = 0; t < frames.size(); ++t) {
      stream_sequence<T>(1, [&](std::size_t) { return to_tensor(t); }, params, Mode::eval, sink);
    }
  } else {
    stream_sequence<T>(frames.size(), to_tensor, params, Mode::eval, sink);
  }
  return out;
}

template <typename T>
SegReport evaluate_sequence(const LabeledSequence& seq, NetworkParams<T>& params, Connectivity connectivity,
                            bool frame_independent) {
  validate_sequence(seq);
  return seg_score(seq.labels, segment_sequence(seq.frames, params, connectivity, frame_independent));
}

SegReport select_frames(const SegReport& report, const std::vector<std::size_t>& frames) {
  SegReport out;
  for (const auto& c : report.cells) {
    if (std::find(frames.begin(), frames.end(), c.frame) != frames.end()) out.cells.push_back(c);
  }
  return out;
}

Image overlay(const Image& frame, const InstanceMap& labels) {
  if (!frame.same_dims(labels)) throw ShapeError("overlay: frame and labels differ in size");
  Image out = frame;
  const std::size_t h = labels.height, w = labels.width;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::int32_t l = labels(y, x);
      if (l == 0) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w || labels(y - 1, x) != l ||
                        labels(y + 1, x) != l || labels(y, x - 1) != l || labels(y, x + 1) != l;
      if (edge) out(y, x) = 1.0f;
    }
  }
  return out;
}

template std::vector<InstanceMap> segment_sequence<float>(const std::vector<Image>&, NetworkParams<float>&, Connectivity, bool);
template std::vector<InstanceMap> segment_sequence<double>(const std::vector<Image>&, NetworkParams<double>&, Connectivity, bool);
template SegReport evaluate_sequence<float>(const LabeledSequence&, NetworkParams<float>&, Connectivity, bool);
template SegReport evaluate_sequence<double>(const LabeledSequence&, NetworkParams<double>&, Connectivity, bool);

}  // namespace ulstm

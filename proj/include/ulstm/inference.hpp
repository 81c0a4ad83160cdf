#pragma once

#include <vector>

#include "ulstm/data.hpp"
#include "ulstm/metrics.hpp"
#include "ulstm/network.hpp"

namespace ulstm {

// Streams frames through the network in eval mode from the zero state and
// segments each frame. frame_independent restarts from the zero state at
// every frame.
template <typename T>
std::vector<InstanceMap> segment_sequence(const std::vector<Image>& frames, NetworkParams<T>& params,
                                          Connectivity connectivity = Connectivity::four,
                                          bool frame_independent = false);

template <typename T>
SegReport evaluate_sequence(const LabeledSequence& seq, NetworkParams<T>& params,
                            Connectivity connectivity = Connectivity::four, bool frame_independent = false);

// Ground-truth cells of the listed frames only.
SegReport select_frames(const SegReport& report, const std::vector<std::size_t>& frames);

// Frame with every label boundary pixel set to maximum intensity.
Image overlay(const Image& frame, const InstanceMap& labels);

}  // namespace ulstm

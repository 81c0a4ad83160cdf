#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ulstm/network.hpp"
#include "ulstm/training.hpp"

namespace ulstm {

struct VariantRun {
  Variant variant = Variant::enc_lstm;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  bool finite = true;  // every loss on the curve was finite
  double seg = 0.0;
};

struct VariantSummary {
  Variant variant = Variant::enc_lstm;
  std::vector<VariantRun> runs;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  bool all_finite = true;
};

// Published full-scale figures, printed beside desk results for reference.
struct ReferenceScore {
  Variant variant;
  double mean;
  double std;
};
const std::vector<ReferenceScore>& reference_scores();

// Trains every variant `repeats` times on `train` and scores SEG on `eval`.
// Repeat r uses the same seed for every variant.
std::vector<VariantSummary> compare_variants(const std::vector<LabeledSequence>& train,
                                             const std::vector<LabeledSequence>& eval, const NetworkConfig& base,
                                             const TrainConfig& config, std::size_t repeats,
                                             const std::function<void(const VariantRun&)>& on_run = {});

std::string format_variant_table(const std::vector<VariantSummary>& summaries);

}  // namespace ulstm

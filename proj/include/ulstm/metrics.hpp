#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ulstm/image.hpp"

namespace ulstm {

enum class Connectivity { four = 4, eight = 8 };

Connectivity parse_connectivity(int neighbours);

// Labels foreground components 1, 2, ... in raster-scan discovery order.
InstanceMap connected_components(const BinaryMap& mask, Connectivity connectivity = Connectivity::four);

BinaryMap foreground(const InstanceMap& labels);

// True when every positive label is a single connected component.
bool is_valid_instance_map(const InstanceMap& labels, Connectivity connectivity = Connectivity::four);

struct CellScore {
  std::size_t frame = 0;
  std::int32_t gt_label = 0;
  std::int32_t matched_pred = 0;  // 0 when no prediction covers a strict majority
  double jaccard = 0.0;
};

struct SegReport {
  std::vector<CellScore> cells;

  // Arithmetic mean over every ground-truth cell of every frame; 0 when empty.
  double mean() const;
  void append(const SegReport& other);
};

// For each ground-truth cell A, the predicted component B with the largest
// overlap counts as a match only if |A n B| > |A| / 2; its score is then
// |A n B| / |A u B|, otherwise 0.
SegReport seg_score(const InstanceMap& gt, const InstanceMap& pred, std::size_t frame = 0);
SegReport seg_score(const std::vector<InstanceMap>& gt, const std::vector<InstanceMap>& pred);

// frame,gt_label,matched_pred,jaccard rows plus a header.
void write_seg_csv(std::ostream& os, const SegReport& report);
std::string seg_summary(const SegReport& report);

}  // namespace ulstm

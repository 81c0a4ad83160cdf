#include "ulstm/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ulstm {
namespace {

struct DisjointSet {
  std::vector<std::uint32_t> parent;

  std::uint32_t make() {
    parent.push_back(static_cast<std::uint32_t>(parent.size()));
    return parent.back();
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;
  }
};

}  // namespace

Connectivity parse_connectivity(int neighbours) {
  if (neighbours == 4) return Connectivity::four;
  if (neighbours == 8) return Connectivity::eight;
  throw UsageError("connectivity must be 4 or 8, got " + std::to_string(neighbours));
}

InstanceMap connected_components(const BinaryMap& mask, Connectivity connectivity) {
  const std::size_t h = mask.height, w = mask.width;
  InstanceMap out(h, w, 0);
  // Provisional labels are 1-based indices into the disjoint set (slot 0 unused).
  std::vector<std::uint32_t> provisional(h * w, 0);
  DisjointSet sets;
  sets.make();
  const bool diag = connectivity == Connectivity::eight;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      std::uint32_t neighbours[4];
      std::size_t count = 0;
      if (c > 0 && provisional[r * w + c - 1]) neighbours[count++] = provisional[r * w + c - 1];
      if (r > 0 && provisional[(r - 1) * w + c]) neighbours[count++] = provisional[(r - 1) * w + c];
      if (diag && r > 0 && c > 0 && provisional[(r - 1) * w + c - 1]) neighbours[count++] = provisional[(r - 1) * w + c - 1];
      if (diag && r > 0 && c + 1 < w && provisional[(r - 1) * w + c + 1]) {
        neighbours[count++] = provisional[(r - 1) * w + c + 1];
      }
      if (count == 0) {
        provisional[r * w + c] = sets.make();
        continue;
      }
      std::uint32_t label = neighbours[0];
      for (std::size_t i = 1; i < count; ++i) label = std::min(label, neighbours[i]);
      provisional[r * w + c] = label;
      for (std::size_t i = 0; i < count; ++i) sets.unite(label, neighbours[i]);
    }
  }
  std::vector<std::int32_t> final_label(sets.parent.size(), 0);
  std::int32_t next = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!provisional[i]) continue;
    const std::uint32_t root = sets.find(provisional[i]);
    if (final_label[root] == 0) final_label[root] = ++next;
    out.pixels[i] = final_label[root];
  }
  return out;
}

BinaryMap foreground(const InstanceMap& labels) {
  BinaryMap out(labels.height, labels.width, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) out.pixels[i] = labels.pixels[i] > 0 ? 1 : 0;
  return out;
}

bool is_valid_instance_map(const InstanceMap& labels, Connectivity connectivity) {
  std::map<std::int32_t, BinaryMap> masks;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::int32_t l = labels.pixels[i];
    if (l < 0) return false;
    if (l == 0) continue;
    auto [it, inserted] = masks.try_emplace(l, labels.height, labels.width, 0);
    it->second.pixels[i] = 1;
  }
  for (const auto& [label, mask] : masks) {
    const InstanceMap cc = connected_components(mask, connectivity);
    if (*std::max_element(cc.pixels.begin(), cc.pixels.end()) != 1) return false;
  }
  return true;
}

double SegReport::mean() const {
  if (cells.empty()) return 0.0;
  double s = 0.0;
  for (const CellScore& c : cells) s += c.jaccard;
  return s / static_cast<double>(cells.size());
}

void SegReport::append(const SegReport& other) { cells.insert(cells.end(), other.cells.begin(), other.cells.end()); }

SegReport seg_score(const InstanceMap& gt, const InstanceMap& pred, std::size_t frame) {
  if (!gt.same_dims(pred)) {
    throw UsageError("seg_score: ground truth is " + std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                     " but prediction is " + std::to_string(pred.height) + "x" + std::to_string(pred.width));
  }
  std::map<std::int32_t, std::size_t> gt_area, pred_area;
  std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> overlap;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::int32_t a = gt.pixels[i], b = pred.pixels[i];
    if (a > 0) ++gt_area[a];
    if (b > 0) ++pred_area[b];
    if (a > 0 && b > 0) ++overlap[{a, b}];
  }
  SegReport report;
  for (const auto& [label, area] : gt_area) {
    CellScore score{frame, label, 0, 0.0};
    std::size_t best = 0;
    std::int32_t best_label = 0;
    std::size_t matches = 0;
    for (auto it = overlap.lower_bound({label, 0}); it != overlap.end() && it->first.first == label; ++it) {
      if (2 * it->second > area) ++matches;
      if (it->second > best) {
        best = it->second;
        best_label = it->first.second;
      }
    }
    if (matches > 1) throw std::logic_error("seg_score: more than one prediction covers a strict majority");
    if (2 * best > area) {
      score.matched_pred = best_label;
      score.jaccard = static_cast<double>(best) / static_cast<double>(area + pred_area[best_label] - best);
    }
    report.cells.push_back(score);
  }
  return report;
}

SegReport seg_score(const std::vector<InstanceMap>& gt, const std::vector<InstanceMap>& pred) {
  if (gt.size() != pred.size()) {
    throw UsageError("seg_score: " + std::to_string(gt.size()) + " ground-truth frames vs " +
                     std::to_string(pred.size()) + " predicted");
  }
  SegReport report;
  for (std::size_t t = 0; t < gt.size(); ++t) report.append(seg_score(gt[t], pred[t], t));
  return report;
}

void write_seg_csv(std::ostream& os, const SegReport& report) {
  os << "frame,gt_label,matched_pred,jaccard\n";
  os << std::setprecision(9);
  for (const CellScore& c : report.cells) {
    os << c.frame << ',' << c.gt_label << ',' << c.matched_pred << ',' << c.jaccard << '\n';
  }
}

std::string seg_summary(const SegReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << "SEG " << report.mean() << " over " << report.cells.size()
     << " ground-truth cells";
  return os.str();
}

}  // namespace ulstm

#pragma once

#include <cstddef>

#include "ulstm/data.hpp"
#include "ulstm/rng.hpp"

namespace ulstm {

// Which augmentations are drawn and their ranges. Gray values are never
// altered.
struct AugmentSpec {
  bool flips = true;
  bool rotate90 = true;
  std::size_t crop_height = 0;  // 0 keeps the full frame
  std::size_t crop_width = 0;
  bool reverse = true;
  std::size_t max_temporal_k = 4;  // stride k + 1 with k drawn from [0, max]
  bool affine = true;
  double max_rotation_deg = 15.0;
  double min_scale = 0.9;
  double max_scale = 1.1;
  double max_shear_deg = 5.0;
  bool elastic = true;
  std::size_t elastic_spacing = 16;  // pixels between control points
  double elastic_amplitude = 1.5;    // bound on control-point displacements, pixels

  // Everything off: augmentation returns its input.
  static AugmentSpec identity();
};

// Concrete parameters shared by every frame of one sequence.
struct AugmentDraw {
  bool flip_horizontal = false;
  bool flip_vertical = false;
  int rot90 = 0;  // quarter turns counter-clockwise
  std::size_t crop_y = 0;
  std::size_t crop_x = 0;
  std::size_t crop_height = 0;  // 0 keeps the full frame
  std::size_t crop_width = 0;
  bool reverse = false;
  std::size_t temporal_k = 0;
  double rotation_rad = 0.0;
  double scale = 1.0;
  double shear_rad = 0.0;
  // Control-point displacements on a (gy x gx) grid spanning the output frame.
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::vector<double> grid_dy;
  std::vector<double> grid_dx;

  bool warps() const;
};

// Draws parameters for a sequence of the given size. The temporal stride is
// capped so that at least min_length frames remain. Throws UsageError when
// the crop exceeds the frame.
AugmentDraw draw_augmentation(const AugmentSpec& spec, std::size_t height, std::size_t width, std::size_t length,
                              std::size_t min_length, Rng& rng);

// Applies flips, quarter turns, crop, reverse, temporal stride, then affine
// and elastic warp (bilinear for frames, nearest for labels). Label pieces cut
// off from their cell by the warp are cleared to background.
LabeledSequence apply_augmentation(const LabeledSequence& seq, const AugmentDraw& draw);

LabeledSequence augment(const LabeledSequence& seq, const AugmentSpec& spec, std::uint64_t seed,
                        std::size_t min_length = 1);

// Single-frame building blocks, exposed for tests.
template <typename P>
Grid<P> flip_horizontal(const Grid<P>& g);
template <typename P>
Grid<P> flip_vertical(const Grid<P>& g);
template <typename P>
Grid<P> rotate90(const Grid<P>& g, int quarter_turns);
template <typename P>
Grid<P> crop(const Grid<P>& g, std::size_t y, std::size_t x, std::size_t h, std::size_t w);

}  // namespace ulstm

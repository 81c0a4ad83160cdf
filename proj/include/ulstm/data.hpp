#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ulstm/image.hpp"

namespace ulstm {

// Binary PGM (P5) raster; maxval <= 255 stores one byte per pixel, larger
// values two bytes, big-endian.
struct PgmImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint32_t maxval = 255;
  std::vector<std::uint16_t> pixels;
};

PgmImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const PgmImage& image);

struct LabeledSequence {
  std::string name;
  std::vector<Image> frames;         // values in [0, 1]
  std::vector<InstanceMap> labels;   // same length and dims as frames

  std::size_t length() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames[0].height; }
  std::size_t width() const { return frames.empty() ? 0 : frames[0].width; }
};

// Throws LoadError on empty sequences, length mismatches, or ragged dims.
void validate_sequence(const LabeledSequence& seq);

std::string frame_file_name(std::size_t index);  // t###.pgm
std::string label_file_name(std::size_t index);  // man_seg###.pgm

// Frames t###.pgm from dir; labels man_seg###.pgm from <dir>_GT when that
// directory exists, otherwise from dir itself. Frames are divided by their
// container maxval.
LabeledSequence load_sequence(const std::filesystem::path& dir);
// Frames only, for inference on unlabeled data.
std::vector<Image> load_frames(const std::filesystem::path& dir);
// Every sequence directory under root (names not ending in _GT), sorted.
std::vector<LabeledSequence> load_dataset(const std::filesystem::path& root);
std::vector<std::filesystem::path> sequence_dirs(const std::filesystem::path& root);

// Writes <root>/<name>/t###.pgm (16-bit) and <root>/<name>_GT/man_seg###.pgm.
void write_sequence(const std::filesystem::path& root, const LabeledSequence& seq);

PgmImage to_pgm(const Image& image, std::uint32_t maxval = 65535);
PgmImage to_pgm(const InstanceMap& labels);
InstanceMap instance_map_from_pgm(const PgmImage& pgm);

}  // namespace ulstm

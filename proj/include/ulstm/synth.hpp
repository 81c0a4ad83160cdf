#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ulstm/data.hpp"

namespace ulstm {

enum class Scenario { basic, touching, vanishing, mixed };

std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);

struct SynthSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t frames = 20;
  Scenario scenario = Scenario::basic;
  std::size_t cells = 4;
  double min_radius = 4.0;  // pixels, semi-axis range
  double max_radius = 7.0;
  double max_speed = 1.0;   // pixels per frame
  double background = 0.15;
  double min_intensity = 0.55;
  double max_intensity = 0.85;
  double noise = 0.03;      // Gaussian standard deviation
  std::size_t spatial_multiple = 8;

  void validate() const;
};

// One scripted event: "frame kind cell_id params...".
struct SceneEvent {
  std::size_t frame = 0;
  std::string kind;
  std::int32_t cell = 0;
  std::vector<double> params;
};

struct SynthSequence {
  LabeledSequence sequence;
  std::vector<SceneEvent> events;

  // Frames in which some cell is rendered at background intensity.
  std::vector<std::size_t> vanished_frames() const;
};

SynthSequence synth_generate(const SynthSpec& spec, std::uint64_t seed, const std::string& name = "seq");

void write_scene(const std::filesystem::path& path, const std::vector<SceneEvent>& events);
std::vector<SceneEvent> read_scene(const std::filesystem::path& path);
std::vector<std::size_t> vanished_frames(const std::vector<SceneEvent>& events);

// Writes `count` sequences named 01, 02, ... in the dataset layout, each with
// its scene.txt beside the labels.
std::vector<SynthSequence> synth_dataset(const std::filesystem::path& root, const SynthSpec& spec, std::size_t count,
                                         std::uint64_t seed);

}  // namespace ulstm

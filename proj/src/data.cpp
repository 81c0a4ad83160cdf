#include "ulstm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ulstm {

namespace fs = std::filesystem;

namespace {

// Next whitespace-delimited header token, skipping # comments.
std::string header_token(std::istream& in, const fs::path& path) {
  std::string tok;
  while (true) {
    const int ch = in.get();
    if (ch == EOF) throw FormatError(path.string() + ": truncated PGM header");
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      if (!tok.empty()) return tok;
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
}

std::size_t header_number(std::istream& in, const fs::path& path, const char* what) {
  const std::string tok = header_token(in, path);
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size()) throw FormatError(path.string() + ": bad PGM " + what + " '" + tok + "'");
  return v;
}

std::string indexed(const char* prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03zu.pgm", prefix, index);
  return buf;
}

// Indices of files named <prefix>NNN.pgm in dir, sorted.
std::vector<std::size_t> indexed_files(const fs::path& dir, const std::string& prefix) {
  std::vector<std::size_t> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() <= prefix.size() + 4 || name.rfind(prefix, 0) != 0 || name.substr(name.size() - 4) != ".pgm") {
      continue;
    }
    const std::string digits = name.substr(prefix.size(), name.size() - prefix.size() - 4);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(c); })) continue;
    out.push_back(std::stoul(digits));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Image normalised(const PgmImage& pgm) {
  Image img(pgm.height, pgm.width);
  const float scale = 1.0f / static_cast<float>(pgm.maxval);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<float>(pgm.pixels[i]) * scale;
  return img;
}

}  // namespace

PgmImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open image '" + path.string() + "'");
  if (header_token(in, path) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  PgmImage img;
  img.width = header_number(in, path, "width");
  img.height = header_number(in, path, "height");
  const std::size_t maxval = header_number(in, path, "maxval");
  if (maxval == 0 || maxval > 65535) throw FormatError(path.string() + ": maxval out of range");
  img.maxval = static_cast<std::uint32_t>(maxval);
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t n = img.width * img.height;
  std::vector<unsigned char> raw(n * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw FormatError(path.string() + ": truncated PGM data");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels[i] = bytes_per == 1 ? raw[i] : static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    if (img.pixels[i] > img.maxval) throw FormatError(path.string() + ": pixel exceeds maxval");
  }
  return img;
}

void write_pgm(const fs::path& path, const PgmImage& img) {
  if (img.pixels.size() != img.width * img.height) throw UsageError("write_pgm: pixel count does not match dims");
  if (img.maxval == 0 || img.maxval > 65535) throw UsageError("write_pgm: maxval out of range");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "P5\n" << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
  std::vector<unsigned char> raw;
  const bool wide = img.maxval > 255;
  raw.reserve(img.pixels.size() * (wide ? 2 : 1));
  for (std::uint16_t v : img.pixels) {
    if (v > img.maxval) throw UsageError("write_pgm: pixel exceeds maxval");
    if (wide) raw.push_back(static_cast<unsigned char>(v >> 8));
    raw.push_back(static_cast<unsigned char>(v & 0xff));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void validate_sequence(const LabeledSequence& seq) {
  if (seq.frames.empty()) throw LoadError("sequence '" + seq.name + "' has no frames");
  if (seq.frames.size() != seq.labels.size()) {
    throw LoadError("sequence '" + seq.name + "': " + std::to_string(seq.frames.size()) + " frames but " +
                    std::to_string(seq.labels.size()) + " label maps");
  }
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    if (!seq.frames[t].same_dims(seq.frames[0]) || !seq.labels[t].same_dims(seq.frames[0])) {
      throw LoadError("sequence '" + seq.name + "': frame " + std::to_string(t) + " dimensions differ");
    }
  }
}

std::string frame_file_name(std::size_t index) { return indexed("t", index); }
std::string label_file_name(std::size_t index) { return indexed("man_seg", index); }

std::vector<Image> load_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("sequence directory '" + dir.string() + "' does not exist");
  std::vector<Image> frames;
  for (std::size_t idx : indexed_files(dir, "t")) {
    frames.push_back(normalised(read_pgm(dir / frame_file_name(idx))));
  }
  if (frames.empty()) throw LoadError("no t###.pgm frames in '" + dir.string() + "'");
  for (const auto& f : frames) {
    if (!f.same_dims(frames[0])) throw LoadError("frames in '" + dir.string() + "' differ in size");
  }
  return frames;
}

LabeledSequence load_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("sequence directory '" + dir.string() + "' does not exist");
  fs::path gt = dir;
  gt += "_GT";
  if (!fs::is_directory(gt)) gt = dir;
  LabeledSequence seq;
  seq.name = dir.filename().string();
  const auto indices = indexed_files(dir, "t");
  if (indices.empty()) throw LoadError("no t###.pgm frames in '" + dir.string() + "'");
  for (std::size_t idx : indices) {
    const fs::path label_path = gt / label_file_name(idx);
    if (!fs::exists(label_path)) throw LoadError("missing label file '" + label_path.string() + "'");
    const PgmImage frame = read_pgm(dir / frame_file_name(idx));
    const PgmImage label = read_pgm(label_path);
    if (frame.width != label.width || frame.height != label.height) {
      throw LoadError("'" + label_path.string() + "' is " + std::to_string(label.width) + "x" +
                      std::to_string(label.height) + " but its frame is " + std::to_string(frame.width) + "x" +
                      std::to_string(frame.height));
    }
    seq.frames.push_back(normalised(frame));
    seq.labels.push_back(instance_map_from_pgm(label));
  }
  validate_sequence(seq);
  return seq;
}

std::vector<fs::path> sequence_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw LoadError("dataset root '" + root.string() + "' does not exist");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || (name.size() >= 3 && name.substr(name.size() - 3) == "_GT")) continue;
    out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<LabeledSequence> load_dataset(const fs::path& root) {
  std::vector<LabeledSequence> out;
  for (const auto& dir : sequence_dirs(root)) out.push_back(load_sequence(dir));
  if (out.empty()) throw LoadError("dataset root '" + root.string() + "' holds no sequences");
  return out;
}

PgmImage to_pgm(const Image& image, std::uint32_t maxval) {
  PgmImage p{image.height, image.width, maxval, std::vector<std::uint16_t>(image.size())};
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image.pixels[i]), 0.0, 1.0);
    p.pixels[i] = static_cast<std::uint16_t>(std::lround(v * maxval));
  }
  return p;
}

PgmImage to_pgm(const InstanceMap& labels) {
  PgmImage p{labels.height, labels.width, 65535, std::vector<std::uint16_t>(labels.size())};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::int32_t l = labels.pixels[i];
    if (l < 0 || l > 65535) throw UsageError("label " + std::to_string(l) + " does not fit a 16-bit PGM");
    p.pixels[i] = static_cast<std::uint16_t>(l);
  }
  return p;
}

InstanceMap instance_map_from_pgm(const PgmImage& pgm) {
  InstanceMap m(pgm.height, pgm.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.pixels[i] = pgm.pixels[i];
  return m;
}

void write_sequence(const fs::path& root, const LabeledSequence& seq) {
  validate_sequence(seq);
  const fs::path dir = root / seq.name;
  const fs::path gt = root / (seq.name + "_GT");
  fs::create_directories(dir);
  fs::create_directories(gt);
  for (std::size_t t = 0; t < seq.length(); ++t) {
    write_pgm(dir / frame_file_name(t), to_pgm(seq.frames[t]));
    write_pgm(gt / label_file_name(t), to_pgm(seq.labels[t]));
  }
}

}  // namespace ulstm

#include "ulstm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "ulstm/rng.hpp"

namespace ulstm {

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::basic:
      return "basic";
    case Scenario::touching:
      return "touching";
    case Scenario::vanishing:
      return "vanishing";
    case Scenario::mixed:
      return "mixed";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& name) {
  for (Scenario s : {Scenario::basic, Scenario::touching, Scenario::vanishing, Scenario::mixed}) {
    if (scenario_name(s) == name) return s;
  }
  throw UsageError("unknown scenario '" + name + "' (expected basic, touching, vanishing or mixed)");
}

void SynthSpec::validate() const {
  if (height == 0 || width == 0 || frames == 0) throw UsageError("synthetic canvas and length must be positive");
  if (spatial_multiple > 0 && (height % spatial_multiple != 0 || width % spatial_multiple != 0)) {
    throw ShapeError("canvas " + std::to_string(height) + "x" + std::to_string(width) + " is not a multiple of " +
                     std::to_string(spatial_multiple) + "; network inputs must be divisible by 2^(levels-1)");
  }
  if (!(min_radius > 0.0 && max_radius >= min_radius)) throw UsageError("invalid cell radius range");
  if (noise < 0.0) throw UsageError("noise must be non-negative");
}

namespace {

struct Cell {
  std::int32_t id = 0;
  double y = 0, x = 0;    // centre
  double a = 0, b = 0;    // semi-axes
  double angle = 0;
  double intensity = 0.7;
  double vy = 0, vx = 0;
  bool integer_steps = false;  // moves only by whole pixels
  bool frozen = false;
  bool alive = true;
  std::int32_t sibling = -1;  // ignored by spacing checks
};

// Normalised elliptical radius of (py, px) relative to c; <= 1 inside.
double ellipse_radius(const Cell& c, double py, double px) {
  const double dy = py - c.y, dx = px - c.x;
  const double cs = std::cos(c.angle), sn = std::sin(c.angle);
  const double u = (dx * cs + dy * sn) / c.a;
  const double v = (-dx * sn + dy * cs) / c.b;
  return std::sqrt(u * u + v * v);
}

// Conservative clearance between two cells treated as discs of their major axis.
double clearance(const Cell& p, const Cell& q) {
  return std::hypot(p.y - q.y, p.x - q.x) - std::max(p.a, p.b) - std::max(q.a, q.b);
}

bool inside_canvas(const Cell& c, const SynthSpec& s) {
  const double r = std::max(c.a, c.b) + 1.0;
  return c.y - r >= 0 && c.x - r >= 0 && c.y + r <= static_cast<double>(s.height) - 1 &&
         c.x + r <= static_cast<double>(s.width) - 1;
}

class Scene {
 public:
  Scene(const SynthSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

  Cell random_cell() {
    Cell c;
    c.id = next_id_++;
    c.a = rng_.uniform(spec_.min_radius, spec_.max_radius);
    c.b = rng_.uniform(spec_.min_radius, spec_.max_radius);
    c.angle = rng_.uniform(0.0, std::numbers::pi);
    c.intensity = rng_.uniform(spec_.min_intensity, spec_.max_intensity);
    const double speed = rng_.uniform(0.0, spec_.max_speed);
    const double dir = rng_.uniform(0.0, 2.0 * std::numbers::pi);
    c.vy = speed * std::sin(dir);
    c.vx = speed * std::cos(dir);
    return c;
  }

  // Places c at a random free position; throws when the canvas is too full.
  void place(Cell& c, double min_gap) {
    for (int attempt = 0; attempt < 2000; ++attempt) {
      const double r = std::max(c.a, c.b) + 1.0;
      c.y = rng_.uniform(r, static_cast<double>(spec_.height) - 1 - r);
      c.x = rng_.uniform(r, static_cast<double>(spec_.width) - 1 - r);
      if (c.integer_steps) {
        c.y = std::round(c.y);
        c.x = std::round(c.x);
      }
      if (inside_canvas(c, spec_) && fits(c, min_gap, -1)) {
        cells_.push_back(c);
        return;
      }
    }
    throw UsageError("synthetic scene is overcrowded: cannot place cell " + std::to_string(c.id) + " on a " +
                     std::to_string(spec_.height) + "x" + std::to_string(spec_.width) + " canvas");
  }

  bool fits(const Cell& c, double min_gap, std::int32_t ignore) const {
    for (const Cell& o : cells_) {
      if (!o.alive || o.id == c.id || o.id == ignore) continue;
      if (clearance(c, o) < min_gap) return false;
    }
    return true;
  }

  std::vector<Cell>& cells() { return cells_; }
  std::int32_t take_id() { return next_id_++; }
  Rng& rng() { return rng_; }

 private:
  const SynthSpec& spec_;
  Rng& rng_;
  std::vector<Cell> cells_;
  std::int32_t next_id_ = 1;
};

struct Frame {
  Image image;
  InstanceMap labels;
};

Frame render(const SynthSpec& spec, const std::vector<Cell>& cells, const std::set<std::int32_t>& hidden, Rng& noise) {
  const std::size_t h = spec.height, w = spec.width;
  InstanceMap labels(h, w);
  std::vector<double> best(h * w, 1.0);
  std::vector<double> cover(h * w, 0.0);
  std::vector<double> level(h * w, spec.background);
  for (const Cell& c : cells) {
    if (!c.alive) continue;
    const double amp = hidden.count(c.id) ? spec.background : c.intensity;
    const double scale = std::min(c.a, c.b);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double r = ellipse_radius(c, static_cast<double>(y), static_cast<double>(x));
        const std::size_t i = y * w + x;
        // Soft edge about one pixel wide.
        const double edge = 1.0 / (1.0 + std::exp(-(1.0 - r) * scale / 0.6));
        if (edge > cover[i]) {
          cover[i] = edge;
          level[i] = spec.background + (amp - spec.background) * edge;
        }
        if (r <= 1.0 && r < best[i]) {
          best[i] = r;
          labels.pixels[i] = c.id;
        }
      }
    }
  }
  // One background pixel between different cells under 4-connectivity.
  InstanceMap separated = labels;
  std::vector<bool> gap(h * w, false);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::int32_t l = labels(y, x);
      if (l == 0) continue;
      const std::int32_t nb[4] = {y > 0 ? labels(y - 1, x) : 0, y + 1 < h ? labels(y + 1, x) : 0,
                                  x > 0 ? labels(y, x - 1) : 0, x + 1 < w ? labels(y, x + 1) : 0};
      for (std::int32_t m : nb) {
        if (m > 0 && m < l) {
          separated(y, x) = 0;
          gap[y * w + x] = true;
          break;
        }
      }
    }
  }
  Image image(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    double v = level[i];
    if (gap[i]) v = spec.background + 0.5 * (v - spec.background);
    if (spec.noise > 0.0) v += spec.noise * noise.normal();
    image.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return {std::move(image), std::move(separated)};
}

void add_event(std::vector<SceneEvent>& events, std::size_t frame, const std::string& kind, std::int32_t cell,
               std::vector<double> params = {}) {
  events.push_back({frame, kind, cell, std::move(params)});
}

}  // namespace

std::vector<std::size_t> vanished_frames(const std::vector<SceneEvent>& events) {
  std::set<std::size_t> frames;
  for (const auto& e : events) {
    if (e.kind == "vanish") frames.insert(e.frame);
  }
  return {frames.begin(), frames.end()};
}

std::vector<std::size_t> SynthSequence::vanished_frames() const { return ulstm::vanished_frames(events); }

SynthSequence synth_generate(const SynthSpec& spec, std::uint64_t seed, const std::string& name) {
  spec.validate();
  Rng rng(mix_seed(seed, 0x73796e));
  Rng noise(mix_seed(seed, 0x6e6f6973));
  Scene scene(spec, rng);
  SynthSequence out;
  out.sequence.name = name;
  auto& events = out.events;
  const std::size_t T = spec.frames;
  constexpr double kGap = 3.0;

  const bool vanishing = spec.scenario == Scenario::vanishing || spec.scenario == Scenario::mixed;
  const std::size_t free_cells = spec.scenario == Scenario::mixed ? std::max<std::size_t>(spec.cells, 4) - 2
                                                                   : spec.cells;

  // Touching pair: two cells on a collision course that meet at frame 5 and
  // then stay in contact.
  std::int32_t touch_a = 0, touch_b = 0;
  std::size_t touch_frame = std::min<std::size_t>(5, T - 1);
  if (spec.scenario == Scenario::touching || spec.scenario == Scenario::mixed) {
    Cell a = scene.random_cell();
    Cell b = scene.random_cell();
    a.angle = b.angle = 0.0;
    const double ra = a.a, rb = b.a;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 2000) throw UsageError("synthetic scene is overcrowded: cannot place the touching pair");
      const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double speed = std::max(0.5, spec.max_speed);
      const double contact = ra + rb - 0.5;  // slight overlap so boundaries touch
      const double cy = rng.uniform(0.0, static_cast<double>(spec.height));
      const double cx = rng.uniform(0.0, static_cast<double>(spec.width));
      const double uy = std::sin(dir), ux = std::cos(dir);
      const double travel = speed * static_cast<double>(touch_frame);
      a.y = cy - uy * (contact / 2 + travel);
      a.x = cx - ux * (contact / 2 + travel);
      b.y = cy + uy * (contact / 2 + travel);
      b.x = cx + ux * (contact / 2 + travel);
      a.vy = uy * speed;
      a.vx = ux * speed;
      b.vy = -uy * speed;
      b.vx = -ux * speed;
      Cell a_end = a, b_end = b;
      a_end.y += a.vy * touch_frame;
      a_end.x += a.vx * touch_frame;
      b_end.y += b.vy * touch_frame;
      b_end.x += b.vx * touch_frame;
      if (inside_canvas(a, spec) && inside_canvas(b, spec) && inside_canvas(a_end, spec) &&
          inside_canvas(b_end, spec) && scene.fits(a, kGap, -1) && scene.fits(b, kGap, -1)) {
        scene.cells().push_back(a);
        scene.cells().push_back(b);
        break;
      }
    }
    touch_a = a.id;
    touch_b = b.id;
    add_event(events, touch_frame, "touch", touch_a, {static_cast<double>(touch_b)});
  }

  for (std::size_t i = 0; i < free_cells; ++i) {
    Cell c = scene.random_cell();
    c.integer_steps = vanishing;
    scene.place(c, kGap);
  }
  for (const Cell& c : scene.cells()) {
    add_event(events, 0, "appear", c.id, {c.y, c.x, c.a, c.b, c.angle, c.intensity});
  }

  // Mixed scenes reserve the last free cell for a division at mid-sequence.
  std::int32_t mother = 0;
  const std::size_t divide_frame = T / 2;
  if (spec.scenario == Scenario::mixed && T >= 3) mother = scene.cells().back().id;

  // Vanishing: one cell hidden for frames 6-7, then one further event per
  // eight frames on another cell, one or two frames long.
  std::vector<std::pair<std::size_t, std::int32_t>> hide;  // (frame, cell)
  std::vector<std::pair<std::size_t, std::size_t>> freeze_windows;
  std::vector<std::int32_t> freeze_cells;
  if (vanishing) {
    std::vector<std::int32_t> candidates;
    for (const Cell& c : scene.cells()) {
      if (c.id != touch_a && c.id != touch_b && c.id != mother) candidates.push_back(c.id);
    }
    if (candidates.empty()) throw UsageError("vanishing scenario needs at least one free cell");
    std::size_t start = 6;
    std::size_t length = 2;
    std::size_t k = 0;
    while (start < T) {
      const std::int32_t id = candidates[(k + rng.below(candidates.size())) % candidates.size()];
      const std::size_t end = std::min(T, start + length);
      for (std::size_t f = start; f < end; ++f) hide.emplace_back(f, id);
      freeze_cells.push_back(id);
      freeze_windows.emplace_back(start > 0 ? start - 1 : 0, end);
      start += 8;
      length = 1 + rng.below(2);
      ++k;
    }
    for (const auto& [f, id] : hide) add_event(events, f, "vanish", id);
  }

  for (std::size_t t = 0; t < T; ++t) {
    if (mother != 0 && t == divide_frame) {
      auto& cells = scene.cells();
      auto it = std::find_if(cells.begin(), cells.end(), [&](const Cell& c) { return c.id == mother; });
      if (it != cells.end() && it->alive) {
        Cell m = *it;
        it->alive = false;
        const double off = std::max(m.a, m.b) * 0.55;
        const double uy = std::sin(m.angle), ux = std::cos(m.angle);
        std::int32_t ids[2];
        for (int s = 0; s < 2; ++s) {
          Cell d = m;
          d.id = scene.take_id();
          d.a = m.a * 0.7;
          d.b = m.b * 0.7;
          const double sign = s == 0 ? -1.0 : 1.0;
          d.y = m.y + sign * uy * off;
          d.x = m.x + sign * ux * off;
          d.vy = sign * uy * 0.5;
          d.vx = sign * ux * 0.5;
          d.integer_steps = false;
          ids[s] = d.id;
          cells.push_back(d);
        }
        cells[cells.size() - 2].sibling = ids[1];
        cells[cells.size() - 1].sibling = ids[0];
        add_event(events, t, "divide", mother, {static_cast<double>(ids[0]), static_cast<double>(ids[1])});
      }
    }
    std::set<std::int32_t> hidden;
    for (const auto& [f, id] : hide) {
      if (f == t) hidden.insert(id);
    }
    Frame fr = render(spec, scene.cells(), hidden, noise);
    out.sequence.frames.push_back(std::move(fr.image));
    out.sequence.labels.push_back(std::move(fr.labels));

    // Advance positions for the next frame.
    for (Cell& c : scene.cells()) {
      if (!c.alive) continue;
      bool frozen = false;
      for (std::size_t i = 0; i < freeze_cells.size(); ++i) {
        if (freeze_cells[i] == c.id && t + 1 >= freeze_windows[i].first && t + 1 <= freeze_windows[i].second) {
          frozen = true;
        }
      }
      if (frozen) continue;
      if ((c.id == touch_a || c.id == touch_b) && t + 1 > touch_frame) continue;  // stay in contact
      Cell next = c;
      if (c.integer_steps) {
        if (rng.coin(0.3)) {
          const int dir = static_cast<int>(rng.below(4));
          next.y += dir == 0 ? 1 : dir == 1 ? -1 : 0;
          next.x += dir == 2 ? 1 : dir == 3 ? -1 : 0;
        }
      } else {
        next.y += c.vy;
        next.x += c.vx;
      }
      const bool pair = c.id == touch_a || c.id == touch_b;
      const std::int32_t partner = c.id == touch_a ? touch_b : c.id == touch_b ? touch_a : c.sibling;
      if (inside_canvas(next, spec) && scene.fits(next, pair ? -100.0 : kGap, partner)) {
        if (pair && !scene.fits(next, kGap, partner)) continue;
        c = next;
      } else if (!pair) {
        c.vy = -c.vy;
        c.vx = -c.vx;
      }
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const SceneEvent& a, const SceneEvent& b) { return a.frame < b.frame; });
  return out;
}

void write_scene(const std::filesystem::path& path, const std::vector<SceneEvent>& events) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "# frame kind cell_id params...\n";
  for (const auto& e : events) {
    out << e.frame << ' ' << e.kind << ' ' << e.cell;
    for (double p : e.params) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), " %.6g", p);
      out << buf;
    }
    out << '\n';
  }
}

std::vector<SceneEvent> read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open scene manifest '" + path.string() + "'");
  std::vector<SceneEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    SceneEvent e;
    if (!(ss >> e.frame >> e.kind >> e.cell)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'frame kind cell_id params...'");
    }
    double p;
    while (ss >> p) e.params.push_back(p);
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<SynthSequence> synth_dataset(const std::filesystem::path& root, const SynthSpec& spec, std::size_t count,
                                         std::uint64_t seed) {
  spec.validate();
  std::vector<SynthSequence> out;
  std::filesystem::create_directories(root);
  for (std::size_t i = 0; i < count; ++i) {
    char name[24];
    std::snprintf(name, sizeof(name), "%02zu", i + 1);
    SynthSequence s = synth_generate(spec, mix_seed(seed, i), name);
    write_sequence(root, s.sequence);
    write_scene(root / (std::string(name) + "_GT") / "scene.txt", s.events);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ulstm

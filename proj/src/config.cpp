#include "ulstm/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ulstm {

namespace {

enum class Kind { count, real, flag, list, ratio, variant, crop, class_weights, connectivity };

struct KeySpec {
  const char* key;
  const char* fallback;
  Kind kind;
};

// Defaults mirror the module defaults; desk-scale width 1/8.
const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"levels", "4", Kind::count},
      {"depths", "128,256,512,1024", Kind::list},
      {"clstm_kernels", "3,3,3,3", Kind::list},
      {"variant", "enclstm", Kind::variant},
      {"width_multiplier", "1/8", Kind::ratio},
      {"num_classes", "2", Kind::count},
      {"leaky_slope", "0.01", Kind::real},
      {"bn_momentum", "0.1", Kind::real},
      {"bn_epsilon", "1e-05", Kind::real},
      {"tau", "5", Kind::count},
      {"batch_sequences", "3", Kind::count},
      {"iterations", "1500", Kind::count},
      {"seed", "1", Kind::count},
      {"checkpoint_interval", "0", Kind::count},
      {"frame_independent", "false", Kind::flag},
      {"learning_rate", "0.0001", Kind::real},
      {"rmsprop_decay", "0.9", Kind::real},
      {"rmsprop_epsilon", "1e-10", Kind::real},
      {"w0", "10", Kind::real},
      {"sigma", "5", Kind::real},
      {"class_weights", "auto", Kind::class_weights},
      {"flips", "true", Kind::flag},
      {"rotate90", "true", Kind::flag},
      {"crop", "0", Kind::crop},
      {"reverse", "true", Kind::flag},
      {"temporal_k_max", "4", Kind::count},
      {"affine", "true", Kind::flag},
      {"rotation_deg", "15", Kind::real},
      {"scale_min", "0.9", Kind::real},
      {"scale_max", "1.1", Kind::real},
      {"shear_deg", "5", Kind::real},
      {"elastic", "true", Kind::flag},
      {"elastic_spacing", "16", Kind::count},
      {"elastic_amplitude", "1.5", Kind::real},
      {"connectivity", "4", Kind::connectivity},
      {"repeats", "3", Kind::count},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw UsageError("config '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw UsageError("config '" + key + "': expected a number, got '" + v + "'");
  return out;
}

bool to_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_count(key, trim(item)));
  if (out.empty()) throw UsageError("config '" + key + "': empty list");
  return out;
}

std::pair<std::size_t, std::size_t> to_crop(const std::string& key, const std::string& v) {
  const auto x = v.find('x');
  if (x == std::string::npos) {
    const auto s = to_count(key, v);
    return {s, s};
  }
  return {to_count(key, v.substr(0, x)), to_count(key, v.substr(x + 1))};
}

void check_value(const KeySpec& spec, const std::string& v) {
  const std::string key = spec.key;
  switch (spec.kind) {
    case Kind::count:
      to_count(key, v);
      break;
    case Kind::real:
      to_real(key, v);
      break;
    case Kind::flag:
      to_flag(key, v);
      break;
    case Kind::list:
      to_list(key, v);
      break;
    case Kind::ratio:
      Ratio::parse(v);
      break;
    case Kind::variant:
      parse_variant(v);
      break;
    case Kind::crop:
      to_crop(key, v);
      break;
    case Kind::class_weights:
      if (v != "auto") {
        const auto comma = v.find(',');
        if (comma == std::string::npos) throw UsageError("config 'class_weights': expected 'auto' or 'bg,fg'");
        to_real(key, trim(v.substr(0, comma)));
        to_real(key, trim(v.substr(comma + 1)));
      }
      break;
    case Kind::connectivity:
      parse_connectivity(static_cast<int>(to_count(key, v)));
      break;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : key_table()) values_.emplace_back(k.key, k.fallback);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.emplace_back(k.key);
  return out;
}

bool RunConfig::has_key(const std::string& key) const {
  return std::any_of(values_.begin(), values_.end(), [&](const auto& kv) { return kv.first == key; });
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  const auto& table = key_table();
  const auto it = std::find_if(table.begin(), table.end(), [&](const KeySpec& k) { return key == k.key; });
  if (it == table.end()) throw UsageError("unknown config key '" + key + "'");
  check_value(*it, value);
  for (auto& kv : values_) {
    if (kv.first == key) kv.second = value;
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  for (const auto& kv : values_) {
    if (kv.first == key) return kv.second;
  }
  throw UsageError("unknown config key '" + key + "'");
}

void RunConfig::parse_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  parse_text(ss.str(), path.string());
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void RunConfig::write_resolved(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.resolved", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + (dir / "config.resolved").string() + "'");
  out << resolved_text();
}

NetworkConfig RunConfig::network() const {
  NetworkConfig c;
  c.levels = to_count("levels", get("levels"));
  c.base_depths = to_list("depths", get("depths"));
  c.clstm_kernels = to_list("clstm_kernels", get("clstm_kernels"));
  c.variant = parse_variant(get("variant"));
  c.width_multiplier = Ratio::parse(get("width_multiplier"));
  c.num_classes = to_count("num_classes", get("num_classes"));
  if (c.num_classes != 2) throw UsageError("config 'num_classes': only two-class segmentation is supported");
  c.leaky_slope = to_real("leaky_slope", get("leaky_slope"));
  c.bn_momentum = to_real("bn_momentum", get("bn_momentum"));
  c.bn_epsilon = to_real("bn_epsilon", get("bn_epsilon"));
  c.validate();
  return c;
}

TrainConfig RunConfig::training() const {
  TrainConfig t;
  t.tau = to_count("tau", get("tau"));
  t.batch_sequences = to_count("batch_sequences", get("batch_sequences"));
  t.iterations = to_count("iterations", get("iterations"));
  t.seed = to_count("seed", get("seed"));
  t.checkpoint_interval = to_count("checkpoint_interval", get("checkpoint_interval"));
  t.frame_independent = to_flag("frame_independent", get("frame_independent"));
  t.optimizer.learning_rate = to_real("learning_rate", get("learning_rate"));
  t.optimizer.decay = to_real("rmsprop_decay", get("rmsprop_decay"));
  t.optimizer.epsilon = to_real("rmsprop_epsilon", get("rmsprop_epsilon"));
  t.weights.w0 = to_real("w0", get("w0"));
  t.weights.sigma = to_real("sigma", get("sigma"));
  const std::string& cw = get("class_weights");
  t.auto_class_weights = cw == "auto";
  if (!t.auto_class_weights) {
    const auto comma = cw.find(',');
    t.weights.wc_background = to_real("class_weights", trim(cw.substr(0, comma)));
    t.weights.wc_foreground = to_real("class_weights", trim(cw.substr(comma + 1)));
  }
  AugmentSpec& a = t.augment;
  a.flips = to_flag("flips", get("flips"));
  a.rotate90 = to_flag("rotate90", get("rotate90"));
  std::tie(a.crop_height, a.crop_width) = to_crop("crop", get("crop"));
  a.reverse = to_flag("reverse", get("reverse"));
  a.max_temporal_k = to_count("temporal_k_max", get("temporal_k_max"));
  a.affine = to_flag("affine", get("affine"));
  a.max_rotation_deg = to_real("rotation_deg", get("rotation_deg"));
  a.min_scale = to_real("scale_min", get("scale_min"));
  a.max_scale = to_real("scale_max", get("scale_max"));
  a.max_shear_deg = to_real("shear_deg", get("shear_deg"));
  a.elastic = to_flag("elastic", get("elastic"));
  a.elastic_spacing = to_count("elastic_spacing", get("elastic_spacing"));
  a.elastic_amplitude = to_real("elastic_amplitude", get("elastic_amplitude"));
  t.validate();
  return t;
}

Connectivity RunConfig::connectivity() const {
  return parse_connectivity(static_cast<int>(to_count("connectivity", get("connectivity"))));
}

std::size_t RunConfig::repeats() const { return to_count("repeats", get("repeats")); }

}  // namespace ulstm

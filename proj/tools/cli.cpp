#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>

#include "ulstm/compare.hpp"
#include "ulstm/config.hpp"
#include "ulstm/data.hpp"
#include "ulstm/gradcheck.hpp"
#include "ulstm/inference.hpp"
#include "ulstm/kernels.hpp"
#include "ulstm/synth.hpp"
#include "ulstm/training.hpp"

namespace ulstm::cli {

namespace fs = std::filesystem;

namespace {

// A failed internal gate; reported with exit code kFailed.
class GateFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_file, "key = value configuration file");
  cmd->add_option("--set", flags.overrides, "Override one config key (key=value); repeatable");
}

RunConfig resolve_config(const ConfigFlags& flags) {
  RunConfig cfg;
  if (!flags.config_file.empty()) cfg.load_file(flags.config_file);
  for (const auto& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

bool has_frames(const fs::path& dir) { return fs::exists(dir / frame_file_name(0)); }

// A dataset root, or a single sequence directory.
std::vector<LabeledSequence> load_labeled(const fs::path& data) {
  if (!fs::is_directory(data)) throw LoadError("data directory '" + data.string() + "' does not exist");
  if (has_frames(data)) return {load_sequence(data)};
  auto ds = load_dataset(data);
  if (ds.empty()) throw LoadError("no sequences under '" + data.string() + "'");
  return ds;
}

std::vector<fs::path> frame_dirs(const fs::path& data) {
  if (!fs::is_directory(data)) throw LoadError("data directory '" + data.string() + "' does not exist");
  if (has_frames(data)) return {data};
  auto dirs = sequence_dirs(data);
  if (dirs.empty()) throw LoadError("no sequences under '" + data.string() + "'");
  return dirs;
}

std::string mask_file_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mask%03zu.pgm", t);
  return buf;
}

std::string overlay_file_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "overlay%03zu.pgm", t);
  return buf;
}

// frame index -> path for mask###.pgm or man_seg###.pgm files in dir.
std::map<std::size_t, fs::path> label_files(const fs::path& dir) {
  static const std::regex pattern(R"((?:mask|man_seg)(\d+)\.pgm)");
  std::map<std::size_t, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) out[std::stoul(m[1].str())] = entry.path();
  }
  return out;
}

std::string strip_gt(const std::string& name) {
  return name.size() > 3 && name.ends_with("_GT") ? name.substr(0, name.size() - 3) : name;
}

// --------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t seqs = 2;
  std::size_t frames = 20;
  std::size_t size = 64;
  std::size_t cells = 4;
  std::string scenario = "basic";
  std::uint64_t seed = 1;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthSpec spec;
  spec.height = spec.width = a.size;
  spec.frames = a.frames;
  spec.cells = a.cells;
  spec.scenario = parse_scenario(a.scenario);
  if (a.size < 64) {
    // Shrink cells with the canvas so small test scenes still fit.
    const double f = static_cast<double>(a.size) / 64.0;
    spec.min_radius = std::max(2.0, spec.min_radius * f);
    spec.max_radius = std::max(spec.min_radius, spec.max_radius * f);
  }
  spec.validate();
  if (a.seqs == 0) throw UsageError("--seqs must be positive");
  synth_dataset(a.out, spec, a.seqs, a.seed);
  out << "wrote " << a.seqs << " " << scenario_name(spec.scenario) << " sequences of " << a.frames << " frames ("
      << a.size << "x" << a.size << ") to " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string variant;
  std::size_t iters = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string resume;
  std::size_t log_every = 50;
  ConfigFlags config;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = resolve_config(a.config);
  if (!a.variant.empty()) cfg.set("variant", a.variant);
  if (a.iters > 0) cfg.set("iterations", std::to_string(a.iters));
  if (a.seed_set) cfg.set("seed", std::to_string(a.seed));
  const NetworkConfig net = cfg.network();
  const TrainConfig tc = cfg.training();

  auto dataset = load_labeled(a.data);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  cfg.write_resolved(dir);

  Trainer<float> trainer(std::move(dataset), net, tc);
  const fs::path ckpt = dir / "model.ckpt";
  if (!a.resume.empty()) {
    trainer.load(a.resume);
    out << "resumed from " << a.resume << " at step " << trainer.iteration() << "\n";
  }
  out << "training " << variant_name(net.variant) << " width " << net.width_multiplier.str() << ", "
      << trainer.params().parameter_count() << " parameters, " << tc.iterations << " iterations\n";

  trainer.run([&](const LossPoint& p) {
    if (a.log_every > 0 && (p.step % a.log_every == 0 || p.step == tc.iterations)) {
      char line[96];
      std::snprintf(line, sizeof line, "step %6llu  loss %.6f\n", static_cast<unsigned long long>(p.step), p.loss);
      out << line << std::flush;
    }
    if (tc.checkpoint_interval > 0 && p.step % tc.checkpoint_interval == 0) {
      trainer.save(ckpt);
      write_loss_csv(dir / "loss.csv", trainer.curve());
    }
    return true;
  });
  trainer.save(ckpt);
  write_loss_csv(dir / "loss.csv", trainer.curve());
  out << "wrote " << ckpt.string() << " and " << (dir / "loss.csv").string() << "\n";
  return kOk;
}

struct InferArgs {
  std::string data;
  std::string ckpt;
  std::string out;
  bool overlays = true;
  ConfigFlags config;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  ConfigFlags flags = a.config;
  if (flags.config_file.empty()) {
    const fs::path beside = fs::path(a.ckpt).parent_path() / "config.resolved";
    if (!fs::exists(beside)) {
      throw UsageError("no config.resolved beside '" + a.ckpt + "'; pass --config");
    }
    flags.config_file = beside.string();
  }
  const RunConfig cfg = resolve_config(flags);
  const NetworkConfig net = cfg.network();
  const bool independent = cfg.training().frame_independent;
  NetworkParams<float> params = load_network<float>(a.ckpt, net);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  cfg.write_resolved(dir);
  for (const fs::path& seq : frame_dirs(a.data)) {
    const auto frames = load_frames(seq);
    const auto maps = segment_sequence(frames, params, cfg.connectivity(), independent);
    const fs::path target = dir / seq.filename();
    fs::create_directories(target);
    for (std::size_t t = 0; t < maps.size(); ++t) {
      write_pgm(target / mask_file_name(t), to_pgm(maps[t]));
      if (a.overlays) write_pgm(target / overlay_file_name(t), to_pgm(overlay(frames[t], maps[t])));
    }
    out << seq.filename().string() << ": " << maps.size() << " frames -> " << target.string() << "\n";
  }
  return kOk;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string csv;
};

SegReport eval_pair(const fs::path& pred_dir, const fs::path& gt_dir) {
  const auto pred = label_files(pred_dir);
  const auto gt = label_files(gt_dir);
  if (gt.empty()) throw LoadError("no man_seg###.pgm files in '" + gt_dir.string() + "'");
  SegReport report;
  for (const auto& [t, path] : gt) {
    const auto it = pred.find(t);
    if (it == pred.end()) {
      throw LoadError("prediction for frame " + std::to_string(t) + " missing in '" + pred_dir.string() + "'");
    }
    const InstanceMap g = instance_map_from_pgm(read_pgm(path));
    const InstanceMap p = instance_map_from_pgm(read_pgm(it->second));
    if (!g.same_dims(p)) throw ShapeError("frame " + std::to_string(t) + ": prediction and ground truth differ in size");
    report.append(seg_score(g, p, t));
  }
  return report;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const fs::path pred(a.pred), gt(a.gt);
  std::vector<std::pair<std::string, SegReport>> parts;
  if (!label_files(pred).empty()) {
    parts.emplace_back(strip_gt(pred.filename().string()), eval_pair(pred, gt));
  } else {
    if (!fs::is_directory(pred)) throw LoadError("prediction directory '" + a.pred + "' does not exist");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(pred)) {
      if (e.is_directory() && !label_files(e.path()).empty()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw LoadError("no predictions under '" + a.pred + "'");
    for (const auto& d : dirs) {
      const std::string name = strip_gt(d.filename().string());
      fs::path g = gt / (name + "_GT");
      if (!fs::is_directory(g)) g = gt / name;
      parts.emplace_back(name, eval_pair(d, g));
    }
  }

  SegReport all;
  std::ofstream csv_file;
  if (!a.csv.empty()) {
    csv_file.open(a.csv);
    if (!csv_file) throw std::runtime_error("cannot write '" + a.csv + "'");
  }
  std::ostream& csv = a.csv.empty() ? out : csv_file;
  for (const auto& [name, report] : parts) {
    if (parts.size() > 1) csv << "# " << name << "\n";
    write_seg_csv(csv, report);
    all.append(report);
  }
  for (const auto& [name, report] : parts) {
    if (parts.size() > 1) out << name << ": " << seg_summary(report) << "\n";
  }
  out << seg_summary(all) << "\n";
  return kOk;
}

struct GradcheckArgs {
  std::string level = "all";
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<GradCheckLevel> levels;
  if (a.level == "all") {
    levels = {GradCheckLevel::primitive, GradCheckLevel::layer, GradCheckLevel::network};
  } else {
    levels = {parse_gradcheck_level(a.level)};
  }
  bool ok = true;
  for (GradCheckLevel l : levels) {
    const auto results = run_gradcheck(l, a.seed);
    print_gradcheck(out, results);
    for (const auto& r : results) ok = ok && r.passed();
  }
  out << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  if (!ok) throw GateFailure("gradient check failed");
  return kOk;
}

struct CompareArgs {
  std::string data;
  std::string eval;
  std::string out;
  std::size_t iters = 0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  ConfigFlags config;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  RunConfig cfg = resolve_config(a.config);
  if (a.iters > 0) cfg.set("iterations", std::to_string(a.iters));
  if (a.repeats > 0) cfg.set("repeats", std::to_string(a.repeats));
  if (a.seed_set) cfg.set("seed", std::to_string(a.seed));
  const auto train = load_labeled(a.data);
  const auto eval = a.eval.empty() ? train : load_labeled(a.eval);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  cfg.write_resolved(dir);

  const auto summaries = compare_variants(train, eval, cfg.network(), cfg.training(), cfg.repeats(),
                                          [&](const VariantRun& r) {
                                            char line[128];
                                            std::snprintf(line, sizeof line, "%-9s repeat %zu  loss %.5f  SEG %.4f\n",
                                                          variant_name(r.variant).c_str(), r.repeat, r.final_loss,
                                                          r.seg);
                                            out << line << std::flush;
                                          });
  const std::string table = format_variant_table(summaries);
  out << table;
  std::ofstream(dir / "compare.txt") << table;
  std::ofstream csv(dir / "compare.csv");
  csv << "variant,repeat,seed,final_loss,finite,seg\n";
  for (const auto& s : summaries) {
    for (const auto& r : s.runs) {
      csv << variant_name(r.variant) << ',' << r.repeat << ',' << r.seed << ',' << r.final_loss << ','
          << (r.finite ? 1 : 0) << ',' << r.seg << '\n';
    }
  }
  bool finite = true;
  for (const auto& s : summaries) finite = finite && s.all_finite;
  if (!finite) throw GateFailure("a variant produced a non-finite loss");
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convolutional-LSTM U-Net for cell segmentation in microscopy sequences", "ulstm"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
  s->add_option("--out", synth.out, "Output dataset root")->required();
  s->add_option("--seqs", synth.seqs, "Number of sequences");
  s->add_option("--frames", synth.frames, "Frames per sequence");
  s->add_option("--size", synth.size, "Frame height and width (multiple of 8)");
  s->add_option("--cells", synth.cells, "Cells per sequence");
  s->add_option("--scenario", synth.scenario, "basic, touching, vanishing or mixed");
  s->add_option("--seed", synth.seed, "Random seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a network with truncated BPTT");
  t->add_option("--data", train.data, "Dataset root or sequence directory")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--variant", train.variant, "enclstm, declstm or fulllstm");
  t->add_option("--iters", train.iters, "Number of optimizer steps");
  auto* seed_opt = t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--resume", train.resume, "Checkpoint to continue from");
  t->add_option("--log-every", train.log_every, "Print the loss every N steps (0 = never)");
  add_config_flags(t, train.config);

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Segment sequences with a trained checkpoint");
  i->add_option("--data", infer.data, "Dataset root or sequence directory")->required();
  i->add_option("--ckpt", infer.ckpt, "Checkpoint file")->required();
  i->add_option("--out", infer.out, "Output directory")->required();
  i->add_flag("!--no-overlay", infer.overlays, "Skip overlay images");
  add_config_flags(i, infer.config);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score predicted instance maps against ground truth");
  e->add_option("--pred", eval.pred, "Prediction directory")->required();
  e->add_option("--gt", eval.gt, "Ground-truth directory")->required();
  e->add_option("--csv", eval.csv, "Write the per-cell CSV here instead of standard output");

  GradcheckArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient checks in 64-bit precision");
  g->add_option("--level", grad.level, "primitive, layer, network or all");
  g->add_option("--seed", grad.seed, "Random seed");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Train and score all three variants over repeated runs");
  c->add_option("--data", cmp.data, "Training dataset")->required();
  c->add_option("--eval", cmp.eval, "Evaluation dataset (defaults to the training data)");
  c->add_option("--out", cmp.out, "Output directory")->required();
  c->add_option("--iters", cmp.iters, "Optimizer steps per run");
  c->add_option("--repeats", cmp.repeats, "Runs per variant");
  auto* cmp_seed = c->add_option("--seed", cmp.seed, "Base random seed");
  add_config_flags(c, cmp.config);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    if (app.get_subcommands().empty()) err << app.help();
    return kUsage;
  }
  train.seed_set = seed_opt->count() > 0;
  cmp.seed_set = cmp_seed->count() > 0;

  try {
    apply_thread_limit();
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_train(train, out);
    if (i->parsed()) return cmd_infer(infer, out);
    if (e->parsed()) return cmd_eval(eval, out);
    if (g->parsed()) return cmd_gradcheck(grad, out);
    if (c->parsed()) return cmd_compare(cmp, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const ShapeError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kFailed;
  }
  return kUsage;
}

}  // namespace ulstm::cli

#include "ulstm/compare.hpp"

#include <cmath>
#include <cstdio>

#include "ulstm/inference.hpp"

namespace ulstm {

const std::vector<ReferenceScore>& reference_scores() {
  static const std::vector<ReferenceScore> refs = {
      {Variant::enc_lstm, 0.874, 0.011},
      {Variant::dec_lstm, 0.729, 0.166},
      {Variant::full_lstm, 0.798, 0.094},
  };
  return refs;
}

std::vector<VariantSummary> compare_variants(const std::vector<LabeledSequence>& train,
                                             const std::vector<LabeledSequence>& eval, const NetworkConfig& base,
                                             const TrainConfig& config, std::size_t repeats,
                                             const std::function<void(const VariantRun&)>& on_run) {
  if (repeats == 0) throw UsageError("compare: repeats must be positive");
  std::vector<VariantSummary> out;
  for (Variant v : {Variant::enc_lstm, Variant::dec_lstm, Variant::full_lstm}) {
    VariantSummary s;
    s.variant = v;
    for (std::size_t r = 0; r < repeats; ++r) {
      NetworkConfig net = base;
      net.variant = v;
      TrainConfig tc = config;
      tc.seed = mix_seed(config.seed, r);
      Trainer<float> trainer(train, net, tc);
      trainer.run();

      VariantRun run{v, r, tc.seed};
      for (const LossPoint& p : trainer.curve()) run.finite = run.finite && std::isfinite(p.loss);
      run.final_loss = trainer.curve().empty() ? 0.0 : trainer.curve().back().loss;
      SegReport report;
      for (const auto& seq : eval) report.append(evaluate_sequence(seq, trainer.params()));
      run.seg = report.mean();
      if (on_run) on_run(run);
      s.all_finite = s.all_finite && run.finite;
      s.runs.push_back(run);
    }
    double sum = 0.0;
    for (const auto& run : s.runs) sum += run.seg;
    s.mean = sum / static_cast<double>(s.runs.size());
    double sq = 0.0;
    for (const auto& run : s.runs) sq += (run.seg - s.mean) * (run.seg - s.mean);
    s.std = s.runs.size() > 1 ? std::sqrt(sq / static_cast<double>(s.runs.size() - 1)) : 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_variant_table(const std::vector<VariantSummary>& summaries) {
  std::string out = "variant    SEG (desk)        runs  finite  reference SEG\n";
  char line[160];
  for (const auto& s : summaries) {
    std::string ref = "-";
    for (const auto& r : reference_scores()) {
      if (r.variant == s.variant) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.3f +- %.3f", r.mean, r.std);
        ref = buf;
      }
    }
    std::snprintf(line, sizeof line, "%-10s %.3f +- %.3f   %4zu  %-6s  %s\n", variant_name(s.variant).c_str(), s.mean,
                  s.std, s.runs.size(), s.all_finite ? "yes" : "no", ref.c_str());
    out += line;
  }
  out += "reference column: published full-scale results, shown for comparison only\n";
  return out;
}

}  // namespace ulstm

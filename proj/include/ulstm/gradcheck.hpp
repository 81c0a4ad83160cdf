#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ulstm/autograd.hpp"
#include "ulstm/rng.hpp"

namespace ulstm {

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return checked > 0 && max_rel_error < tolerance; }
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Compares the taped gradient of the scalar loss() with respect to each input
// against central differences. At most max_per_input entries of each input
// are probed, chosen at random when the input is larger.
GradCheckResult check_gradient(const std::string& name, const std::function<Var<double>()>& loss,
                               const std::vector<Var<double>>& inputs, double tolerance, std::size_t max_per_input,
                               Rng& rng, double step = 1e-6);

enum class GradCheckLevel { primitive, layer, network };

GradCheckLevel parse_gradcheck_level(const std::string& name);

// Every differentiable primitive on small random shapes, tolerance 1e-4.
std::vector<GradCheckResult> gradcheck_primitives(std::uint64_t seed);
// C-LSTM step, three-step BPTT, conv block, encoder/decoder blocks, loss.
std::vector<GradCheckResult> gradcheck_layers(std::uint64_t seed);
// Width 1/16 network on 16x16 inputs over T = 2 frames, `samples` random
// parameter entries, tolerance 1e-3.
std::vector<GradCheckResult> gradcheck_network(std::uint64_t seed, std::size_t samples = 24);

std::vector<GradCheckResult> run_gradcheck(GradCheckLevel level, std::uint64_t seed);

void print_gradcheck(std::ostream& os, const std::vector<GradCheckResult>& results);

}  // namespace ulstm

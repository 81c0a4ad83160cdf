#include "ulstm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "ulstm/errors.hpp"
#include "ulstm/layers.hpp"
#include "ulstm/loss.hpp"
#include "ulstm/network.hpp"
#include "ulstm/ops.hpp"

namespace ulstm {

namespace {

using V = Var<double>;
using Td = Tensor<double>;

struct Entry {
  V var;
  std::size_t index;
};

Td randn(const Shape& dims, Rng& rng, double scale = 1.0) {
  Td t(dims);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

V param(const Shape& dims, Rng& rng, double scale = 1.0) { return parameter(randn(dims, rng, scale)); }

// Random projection so every output element contributes a distinct weight.
V project(const V& out, Rng& rng) { return ops::sum(ops::mul(out, V(randn(out.dims(), rng)))); }

double evaluate(const std::function<V()>& loss) {
  NoGradGuard<double> off;
  const V l = loss();
  return l.value()[0];
}

GradCheckResult probe(const std::string& name, const std::function<V()>& loss, const std::vector<V>& inputs,
                      const std::vector<Entry>& entries, double tolerance, double step) {
  for (V v : inputs) v.zero_grad();
  {
    Tape<double> tape;
    TapeGuard<double> on(tape);
    const V l = loss();
    if (l.value().size() != 1) throw UsageError("gradcheck: loss must be a scalar");
    tape.backward(l);
  }
  GradCheckResult r{name, 0, 0.0, tolerance};
  for (Entry e : entries) {
    const double analytic = e.var.has_grad() ? e.var.grad()[e.index] : 0.0;
    double& x = e.var.mutable_value()[e.index];
    const double saved = x;
    x = saved + step;
    const double up = evaluate(loss);
    x = saved - step;
    const double down = evaluate(loss);
    x = saved;
    const double numeric = (up - down) / (2.0 * step);
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, numeric));
    ++r.checked;
  }
  for (V v : inputs) v.zero_grad();
  return r;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradient(const std::string& name, const std::function<Var<double>()>& loss,
                               const std::vector<Var<double>>& inputs, double tolerance, std::size_t max_per_input,
                               Rng& rng, double step) {
  std::vector<Entry> entries;
  for (const V& v : inputs) {
    const std::size_t n = v.value().size();
    if (n <= max_per_input) {
      for (std::size_t i = 0; i < n; ++i) entries.push_back({v, i});
    } else {
      for (std::size_t i = 0; i < max_per_input; ++i) entries.push_back({v, rng.below(n)});
    }
  }
  return probe(name, loss, inputs, entries, tolerance, step);
}

GradCheckLevel parse_gradcheck_level(const std::string& name) {
  if (name == "primitive") return GradCheckLevel::primitive;
  if (name == "layer") return GradCheckLevel::layer;
  if (name == "network") return GradCheckLevel::network;
  throw UsageError("unknown gradcheck level '" + name + "' (primitive, layer, network)");
}

std::vector<GradCheckResult> gradcheck_primitives(std::uint64_t seed) {
  constexpr double tol = 1e-4;
  constexpr std::size_t per = 48;
  Rng rng(mix_seed(seed, 0x6763));
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, const std::vector<V>& inputs, const std::function<V(Rng&)>& build) {
    // The projection weights are drawn once and reused on every evaluation.
    const std::uint64_t proj_seed = rng.next();
    auto loss = [&, proj_seed] {
      Rng local(proj_seed);
      return build(local);
    };
    out.push_back(check_gradient(name, loss, inputs, tol, per, rng));
  };

  {
    V x = param({2, 3, 8, 8}, rng), k = param({4, 3, 3, 3}, rng, 0.3), b = param({4}, rng);
    run("conv2d", {x, k}, [=](Rng& r) { return project(ops::conv2d(x, k), r); });
    run("conv2d+bias", {x, k, b}, [=](Rng& r) { return project(ops::conv2d(x, k, b), r); });
  }
  {
    V x = param({2, 3, 8, 8}, rng);
    run("maxpool2", {x}, [=](Rng& r) { return project(ops::maxpool2(x), r); });
    run("sigmoid", {x}, [=](Rng& r) { return project(ops::sigmoid(x), r); });
    run("tanh", {x}, [=](Rng& r) { return project(ops::tanh(x), r); });
    run("leaky_relu", {x}, [=](Rng& r) { return project(ops::leaky_relu(x, 0.01), r); });
    run("sum", {x}, [=](Rng&) { return ops::sum(x); });
    run("scale", {x}, [=](Rng& r) { return project(ops::scale(x, -1.7), r); });
  }
  {
    V x = param({2, 3, 4, 4}, rng);
    run("upsample_bilinear2", {x}, [=](Rng& r) { return project(ops::upsample_bilinear2(x), r); });
    run("softmax_channels", {x}, [=](Rng& r) { return project(ops::softmax_channels(x), r); });
  }
  {
    V a = param({2, 3, 4, 4}, rng), b = param({2, 2, 4, 4}, rng), c = param({2, 3, 4, 4}, rng);
    run("concat_channels", {a, b}, [=](Rng& r) { return project(ops::concat_channels(a, b), r); });
    run("add", {a, c}, [=](Rng& r) { return project(ops::add(a, c), r); });
    run("mul", {a, c}, [=](Rng& r) { return project(ops::mul(a, c), r); });
  }
  {
    V gates = param({2, 8, 4, 4}, rng), c = param({2, 2, 4, 4}, rng);
    run("lstm_cell", {gates, c}, [=](Rng& r) {
      const auto s = ops::lstm_cell(gates, c);
      return ops::add(project(s.h, r), project(s.c, r));
    });
  }
  {
    V x = param({2, 3, 4, 4}, rng), gamma = param({3}, rng), beta = param({3}, rng);
    Td mean_run = randn({3}, rng, 0.2);
    Td var_run({3});
    for (auto& v : var_run.values()) v = 0.5 + rng.uniform();
    run("batch_norm_train", {x, gamma, beta}, [=](Rng& r) {
      Td m, s;
      return project(ops::batch_norm_train(x, gamma, beta, 1e-5, m, s), r);
    });
    run("batch_norm_eval", {x, gamma, beta},
        [=](Rng& r) { return project(ops::batch_norm_eval(x, gamma, beta, mean_run, var_run, 1e-5), r); });
  }
  {
    V logits = param({2, 2, 4, 4}, rng);
    Td target({2, 4, 4}), weights({2, 4, 4});
    for (auto& v : target.values()) v = static_cast<double>(rng.below(2));
    for (auto& v : weights.values()) v = 0.5 + 2.0 * rng.uniform();
    run("weighted_nll_sum", {logits}, [=](Rng&) { return ops::weighted_nll_sum(logits, target, weights); });
  }
  return out;
}

std::vector<GradCheckResult> gradcheck_layers(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6c61));
  std::vector<GradCheckResult> out;
  constexpr std::size_t per = 32;
  auto fixed = [&](const Shape& d) { return V(randn(d, rng)); };

  {
    ClstmParams<double> p = make_clstm<double>(2, 3, 3, rng);
    V x = param({2, 2, 6, 6}, rng), h = param({2, 3, 6, 6}, rng, 0.5), c = param({2, 3, 6, 6}, rng, 0.5);
    const V rh = fixed({2, 3, 6, 6}), rc = fixed({2, 3, 6, 6});
    auto loss = [=] {
      const auto s = clstm_step(p, x, ClstmState<double>{h, c});
      return ops::add(ops::sum(ops::mul(s.h, rh)), ops::sum(ops::mul(s.c, rc)));
    };
    out.push_back(check_gradient("clstm_step", loss, {x, p.kernel, p.bias, h, c}, 1e-4, per, rng));
  }
  {
    ClstmParams<double> p = make_clstm<double>(2, 3, 3, rng);
    std::vector<V> xs{param({1, 2, 6, 6}, rng), param({1, 2, 6, 6}, rng), param({1, 2, 6, 6}, rng)};
    std::vector<V> rs{fixed({1, 3, 6, 6}), fixed({1, 3, 6, 6}), fixed({1, 3, 6, 6})};
    auto loss = [=] {
      ClstmState<double> s = clstm_zero_state<double>(3, 1, 6, 6);
      V total(Td({}, {0.0}));
      for (std::size_t t = 0; t < 3; ++t) {
        s = clstm_step(p, xs[t], s);
        total = ops::add(total, ops::sum(ops::mul(s.h, rs[t])));
      }
      return total;
    };
    out.push_back(check_gradient("clstm_bptt_3", loss, {p.kernel, p.bias, xs[0]}, 1e-3, per, rng));
  }
  {
    auto block = std::make_shared<ConvBlockParams<double>>(make_conv_block<double>(3, 4, 3, 0.1, 1e-5, rng));
    V x = param({2, 3, 6, 6}, rng);
    const V r = fixed({2, 4, 6, 6});
    auto loss = [=] { return ops::sum(ops::mul(conv_block(x, *block, Mode::train, 0.01), r)); };
    out.push_back(check_gradient("conv_block", loss, {x, block->kernel, block->bn.gamma, block->bn.beta}, 1e-4, per,
                                 rng));
  }
  {
    NetworkConfig cfg;
    cfg.levels = 2;
    cfg.base_depths = {3, 4};
    cfg.clstm_kernels = {3, 3};
    cfg.variant = Variant::full_lstm;
    auto net = std::make_shared<NetworkParams<double>>(init_network<double>(cfg, rng.next()));
    V x = param({2, 1, 8, 8}, rng);
    const V rh = fixed({2, 3, 8, 8}), rp = fixed({2, 3, 4, 4});
    auto enc = [=] {
      const auto e = encoder_apply<double>(0, x, clstm_zero_state<double>(3, 2, 8, 8), *net, Mode::train);
      return ops::add(ops::sum(ops::mul(e.h, rh)), ops::sum(ops::mul(e.pooled, rp)));
    };
    UnetBlock<double>& e0 = net->encoder[0];
    out.push_back(check_gradient("encoder_block", enc, {x, e0.lstm->kernel, e0.lstm->bias, e0.post.kernel}, 1e-3,
                                 per, rng));

    V y = param({2, 4, 4, 4}, rng), skip = param({2, 3, 8, 8}, rng);
    const V rz = fixed({2, 3, 8, 8});
    auto dec = [=] {
      const auto d = decoder_apply<double>(0, y, skip, clstm_zero_state<double>(3, 2, 8, 8), *net, Mode::train);
      return ops::sum(ops::mul(d.z, rz));
    };
    UnetBlock<double>& d0 = net->decoder[0];
    out.push_back(check_gradient("decoder_block", dec, {y, skip, d0.lstm->kernel, d0.post.kernel}, 1e-3, per, rng));
  }
  {
    V logits = param({2, 2, 5, 5}, rng);
    Td target({2, 5, 5}), weights({2, 5, 5});
    for (auto& v : target.values()) v = static_cast<double>(rng.below(2));
    for (auto& v : weights.values()) v = 1.0 + 10.0 * rng.uniform();
    auto loss = [=] { return weighted_cross_entropy(logits, target, weights); };
    out.push_back(check_gradient("weighted_cross_entropy", loss, {logits}, 1e-4, per, rng));
  }
  return out;
}

std::vector<GradCheckResult> gradcheck_network(std::uint64_t seed, std::size_t samples) {
  Rng rng(mix_seed(seed, 0x6e77));
  NetworkConfig cfg;
  cfg.width_multiplier = Ratio{1, 16};
  auto net = std::make_shared<NetworkParams<double>>(init_network<double>(cfg, rng.next()));
  constexpr std::size_t frames = 2, batch = 2, size = 16;

  std::vector<Td> inputs, targets, weights;
  for (std::size_t t = 0; t < frames; ++t) {
    Td x({batch, 1, size, size}), y({batch, size, size}), w({batch, size, size});
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.uniform();
      y[i] = x[i] > 0.5 ? 1.0 : 0.0;
      w[i] = 1.0 + 4.0 * rng.uniform();
    }
    inputs.push_back(std::move(x));
    targets.push_back(std::move(y));
    weights.push_back(std::move(w));
  }
  double total_weight = 0.0;
  for (const Td& w : weights) total_weight += std::accumulate(w.values().begin(), w.values().end(), 0.0);

  auto loss = [=] {
    NetworkState<double> state = zero_state<double>(cfg, batch, size, size);
    V total(Td({}, {0.0}));
    for (std::size_t t = 0; t < frames; ++t) {
      FrameOutput<double> f = forward_frame(V(inputs[t]), state, *net, Mode::train);
      total = ops::add(total, ops::weighted_nll_sum(f.logits, targets[t], weights[t]));
      state = std::move(f.state);
    }
    return ops::scale(total, 1.0 / total_weight);
  };

  auto named = net->parameters();
  std::vector<V> vars;
  for (const auto& p : named) vars.push_back(*p.var);
  std::vector<std::size_t> order(named.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<GradCheckResult> out;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto& p = named[order[s % order.size()]];
    const Entry e{*p.var, rng.below(p.var->value().size())};
    GradCheckResult r = probe("network:" + p.name + "[" + std::to_string(e.index) + "]", loss, vars, {e}, 1e-3, 1e-6);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GradCheckResult> run_gradcheck(GradCheckLevel level, std::uint64_t seed) {
  switch (level) {
    case GradCheckLevel::primitive:
      return gradcheck_primitives(seed);
    case GradCheckLevel::layer:
      return gradcheck_layers(seed);
    case GradCheckLevel::network:
      return gradcheck_network(seed);
  }
  return {};
}

void print_gradcheck(std::ostream& os, const std::vector<GradCheckResult>& results) {
  char line[256];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-48s n=%-4zu max_rel=%.3e tol=%.0e %s\n", r.name.c_str(), r.checked,
                  r.max_rel_error, r.tolerance, r.passed() ? "ok" : "FAIL");
    os << line;
  }
}

}  // namespace ulstm

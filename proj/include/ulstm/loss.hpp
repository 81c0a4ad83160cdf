#pragma once

#include <utility>
#include <vector>

#include "ulstm/autograd.hpp"
#include "ulstm/image.hpp"

namespace ulstm {

using WeightMap = Grid<float>;

struct WeightMapParams {
  double w0 = 10.0;
  double sigma = 5.0;  // pixels
  double wc_background = 1.0;
  double wc_foreground = 1.0;
};

// Exact Euclidean distance from every pixel to the nearest nonzero pixel of
// seeds; +inf everywhere when seeds is empty.
Grid<double> distance_transform(const BinaryMap& seeds);

// w(v) = wc(class(v)) + w0 exp(-(d1 + d2)^2 / (2 sigma^2)), with d1 <= d2 the
// distances from v to the two nearest distinct cells. The exponential term is
// dropped when fewer than two cells are present.
WeightMap compute_weight_map(const InstanceMap& labels, const WeightMapParams& params);

// Inverse class frequencies over all maps, scaled so the pair sums to 2.
// Returns (1, 1) when either class is absent.
std::pair<double, double> class_balance_weights(const std::vector<InstanceMap>& labels);

// Targets (N,H,W) as class indices (0 background, 1 foreground).
template <typename T>
Tensor<T> class_targets(const std::vector<const InstanceMap*>& labels);
template <typename T>
Tensor<T> weight_tensor(const std::vector<const WeightMap*>& weights);

// -(1 / sum w) sum_v w(v) log p(target(v) | logits(v)).
template <typename T>
Var<T> weighted_cross_entropy(const Var<T>& logits, const Tensor<T>& target, const Tensor<T>& weights);

}  // namespace ulstm

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrnn/graph.hpp"

namespace scrnn {

/// Builds a scalar loss into a fresh graph and returns its node.
using LossBuilder = std::function<NodeId(Graph&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

inline double evaluate_loss(const LossBuilder& build) {
  Graph g;
  build(g);
  const Tensor& v = g.forward();
  if (v.size() != 1) throw std::invalid_argument("grad_check needs a scalar loss, got " + shape_str(v.shape()));
  return v[0];
}

/// Compares reverse-mode gradients against central differences with step `eps`.
/// The error per entry is |a - n| / max(|a|, |n|, 1e-8); the maximum is returned.
/// `max_entries_per_param` > 0 checks a seeded random subset of each parameter.
/// On return every Parameter::grad holds the analytic gradient.
inline GradCheckResult grad_check(const LossBuilder& build, std::span<Parameter* const> params, double eps = 1e-5,
                                  std::size_t max_entries_per_param = 0, std::uint64_t seed = 0) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw std::invalid_argument("grad_check eps must lie in (0, 1e-3]");

  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    NodeId out = build(g);
    const Tensor& v = g.forward();
    if (v.size() != 1) throw std::invalid_argument("grad_check needs a scalar loss, got " + shape_str(v.shape()));
    g.backward(out);
  }

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (Parameter* p : params) {
    std::vector<std::size_t> idx(p->value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (max_entries_per_param > 0 && idx.size() > max_entries_per_param) {
      std::vector<std::size_t> picked;
      std::sample(idx.begin(), idx.end(), std::back_inserter(picked), max_entries_per_param, rng);
      idx = std::move(picked);
    }
    for (std::size_t j : idx) {
      const double saved = p->value[j];
      p->value[j] = saved + eps;
      const double up = evaluate_loss(build);
      p->value[j] = saved - eps;
      const double down = evaluate_loss(build);
      p->value[j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[j];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic - numeric) / denom;
      ++result.entries_checked;
      if (result.entries_checked == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p->name;
        result.worst_index = j;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace scrnn

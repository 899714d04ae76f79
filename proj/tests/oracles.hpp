#pragma once

// Test-only oracles, implemented independently of the library code paths so
// agreement is evidence rather than tautology.

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "heparl/learners.hpp"
#include "heparl/mdp.hpp"

namespace heparl::test_oracles {

// Value iteration on the empirical MDP induced by a scalar-state dataset:
// Q(s,a) = mean over the observed (s,a) outcomes of r + gamma*(1-done)*maxQ(s').
inline std::array<std::array<double, kNumActions>, kNumScalarStates> value_iteration_empirical(
    const std::vector<Transition<int>>& data, double gamma, int iters = 10000,
    double tol = 1e-13) {
  struct Outcome {
    double r;
    int s_next;
    bool done;
  };
  std::map<std::pair<int, int>, std::vector<Outcome>> buckets;
  for (const auto& tr : data) {
    buckets[{tr.s, tr.a}].push_back({tr.r, tr.s_next, tr.done});
  }
  std::array<std::array<double, kNumActions>, kNumScalarStates> q{};
  for (int it = 0; it < iters; ++it) {
    auto next = q;
    double delta = 0.0;
    for (const auto& [sa, outs] : buckets) {
      double acc = 0.0;
      for (const auto& o : outs) {
        double boot = 0.0;
        if (!o.done) {
          const auto& row = q[static_cast<size_t>(o.s_next)];
          boot = row[0];
          for (double v : row) boot = std::max(boot, v);
        }
        acc += o.r + gamma * boot;
      }
      acc /= static_cast<double>(outs.size());
      const auto [s, a] = sa;
      delta = std::max(delta, std::abs(acc - q[static_cast<size_t>(s)][static_cast<size_t>(a)]));
      next[static_cast<size_t>(s)][static_cast<size_t>(a)] = acc;
    }
    q = next;
    if (delta < tol) break;
  }
  return q;
}

// Mean immediate reward per (state-key, action) bucket, for the gamma=0 case.
inline std::map<std::pair<std::array<int, 6>, int>, double> bucket_mean_rewards(
    const std::vector<Transition<StateVec>>& data) {
  std::map<std::pair<std::array<int, 6>, int>, std::pair<double, int>> acc;
  for (const auto& tr : data) {
    std::array<int, 6> key;
    for (size_t i = 0; i < 6; ++i) key[i] = static_cast<int>(std::llround(tr.s[i] * 1000.0));
    auto& slot = acc[{key, tr.a}];
    slot.first += tr.r;
    slot.second += 1;
  }
  std::map<std::pair<std::array<int, 6>, int>, double> out;
  for (const auto& [key, slot] : acc) out[key] = slot.first / slot.second;
  return out;
}

}  // namespace heparl::test_oracles

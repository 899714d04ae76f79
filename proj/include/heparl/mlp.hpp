#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "heparl/errors.hpp"
#include "heparl/util.hpp"

namespace heparl {

// ---------------------------------------------------------------------------
// Fully-connected in -> hidden -> hidden -> out network, rectified-linear
// hidden activations, identity output, all float64. Parameters live in one
// flat vector so the optimizer and the finite-difference checker can treat
// them uniformly.
// ---------------------------------------------------------------------------

struct MlpParams {
  int in = 6;
  int hidden = 64;
  int out = 5;
  std::vector<double> theta;

  int count() const { return hidden * in + hidden + hidden * hidden + hidden + out * hidden + out; }
  int off_w1() const { return 0; }
  int off_b1() const { return hidden * in; }
  int off_w2() const { return off_b1() + hidden; }
  int off_b2() const { return off_w2() + hidden * hidden; }
  int off_w3() const { return off_b2() + hidden; }
  int off_b3() const { return off_w3() + out * hidden; }

  bool operator==(const MlpParams&) const = default;
};

inline void validate(const MlpParams& p) {
  if (p.in < 1 || p.hidden < 1 || p.out < 1) {
    throw ValidationError("mlp: layer widths must be positive");
  }
  if (static_cast<int>(p.theta.size()) != p.count()) {
    throw ValidationError("mlp: parameter vector has " + std::to_string(p.theta.size()) +
                          " entries, architecture needs " + std::to_string(p.count()));
  }
  for (double v : p.theta) {
    if (!std::isfinite(v)) throw ValidationError("mlp: non-finite parameter");
  }
}

// He-style uniform fan-in initialization; biases start at zero.
inline MlpParams init_mlp(int in, int hidden, int out, std::uint64_t seed) {
  MlpParams p;
  p.in = in;
  p.hidden = hidden;
  p.out = out;
  p.theta.assign(static_cast<size_t>(p.count()), 0.0);
  std::mt19937_64 rng(seed);
  auto fill = [&](int off, int n, int fan_in) {
    const double limit = std::sqrt(6.0 / fan_in);
    for (int i = 0; i < n; ++i) {
      p.theta[static_cast<size_t>(off + i)] = rand_uniform(rng, -limit, limit);
    }
  };
  fill(p.off_w1(), hidden * in, in);
  fill(p.off_w2(), hidden * hidden, hidden);
  fill(p.off_w3(), out * hidden, hidden);
  return p;
}

struct Batch {
  std::vector<double> states;   // B x in, row-major
  std::vector<int> actions;     // B
  std::vector<double> targets;  // B
};

inline int batch_size(const Batch& b, int in) {
  if (b.states.size() % static_cast<size_t>(in) != 0) {
    throw ValidationError("batch: state buffer is not a multiple of the input width");
  }
  const auto n = static_cast<int>(b.states.size()) / in;
  if (n < 1) throw ValidationError("batch: empty");
  if (b.actions.size() != static_cast<size_t>(n) || b.targets.size() != static_cast<size_t>(n)) {
    throw ValidationError("batch: misaligned actions/targets");
  }
  return n;
}

struct ForwardCache {
  int n = 0;
  std::vector<double> x;   // B x in
  std::vector<double> h1;  // B x hidden, post-activation
  std::vector<double> h2;  // B x hidden, post-activation
  std::vector<double> y;   // B x out
};

inline void forward_into(const MlpParams& p, const double* states, int n, ForwardCache& cache) {
  const int I = p.in, H = p.hidden, O = p.out;
  const double* w1 = p.theta.data() + p.off_w1();
  const double* b1 = p.theta.data() + p.off_b1();
  const double* w2 = p.theta.data() + p.off_w2();
  const double* b2 = p.theta.data() + p.off_b2();
  const double* w3 = p.theta.data() + p.off_w3();
  const double* b3 = p.theta.data() + p.off_b3();

  cache.n = n;
  cache.x.assign(states, states + static_cast<size_t>(n) * I);
  cache.h1.assign(static_cast<size_t>(n) * H, 0.0);
  cache.h2.assign(static_cast<size_t>(n) * H, 0.0);
  cache.y.assign(static_cast<size_t>(n) * O, 0.0);

  for (int s = 0; s < n; ++s) {
    const double* x = states + static_cast<size_t>(s) * I;
    double* h1 = cache.h1.data() + static_cast<size_t>(s) * H;
    double* h2 = cache.h2.data() + static_cast<size_t>(s) * H;
    double* y = cache.y.data() + static_cast<size_t>(s) * O;
    for (int j = 0; j < H; ++j) {
      double acc = b1[j];
      const double* row = w1 + static_cast<size_t>(j) * I;
      for (int i = 0; i < I; ++i) acc += row[i] * x[i];
      h1[j] = acc > 0.0 ? acc : 0.0;
    }
    for (int j = 0; j < H; ++j) {
      double acc = b2[j];
      const double* row = w2 + static_cast<size_t>(j) * H;
      for (int i = 0; i < H; ++i) acc += row[i] * h1[i];
      h2[j] = acc > 0.0 ? acc : 0.0;
    }
    for (int k = 0; k < O; ++k) {
      double acc = b3[k];
      const double* row = w3 + static_cast<size_t>(k) * H;
      for (int i = 0; i < H; ++i) acc += row[i] * h2[i];
      y[k] = acc;
    }
  }
}

inline ForwardCache forward_cache(const MlpParams& p, const std::vector<double>& states) {
  if (states.size() % static_cast<size_t>(p.in) != 0 || states.empty()) {
    throw ValidationError("forward: state buffer width mismatch");
  }
  ForwardCache cache;
  forward_into(p, states.data(), static_cast<int>(states.size()) / p.in, cache);
  return cache;
}

// B x out action values.
inline std::vector<double> forward(const MlpParams& p, const std::vector<double>& states) {
  return forward_cache(p, states).y;
}

inline std::array<double, 5> action_values(const MlpParams& p, const std::array<double, 6>& s) {
  if (p.in != 6 || p.out != 5) throw ValidationError("action_values needs a 6->5 network");
  static thread_local ForwardCache cache;
  forward_into(p, s.data(), 1, cache);
  std::array<double, 5> out;
  std::copy(cache.y.begin(), cache.y.end(), out.begin());
  return out;
}

// Backpropagate an arbitrary output gradient (B x out) through the cache.
inline std::vector<double> backward(const MlpParams& p, const ForwardCache& cache,
                                    const std::vector<double>& d_y) {
  const int I = p.in, H = p.hidden, O = p.out;
  if (d_y.size() != static_cast<size_t>(cache.n) * O) {
    throw ValidationError("backward: output gradient shape mismatch");
  }
  const double* w2 = p.theta.data() + p.off_w2();
  const double* w3 = p.theta.data() + p.off_w3();

  std::vector<double> g(static_cast<size_t>(p.count()), 0.0);
  double* gw1 = g.data() + p.off_w1();
  double* gb1 = g.data() + p.off_b1();
  double* gw2 = g.data() + p.off_w2();
  double* gb2 = g.data() + p.off_b2();
  double* gw3 = g.data() + p.off_w3();
  double* gb3 = g.data() + p.off_b3();

  std::vector<double> dh1(static_cast<size_t>(H)), dh2(static_cast<size_t>(H));
  for (int s = 0; s < cache.n; ++s) {
    const double* x = cache.x.data() + static_cast<size_t>(s) * I;
    const double* h1 = cache.h1.data() + static_cast<size_t>(s) * H;
    const double* h2 = cache.h2.data() + static_cast<size_t>(s) * H;
    const double* dy = d_y.data() + static_cast<size_t>(s) * O;

    std::fill(dh2.begin(), dh2.end(), 0.0);
    for (int k = 0; k < O; ++k) {
      const double d = dy[k];
      if (d == 0.0) continue;
      double* row = gw3 + static_cast<size_t>(k) * H;
      const double* w = w3 + static_cast<size_t>(k) * H;
      for (int i = 0; i < H; ++i) {
        row[i] += d * h2[i];
        dh2[i] += d * w[i];
      }
      gb3[k] += d;
    }
    std::fill(dh1.begin(), dh1.end(), 0.0);
    for (int j = 0; j < H; ++j) {
      if (h2[j] <= 0.0 || dh2[j] == 0.0) continue;  // relu mask
      const double d = dh2[j];
      double* row = gw2 + static_cast<size_t>(j) * H;
      const double* w = w2 + static_cast<size_t>(j) * H;
      for (int i = 0; i < H; ++i) {
        row[i] += d * h1[i];
        dh1[i] += d * w[i];
      }
      gb2[j] += d;
    }
    for (int j = 0; j < H; ++j) {
      if (h1[j] <= 0.0 || dh1[j] == 0.0) continue;
      const double d = dh1[j];
      double* row = gw1 + static_cast<size_t>(j) * I;
      for (int i = 0; i < I; ++i) row[i] += d * x[i];
      gb1[j] += d;
    }
  }
  return g;
}

// Mean squared error over the selected action values.
inline double selected_loss(const ForwardCache& cache, const Batch& batch, int out_width) {
  double loss = 0.0;
  for (int s = 0; s < cache.n; ++s) {
    const double q = cache.y[static_cast<size_t>(s) * out_width + batch.actions[static_cast<size_t>(s)]];
    const double d = q - batch.targets[static_cast<size_t>(s)];
    loss += d * d;
  }
  return loss / cache.n;
}

// Analytic gradient of selected_loss.
inline std::vector<double> grad(const MlpParams& p, const Batch& batch) {
  const int n = batch_size(batch, p.in);
  for (int a : batch.actions) {
    if (a < 0 || a >= p.out) throw ValidationError("grad: action index out of range");
  }
  ForwardCache cache;
  forward_into(p, batch.states.data(), n, cache);
  std::vector<double> d_y(static_cast<size_t>(n) * p.out, 0.0);
  for (int s = 0; s < n; ++s) {
    const int a = batch.actions[static_cast<size_t>(s)];
    const double q = cache.y[static_cast<size_t>(s) * p.out + a];
    d_y[static_cast<size_t>(s) * p.out + a] = 2.0 * (q - batch.targets[static_cast<size_t>(s)]) / n;
  }
  return backward(p, cache, d_y);
}

// Max relative error of a candidate gradient against central differences.
inline double grad_check_against(const MlpParams& p, const Batch& batch,
                                 const std::vector<double>& analytic, double epsilon = 1e-5) {
  MlpParams probe = p;
  double worst = 0.0;
  for (size_t i = 0; i < probe.theta.size(); ++i) {
    const double saved = probe.theta[i];
    probe.theta[i] = saved + epsilon;
    ForwardCache cache;
    forward_into(probe, batch.states.data(), batch_size(batch, p.in), cache);
    const double up = selected_loss(cache, batch, p.out);
    probe.theta[i] = saved - epsilon;
    forward_into(probe, batch.states.data(), batch_size(batch, p.in), cache);
    const double down = selected_loss(cache, batch, p.out);
    probe.theta[i] = saved;

    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max(std::abs(analytic[i]), std::abs(numeric));
    if (denom < 1e-8) continue;  // both effectively zero
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

inline double grad_check(const MlpParams& p, const Batch& batch, double epsilon = 1e-5) {
  return grad_check_against(p, batch, grad(p, batch), epsilon);
}

// ---------------------------------------------------------------------------
// Adaptive moment estimation with bias correction.
// ---------------------------------------------------------------------------

struct OptimizerState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long steps = 0;
  std::vector<double> m;
  std::vector<double> v;
};

inline OptimizerState make_optimizer(const MlpParams& p, double lr) {
  OptimizerState opt;
  opt.lr = lr;
  opt.m.assign(static_cast<size_t>(p.count()), 0.0);
  opt.v.assign(static_cast<size_t>(p.count()), 0.0);
  return opt;
}

inline void step(MlpParams& p, const std::vector<double>& g, OptimizerState& opt) {
  if (g.size() != p.theta.size() || opt.m.size() != p.theta.size()) {
    throw ValidationError("optimizer: gradient/state shape mismatch");
  }
  for (double gi : g) {
    if (!std::isfinite(gi)) {
      throw InternalError("training halted: non-finite gradient at optimizer step " +
                          std::to_string(opt.steps + 1));
    }
  }
  opt.steps += 1;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.steps));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.steps));
  for (size_t i = 0; i < p.theta.size(); ++i) {
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g[i];
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g[i] * g[i];
    const double mhat = opt.m[i] / c1;
    const double vhat = opt.v[i] / c2;
    p.theta[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
  }
}

}  // namespace heparl

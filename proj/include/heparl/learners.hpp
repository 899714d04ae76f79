#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "heparl/errors.hpp"
#include "heparl/mdp.hpp"
#include "heparl/mlp.hpp"
#include "heparl/util.hpp"

namespace heparl {

enum class Algo { QL, DQN, DDQN, BCQ, CQL };

inline std::string to_string(Algo a) {
  switch (a) {
    case Algo::QL: return "ql";
    case Algo::DQN: return "dqn";
    case Algo::DDQN: return "ddqn";
    case Algo::BCQ: return "bcq";
    case Algo::CQL: return "cql";
  }
  throw InternalError("unreachable algo");
}

inline Algo algo_from_string(const std::string& s) {
  if (s == "ql") return Algo::QL;
  if (s == "dqn") return Algo::DQN;
  if (s == "ddqn") return Algo::DDQN;
  if (s == "bcq") return Algo::BCQ;
  if (s == "cql") return Algo::CQL;
  throw ValidationError("unknown algorithm '" + s + "' (expected ql|dqn|ddqn|bcq|cql)");
}

struct Hyper {
  double gamma = 0.99;
  double lr = 1e-3;
  int batch = 256;
  int epochs = 300;
  int sync_every = 500;       // optimizer steps between target-network syncs
  int checkpoint_every = 50;  // epochs between checkpoints (deep learners)
  double tau_bcq = 0.3;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  int hidden = 64;
};

inline Hyper default_hyper(Algo algo) {
  Hyper h;
  h.lr = algo == Algo::QL ? 0.1 : 1e-3;
  return h;
}

inline void validate(const Hyper& h) {
  // gamma 0 is admitted (it degrades TD targets to immediate rewards, which
  // the tests exploit); discounting above 1 is not.
  if (!(h.gamma >= 0.0 && h.gamma <= 1.0)) throw ValidationError("hyper: gamma must lie in [0,1]");
  if (!(h.lr > 0.0)) throw ValidationError("hyper: learning rate must be positive");
  if (h.batch < 1) throw ValidationError("hyper: batch size must be >= 1");
  if (h.epochs < 1) throw ValidationError("hyper: epochs must be >= 1");
  if (h.sync_every < 1) throw ValidationError("hyper: target sync period must be >= 1");
  if (h.checkpoint_every < 1) throw ValidationError("hyper: checkpoint interval must be >= 1");
  if (!(h.tau_bcq >= 0.0 && h.tau_bcq <= 1.0)) {
    throw ValidationError("hyper: tau_bcq must lie in [0,1]");
  }
  if (!(h.alpha >= 0.0)) throw ValidationError("hyper: alpha must be >= 0");
  if (h.hidden < 1) throw ValidationError("hyper: hidden width must be >= 1");
}

// ---------------------------------------------------------------------------
// Q-value containers.
// ---------------------------------------------------------------------------

struct QTable {
  std::array<std::array<double, kNumActions>, kNumScalarStates> q{};
  std::array<std::array<int, kNumActions>, kNumScalarStates> visits{};

  bool operator==(const QTable&) const = default;
};

inline std::array<double, kNumActions> action_values(const QTable& t, int s) {
  if (s < 0 || s >= kNumScalarStates) {
    throw ValidationError("tabular state " + std::to_string(s) + " outside 0..24");
  }
  return t.q[static_cast<size_t>(s)];
}

template <size_t N>
int argmax_low(const std::array<double, N>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(N); ++i) {
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  }
  return best;
}

template <size_t N>
int argmin_low(const std::array<double, N>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(N); ++i) {
    if (v[static_cast<size_t>(i)] < v[static_cast<size_t>(best)]) best = i;
  }
  return best;
}

// Tagged union over the two Q-function representations.
struct AnyQ {
  std::optional<QTable> table;
  std::optional<MlpParams> mlp;

  bool is_tabular() const { return table.has_value(); }

  std::array<double, kNumActions> values(int s) const {
    if (!table) throw ValidationError("scalar state given to a non-tabular Q function");
    return action_values(*table, s);
  }
  std::array<double, kNumActions> values(const StateVec& s) const {
    if (!mlp) throw ValidationError("vector state given to a tabular Q function");
    return heparl::action_values(*mlp, s);
  }
};

template <typename State>
int policy_best(const AnyQ& q, const State& s) {
  return argmax_low(q.values(s));
}

template <typename State>
int policy_worst(const AnyQ& q, const State& s) {
  return argmin_low(q.values(s));
}

struct Checkpoint {
  int epoch = 0;
  Algo algo = Algo::QL;
  ScoreKind kind = ScoreKind::Sofa;
  AnyQ q;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<double> step_losses;  // deep learners: one entry per optimizer step
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Tabular Q-learning: full sweeps over the dataset, one checkpoint per sweep.
// ---------------------------------------------------------------------------

inline TrainResult train_ql(const std::vector<Transition<int>>& data, const Hyper& h,
                            ScoreKind kind = ScoreKind::Sofa) {
  validate(h);
  if (data.empty()) throw ValidationError("train_ql: empty transition dataset");
  for (const auto& tr : data) {
    if (tr.s < 0 || tr.s >= kNumScalarStates || tr.s_next < 0 || tr.s_next >= kNumScalarStates) {
      throw DataError("train_ql: scalar state outside 0..24");
    }
  }

  TrainResult out;
  QTable table;
  std::mt19937_64 rng(derive_seed(h.seed, 0x71ULL));
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int sweep = 1; sweep <= h.epochs; ++sweep) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t idx : order) {
      const auto& tr = data[idx];
      auto& row = table.q[static_cast<size_t>(tr.s)];
      const auto& next = table.q[static_cast<size_t>(tr.s_next)];
      const double bootstrap =
          tr.done ? 0.0 : *std::max_element(next.begin(), next.end());
      const double target = tr.r + h.gamma * bootstrap;
      row[static_cast<size_t>(tr.a)] += h.lr * (target - row[static_cast<size_t>(tr.a)]);
      table.visits[static_cast<size_t>(tr.s)][static_cast<size_t>(tr.a)] += 1;
    }
    Checkpoint ck;
    ck.epoch = sweep;
    ck.algo = Algo::QL;
    ck.kind = kind;
    ck.q.table = table;
    out.checkpoints.push_back(std::move(ck));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Behavior model for BCQ: tabular frequencies over integer-rounded component
// scores. States never seen get the full action set (with a warning).
// ---------------------------------------------------------------------------

struct BehaviorModel {
  std::map<std::array<int, 6>, std::array<double, kNumActions>> probs;

  static std::array<int, 6> key(const StateVec& s) {
    std::array<int, 6> k;
    for (size_t i = 0; i < 6; ++i) k[i] = static_cast<int>(std::llround(s[i]));
    return k;
  }

  const std::array<double, kNumActions>* lookup(const StateVec& s) const {
    const auto it = probs.find(key(s));
    return it == probs.end() ? nullptr : &it->second;
  }
};

inline BehaviorModel fit_behavior(const std::vector<Transition<StateVec>>& data) {
  BehaviorModel model;
  std::map<std::array<int, 6>, std::array<double, kNumActions>> counts;
  for (const auto& tr : data) {
    counts[BehaviorModel::key(tr.s)][static_cast<size_t>(tr.a)] += 1.0;
  }
  for (auto& [key, row] : counts) {
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (auto& v : row) v /= total;
    model.probs[key] = row;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Deep offline TD learners. DDQN runs through the BCQ path with an all-true
// action mask, and CQL through the DQN path plus a penalty term, so the
// documented reduction identities (tau_bcq=0, alpha=0) hold bit-exactly.
// ---------------------------------------------------------------------------

namespace detail {

// argmax of `values` over admitted actions, lowest index on ties
inline int masked_argmax(const double* values, const std::array<bool, kNumActions>& mask) {
  int best = -1;
  for (int a = 0; a < kNumActions; ++a) {
    if (!mask[static_cast<size_t>(a)]) continue;
    if (best < 0 || values[a] > values[best]) best = a;
  }
  return best;
}

}  // namespace detail

inline TrainResult train_deep(const std::vector<Transition<StateVec>>& data, Algo algo,
                              const Hyper& h, ScoreKind kind = ScoreKind::Cxsofa) {
  validate(h);
  if (algo == Algo::QL) throw ValidationError("train_deep: ql is the tabular learner");
  if (data.empty()) throw ValidationError("train_deep: empty transition dataset");
  const int n = static_cast<int>(data.size());

  std::vector<double> states(static_cast<size_t>(n) * 6);
  std::vector<double> next_states(static_cast<size_t>(n) * 6);
  for (int i = 0; i < n; ++i) {
    std::copy(data[static_cast<size_t>(i)].s.begin(), data[static_cast<size_t>(i)].s.end(),
              states.begin() + static_cast<size_t>(i) * 6);
    std::copy(data[static_cast<size_t>(i)].s_next.begin(),
              data[static_cast<size_t>(i)].s_next.end(),
              next_states.begin() + static_cast<size_t>(i) * 6);
  }

  std::optional<BehaviorModel> behavior;
  long long behavior_misses = 0;
  if (algo == Algo::BCQ) behavior = fit_behavior(data);
  const bool double_estimate = algo == Algo::DDQN || algo == Algo::BCQ;

  TrainResult out;
  MlpParams online = init_mlp(6, h.hidden, kNumActions, derive_seed(h.seed, 0xA11ULL));
  MlpParams target = online;
  OptimizerState opt = make_optimizer(online, h.lr);
  std::mt19937_64 rng(derive_seed(h.seed, 0x5EEDULL));

  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<double> batch_s, batch_sn, d_y, targets_buf;
  std::vector<int> batch_a;
  ForwardCache cache, cache_next_tgt, cache_next_online;
  long long global_step = 0;

  for (int epoch = 1; epoch <= h.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += h.batch) {
      const int b = std::min(h.batch, n - start);
      batch_s.assign(static_cast<size_t>(b) * 6, 0.0);
      batch_sn.assign(static_cast<size_t>(b) * 6, 0.0);
      batch_a.assign(static_cast<size_t>(b), 0);
      targets_buf.assign(static_cast<size_t>(b), 0.0);
      for (int k = 0; k < b; ++k) {
        const size_t idx = order[static_cast<size_t>(start + k)];
        std::copy_n(states.begin() + static_cast<ptrdiff_t>(idx * 6), 6,
                    batch_s.begin() + static_cast<ptrdiff_t>(k) * 6);
        std::copy_n(next_states.begin() + static_cast<ptrdiff_t>(idx * 6), 6,
                    batch_sn.begin() + static_cast<ptrdiff_t>(k) * 6);
        batch_a[static_cast<size_t>(k)] = data[idx].a;
      }

      forward_into(target, batch_sn.data(), b, cache_next_tgt);
      if (double_estimate) forward_into(online, batch_sn.data(), b, cache_next_online);

      for (int k = 0; k < b; ++k) {
        const size_t idx = order[static_cast<size_t>(start + k)];
        const auto& tr = data[idx];
        double y = tr.r;
        if (!tr.done) {
          const double* qt = cache_next_tgt.y.data() + static_cast<size_t>(k) * kNumActions;
          if (double_estimate) {
            const double* qo =
                cache_next_online.y.data() + static_cast<size_t>(k) * kNumActions;
            std::array<bool, kNumActions> mask;
            mask.fill(true);
            if (behavior) {
              if (const auto* p = behavior->lookup(tr.s_next)) {
                const double pmax = *std::max_element(p->begin(), p->end());
                for (int a = 0; a < kNumActions; ++a) {
                  mask[static_cast<size_t>(a)] =
                      (*p)[static_cast<size_t>(a)] >= h.tau_bcq * pmax;
                }
              } else {
                ++behavior_misses;  // constraint falls back to the full set
              }
            }
            y += h.gamma * qt[detail::masked_argmax(qo, mask)];
          } else {
            y += h.gamma * *std::max_element(qt, qt + kNumActions);
          }
        }
        targets_buf[static_cast<size_t>(k)] = y;
      }

      forward_into(online, batch_s.data(), b, cache);
      d_y.assign(static_cast<size_t>(b) * kNumActions, 0.0);
      double loss = 0.0;
      for (int k = 0; k < b; ++k) {
        const int a = batch_a[static_cast<size_t>(k)];
        const double q = cache.y[static_cast<size_t>(k) * kNumActions + a];
        const double diff = q - targets_buf[static_cast<size_t>(k)];
        d_y[static_cast<size_t>(k) * kNumActions + a] = 2.0 * diff / b;
        loss += diff * diff / b;
      }
      if (algo == Algo::CQL && h.alpha > 0.0) {
        for (int k = 0; k < b; ++k) {
          const double* y = cache.y.data() + static_cast<size_t>(k) * kNumActions;
          const double m = *std::max_element(y, y + kNumActions);
          double z = 0.0;
          for (int a = 0; a < kNumActions; ++a) z += std::exp(y[a] - m);
          const double lse = m + std::log(z);
          const int a_data = batch_a[static_cast<size_t>(k)];
          loss += h.alpha * (lse - y[a_data]) / b;
          for (int a = 0; a < kNumActions; ++a) {
            d_y[static_cast<size_t>(k) * kNumActions + a] +=
                h.alpha * (std::exp(y[a] - m) / z) / b;
          }
          d_y[static_cast<size_t>(k) * kNumActions + a_data] -= h.alpha / b;
        }
      }
      out.step_losses.push_back(loss);

      step(online, backward(online, cache, d_y), opt);
      ++global_step;
      if (global_step % h.sync_every == 0) target = online;
    }

    if (epoch % h.checkpoint_every == 0 || epoch == h.epochs) {
      Checkpoint ck;
      ck.epoch = epoch;
      ck.algo = algo;
      ck.kind = kind;
      ck.q.mlp = online;
      out.checkpoints.push_back(std::move(ck));
    }
  }
  if (behavior_misses > 0) {
    out.warnings.push_back("bcq: behavior model had no mass for " +
                           std::to_string(behavior_misses) +
                           " next-state lookups; constraint fell back to the full action set");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint files: versioned JSON with architecture header and checksum.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json to_json(const Checkpoint& ck) {
  nlohmann::json j{{"format_version", kCheckpointFormatVersion},
                   {"kind", "heparl-checkpoint"},
                   {"algo", to_string(ck.algo)},
                   {"reward", to_string(ck.kind)},
                   {"epoch", ck.epoch}};
  if (ck.q.table) {
    const auto& t = *ck.q.table;
    nlohmann::json q = nlohmann::json::array(), visits = nlohmann::json::array();
    std::vector<double> flat;
    for (int s = 0; s < kNumScalarStates; ++s) {
      q.push_back(t.q[static_cast<size_t>(s)]);
      visits.push_back(t.visits[static_cast<size_t>(s)]);
      flat.insert(flat.end(), t.q[static_cast<size_t>(s)].begin(),
                  t.q[static_cast<size_t>(s)].end());
    }
    j["q"] = {{"type", "table"}, {"values", std::move(q)}, {"visits", std::move(visits)}};
    j["checksum"] = hex64(fnv1a(std::span<const double>(flat)));
  } else if (ck.q.mlp) {
    const auto& m = *ck.q.mlp;
    j["q"] = {{"type", "mlp"}, {"in", m.in}, {"hidden", m.hidden}, {"out", m.out},
              {"theta", m.theta}};
    j["checksum"] = hex64(fnv1a(std::span<const double>(m.theta)));
  } else {
    throw InternalError("checkpoint holds no Q function");
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "heparl-checkpoint") {
    throw DataError("not a checkpoint file (missing kind marker)");
  }
  if (j.value("format_version", -1) != kCheckpointFormatVersion) {
    throw DataError("unsupported checkpoint format_version");
  }
  Checkpoint ck;
  ck.algo = algo_from_string(j.at("algo").get<std::string>());
  ck.kind = score_kind_from_string(j.at("reward").get<std::string>());
  ck.epoch = j.at("epoch").get<int>();
  const auto& q = j.at("q");
  const std::string type = q.at("type").get<std::string>();
  std::string checksum;
  if (type == "table") {
    QTable t;
    const auto& values = q.at("values");
    const auto& visits = q.at("visits");
    if (values.size() != kNumScalarStates || visits.size() != kNumScalarStates) {
      throw DataError("checkpoint table must have 25 state rows");
    }
    std::vector<double> flat;
    for (int s = 0; s < kNumScalarStates; ++s) {
      t.q[static_cast<size_t>(s)] = values[s].get<std::array<double, kNumActions>>();
      t.visits[static_cast<size_t>(s)] = visits[s].get<std::array<int, kNumActions>>();
      flat.insert(flat.end(), t.q[static_cast<size_t>(s)].begin(),
                  t.q[static_cast<size_t>(s)].end());
    }
    checksum = hex64(fnv1a(std::span<const double>(flat)));
    ck.q.table = std::move(t);
  } else if (type == "mlp") {
    MlpParams m;
    m.in = q.at("in").get<int>();
    m.hidden = q.at("hidden").get<int>();
    m.out = q.at("out").get<int>();
    m.theta = q.at("theta").get<std::vector<double>>();
    validate(m);
    checksum = hex64(fnv1a(std::span<const double>(m.theta)));
    ck.q.mlp = std::move(m);
  } else {
    throw DataError("checkpoint has unknown q type '" + type + "'");
  }
  if (j.value("checksum", "") != checksum) {
    throw DataError("checkpoint checksum mismatch (file corrupted?)");
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out << to_json(ck).dump();
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("checkpoint parse error in " + path + ": " + ex.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace heparl

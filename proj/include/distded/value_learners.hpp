#pragma once

/**
 * Value heads for the relabeled MDPs and their offline training.
 *
 * A head is either a DDQN point estimator (state -> per-action value) or an
 * IQN quantile estimator (state, tau -> per-action quantile value). The IQN
 * network is
 *
 *   h      = relu(W_s x + b_s)                  state embedding, width H
 *   phi    = relu(W_t cos(pi i tau) + b_t)      quantile embedding, width H
 *   Z(.,a) = head(h * phi)                      H -> H -> |A|, elementwise product
 *
 * Both kinds may add a conservative penalty logsumexp(q) - q[a_data],
 * weighted by beta. Targets are clamped to the head's support; raw outputs
 * inside the loss are not.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "distded/core/adam.hpp"
#include "distded/core/checkpoint.hpp"
#include "distded/core/dense_net.hpp"
#include "distded/core/quantile_embedding.hpp"
#include "distded/dataset.hpp"

namespace distded {

enum class HeadKind { ddqn, iqn };

inline const char* to_string(HeadKind k) { return k == HeadKind::ddqn ? "ddqn" : "iqn"; }
inline HeadKind head_kind_from_string(const std::string& s) {
  if (s == "ddqn") return HeadKind::ddqn;
  if (s == "iqn") return HeadKind::iqn;
  throw FormatError("unknown head kind '" + s + "'");
}

struct TargetUpdate {
  enum class Rule { hard, ema } rule = Rule::hard;
  int every = 1000;
  double ema_rate = 0.005;

  static TargetUpdate hard(int every) { return {Rule::hard, every, 0.005}; }
  static TargetUpdate ema(double rate = 0.005, int every = 5) { return {Rule::ema, every, rate}; }
};

struct TrainConfig {
  int n_online_taus = 8;
  int n_target_taus = 8;
  int k_eval = 1000;
  double beta = 0.1;
  double gamma = 1.0;
  double lr = 1e-3;
  int batch_size = 128;
  int epochs = 50;
  TargetUpdate target_update = TargetUpdate::hard(1000);
  double huber_kappa = 1.0;
  double neg_terminal_frac = 0.25;
  std::uint64_t seed = 0;
  int hidden = 32;
  int embed_dim = 64;
  // CQL on each sampled tau instead of the tau-averaged values.
  bool cql_per_tau = false;

  void validate() const {
    if (n_online_taus < 1 || n_target_taus < 1 || k_eval < 1) throw ConfigError("tau counts must be positive");
    if (beta < 0) throw ConfigError("beta must be non-negative");
    if (gamma != 1.0) throw ConfigError("both relabeled MDPs fix gamma = 1");
    if (!(lr > 0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (target_update.every < 1) throw ConfigError("target update period must be positive");
    if (!(target_update.ema_rate > 0 && target_update.ema_rate <= 1)) throw ConfigError("EMA rate must lie in (0, 1]");
    if (!(huber_kappa > 0)) throw ConfigError("huber kappa must be positive");
    if (!(neg_terminal_frac >= 0 && neg_terminal_frac < 1)) throw ConfigError("neg_terminal_frac must lie in [0, 1)");
    if (hidden < 1 || embed_dim < 1) throw ConfigError("layer widths must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"n_online_taus", c.n_online_taus},
                     {"n_target_taus", c.n_target_taus},
                     {"k_eval", c.k_eval},
                     {"beta", c.beta},
                     {"gamma", c.gamma},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"target_update",
                      {{"rule", c.target_update.rule == TargetUpdate::Rule::hard ? "hard" : "ema"},
                       {"every", c.target_update.every},
                       {"ema_rate", c.target_update.ema_rate}}},
                     {"huber_kappa", c.huber_kappa},
                     {"neg_terminal_frac", c.neg_terminal_frac},
                     {"seed", c.seed},
                     {"hidden", c.hidden},
                     {"embed_dim", c.embed_dim},
                     {"cql_per_tau", c.cql_per_tau}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.n_online_taus = j.value("n_online_taus", d.n_online_taus);
  c.n_target_taus = j.value("n_target_taus", d.n_target_taus);
  c.k_eval = j.value("k_eval", d.k_eval);
  c.beta = j.value("beta", d.beta);
  c.gamma = j.value("gamma", d.gamma);
  c.lr = j.value("lr", d.lr);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  if (j.contains("target_update")) {
    const auto& t = j.at("target_update");
    c.target_update.rule = t.value("rule", std::string("hard")) == "ema" ? TargetUpdate::Rule::ema : TargetUpdate::Rule::hard;
    c.target_update.every = t.value("every", d.target_update.every);
    c.target_update.ema_rate = t.value("ema_rate", d.target_update.ema_rate);
  }
  c.huber_kappa = j.value("huber_kappa", d.huber_kappa);
  c.neg_terminal_frac = j.value("neg_terminal_frac", d.neg_terminal_frac);
  c.seed = j.value("seed", d.seed);
  c.hidden = j.value("hidden", d.hidden);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.cql_per_tau = j.value("cql_per_tau", d.cql_per_tau);
}

inline std::string config_hash(const TrainConfig& c) { return content_hash(nlohmann::json(c).dump()); }

// ---------------------------------------------------------------------------
// Networks

template <class T>
struct ValueNet {
  HeadKind kind = HeadKind::ddqn;
  DenseNet<T> torso;                // ddqn: full net; iqn: state embedding layer
  QuantileEmbedding<T> embedding;   // iqn only
  DenseNet<T> head;                 // iqn only

  int state_dim() const { return torso.input_dim(); }
  int action_count() const { return kind == HeadKind::ddqn ? torso.output_dim() : head.output_dim(); }

  static ValueNet make(HeadKind kind, int state_dim, int actions, int hidden, int embed_dim, Rng& rng) {
    ValueNet n;
    n.kind = kind;
    if (kind == HeadKind::ddqn) {
      n.torso = DenseNet<T>::he_uniform({state_dim, hidden, hidden, actions}, rng);
    } else {
      n.torso = DenseNet<T>::he_uniform({state_dim, hidden}, rng);
      n.embedding = QuantileEmbedding<T>::he_uniform(embed_dim, hidden, rng);
      n.head = DenseNet<T>::he_uniform({hidden, hidden, actions}, rng);
    }
    return n;
  }

  DenseNet<T>& output_net() { return kind == HeadKind::ddqn ? torso : head; }

  std::vector<DenseNet<T>*> nets() {
    if (kind == HeadKind::ddqn) return {&torso};
    return {&torso, &embedding.projection, &head};
  }
  std::vector<const DenseNet<T>*> nets() const {
    if (kind == HeadKind::ddqn) return {&torso};
    return {&torso, &embedding.projection, &head};
  }

  std::vector<std::span<T>> parameters() {
    std::vector<std::span<T>> out;
    for (auto* n : nets())
      for (auto s : parameter_spans(*n)) out.push_back(s);
    return out;
  }

  bool operator==(const ValueNet& o) const {
    auto a = nets();
    auto b = o.nets();
    if (kind != o.kind || a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i]->layer_dims != b[i]->layer_dims) return false;
      for (std::size_t l = 0; l < a[i]->layer_count(); ++l)
        if (a[i]->weights[l] != b[i]->weights[l] || a[i]->biases[l] != b[i]->biases[l]) return false;
    }
    return true;
  }
};

template <class T>
struct ValueNetGrads {
  std::vector<DenseGrads<T>> parts;  // same order as ValueNet::nets()

  std::vector<std::span<const T>> spans() const {
    std::vector<std::span<const T>> out;
    for (const auto& g : parts)
      for (auto s : gradient_spans(g)) out.push_back(s);
    return out;
  }
};

template <class T>
struct IqnTape {
  DenseTape<T> torso;
  DenseTape<T> embedding;
  DenseTape<T> head;
  Mat<T> state_rep;     // relu(torso), H x B
  Mat<T> expanded;      // state_rep repeated per tau, H x (B n)
  Mat<T> tau_rep;       // embedding output, H x (B n)
  int taus_per_state = 0;
};

/// IQN outputs for B states with `n` taus each: column b*n + k holds the
/// per-action values of state b at taus[b*n + k]. Raw, unclamped.
template <class T>
Mat<T> iqn_forward(const ValueNet<T>& net, const Mat<T>& states, std::span<const double> taus, int n,
                   IqnTape<T>* tape = nullptr) {
  if (net.kind != HeadKind::iqn) throw KindError("iqn_forward needs an IQN network");
  const Eigen::Index b = states.cols();
  if (static_cast<Eigen::Index>(taus.size()) != b * n) throw ShapeError("need exactly n taus per state");
  Mat<T> rep = forward_batch(net.torso, states, tape ? &tape->torso : nullptr).cwiseMax(T(0));
  Mat<T> expanded(rep.rows(), b * n);
  for (Eigen::Index i = 0; i < b; ++i) expanded.middleCols(i * n, n) = rep.col(i).replicate(1, n);
  Mat<T> phi = embed_batch(net.embedding, taus, tape ? &tape->embedding : nullptr);
  Mat<T> mixed = expanded.cwiseProduct(phi);
  Mat<T> out = forward_batch(net.head, mixed, tape ? &tape->head : nullptr);
  if (tape) {
    tape->state_rep = std::move(rep);
    tape->expanded = std::move(expanded);
    tape->tau_rep = std::move(phi);
    tape->taus_per_state = n;
  }
  return out;
}

template <class T>
ValueNetGrads<T> iqn_backward(const ValueNet<T>& net, const IqnTape<T>& tape, const Mat<T>& upstream) {
  ValueNetGrads<T> g;
  DenseGrads<T> head_g = backward(net.head, tape.head, upstream);
  const Mat<T> d_phi = head_g.input.cwiseProduct(tape.expanded);
  const Mat<T> d_expanded = head_g.input.cwiseProduct(tape.tau_rep);
  const int n = tape.taus_per_state;
  const Eigen::Index b = tape.state_rep.cols();
  Mat<T> d_rep(tape.state_rep.rows(), b);
  for (Eigen::Index i = 0; i < b; ++i) d_rep.col(i) = d_expanded.middleCols(i * n, n).rowwise().sum();
  d_rep = d_rep.cwiseProduct((tape.state_rep.array() > T(0)).matrix().template cast<T>());
  g.parts.push_back(backward(net.torso, tape.torso, d_rep));
  g.parts.push_back(embed_backward(net.embedding, tape.embedding, d_phi));
  g.parts.push_back(std::move(head_g));
  return g;
}

template <class T>
Mat<T> states_matrix(const std::vector<const Transition*>& batch, bool next) {
  const auto d = static_cast<Eigen::Index>((next ? batch.front()->next_state : batch.front()->state).size());
  Mat<T> m(d, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = next ? batch[i]->next_state : batch[i]->state;
    if (static_cast<Eigen::Index>(s.size()) != d) throw ShapeError("inconsistent state dimensions in batch");
    for (Eigen::Index r = 0; r < d; ++r) m(r, static_cast<Eigen::Index>(i)) = static_cast<T>(s[static_cast<std::size_t>(r)]);
  }
  return m;
}

template <class T>
Mat<T> states_matrix(const std::vector<std::vector<double>>& states) {
  if (states.empty()) throw ShapeError("no states");
  const auto d = static_cast<Eigen::Index>(states.front().size());
  Mat<T> m(d, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (static_cast<Eigen::Index>(states[i].size()) != d) throw ShapeError("inconsistent state dimensions");
    for (Eigen::Index r = 0; r < d; ++r) m(r, static_cast<Eigen::Index>(i)) = static_cast<T>(states[i][static_cast<std::size_t>(r)]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Heads

template <class T>
struct ValueHead {
  HeadKind kind = HeadKind::ddqn;
  Mode mode = Mode::D;
  Support support{-1.0, 0.0};
  ValueNet<T> online;
  ValueNet<T> target;

  int action_count() const { return online.action_count(); }
  int state_dim() const { return online.state_dim(); }

  static ValueHead make(HeadKind kind, Mode mode, int state_dim, int actions, int hidden, int embed_dim, Rng& rng) {
    ValueHead h;
    h.kind = kind;
    h.mode = mode;
    h.support = support_for(mode);
    h.online = ValueNet<T>::make(kind, state_dim, actions, hidden, embed_dim, rng);
    h.target = h.online;
    return h;
  }

  void hard_update() { target = online; }

  void ema_update(double rate) {
    auto dst = target.parameters();
    auto src = online.parameters();
    const T r = static_cast<T>(rate);
    for (std::size_t k = 0; k < dst.size(); ++k)
      for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] = (T(1) - r) * dst[k][i] + r * src[k][i];
  }

  void check_state(std::span<const double> s) const {
    if (static_cast<int>(s.size()) != state_dim())
      throw ShapeError("state has " + std::to_string(s.size()) + " features, head expects " + std::to_string(state_dim()));
  }
};

/// Zeroes the output layer of both networks so every output is exactly 0.
template <class T>
void zero_output_layer(ValueHead<T>& h) {
  for (auto* net : {&h.online, &h.target}) {
    auto& out = net->output_net();
    out.weights.back().setZero();
    out.biases.back().setZero();
  }
}

/// Per-tau, per-action quantile values at one state, clamped to the support:
/// a (|taus| x actions) matrix.
template <class T>
Mat<double> iqn_values(const ValueHead<T>& head, std::span<const double> state, std::span<const double> taus) {
  if (head.kind != HeadKind::iqn) throw KindError("iqn_values needs an IQN head");
  head.check_state(state);
  Mat<T> s(head.state_dim(), 1);
  for (int i = 0; i < head.state_dim(); ++i) s(i, 0) = static_cast<T>(state[static_cast<std::size_t>(i)]);
  const Mat<T> out = iqn_forward(head.online, s, taus, static_cast<int>(taus.size()));
  Mat<double> v = out.transpose().template cast<double>();
  return v.unaryExpr([&](double x) { return head.support.clamp(x); });
}

/// Point estimates at one state, clamped to the support.
template <class T>
std::vector<double> ddqn_values(const ValueHead<T>& head, std::span<const double> state) {
  if (head.kind != HeadKind::ddqn) throw KindError("ddqn_values needs a DDQN head");
  head.check_state(state);
  std::vector<T> s(state.begin(), state.end());
  const auto out = forward(head.online.torso, std::span<const T>(s));
  std::vector<double> v;
  for (T x : out) v.push_back(head.support.clamp(static_cast<double>(x)));
  return v;
}

// ---------------------------------------------------------------------------
// Losses

template <class T>
struct LossWithGrad {
  T loss = 0;
  std::vector<T> grad;
};

/// Asymmetric Huber quantile loss averaged over every (prediction, target)
/// pair, with its gradient with respect to each prediction.
template <class T>
LossWithGrad<T> quantile_huber_loss(std::span<const double> taus, std::span<const T> pred, std::span<const T> targets,
                                    double kappa) {
  if (!(kappa > 0)) throw DomainError("huber kappa must be positive");
  if (taus.size() != pred.size()) throw ShapeError("one tau per prediction");
  if (pred.empty() || targets.empty()) throw ShapeError("empty quantile loss input");
  const T k = static_cast<T>(kappa);
  const T inv_pairs = T(1) / static_cast<T>(pred.size() * targets.size());
  LossWithGrad<T> r;
  r.grad.assign(pred.size(), T(0));
  for (std::size_t j = 0; j < pred.size(); ++j) {
    const T tau = static_cast<T>(taus[j]);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const T u = targets[i] - pred[j];
      const T au = std::abs(u);
      const T weight = std::abs(tau - (u < T(0) ? T(1) : T(0)));
      const T huber = au <= k ? T(0.5) * u * u : k * (au - T(0.5) * k);
      const T dhuber = au <= k ? u : (u < T(0) ? -k : k);
      r.loss += weight * huber / k * inv_pairs;
      r.grad[j] -= weight * dhuber / k * inv_pairs;
    }
  }
  return r;
}

/// logsumexp(q) - q[action] and its gradient softmax(q) - onehot(action).
template <class T>
LossWithGrad<T> cql_penalty(std::span<const T> q, int action) {
  if (q.empty()) throw DomainError("cql penalty needs at least one action");
  if (action < 0 || static_cast<std::size_t>(action) >= q.size()) throw DomainError("data action out of range");
  const T mx = *std::max_element(q.begin(), q.end());
  T sum = 0;
  for (T v : q) sum += std::exp(v - mx);
  LossWithGrad<T> r;
  r.loss = mx + std::log(sum) - q[static_cast<std::size_t>(action)];
  r.grad.resize(q.size());
  for (std::size_t a = 0; a < q.size(); ++a) r.grad[a] = std::exp(q[a] - mx) / sum;
  r.grad[static_cast<std::size_t>(action)] -= T(1);
  return r;
}

struct LossReport {
  double rl_loss = 0;
  double cql_loss = 0;
  double total = 0;
};

template <class T>
struct BatchLoss {
  LossReport report;
  ValueNetGrads<T> grads;
};

namespace detail {

template <class T>
int argmax_col(const Mat<T>& m, Eigen::Index col) {
  Eigen::Index best = 0;
  m.col(col).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace detail

/// Double-estimator bootstrap targets for a batch: for each transition, n'
/// target samples (IQN) or one (DDQN). Terminal transitions yield the reward;
/// the rest reward + gamma * target-net value at the online-greedy action,
/// clamped to the support. Returned as (n' x B).
template <class T>
Mat<T> bootstrap_targets(const ValueHead<T>& head, const std::vector<const Transition*>& batch, Mode mode,
                         std::span<const double> target_taus, int n_target, double gamma) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const int n = head.kind == HeadKind::iqn ? n_target : 1;
  Mat<T> targets(n, b);
  const Mat<T> next = states_matrix<T>(batch, true);
  Mat<T> online_next, target_next;
  if (head.kind == HeadKind::iqn) {
    online_next = iqn_forward(head.online, next, target_taus, n);
    target_next = iqn_forward(head.target, next, target_taus, n);
  } else {
    online_next = forward_batch(head.online.torso, next);
    target_next = forward_batch(head.target.torso, next);
  }
  for (Eigen::Index i = 0; i < b; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(i)];
    const double r = relabel(t, mode);
    if (!t.bootstraps()) {
      targets.col(i).setConstant(static_cast<T>(r));
      continue;
    }
    // Greedy action on the online net's mean over the target taus.
    const Vec<T> mean = online_next.middleCols(i * n, n).rowwise().mean();
    Eigen::Index a_star = 0;
    mean.maxCoeff(&a_star);
    for (int k = 0; k < n; ++k) {
      const double z = static_cast<double>(target_next(a_star, i * n + k));
      targets(k, i) = static_cast<T>(head.support.clamp(r + gamma * z));
    }
  }
  return targets;
}

/// Target samples for one transition (the single-transition form of
/// bootstrap_targets).
template <class T>
std::vector<double> distributional_target(const ValueHead<T>& head, const Transition& t, Mode mode,
                                          std::span<const double> target_taus, double gamma = 1.0) {
  if (head.kind != HeadKind::iqn) throw KindError("distributional_target needs an IQN head");
  const std::vector<const Transition*> batch{&t};
  const Mat<T> m = bootstrap_targets(head, batch, mode, target_taus, static_cast<int>(target_taus.size()), gamma);
  std::vector<double> out;
  for (Eigen::Index k = 0; k < m.rows(); ++k) out.push_back(static_cast<double>(m(k, 0)));
  return out;
}

/// Quantile-regression loss (+ beta * CQL when enabled) for an IQN head on a
/// batch with given online and target taus.
template <class T>
BatchLoss<T> iqn_batch_loss(const ValueHead<T>& head, const std::vector<const Transition*>& batch, Mode mode,
                            std::span<const double> online_taus, std::span<const double> target_taus,
                            const TrainConfig& cfg, bool use_cql) {
  if (head.kind != HeadKind::iqn) throw KindError("iqn_batch_loss needs an IQN head");
  const int n = cfg.n_online_taus;
  const auto b = static_cast<Eigen::Index>(batch.size());
  const int actions = head.action_count();
  const Mat<T> targets = bootstrap_targets(head, batch, mode, target_taus, cfg.n_target_taus, cfg.gamma);
  IqnTape<T> tape;
  const Mat<T> out = iqn_forward(head.online, states_matrix<T>(batch, false), online_taus, n, &tape);
  Mat<T> d_out = Mat<T>::Zero(out.rows(), out.cols());
  const T inv_b = T(1) / static_cast<T>(b);
  T rl = 0;
  T cql = 0;
  std::vector<T> pred(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < b; ++i) {
    const int a = batch[static_cast<std::size_t>(i)]->action;
    for (int j = 0; j < n; ++j) pred[static_cast<std::size_t>(j)] = out(a, i * n + j);
    const std::span<const T> tgt(targets.col(i).data(), static_cast<std::size_t>(targets.rows()));
    const auto qh = quantile_huber_loss<T>(online_taus.subspan(static_cast<std::size_t>(i * n), static_cast<std::size_t>(n)),
                                           pred, tgt, cfg.huber_kappa);
    rl += qh.loss * inv_b;
    for (int j = 0; j < n; ++j) d_out(a, i * n + j) += qh.grad[static_cast<std::size_t>(j)] * inv_b;

    if (!use_cql) continue;
    const T beta = static_cast<T>(cfg.beta);
    if (cfg.cql_per_tau) {
      for (int j = 0; j < n; ++j) {
        const Vec<T> q = out.col(i * n + j);
        const auto pen = cql_penalty<T>(std::span<const T>(q.data(), static_cast<std::size_t>(actions)), a);
        cql += pen.loss * inv_b / static_cast<T>(n);
        if (cfg.beta != 0)
          for (int k = 0; k < actions; ++k)
            d_out(k, i * n + j) += beta * pen.grad[static_cast<std::size_t>(k)] * inv_b / static_cast<T>(n);
      }
    } else {
      const Vec<T> q = out.middleCols(i * n, n).rowwise().mean();
      const auto pen = cql_penalty<T>(std::span<const T>(q.data(), static_cast<std::size_t>(actions)), a);
      cql += pen.loss * inv_b;
      if (cfg.beta != 0)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < actions; ++k)
            d_out(k, i * n + j) += beta * pen.grad[static_cast<std::size_t>(k)] * inv_b / static_cast<T>(n);
    }
  }
  BatchLoss<T> r;
  r.report.rl_loss = static_cast<double>(rl);
  r.report.cql_loss = static_cast<double>(cql);
  r.report.total = r.report.rl_loss + cfg.beta * r.report.cql_loss;
  r.grads = iqn_backward(head.online, tape, d_out);
  return r;
}

/// Mean squared TD error (+ beta * CQL when enabled) for a DDQN head.
template <class T>
BatchLoss<T> ddqn_td_loss(const ValueHead<T>& head, const std::vector<const Transition*>& batch, Mode mode,
                          const TrainConfig& cfg, bool use_cql) {
  if (head.kind != HeadKind::ddqn) throw KindError("ddqn_td_loss needs a DDQN head");
  const auto b = static_cast<Eigen::Index>(batch.size());
  const int actions = head.action_count();
  const Mat<T> targets = bootstrap_targets(head, batch, mode, {}, 1, cfg.gamma);
  DenseTape<T> tape;
  const Mat<T> q = forward_batch(head.online.torso, states_matrix<T>(batch, false), &tape);
  Mat<T> d_out = Mat<T>::Zero(q.rows(), q.cols());
  const T inv_b = T(1) / static_cast<T>(b);
  T rl = 0;
  T cql = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int a = batch[static_cast<std::size_t>(i)]->action;
    const T err = q(a, i) - targets(0, i);
    rl += err * err * inv_b;
    d_out(a, i) += T(2) * err * inv_b;
    if (!use_cql) continue;
    const Vec<T> col = q.col(i);
    const auto pen = cql_penalty<T>(std::span<const T>(col.data(), static_cast<std::size_t>(actions)), a);
    cql += pen.loss * inv_b;
    if (cfg.beta != 0)
      for (int k = 0; k < actions; ++k)
        d_out(k, i) += static_cast<T>(cfg.beta) * pen.grad[static_cast<std::size_t>(k)] * inv_b;
  }
  BatchLoss<T> r;
  r.report.rl_loss = static_cast<double>(rl);
  r.report.cql_loss = static_cast<double>(cql);
  r.report.total = r.report.rl_loss + cfg.beta * r.report.cql_loss;
  ValueNetGrads<T> g;
  g.parts.push_back(backward(head.online.torso, tape, d_out));
  r.grads = std::move(g);
  return r;
}

// ---------------------------------------------------------------------------
// Training

struct TrainingLog {
  std::vector<LossReport> steps;

  std::string csv() const {
    std::ostringstream o;
    o.precision(17);
    o << "step,rl_loss,cql_loss,total\n";
    for (std::size_t i = 0; i < steps.size(); ++i)
      o << i << ',' << steps[i].rl_loss << ',' << steps[i].cql_loss << ',' << steps[i].total << '\n';
    return o.str();
  }
};

template <class T>
struct TrainResult {
  ValueHead<T> head;
  TrainingLog log;
};

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <class T = float>
TrainResult<T> train(const OfflineDataset& ds, Mode mode, const TrainConfig& cfg, HeadKind kind, bool use_cql,
                     int action_count = kActionCount) {
  cfg.validate();
  if (!use_cql && cfg.beta > 0) throw ConfigError("beta > 0 requires the CQL penalty to be enabled");
  if (ds.empty()) throw UsageError("cannot train on an empty dataset");
  const int state_dim = static_cast<int>(ds.at(ds.all().front()).state.size());
  Rng init_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(mode) * 2 + static_cast<std::uint64_t>(kind)));
  TrainResult<T> res{ValueHead<T>::make(kind, mode, state_dim, action_count, cfg.hidden, cfg.embed_dim, init_rng), {}};
  ValueHead<T>& head = res.head;
  Rng rng(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(mode)));
  AdamState<T> adam(cfg.lr);
  const std::size_t steps_per_epoch =
      (ds.size() + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
  const double frac = ds.negative_terminals().empty() ? 0.0 : cfg.neg_terminal_frac;
  std::vector<double> online_taus, target_taus;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto batch = stratified_minibatch(ds, static_cast<std::size_t>(cfg.batch_size), frac, rng);
      BatchLoss<T> bl;
      if (kind == HeadKind::iqn) {
        online_taus.resize(batch.size() * static_cast<std::size_t>(cfg.n_online_taus));
        target_taus.resize(batch.size() * static_cast<std::size_t>(cfg.n_target_taus));
        for (double& t : online_taus) t = rng.uniform_open();
        for (double& t : target_taus) t = rng.uniform_open();
        bl = iqn_batch_loss(head, batch, mode, online_taus, target_taus, cfg, use_cql);
      } else {
        bl = ddqn_td_loss(head, batch, mode, cfg, use_cql);
      }
      res.log.steps.push_back(bl.report);
      adam_step(head.online.parameters(), bl.grads.spans(), adam);
      ++step;
      if (step % static_cast<std::uint64_t>(cfg.target_update.every) == 0) {
        if (cfg.target_update.rule == TargetUpdate::Rule::hard)
          head.hard_update();
        else
          head.ema_update(cfg.target_update.ema_rate);
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints: <path>.json manifest plus <path>.bin parameter blob.

template <class T>
std::string head_blob(const ValueHead<T>& h) {
  std::string blob;
  for (const auto* n : h.online.nets()) append_blob(blob, *n);
  for (const auto* n : h.target.nets()) append_blob(blob, *n);
  return blob;
}

template <class T>
nlohmann::ordered_json head_manifest(const ValueHead<T>& h, const TrainConfig& cfg, const std::string& blob_file,
                                     const std::string& blob) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto* n : h.online.nets()) layers.push_back(n->layer_dims);
  return nlohmann::ordered_json{{"format", "distded-head"},
                                {"version", 1},
                                {"kind", to_string(h.kind)},
                                {"mode", to_string(h.mode)},
                                {"support", {h.support.lo, h.support.hi}},
                                {"action_count", h.action_count()},
                                {"state_dim", h.state_dim()},
                                {"layer_dims", layers},
                                {"seed", cfg.seed},
                                {"config", nlohmann::json(cfg)},
                                {"config_hash", config_hash(cfg)},
                                {"blob", blob_file},
                                {"blob_hash", content_hash(blob)}};
}

template <class T>
void save_head(const ValueHead<T>& h, const TrainConfig& cfg, const std::string& path_prefix) {
  const std::string blob = head_blob(h);
  const std::string blob_path = path_prefix + ".bin";
  const auto slash = blob_path.find_last_of('/');
  const std::string blob_name = slash == std::string::npos ? blob_path : blob_path.substr(slash + 1);
  write_file(blob_path, blob);
  write_file(path_prefix + ".json", head_manifest(h, cfg, blob_name, blob).dump(2) + "\n");
}

template <class T>
struct LoadedHead {
  ValueHead<T> head;
  TrainConfig config;
  std::string manifest_hash;
};

template <class T = float>
LoadedHead<T> load_head(const std::string& path_prefix) {
  const std::string text = read_file(path_prefix + ".json");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("head manifest is not JSON: ") + e.what());
  }
  try {
    if (m.at("format") != "distded-head") throw FormatError("not a head manifest");
    LoadedHead<T> out;
    out.config = m.at("config").get<TrainConfig>();
    ValueHead<T>& h = out.head;
    h.kind = head_kind_from_string(m.at("kind").get<std::string>());
    h.mode = m.at("mode").get<std::string>() == "D" ? Mode::D : Mode::R;
    h.support = support_for(h.mode);
    const auto layers = m.at("layer_dims").get<std::vector<std::vector<int>>>();
    h.online.kind = h.kind;
    if (h.kind == HeadKind::ddqn) {
      if (layers.size() != 1) throw FormatError("ddqn manifest needs one layer list");
      h.online.torso = DenseNet<T>::zeros(layers[0]);
    } else {
      if (layers.size() != 3) throw FormatError("iqn manifest needs three layer lists");
      h.online.torso = DenseNet<T>::zeros(layers[0]);
      h.online.embedding.projection = DenseNet<T>::zeros(layers[1]);
      h.online.head = DenseNet<T>::zeros(layers[2]);
    }
    h.target = h.online;
    const std::string blob = read_file(path_prefix + ".bin");
    if (content_hash(blob) != m.at("blob_hash").get<std::string>())
      throw IntegrityError("parameter blob hash does not match its manifest");
    std::size_t pos = 0;
    for (auto* n : h.online.nets()) read_blob(blob, pos, *n);
    for (auto* n : h.target.nets()) read_blob(blob, pos, *n);
    if (pos != blob.size()) throw FormatError("parameter blob has trailing bytes");
    out.manifest_hash = content_hash(text);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed head manifest: ") + e.what());
  }
}

}  // namespace distded

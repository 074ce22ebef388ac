#include "octopus/dpo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "octopus/errors.hpp"
#include "octopus/head_reference.hpp"

namespace octopus {

void TrainConfig::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("TrainConfig: beta must be positive");
  if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch size must be positive");
}

ReplayedSide replay_side(const SimLvlm& model, const Sample& sample, const PairSide& side,
                         const CdConfig& cfg) {
  const DecodeResult r = replay(model, sample, side, cfg);
  ReplayedSide out;
  out.actions = side.actions;
  out.snapshots.reserve(r.steps());
  for (std::size_t t = 0; t < r.steps(); ++t) out.snapshots.push_back(r.snapshot(t));
  return out;
}

std::vector<TrainingPair> prepare_pairs(const SimLvlm& model, const Dataset& dataset,
                                        const std::vector<PreferencePair>& pairs,
                                        const CdConfig& cfg) {
  std::map<std::uint64_t, const Sample*> by_id;
  for (const Sample& s : dataset) by_id[s.sample_id] = &s;
  std::vector<TrainingPair> out;
  out.reserve(pairs.size());
  for (const PreferencePair& p : pairs) {
    auto it = by_id.find(p.sample_id);
    if (it == by_id.end()) {
      throw DataIntegrityError("preference pair refers to sample " +
                               std::to_string(p.sample_id) + " which is not in the dataset");
    }
    TrainingPair tp;
    tp.sample_id = p.sample_id;
    tp.pos = replay_side(model, *it->second, p.pos, cfg);
    tp.neg = replay_side(model, *it->second, p.neg, cfg);
    out.push_back(std::move(tp));
  }
  return out;
}

double workflow_logprob(const HeadParams& head, const ReplayedSide& side) {
  double total = 0.0;
  for (std::size_t t = 0; t < side.actions.size(); ++t) {
    const RealVector lp = log_softmax(head_logits(head, side.snapshots.at(t)));
    total += lp[static_cast<std::size_t>(action_index(side.actions[t]))];
  }
  return total;
}

double workflow_logprob_grad(const HeadParams& head, const ReplayedSide& side, double scale,
                             std::span<double> grad) {
  double total = 0.0;
  RealVector d_logits(kNumActions);
  for (std::size_t t = 0; t < side.actions.size(); ++t) {
    const ForwardTrace tr = head_forward(head, side.snapshots.at(t));
    const RealVector p = softmax(tr.logits);
    const auto a = static_cast<std::size_t>(action_index(side.actions[t]));
    total += log_softmax(tr.logits)[a];
    for (std::size_t k = 0; k < p.size(); ++k) {
      d_logits[k] = scale * ((k == a ? 1.0 : 0.0) - p[k]);
    }
    head_backward_accumulate(head, tr, d_logits, grad);
  }
  return total;
}

double dpo_loss(double logp_pos, double logp_neg, double beta) {
  return softplus(-beta * (logp_pos - logp_neg));
}

double dpo_loss_grad(const HeadParams& head, const TrainingPair& pair, double beta,
                     double scale, std::span<double> grad) {
  const std::size_t n = head.config().param_count();
  RealVector g_pos(n, 0.0);
  RealVector g_neg(n, 0.0);
  const double lp = workflow_logprob_grad(head, pair.pos, 1.0, g_pos);
  const double ln = workflow_logprob_grad(head, pair.neg, 1.0, g_neg);
  const double z = beta * (lp - ln);
  // d/dz softplus(-z) = -sigmoid(-z)
  const double s = 1.0 / (1.0 + std::exp(z));
  const double coef = -scale * beta * s;
  for (std::size_t i = 0; i < n; ++i) grad[i] += coef * (g_pos[i] - g_neg[i]);
  return softplus(-z);
}

double preference_accuracy(const HeadParams& head, const std::vector<TrainingPair>& pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t wins = 0;
  for (const TrainingPair& p : pairs) {
    wins += workflow_logprob(head, p.pos) > workflow_logprob(head, p.neg) ? 1 : 0;
  }
  return static_cast<double>(wins) / static_cast<double>(pairs.size());
}

LossReport train(HeadParams& head, const std::vector<TrainingPair>& pairs,
                 const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("train: empty preference set");
  const std::size_t n = head.config().param_count();
  AdamState adam = AdamState::for_size(n, cfg.lr);
  LossReport report;
  std::vector<std::size_t> order(pairs.size());
  RealVector grad(n);
  const Rng shuffle_root(cfg.seed, "train");

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng r = shuffle_root.derive(epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[r.below(i)]);
    }
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        loss += scale * dpo_loss_grad(head, pairs[order[b]], cfg.beta, scale, grad);
      }
      double norm_sq = 0.0;
      for (double g : grad) norm_sq += g * g;
      const double norm = std::sqrt(norm_sq);
      if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) {
        const double c = cfg.clip_norm / norm;
        for (double& g : grad) g *= c;
      }
      adam_update(head.mutable_flat(), grad, adam);
      report.step_loss.push_back(loss);
      report.grad_norm.push_back(norm);
      epoch_sum += loss;
      ++epoch_steps;
    }
    report.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
    report.epoch_accuracy.push_back(preference_accuracy(head, pairs));
  }
  return report;
}

namespace {

// Pair loss evaluated the same way in any precision. Sides that share a
// snapshot share its logits, and the log-normalisers are summed apart from
// the chosen logits, so coordinates that only move a shared normaliser give
// an exactly zero difference.
struct SharedSnapshots {
  std::vector<const Matrix*> unique;
  std::vector<std::size_t> pos, neg;

  explicit SharedSnapshots(const TrainingPair& pair) {
    auto index_of = [&](const Matrix& m) {
      for (std::size_t u = 0; u < unique.size(); ++u) {
        if (*unique[u] == m) return u;
      }
      unique.push_back(&m);
      return unique.size() - 1;
    };
    for (const Matrix& m : pair.pos.snapshots) pos.push_back(index_of(m));
    for (const Matrix& m : pair.neg.snapshots) neg.push_back(index_of(m));
  }
};

template <typename T, typename LogitsFn>
T pair_loss(const TrainingPair& pair, const SharedSnapshots& shared, T beta, LogitsFn logits_of) {
  using std::exp;
  using std::log;
  std::vector<std::vector<T>> logits;
  std::vector<T> lse;
  for (const Matrix* m : shared.unique) {
    logits.push_back(logits_of(*m));
    const auto& v = logits.back();
    const T mx = *std::max_element(v.begin(), v.end());
    T z = 0;
    for (T e : v) z += exp(e - mx);
    lse.push_back(mx + log(z));
  }
  T chosen_pos = 0, chosen_neg = 0, norm_pos = 0, norm_neg = 0;
  for (std::size_t t = 0; t < shared.pos.size(); ++t) {
    chosen_pos += logits[shared.pos[t]][static_cast<std::size_t>(action_index(pair.pos.actions[t]))];
    norm_pos += lse[shared.pos[t]];
  }
  for (std::size_t t = 0; t < shared.neg.size(); ++t) {
    chosen_neg += logits[shared.neg[t]][static_cast<std::size_t>(action_index(pair.neg.actions[t]))];
    norm_neg += lse[shared.neg[t]];
  }
  const T gap = (chosen_pos - chosen_neg) - (norm_pos - norm_neg);
  const T x = -beta * gap;
  return std::max(x, T(0)) + std::log1p(exp(-std::abs(x)));
}

}  // namespace

GradCheckResult grad_check(const HeadParams& head, const TrainingPair& pair, double beta,
                           double h) {
  const std::size_t n = head.config().param_count();
  RealVector analytic(n, 0.0);
  dpo_loss_grad(head, pair, beta, 1.0, analytic);

  const SharedSnapshots shared(pair);
  HeadParams probe = head;
  std::vector<long double> probe_ld(head.flat().begin(), head.flat().end());
  auto quick = [&](std::size_t i, double x) {
    const double orig = probe.flat()[i];
    probe.mutable_flat()[i] = x;
    const double loss = pair_loss<double>(pair, shared, beta, [&](const Matrix& m) {
      return head_logits(probe, m);
    });
    probe.mutable_flat()[i] = orig;
    return loss;
  };
  auto precise = [&](std::size_t i, long double x) {
    const long double orig = probe_ld[i];
    probe_ld[i] = x;
    const long double loss = pair_loss<long double>(pair, shared, beta, [&](const Matrix& m) {
      return reference::head_logits<long double>(head.config(), head.layout(), probe_ld.data(), m);
    });
    probe_ld[i] = orig;
    return loss;
  };
  return reference::central_difference_check(head.flat(), analytic, h, quick, precise);
}

}  // namespace octopus

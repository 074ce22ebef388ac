#include "octopus/sim_lvlm.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "octopus/errors.hpp"

namespace octopus {

ComponentWeights ModelConfig::weights_for(Cause cause) const {
  ComponentWeights w = clean;
  switch (cause) {
    case Cause::kPrior: w.l = prior_w_l; break;
    case Cause::kVisLoss: w.v = visloss_w_v; break;
    case Cause::kAttnBias: w.b = attn_w_b; break;
    case Cause::kNone: break;
  }
  return w;
}

void ModelConfig::validate() const {
  if (hidden_dim != kFeatureDim) {
    throw std::invalid_argument("ModelConfig: hidden_dim must be 32");
  }
  for (double w : {clean.v, clean.l, clean.b, prior_w_l, visloss_w_v, attn_w_b}) {
    if (!(w >= 0.0)) throw std::invalid_argument("ModelConfig: weights must be >= 0");
  }
  if (!(kappa > 1.0)) throw std::invalid_argument("ModelConfig: kappa must exceed 1");
  if (!(sigma_eta >= 0.0)) throw std::invalid_argument("ModelConfig: sigma_eta must be >= 0");
  if (max_len < 3) throw std::invalid_argument("ModelConfig: max_len too small");
  for (double r : v_retention) {
    if (r < 0.0 || r > 1.0) throw std::invalid_argument("ModelConfig: v_retention in [0,1]");
  }
}

SimLvlm::SimLvlm(ModelConfig config)
    : config_(config), prior_(gen_prior(config.prior_seed)) {
  config_.validate();
}

RealVector SimLvlm::token_state(TokenId token, bool generated) const {
  if (!Vocab::is_valid(token)) throw std::invalid_argument("token_state: bad token");
  RealVector h(config_.hidden_dim, 0.0);
  h[generated ? feat::kSegGenerated : feat::kSegQuery] = 1.0;
  if (Vocab::is_object(token)) {
    h[static_cast<std::size_t>(token)] = 1.0;
    return h;
  }
  static constexpr std::array<std::array<double, 2>, 8> kCodes = {{
      {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
  const auto& code = kCodes[static_cast<std::size_t>(token - tok::kBos)];
  h[feat::kCode0] = code[0];
  h[feat::kCode1] = code[1];
  return h;
}

HiddenSeq SimLvlm::encode(const Sample& sample) const {
  const Scene& scene = sample.scene;
  const ComponentWeights w = config_.weights_for(scene.cause);
  const ComponentWeights& ref = config_.clean;
  HiddenSeq seq;
  seq.states = Matrix(0, 0);
  for (std::size_t i = 0; i < scene.features.rows(); ++i) {
    RealVector h(scene.features.row(i).begin(), scene.features.row(i).end());
    for (std::size_t o = 0; o < static_cast<std::size_t>(kNumObjects); ++o) {
      h[o] *= w.v / ref.v;
    }
    h[feat::kBlind] *= 1.0 + w.b;
    h[feat::kPriorStrength] += 0.25 * w.l;
    h[feat::kVisualStrength] += 0.25 * w.v;
    // The blind token carries a negative trace of the object it pulls toward.
    if (i == scene.blind_token()) {
      h[static_cast<std::size_t>(scene.blind_object)] -= 0.25 * (1.0 + w.b);
    }
    seq.states.push_row(h);
  }
  seq.image_len = seq.states.rows();
  for (TokenId t : sample.query_tokens) seq.states.push_row(token_state(t, false));
  seq.query_len = sample.query_tokens.size();
  return seq;
}

void SimLvlm::append(HiddenSeq& seq, TokenId token) const {
  seq.states.push_row(token_state(token, true));
}

void SimLvlm::describe_components(const Sample& sample, std::span<const TokenId> history,
                                  LogitComponents& c) const {
  const Scene& scene = sample.scene;
  if (history.empty() || history.front() != tok::kBos) {
    throw InvalidStateError("describe history must start with <bos>");
  }
  std::vector<TokenId> mentioned;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const TokenId t = history[i];
    if (Vocab::is_object(t)) {
      mentioned.push_back(t);
    } else if (t != tok::kA) {
      throw InvalidStateError("describe history contains a token after <eos> or an "
                              "unexpected token");
    }
  }
  auto is_mentioned = [&](TokenId o) {
    return std::find(mentioned.begin(), mentioned.end(), o) != mentioned.end();
  };

  const TokenId last = history.back();
  if (last == tok::kBos || Vocab::is_object(last)) {
    // Determiner slot: continue with "a" or stop.
    if (history.size() + 1 >= config_.max_len) {
      c.g[tok::kEos] = 0.0;
      return;
    }
    c.g[tok::kA] = 0.0;
    c.g[tok::kEos] = config_.eos_bias + config_.eos_fatigue * static_cast<double>(mentioned.size());
    double remaining = 0.0;
    for (TokenId o : scene.objects) {
      if (!is_mentioned(o)) remaining = std::max(remaining, scene.evidence(o));
    }
    c.v[tok::kA] = remaining;
    return;
  }
  if (last != tok::kA) throw InvalidStateError("describe history is not grammatical");

  // Object slot.
  std::vector<TokenId> context = scene.objects;
  for (TokenId m : mentioned) {
    if (!scene.contains(m)) context.push_back(m);
  }
  for (TokenId o = 0; o < kNumObjects; ++o) {
    if (is_mentioned(o)) continue;
    const auto i = static_cast<std::size_t>(o);
    c.g[i] = config_.popularity_gain * prior_.popularity[i];
    c.v[i] = scene.contains(o) ? scene.evidence(o) : 0.0;
    c.l[i] = config_.prior_scale * prior_.mean_with(o, context);
    c.b[i] = o == scene.blind_object ? 1.0 : 0.0;
  }
  c.l_bar = c.l;
  c.b_bar = c.b;
}

void SimLvlm::exists_components(const Sample& sample, std::span<const TokenId> history,
                                LogitComponents& c) const {
  if (!history.empty()) throw InvalidStateError("exists answers are a single token");
  const Scene& scene = sample.scene;
  const TokenId q = sample.queried;
  if (!Vocab::is_object(q)) throw std::invalid_argument("exists sample without a query");
  c.g[tok::kYes] = config_.yes_bias;
  c.g[tok::kNo] = 0.0;
  c.v[tok::kYes] = scene.evidence(q);
  c.v[tok::kNo] = config_.exists_evidence_threshold;
  c.l[tok::kYes] = config_.prior_scale * prior_.mean_with(q, scene.objects);
  c.l[tok::kNo] = config_.prior_scale * config_.exists_prior_threshold;
  c.b[tok::kYes] = q == scene.blind_object ? 1.0 : 0.0;

  double marginal = 0.0;
  for (TokenId o = 0; o < kNumObjects; ++o) marginal += prior_.mean_with(o, scene.objects);
  c.l_bar[tok::kYes] = config_.prior_scale * marginal / kNumObjects;
  c.l_bar[tok::kNo] = c.l[tok::kNo];
  c.b_bar[tok::kYes] = 1.0 / kNumObjects;
}

LogitBundle SimLvlm::base_logits(const Sample& sample, std::span<const TokenId> history) const {
  if (history.size() >= config_.max_len) {
    throw InvalidStateError("history exceeds the maximum decode length");
  }
  const std::size_t n = Vocab::size();
  LogitBundle out;
  LogitComponents& c = out.parts;
  c.g.assign(n, kDisallowedLogit);
  c.v.assign(n, 0.0);
  c.l.assign(n, 0.0);
  c.b.assign(n, 0.0);
  c.l_bar.assign(n, 0.0);
  c.b_bar.assign(n, 0.0);
  if (sample.task == Task::kDescribe) {
    describe_components(sample, history, c);
  } else {
    exists_components(sample, history, c);
  }

  const Rng step_rng = Rng(config_.noise_seed, "noise")
                           .derive(sample.scene.feature_seed)
                           .derive(history.size());
  for (std::size_t s = 0; s < 4; ++s) {
    Rng r = step_rng.derive(s);
    RealVector eta = gaussian(r, n, config_.sigma_eta);
    if (s == 0) {
      c.eta = std::move(eta);
    } else {
      c.eta_distorted[s - 1] = std::move(eta);
    }
  }

  const ComponentWeights w = config_.weights_for(sample.scene.cause);
  out.weights = w;
  const double k = config_.kappa;
  const auto& rho = config_.v_retention;
  out.base.resize(n);
  for (auto& d : out.distorted) d.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.base[i] = c.g[i] + w.v * c.v[i] + w.l * c.l[i] + w.b * c.b[i] + c.eta[i];
    out.distorted[0][i] = c.g[i] + rho[0] * w.v * c.v[i] + k * w.l * c.l[i] +
                          c.eta_distorted[0][i];
    out.distorted[1][i] = c.g[i] + rho[1] * w.v * c.v[i] + w.l * c.l_bar[i] +
                          w.b * c.b_bar[i] + c.eta_distorted[1][i];
    out.distorted[2][i] = c.g[i] + rho[2] * w.v * c.v[i] + w.l * c.l[i] +
                          k * w.b * c.b[i] + c.eta_distorted[2][i];
  }
  return out;
}

const RealVector& distorted_stream(const LogitBundle& bundle, Action strategy) {
  if (strategy == Action::kNull) {
    throw ContractViolation("the Null action has no distorted stream");
  }
  return bundle.distorted[static_cast<std::size_t>(action_index(strategy) - 1)];
}

double hallucination_margin(std::span<const double> logits, const Scene& scene) {
  double absent = -std::numeric_limits<double>::infinity();
  double present = -std::numeric_limits<double>::infinity();
  for (TokenId o = 0; o < kNumObjects; ++o) {
    const double x = logits[static_cast<std::size_t>(o)];
    if (scene.contains(o)) {
      present = std::max(present, x);
    } else {
      absent = std::max(absent, x);
    }
  }
  return absent - present;
}

}  // namespace octopus

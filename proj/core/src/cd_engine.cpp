#include "octopus/cd_engine.hpp"

#include <stdexcept>
#include <string>

#include "octopus/head.hpp"

namespace octopus {

std::string_view action_name(Action a) {
  switch (a) {
    case Action::kNull: return "null";
    case Action::kS1: return "s1";
    case Action::kS2: return "s2";
    case Action::kS3: return "s3";
  }
  throw std::invalid_argument("action_name: bad action");
}

Action action_from_name(std::string_view name) {
  for (Action a : kAllActions) {
    if (action_name(a) == name) return a;
  }
  throw std::invalid_argument("unknown action '" + std::string(name) + "'");
}

RealVector contrast(std::span<const double> base, std::span<const double> distorted,
                    const CdConfig& cfg) {
  if (base.size() != distorted.size()) {
    throw std::invalid_argument("contrast: stream lengths differ");
  }
  const double m = cfg.m();
  const double n = cfg.n();
  RealVector out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = m * base[i] - n * distorted[i];
  return out;
}

RealVector decoding_logits(const LogitBundle& bundle, Action action, const CdConfig& cfg) {
  if (action == Action::kNull) return bundle.base;
  return contrast(bundle.base, distorted_stream(bundle, action), cfg);
}

StepResult decode_step(const SimLvlm& model, const Sample& sample,
                       std::span<const TokenId> history, Action action, const CdConfig& cfg) {
  const LogitBundle bundle = model.base_logits(sample, history);
  const RealVector logits = decoding_logits(bundle, action, cfg);
  StepResult r;
  const std::size_t best = argmax(logits);
  r.token = static_cast<TokenId>(best);
  double second = -1e300;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (i != best) second = std::max(second, logits[i]);
  }
  r.margin = logits[best] - second;
  r.confidence = softmax(logits)[best];
  return r;
}

std::vector<TokenId> DecodeResult::generated() const {
  if (!response.empty() && response.front() == tok::kBos) {
    return {response.begin() + 1, response.end()};
  }
  return response;
}

DecodeResult decode(const SimLvlm& model, const Sample& sample, const CdConfig& cfg,
                    const ActionChooser& choose) {
  DecodeResult out;
  out.hidden = model.encode(sample);
  std::vector<TokenId> history;
  if (sample.task == Task::kDescribe) {
    history.push_back(tok::kBos);
    model.append(out.hidden, tok::kBos);
  }
  const std::size_t max_steps = sample.task == Task::kDescribe ? model.config().max_len - 1 : 1;
  for (std::size_t t = 0; t < max_steps; ++t) {
    out.snapshot_rows.push_back(out.hidden.size());
    const Action a = choose(t, out.hidden);
    const StepResult step = decode_step(model, sample, history, a, cfg);
    out.actions.push_back(a);
    out.margins.push_back(step.margin);
    out.confidences.push_back(step.confidence);
    history.push_back(step.token);
    model.append(out.hidden, step.token);
    if (step.token == tok::kEos) break;
  }
  out.response = std::move(history);
  return out;
}

DecodeResult run_workflow(const SimLvlm& model, const Sample& sample, const Workflow& workflow,
                          const CdConfig& cfg) {
  return decode(model, sample, cfg, [&](std::size_t t, const HiddenSeq&) {
    if (t >= workflow.size()) {
      throw std::invalid_argument("run_workflow: workflow shorter than the decode; pad with Null");
    }
    return workflow[t];
  });
}

std::pair<DecodeResult, Workflow> decode_with_policy(const SimLvlm& model, const Sample& sample,
                                                     const HeadParams& head,
                                                     const CdConfig& cfg) {
  if (head.config().d != model.config().hidden_dim) {
    throw std::invalid_argument("decode_with_policy: head and model dimensions differ");
  }
  DecodeResult r = decode(model, sample, cfg, [&](std::size_t, const HiddenSeq& h) {
    return select_action(head_logits(head, h.states));
  });
  Workflow wf = r.actions;
  return {std::move(r), std::move(wf)};
}

Workflow null_workflow(std::size_t length) { return Workflow(length, Action::kNull); }

}  // namespace octopus

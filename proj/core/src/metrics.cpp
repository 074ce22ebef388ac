#include "octopus/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace octopus {

Mentions parse_mentions(std::span<const TokenId> tokens) {
  Mentions m;
  for (TokenId t : tokens) {
    if (!Vocab::is_valid(t)) throw std::invalid_argument("parse_mentions: token outside vocabulary");
    if (Vocab::is_object(t)) m.multiset.push_back(t);
  }
  m.set = m.multiset;
  std::sort(m.set.begin(), m.set.end());
  m.set.erase(std::unique(m.set.begin(), m.set.end()), m.set.end());
  return m;
}

ResponseScore score_response(std::span<const TokenId> tokens, const Scene& scene,
                             const CooccurrencePrior& prior) {
  const Mentions m = parse_mentions(tokens);
  ResponseScore s;
  s.mentions = m.multiset.size();
  for (TokenId o : m.multiset) {
    if (scene.contains(o)) continue;
    ++s.hallucinated_mentions;
    if (prior.in_prior_set(o, scene.objects)) ++s.prior_hallucinated_mentions;
  }
  s.hallucinated = s.hallucinated_mentions > 0;
  s.chair = s.mentions == 0 ? 0.0
                            : static_cast<double>(s.hallucinated_mentions) /
                                  static_cast<double>(s.mentions);
  std::size_t covered = 0;
  for (TokenId o : m.set) covered += scene.contains(o) ? 1 : 0;
  s.cover = scene.objects.empty()
                ? 0.0
                : static_cast<double>(covered) / static_cast<double>(scene.objects.size());
  return s;
}

GenMetrics gen_metrics(std::span<const std::vector<TokenId>> responses,
                       std::span<const Scene> scenes, const CooccurrencePrior& prior) {
  if (responses.empty()) throw std::invalid_argument("gen_metrics: empty dataset");
  if (responses.size() != scenes.size()) {
    throw std::invalid_argument("gen_metrics: responses and scenes differ in length");
  }
  GenMetrics g;
  double cover_sum = 0.0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const ResponseScore s = score_response(responses[i], scenes[i], prior);
    ++g.counts.responses;
    g.counts.hallucinated_responses += s.hallucinated ? 1 : 0;
    g.counts.mentions += s.mentions;
    g.counts.hallucinated_mentions += s.hallucinated_mentions;
    g.counts.prior_hallucinated_mentions += s.prior_hallucinated_mentions;
    cover_sum += s.cover;
  }
  const auto n = static_cast<double>(g.counts.responses);
  g.chair_s = static_cast<double>(g.counts.hallucinated_responses) / n;
  g.hal = g.chair_s;
  if (g.counts.mentions > 0) {
    const auto m = static_cast<double>(g.counts.mentions);
    g.chair_i = static_cast<double>(g.counts.hallucinated_mentions) / m;
    g.cog = static_cast<double>(g.counts.prior_hallucinated_mentions) / m;
  }
  g.cover = cover_sum / n;
  return g;
}

DiscMetrics disc_metrics(const std::vector<bool>& predicted_yes, const std::vector<bool>& gold_yes) {
  if (predicted_yes.size() != gold_yes.size()) {
    throw std::invalid_argument("disc_metrics: predictions and gold differ in length");
  }
  if (predicted_yes.empty()) throw std::invalid_argument("disc_metrics: empty dataset");
  DiscMetrics d;
  for (std::size_t i = 0; i < predicted_yes.size(); ++i) {
    if (predicted_yes[i]) {
      ++(gold_yes[i] ? d.counts.tp : d.counts.fp);
    } else {
      ++(gold_yes[i] ? d.counts.fn : d.counts.tn);
    }
  }
  const auto& c = d.counts;
  d.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(predicted_yes.size());
  d.precision = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  d.recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  d.f1 = d.precision + d.recall == 0.0
             ? 0.0
             : 2.0 * d.precision * d.recall / (d.precision + d.recall);
  return d;
}

}  // namespace octopus

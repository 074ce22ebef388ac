#include "octopus/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <tuple>

namespace octopus {

namespace {

ActionChooser chooser_for(const Policy& policy, const Sample& sample, Rng& rng) {
  switch (policy.kind) {
    case PolicyKind::kBase:
      return [](std::size_t, const HiddenSeq&) { return Action::kNull; };
    case PolicyKind::kFixed:
      return [a = policy.fixed](std::size_t, const HiddenSeq&) { return a; };
    case PolicyKind::kRandom:
      rng = Rng(policy.seed, "policy").derive(sample.sample_id);
      return [&rng](std::size_t, const HiddenSeq&) {
        return kAllActions[1 + rng.below(kNumActions - 1)];
      };
    case PolicyKind::kOctopus:
      if (policy.head == nullptr) throw std::invalid_argument("octopus policy without a head");
      return [head = policy.head](std::size_t, const HiddenSeq& h) {
        return select_action(head_logits(*head, h.states));
      };
  }
  throw std::invalid_argument("unknown policy kind");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Decodes with Null, except that the first assign.size() times the Null
// choice would emit an absent object, assign[i] is used instead.
std::vector<TokenId> decode_with_interventions(const SimLvlm& model, const Sample& sample,
                                               const CdConfig& cfg,
                                               const std::vector<Action>& assign) {
  std::vector<TokenId> history;
  if (sample.task == Task::kDescribe) history.push_back(tok::kBos);
  const std::size_t max_steps = sample.task == Task::kDescribe ? model.config().max_len - 1 : 1;
  std::size_t used = 0;
  for (std::size_t t = 0; t < max_steps; ++t) {
    StepResult step = decode_step(model, sample, history, Action::kNull, cfg);
    if (used < assign.size() && Vocab::is_object(step.token) &&
        !sample.scene.contains(step.token)) {
      step = decode_step(model, sample, history, assign[used++], cfg);
    }
    history.push_back(step.token);
    if (step.token == tok::kEos) break;
  }
  return history;
}

std::string family_name(const std::vector<Action>& actions) {
  if (actions.empty()) return "base";
  std::string name;
  for (Action a : actions) {
    if (!name.empty()) name += '+';
    name += action_name(a);
  }
  return name;
}

}  // namespace

std::string Policy::label() const {
  switch (kind) {
    case PolicyKind::kBase: return "base";
    case PolicyKind::kFixed: return "fixed:" + std::string(action_name(fixed));
    case PolicyKind::kRandom: return "random";
    case PolicyKind::kOctopus: return "octopus";
  }
  return "?";
}

DecodeResult decode_policy(const SimLvlm& model, const Sample& sample, const Policy& policy,
                           const CdConfig& cfg) {
  if (policy.kind == PolicyKind::kOctopus && policy.head != nullptr) {
    return decode_with_policy(model, sample, *policy.head, cfg).first;
  }
  Rng rng(0, "unused");
  return decode(model, sample, cfg, chooser_for(policy, sample, rng));
}

GenEval eval_generative(const SimLvlm& model, const Dataset& dataset, const Policy& policy,
                        const CdConfig& cfg) {
  GenEval out;
  std::vector<Scene> scenes;
  for (const Sample& s : dataset) {
    if (s.task != Task::kDescribe) continue;
    DecodeResult r = decode_policy(model, s, policy, cfg);
    for (Action a : r.actions) ++out.action_counts[static_cast<std::size_t>(action_index(a))];
    out.responses.push_back(std::move(r.response));
    out.workflows.push_back(std::move(r.actions));
    scenes.push_back(s.scene);
  }
  if (scenes.empty()) throw std::invalid_argument("eval_generative: no describe samples");
  out.metrics = gen_metrics(out.responses, scenes, model.prior());
  return out;
}

DiscEval eval_discriminative(const SimLvlm& model, const Dataset& dataset, const Policy& policy,
                             const CdConfig& cfg) {
  DiscEval out;
  std::vector<bool> gold;
  for (const Sample& s : dataset) {
    if (s.task != Task::kExists) continue;
    const DecodeResult r = decode_policy(model, s, policy, cfg);
    for (Action a : r.actions) ++out.action_counts[static_cast<std::size_t>(action_index(a))];
    out.predicted_yes.push_back(r.response.front() == tok::kYes);
    gold.push_back(*s.gold_yes);
  }
  if (gold.empty()) throw std::invalid_argument("eval_discriminative: no exists samples");
  out.metrics = disc_metrics(out.predicted_yes, gold);
  return out;
}

OverlapReport analyze_overlap(const SimLvlm& model, const Dataset& dataset, const CdConfig& cfg) {
  OverlapReport rep;
  for (const Sample& s : dataset) {
    if (s.task != Task::kDescribe) continue;
    auto chair_under = [&](Action a) {
      const DecodeResult r = decode_policy(model, s, Policy::fixed_action(a), cfg);
      return score_response(r.response, s.scene, model.prior()).chair;
    };
    const double base = chair_under(Action::kNull);
    std::size_t effective = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      if (chair_under(kAllActions[k + 1]) < base) {
        ++effective;
        ++rep.effective_by_strategy[k];
      }
    }
    ++rep.counts[effective];
    ++rep.samples;
  }
  if (rep.samples == 0) throw std::invalid_argument("analyze_overlap: no describe samples");
  for (std::size_t i = 0; i < 4; ++i) {
    rep.fractions[i] = static_cast<double>(rep.counts[i]) / static_cast<double>(rep.samples);
  }
  return rep;
}

std::vector<std::size_t> hallucination_steps(const DecodeResult& result, const Scene& scene,
                                             std::size_t limit) {
  std::vector<std::size_t> steps;
  const std::size_t offset = result.response.size() - result.steps();
  for (std::size_t t = 0; t < result.steps() && steps.size() < limit; ++t) {
    const TokenId tok = result.response[offset + t];
    if (Vocab::is_object(tok) && !scene.contains(tok)) steps.push_back(t);
  }
  return steps;
}

const FamilyResult& EnumerateReport::family(const std::string& name) const {
  for (const auto& f : families) {
    if (f.name == name) return f;
  }
  throw std::invalid_argument("no enumeration family named '" + name + "'");
}

EnumerateReport analyze_enumerate(const SimLvlm& model, const Dataset& dataset,
                                  const CdConfig& cfg, std::size_t prefix_len) {
  if (prefix_len == 0 || prefix_len > kMaxPrefixLen) {
    throw std::invalid_argument("analyze_enumerate: prefix length must be in 1.." +
                                std::to_string(kMaxPrefixLen));
  }
  const std::vector<std::vector<Action>> sets = {
      {},
      {Action::kS1},
      {Action::kS2},
      {Action::kS3},
      {Action::kS1, Action::kS2},
      {Action::kS1, Action::kS3},
      {Action::kS2, Action::kS3},
      {Action::kS1, Action::kS2, Action::kS3},
  };
  EnumerateReport rep;
  rep.prefix_len = prefix_len;
  for (const auto& set : sets) rep.families.push_back({family_name(set), set, 0.0, 0.0, 0.0});

  for (const Sample& s : dataset) {
    if (s.task != Task::kDescribe) continue;
    ++rep.samples;
    const DecodeResult base = decode_policy(model, s, Policy::base(), cfg);
    const bool has_target = !hallucination_steps(base, s.scene, 1).empty();
    if (has_target) ++rep.samples_with_targets;

    auto key_of = [&](const std::vector<TokenId>& response) {
      const ResponseScore sc = score_response(response, s.scene, model.prior());
      const double prior_rate =
          sc.mentions == 0 ? 0.0
                           : static_cast<double>(sc.prior_hallucinated_mentions) /
                                 static_cast<double>(sc.mentions);
      return std::make_tuple(sc.chair, sc.hallucinated ? 1 : 0, prior_rate);
    };
    const auto base_key = key_of(base.response);

    for (std::size_t f = 0; f < sets.size(); ++f) {
      const auto& set = sets[f];
      auto best = base_key;
      if (!set.empty() && has_target) {
        std::size_t combos = 1;
        for (std::size_t i = 0; i < prefix_len; ++i) combos *= set.size();
        bool first = true;
        for (std::size_t c = 0; c < combos; ++c) {
          std::vector<Action> assign(prefix_len);
          std::size_t code = c;
          for (std::size_t i = 0; i < prefix_len; ++i) {
            assign[i] = set[code % set.size()];
            code /= set.size();
          }
          const std::vector<TokenId> r = decode_with_interventions(model, s, cfg, assign);
          const auto key = key_of(r);
          if (first || key < best) best = key;
          first = false;
        }
      }
      rep.families[f].chair += std::get<0>(best);
      rep.families[f].hal += std::get<1>(best);
      rep.families[f].cog += std::get<2>(best);
    }
  }
  if (rep.samples == 0) throw std::invalid_argument("analyze_enumerate: no describe samples");
  for (auto& f : rep.families) {
    const auto n = static_cast<double>(rep.samples);
    f.chair /= n;
    f.hal /= n;
    f.cog /= n;
  }
  return rep;
}

Json gen_metrics_json(const GenMetrics& m) {
  return Json{{"chair_s", m.chair_s},
              {"chair_i", m.chair_i},
              {"cover", m.cover},
              {"hal", m.hal},
              {"cog", m.cog},
              {"counts",
               {{"responses", m.counts.responses},
                {"hallucinated_responses", m.counts.hallucinated_responses},
                {"mentions", m.counts.mentions},
                {"hallucinated_mentions", m.counts.hallucinated_mentions},
                {"prior_hallucinated_mentions", m.counts.prior_hallucinated_mentions}}}};
}

Json disc_metrics_json(const DiscMetrics& m) {
  return Json{{"accuracy", m.accuracy},
              {"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1},
              {"counts",
               {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"tn", m.counts.tn}, {"fn", m.counts.fn}}}};
}

Json action_counts_json(const ActionCounts& c) {
  Json j = Json::object();
  for (Action a : kAllActions) {
    j[std::string(action_name(a))] = c[static_cast<std::size_t>(action_index(a))];
  }
  return j;
}

Json overlap_json(const OverlapReport& r) {
  return Json{{"samples", r.samples},
              {"counts", {{"none", r.counts[0]}, {"one", r.counts[1]}, {"two", r.counts[2]}, {"three", r.counts[3]}}},
              {"fractions",
               {{"none", r.fractions[0]}, {"one", r.fractions[1]}, {"two", r.fractions[2]}, {"three", r.fractions[3]}}},
              {"effective_by_strategy",
               {{"s1", r.effective_by_strategy[0]},
                {"s2", r.effective_by_strategy[1]},
                {"s3", r.effective_by_strategy[2]}}}};
}

Json enumerate_json(const EnumerateReport& r) {
  Json fams = Json::array();
  for (const auto& f : r.families) {
    fams.push_back(Json{{"family", f.name}, {"chair", f.chair}, {"hal", f.hal}, {"cog", f.cog}});
  }
  return Json{{"prefix_len", r.prefix_len},
              {"samples", r.samples},
              {"samples_with_targets", r.samples_with_targets},
              {"families", std::move(fams)},
              {"note",
               "every assignment of the family's strategies to the target steps is tried "
               "(|family|^prefix_len combinations; two strategies over three steps give 8)"}};
}

std::string gen_csv(const std::string& policy, const GenMetrics& m) {
  return "policy,chair_s,chair_i,cover,hal,cog\n" + policy + "," + fmt(m.chair_s) + "," +
         fmt(m.chair_i) + "," + fmt(m.cover) + "," + fmt(m.hal) + "," + fmt(m.cog) + "\n";
}

std::string disc_csv(const std::string& policy, const DiscMetrics& m) {
  return "policy,accuracy,precision,recall,f1\n" + policy + "," + fmt(m.accuracy) + "," +
         fmt(m.precision) + "," + fmt(m.recall) + "," + fmt(m.f1) + "\n";
}

std::string overlap_csv(const OverlapReport& r) {
  return "samples,none,one,two,three\n" + std::to_string(r.samples) + "," + fmt(r.fractions[0]) +
         "," + fmt(r.fractions[1]) + "," + fmt(r.fractions[2]) + "," + fmt(r.fractions[3]) + "\n";
}

std::string enumerate_csv(const EnumerateReport& r) {
  std::string out = "family,chair,hal,cog\n";
  for (const auto& f : r.families) {
    out += f.name + "," + fmt(f.chair) + "," + fmt(f.hal) + "," + fmt(f.cog) + "\n";
  }
  return out;
}

}  // namespace octopus

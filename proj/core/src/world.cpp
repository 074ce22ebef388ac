#include "octopus/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace octopus {

namespace {

constexpr std::array<std::string_view, kVocabSize> kNames = {
    "person", "car",    "bicycle", "bus",   "dog",    "cat",    "horse",    "bird",
    "chair",  "table",  "sofa",    "bed",   "tv",     "laptop", "book",     "clock",
    "cup",    "bottle", "bowl",    "knife", "pizza",  "banana", "umbrella", "bench",
    "<bos>",  "<eos>",  "a",       "the",   "and",    "yes",    "no",       "<pad>"};

constexpr double kEvidenceMin = 0.7;
constexpr double kEvidenceMax = 1.0;
constexpr double kFeatureNoise = 0.05;

}  // namespace

std::string_view Vocab::name(TokenId t) {
  if (!is_valid(t)) throw std::invalid_argument("Vocab::name: token out of range");
  return kNames[static_cast<std::size_t>(t)];
}

TokenId Vocab::id(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<TokenId>(i);
  }
  throw std::invalid_argument("Vocab::id: unknown token '" + std::string(name) + "'");
}

double CooccurrencePrior::mean_with(TokenId o, std::span<const TokenId> context) const {
  if (context.empty()) return 0.0;
  double s = 0.0;
  for (TokenId c : context) s += p(static_cast<std::size_t>(o), static_cast<std::size_t>(c));
  return s / static_cast<double>(context.size());
}

bool CooccurrencePrior::in_prior_set(TokenId o, std::span<const TokenId> scene_objects) const {
  if (std::find(scene_objects.begin(), scene_objects.end(), o) != scene_objects.end()) {
    return false;
  }
  return mean_with(o, scene_objects) >= kPriorSetThreshold;
}

std::vector<TokenId> CooccurrencePrior::prior_set(std::span<const TokenId> scene_objects) const {
  std::vector<TokenId> out;
  for (TokenId o = 0; o < kNumObjects; ++o) {
    if (in_prior_set(o, scene_objects)) out.push_back(o);
  }
  return out;
}

CooccurrencePrior gen_prior(std::uint64_t seed) {
  CooccurrencePrior prior;
  std::array<TokenId, kNumObjects> order{};
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, "prior");
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto o = static_cast<std::size_t>(order[i]);
    prior.cluster[o] = static_cast<int>(i / kClusterSize);
    const std::size_t rank = i % kClusterSize;
    prior.popularity[o] = rank == 0 ? 1.0 : (rank == 1 ? 0.5 : 0.0);
  }
  prior.p = Matrix(kNumObjects, kNumObjects);
  for (std::size_t a = 0; a < kNumObjects; ++a) {
    for (std::size_t b = 0; b < kNumObjects; ++b) {
      if (a == b) continue;
      prior.p(a, b) = prior.cluster[a] == prior.cluster[b] ? prior.within : prior.cross;
    }
  }
  return prior;
}

std::string_view cause_name(Cause c) {
  switch (c) {
    case Cause::kPrior: return "prior";
    case Cause::kVisLoss: return "visloss";
    case Cause::kAttnBias: return "attnbias";
    case Cause::kNone: return "none";
  }
  throw std::invalid_argument("cause_name: bad cause");
}

Cause cause_from_name(std::string_view name) {
  for (Cause c : kAllCauses) {
    if (cause_name(c) == name) return c;
  }
  throw std::invalid_argument("unknown cause '" + std::string(name) + "'");
}

void validate_cause_mix(const CauseMix& mix) {
  double sum = 0.0;
  for (double w : mix) {
    if (!(w >= 0.0)) throw std::invalid_argument("cause mix weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("cause mix must sum to 1");
}

bool Scene::contains(TokenId o) const {
  return std::find(objects.begin(), objects.end(), o) != objects.end();
}

double Scene::evidence(TokenId o) const {
  double best = features(0, static_cast<std::size_t>(o));
  for (std::size_t i = 1; i < features.rows(); ++i) {
    best = std::max(best, features(i, static_cast<std::size_t>(o)));
  }
  return best;
}

std::size_t Scene::blind_token() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < features.rows(); ++i) {
    if (features(i, feat::kBlind) > features(best, feat::kBlind)) best = i;
  }
  return best;
}

Scene make_scene(std::uint64_t id, std::uint64_t feature_seed, std::vector<TokenId> objects,
                 TokenId blind_object, Cause cause) {
  if (objects.size() < 3 || objects.size() > 6) {
    throw std::invalid_argument("make_scene: scenes hold 3 to 6 objects");
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (!Vocab::is_object(objects[i])) throw std::invalid_argument("make_scene: not an object");
    for (std::size_t j = 0; j < i; ++j) {
      if (objects[i] == objects[j]) throw std::invalid_argument("make_scene: duplicate object");
    }
  }
  if (!Vocab::is_object(blind_object) ||
      std::find(objects.begin(), objects.end(), blind_object) != objects.end()) {
    throw std::invalid_argument("make_scene: blind object must be an absent object");
  }

  Scene s;
  s.id = id;
  s.feature_seed = feature_seed;
  s.objects = std::move(objects);
  s.blind_object = blind_object;
  s.cause = cause;
  s.features = Matrix(kImageTokens, kFeatureDim);

  Rng rng(feature_seed, "features");
  for (std::size_t j = 0; j < s.objects.size(); ++j) {
    const double strength = kEvidenceMin + (kEvidenceMax - kEvidenceMin) * rng.uniform();
    s.features(j, static_cast<std::size_t>(s.objects[j])) = strength;
  }
  const std::size_t free_tokens = kImageTokens - s.objects.size();
  const std::size_t blind_tok = s.objects.size() + rng.below(free_tokens);
  s.features(blind_tok, feat::kBlind) = 1.0;
  for (std::size_t i = 0; i < kImageTokens; ++i) {
    s.features(i, feat::kSegImage) = 1.0;
    for (std::size_t c = 0; c < kFeatureDim; ++c) {
      s.features(i, c) += kFeatureNoise * rng.normal();
    }
  }
  return s;
}

namespace {

std::vector<TokenId> draw_objects(Rng& rng, const CooccurrencePrior& prior) {
  const auto cluster = static_cast<int>(rng.below(kNumClusters));
  std::vector<TokenId> members;
  for (TokenId o = 0; o < kNumObjects; ++o) {
    if (prior.cluster[static_cast<std::size_t>(o)] == cluster) members.push_back(o);
  }
  std::vector<TokenId> objects{members[rng.below(members.size())]};
  const auto count = static_cast<std::size_t>(3 + rng.below(4));
  while (objects.size() < count) {
    std::array<double, kNumObjects> w{};
    double total = 0.0;
    for (TokenId o = 0; o < kNumObjects; ++o) {
      if (std::find(objects.begin(), objects.end(), o) != objects.end()) continue;
      w[static_cast<std::size_t>(o)] = prior.mean_with(o, objects);
      total += w[static_cast<std::size_t>(o)];
    }
    double u = rng.uniform() * total;
    TokenId pick = -1;
    for (TokenId o = 0; o < kNumObjects; ++o) {
      const double wo = w[static_cast<std::size_t>(o)];
      if (wo <= 0.0) continue;
      pick = o;
      if (u < wo) break;
      u -= wo;
    }
    objects.push_back(pick);
  }
  return objects;
}

}  // namespace

Scene gen_scene(Rng& rng, const CooccurrencePrior& prior, const CauseMix& mix,
                std::uint64_t id) {
  validate_cause_mix(mix);
  // Cluster-biased anchor: pick a cluster, then a member. Object sets
  // without a prior set (a whole cluster, or members scattered so thinly
  // that nothing absent co-occurs strongly) are redrawn: every scene needs
  // hallucination bait.
  std::vector<TokenId> objects;
  do {
    objects = draw_objects(rng, prior);
  } while (prior.prior_set(objects).empty());
  std::vector<TokenId> absent;
  for (TokenId o = 0; o < kNumObjects; ++o) {
    if (std::find(objects.begin(), objects.end(), o) == objects.end()) absent.push_back(o);
  }
  const TokenId blind = absent[rng.below(absent.size())];

  double u = rng.uniform();
  Cause cause = Cause::kNone;
  for (std::size_t i = 0; i < kAllCauses.size(); ++i) {
    if (mix[i] <= 0.0) continue;
    cause = kAllCauses[i];
    if (u < mix[i]) break;
    u -= mix[i];
  }
  const std::uint64_t feature_seed = rng.next_u64() >> 11;  // fits a JSON double exactly
  return make_scene(id, feature_seed, std::move(objects), blind, cause);
}

const std::vector<TokenId>& describe_prompt() {
  static const std::vector<TokenId> prompt{tok::kThe, tok::kAnd, tok::kA};
  return prompt;
}

std::vector<TokenId> exists_prompt(TokenId queried) {
  return {tok::kThe, queried, tok::kYes, tok::kNo};
}

Dataset gen_dataset(const DatasetConfig& config, std::uint64_t seed) {
  validate_cause_mix(config.cause_mix);
  const CooccurrencePrior prior = gen_prior(config.prior_seed);
  const Rng root(seed, "scene-gen");
  Dataset out;
  out.reserve(config.n_describe + config.n_exists);

  for (std::size_t i = 0; i < config.n_describe; ++i) {
    const std::uint64_t id = out.size();
    Rng rng = root.derive(id);
    Sample s;
    s.sample_id = id;
    s.task = Task::kDescribe;
    s.scene = gen_scene(rng, prior, config.cause_mix, id);
    s.query_tokens = describe_prompt();
    out.push_back(std::move(s));
  }
  for (std::size_t j = 0; j < config.n_exists; ++j) {
    const std::uint64_t id = out.size();
    Rng rng = root.derive(id);
    Sample s;
    s.sample_id = id;
    s.task = Task::kExists;
    s.scene = gen_scene(rng, prior, config.cause_mix, id);
    const Scene& sc = s.scene;
    const bool yes = j % 2 == 0;
    if (yes) {
      s.queried = sc.objects[rng.below(sc.objects.size())];
    } else {
      std::vector<TokenId> absent;
      for (TokenId o = 0; o < kNumObjects; ++o) {
        if (!sc.contains(o)) absent.push_back(o);
      }
      switch ((j / 2) % 3) {
        case 0: s.queried = sc.blind_object; break;
        case 1: {
          TokenId best = absent.front();
          for (TokenId o : absent) {
            if (prior.mean_with(o, sc.objects) > prior.mean_with(best, sc.objects)) best = o;
          }
          s.queried = best;
          break;
        }
        default: s.queried = absent[rng.below(absent.size())]; break;
      }
    }
    s.gold_yes = yes;
    s.query_tokens = exists_prompt(s.queried);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace octopus

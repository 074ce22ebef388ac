#include "octopus/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "octopus/errors.hpp"
#include "octopus/rng.hpp"

namespace octopus {

namespace {

std::string task_name(Task t) { return t == Task::kDescribe ? "describe" : "exists"; }

Task task_from_name(const std::string& s) {
  if (s == "describe") return Task::kDescribe;
  if (s == "exists") return Task::kExists;
  throw DataIntegrityError("unknown task '" + s + "'");
}

Json token_names(std::span<const TokenId> tokens) {
  Json out = Json::array();
  for (TokenId t : tokens) out.push_back(std::string(Vocab::name(t)));
  return out;
}

std::vector<TokenId> token_ids(const Json& j) {
  std::vector<TokenId> out;
  for (const auto& name : j) out.push_back(Vocab::id(name.get<std::string>()));
  return out;
}

Json action_names(const Workflow& wf) {
  Json out = Json::array();
  for (Action a : wf) out.push_back(std::string(action_name(a)));
  return out;
}

Workflow action_ids(const Json& j) {
  Workflow out;
  for (const auto& name : j) out.push_back(action_from_name(name.get<std::string>()));
  return out;
}

Json side_to_json(const PairSide& s) {
  return Json{{"actions", action_names(s.actions)}, {"tokens", token_names(s.tokens)}};
}

PairSide side_from_json(const Json& j) {
  return {action_ids(j.at("actions")), token_ids(j.at("tokens"))};
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

// Runs fn on each parsed line, turning any parse or schema error into a
// DataIntegrityError that names the line.
template <typename Fn>
void for_each_record(const std::vector<std::string>& lines, std::size_t first, Fn fn) {
  for (std::size_t i = first; i < lines.size(); ++i) {
    try {
      fn(Json::parse(lines[i]));
    } catch (const DataIntegrityError& e) {
      throw DataIntegrityError("line " + std::to_string(i + 1) + ": " + e.what());
    } catch (const Json::exception& e) {
      throw DataIntegrityError("line " + std::to_string(i + 1) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataIntegrityError("line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

ArtifactHeader parse_header(const std::vector<std::string>& lines, const std::string& format) {
  if (lines.empty()) throw DataIntegrityError(format + " file is empty (missing header line)");
  try {
    return header_from_json(Json::parse(lines.front()), format);
  } catch (const Json::exception& e) {
    throw DataIntegrityError(format + " header: " + e.what());
  }
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string content_fingerprint(const std::string& bytes) { return hex64(fnv1a64(bytes)); }

Json model_config_json(const ModelConfig& m, const CdConfig& cd) {
  return Json{
      {"hidden_dim", m.hidden_dim},
      {"clean_weights", {{"v", m.clean.v}, {"l", m.clean.l}, {"b", m.clean.b}}},
      {"prior_w_l", m.prior_w_l},
      {"visloss_w_v", m.visloss_w_v},
      {"attn_w_b", m.attn_w_b},
      {"kappa", m.kappa},
      {"sigma_eta", m.sigma_eta},
      {"max_len", m.max_len},
      {"v_retention", m.v_retention},
      {"prior_scale", m.prior_scale},
      {"popularity_gain", m.popularity_gain},
      {"eos_bias", m.eos_bias},
      {"eos_fatigue", m.eos_fatigue},
      {"yes_bias", m.yes_bias},
      {"exists_evidence_threshold", m.exists_evidence_threshold},
      {"exists_prior_threshold", m.exists_prior_threshold},
      {"prior_seed", m.prior_seed},
      {"noise_seed", m.noise_seed},
      {"alpha", cd.alpha},
  };
}

std::string model_fingerprint(const ModelConfig& model, const CdConfig& cd) {
  return content_fingerprint(model_config_json(model, cd).dump());
}

void check_fingerprint(const std::string& expected, const std::string& actual,
                       const std::string& what) {
  if (expected != actual) {
    throw DataIntegrityError(what + " fingerprint mismatch: expected " + expected + ", got " +
                             actual);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadError::Kind::kIo, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot move output into place at '" + path + "'");
  }
}

Json sample_to_json(const Sample& s) {
  Json j{
      {"sample_id", s.sample_id},
      {"scene_id", s.scene.id},
      {"feature_seed", s.scene.feature_seed},
      {"objects", token_names(s.scene.objects)},
      {"blind_object", std::string(Vocab::name(s.scene.blind_object))},
      {"cause", std::string(cause_name(s.scene.cause))},
      {"task", task_name(s.task)},
      {"query_tokens", token_names(s.query_tokens)},
  };
  if (s.task == Task::kExists) {
    j["queried_object"] = std::string(Vocab::name(s.queried));
    j["gold_label"] = *s.gold_yes ? "yes" : "no";
  }
  return j;
}

Sample sample_from_json(const Json& j) {
  Sample s;
  s.sample_id = j.at("sample_id").get<std::uint64_t>();
  s.task = task_from_name(j.at("task").get<std::string>());
  const std::vector<TokenId> objects = token_ids(j.at("objects"));
  const TokenId blind = Vocab::id(j.at("blind_object").get<std::string>());
  const Cause cause = cause_from_name(j.at("cause").get<std::string>());
  try {
    s.scene = make_scene(j.at("scene_id").get<std::uint64_t>(),
                         j.at("feature_seed").get<std::uint64_t>(), objects, blind, cause);
  } catch (const std::invalid_argument& e) {
    throw DataIntegrityError(std::string("invalid scene: ") + e.what());
  }
  s.query_tokens = token_ids(j.at("query_tokens"));
  if (s.task == Task::kExists) {
    s.queried = Vocab::id(j.at("queried_object").get<std::string>());
    if (!Vocab::is_object(s.queried)) throw DataIntegrityError("queried_object is not an object");
    const std::string gold = j.at("gold_label").get<std::string>();
    if (gold != "yes" && gold != "no") throw DataIntegrityError("gold_label must be yes or no");
    s.gold_yes = gold == "yes";
    if (*s.gold_yes != s.scene.contains(s.queried)) {
      throw DataIntegrityError("gold_label disagrees with the scene's objects");
    }
    if (s.query_tokens != exists_prompt(s.queried)) {
      throw DataIntegrityError("query_tokens do not match the exists prompt");
    }
  } else if (s.query_tokens != describe_prompt()) {
    throw DataIntegrityError("query_tokens do not match the describe prompt");
  }
  return s;
}

std::string dataset_to_jsonl(const Dataset& dataset) {
  std::string out;
  for (const Sample& s : dataset) {
    out += sample_to_json(s).dump();
    out += '\n';
  }
  return out;
}

Dataset dataset_from_jsonl(const std::string& text) {
  Dataset out;
  for_each_record(split_lines(text), 0, [&](const Json& j) { out.push_back(sample_from_json(j)); });
  return out;
}

Dataset load_dataset(const std::string& path) { return dataset_from_jsonl(read_file(path)); }

Json header_to_json(const ArtifactHeader& h) {
  return Json{{"format", h.format},
              {"version", h.version},
              {"dataset", h.dataset},
              {"dataset_fingerprint", h.dataset_fingerprint},
              {"model_fingerprint", h.model_fingerprint},
              {"seed", h.seed},
              {"criterion", h.criterion},
              {"task", h.task},
              {"count", h.count}};
}

ArtifactHeader header_from_json(const Json& j, const std::string& expected_format) {
  ArtifactHeader h;
  h.format = j.at("format").get<std::string>();
  if (h.format != expected_format) {
    throw DataIntegrityError("expected a " + expected_format + " file, found " + h.format);
  }
  h.version = j.at("version").get<int>();
  if (h.version != 1) {
    throw DataIntegrityError("unsupported " + h.format + " version " + std::to_string(h.version));
  }
  h.dataset = j.at("dataset").get<std::string>();
  h.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  h.model_fingerprint = j.at("model_fingerprint").get<std::string>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.criterion = j.at("criterion").get<std::string>();
  h.task = j.at("task").get<std::string>();
  h.count = j.at("count").get<std::size_t>();
  return h;
}

std::string rollouts_to_jsonl(const RolloutFile& file) {
  std::string out = header_to_json(file.header).dump() + "\n";
  for (const RolloutRecord& r : file.records) {
    Json j = side_to_json(r.side);
    j["sample_id"] = r.sample_id;
    j["index"] = r.index;
    j["chair"] = r.chair;
    j["cover"] = r.cover;
    out += j.dump();
    out += '\n';
  }
  return out;
}

RolloutFile rollouts_from_jsonl(const std::string& text) {
  const auto lines = split_lines(text);
  RolloutFile f;
  f.header = parse_header(lines, "octopus-rollouts");
  for_each_record(lines, 1, [&](const Json& j) {
    RolloutRecord r;
    r.sample_id = j.at("sample_id").get<std::uint64_t>();
    r.index = j.at("index").get<std::size_t>();
    r.side = side_from_json(j);
    r.chair = j.at("chair").get<double>();
    r.cover = j.at("cover").get<double>();
    f.records.push_back(std::move(r));
  });
  return f;
}

std::string prefs_to_jsonl(const PrefFile& file) {
  std::string out = header_to_json(file.header).dump() + "\n";
  for (const PreferencePair& p : file.pairs) {
    Json j{{"sample_id", p.sample_id},
           {"criterion", file.header.criterion},
           {"pos", side_to_json(p.pos)},
           {"neg", side_to_json(p.neg)},
           {"scores", {{"pos", p.score_pos}, {"neg", p.score_neg}}}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

PrefFile prefs_from_jsonl(const std::string& text) {
  const auto lines = split_lines(text);
  PrefFile f;
  f.header = parse_header(lines, "octopus-prefs");
  for_each_record(lines, 1, [&](const Json& j) {
    PreferencePair p;
    p.sample_id = j.at("sample_id").get<std::uint64_t>();
    p.pos = side_from_json(j.at("pos"));
    p.neg = side_from_json(j.at("neg"));
    p.score_pos = j.at("scores").at("pos").get<double>();
    p.score_neg = j.at("scores").at("neg").get<double>();
    f.pairs.push_back(std::move(p));
  });
  return f;
}

}  // namespace octopus

#include "octopus/checkpoint.hpp"

#include <algorithm>
#include <cmath>

#include "octopus/errors.hpp"

namespace octopus {

namespace {

using Kind = LoadError::Kind;

}  // namespace

Json head_config_json(const HeadConfig& c) {
  return Json{{"d", c.d},           {"layers", c.layers},         {"heads", c.heads},
              {"mlp_hidden", c.mlp_hidden}, {"ffn_hidden", c.ffn_hidden}, {"actions", c.actions},
              {"max_len", c.max_len}};
}

HeadConfig head_config_from_json(const Json& j) {
  HeadConfig c;
  c.d = j.at("d").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  c.actions = j.at("actions").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  return c;
}

Json checkpoint_to_json(const HeadParams& params, const std::string& model_fingerprint) {
  Json tensors = Json::array();
  for (const ParamTensor& t : params.layout()) {
    const auto v = params.view(t.name);
    tensors.push_back(Json{{"name", t.name},
                           {"shape", {t.rows, t.cols}},
                           {"values", std::vector<double>(v.begin(), v.end())}});
  }
  return Json{{"format_version", kCheckpointVersion},
              {"head_config", head_config_json(params.config())},
              {"model_fingerprint", model_fingerprint},
              {"parameters", std::move(tensors)}};
}

Checkpoint checkpoint_from_json(const Json& j) {
  try {
    if (!j.is_object()) throw LoadError(Kind::kMalformed, "checkpoint is not a JSON object");
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw LoadError(Kind::kVersionMismatch,
                      "checkpoint format_version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) +
                          ")");
    }
    HeadConfig config = head_config_from_json(j.at("head_config"));
    try {
      config.validate();
    } catch (const std::invalid_argument& e) {
      throw LoadError(Kind::kMalformed, std::string("checkpoint head_config: ") + e.what());
    }
    Checkpoint ck{HeadParams(config), j.at("model_fingerprint").get<std::string>()};
    const Json& tensors = j.at("parameters");
    const auto& layout = ck.params.layout();
    if (!tensors.is_array() || tensors.size() != layout.size()) {
      throw LoadError(Kind::kShapeMismatch, "checkpoint has " + std::to_string(tensors.size()) +
                                                " tensors, expected " +
                                                std::to_string(layout.size()));
    }
    auto flat = ck.params.mutable_flat();
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const ParamTensor& t = layout[i];
      const Json& e = tensors[i];
      const auto name = e.at("name").get<std::string>();
      if (name != t.name) {
        throw LoadError(Kind::kShapeMismatch,
                        "checkpoint tensor " + std::to_string(i) + " is '" + name +
                            "', expected '" + t.name + "'");
      }
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      const auto values = e.at("values").get<std::vector<double>>();
      if (shape != std::vector<std::size_t>{t.rows, t.cols} || values.size() != t.size()) {
        throw LoadError(Kind::kShapeMismatch, "checkpoint tensor '" + t.name +
                                                  "' has the wrong shape or length");
      }
      if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
        throw LoadError(Kind::kMalformed, "checkpoint tensor '" + t.name + "' is not finite");
      }
      std::copy(values.begin(), values.end(), flat.begin() + static_cast<std::ptrdiff_t>(t.offset));
    }
    return ck;
  } catch (const Json::exception& e) {
    throw LoadError(Kind::kMalformed, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const HeadParams& params, const std::string& model_fingerprint,
                     const std::string& path) {
  write_file_atomic(path, checkpoint_to_json(params, model_fingerprint).dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw LoadError(Kind::kMalformed, "checkpoint '" + path + "' is not valid JSON");
  }
  return checkpoint_from_json(j);
}

}  // namespace octopus

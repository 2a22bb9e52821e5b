#include <fstream>

#include "json.hpp"
#include "vulmtl/encoder.hpp"
#include "vulmtl/errors.hpp"

namespace vulmtl {

namespace {

constexpr const char* kFormat = "vulmtl-checkpoint-v1";

nlohmann::ordered_json config_json(const EncoderConfig& c) {
  nlohmann::ordered_json j;
  j["d_model"] = c.d_model;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["vocab_size"] = c.vocab_size;
  j["max_len"] = c.max_len;
  j["dropout"] = c.dropout;
  j["n_classes"] = c.n_classes;
  j["N_l"] = c.N_l;
  j["N_t"] = c.N_t;
  return j;
}

EncoderConfig config_from(const nlohmann::json& j) {
  EncoderConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.n_classes = j.at("n_classes").get<int>();
  c.N_l = j.at("N_l").get<int>();
  c.N_t = j.at("N_t").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Encoder& model,
                     const Checkpoint& meta) {
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["config"] = config_json(model.config());
  j["dims"] = {{"L_c", meta.dims.L_c},
               {"N_l", meta.dims.N_l},
               {"N_t", meta.dims.N_t}};
  j["classes"] = meta.classes;

  nlohmann::ordered_json vocab;
  vocab["min_freq"] = meta.vocab.min_freq;
  auto tokens = nlohmann::ordered_json::array();
  for (const auto& [tok, id] : meta.vocab.ids)
    tokens.push_back({tok, id});
  vocab["tokens"] = std::move(tokens);
  j["vocab"] = std::move(vocab);

  j["extra"] = meta.extra;

  auto params = nlohmann::ordered_json::array();
  for (const auto& [name, t] : model.parameters()) {
    nlohmann::ordered_json p;
    p["name"] = name;
    p["shape"] = t.shape();
    p["data"] = t.data();
    params.push_back(std::move(p));
  }
  j["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump() << '\n';
  if (!out) throw IoError("write error on checkpoint: " + path);
}

Encoder load_checkpoint(const std::string& path, Checkpoint* meta_out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);

  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ValidationError("checkpoint " + path + ": bad JSON: " + e.what());
  }

  try {
    if (!j.contains("format") || j["format"] != kFormat)
      throw ValidationError("checkpoint " + path + ": unknown format");

    Checkpoint meta;
    meta.config = config_from(j.at("config"));
    meta.dims.L_c = j.at("dims").at("L_c").get<int>();
    meta.dims.N_l = j.at("dims").at("N_l").get<int>();
    meta.dims.N_t = j.at("dims").at("N_t").get<int>();
    meta.classes = j.at("classes").get<std::vector<std::string>>();
    meta.vocab.min_freq = j.at("vocab").at("min_freq").get<int>();
    for (const auto& row : j.at("vocab").at("tokens")) {
      const std::string tok = row.at(0).get<std::string>();
      const int id = row.at(1).get<int>();
      if (!meta.vocab.ids.emplace(tok, id).second)
        throw ValidationError("checkpoint " + path + ": duplicate vocab token");
    }
    if (j.contains("extra"))
      meta.extra = j["extra"].get<std::map<std::string, std::string>>();

    // seed is irrelevant: every parameter is overwritten below
    Encoder model(meta.config, 0);
    auto& params = model.parameters();
    const auto& stored = j.at("params");
    if (stored.size() != params.size())
      throw ValidationError(
          "checkpoint " + path + ": holds " + std::to_string(stored.size()) +
          " parameters, model wants " + std::to_string(params.size()));

    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& p = stored[i];
      if (p.at("name").get<std::string>() != params[i].first)
        throw ValidationError("checkpoint " + path + ": parameter " +
                              std::to_string(i) + " is '" +
                              p.at("name").get<std::string>() + "', expect '" +
                              params[i].first + "'");
      const auto shape = p.at("shape").get<Shape>();
      if (shape != params[i].second.shape())
        throw ValidationError("checkpoint " + path + ": shape mismatch on " +
                              params[i].first);
      auto data = p.at("data").get<std::vector<double>>();
      if (data.size() != params[i].second.size())
        throw ValidationError("checkpoint " + path + ": size mismatch on " +
                              params[i].first);
      params[i].second.data() = std::move(data);
    }

    if (meta_out) *meta_out = std::move(meta);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace vulmtl

#include "coattendwg/serialize.hpp"

#include <fstream>

#include <json.hpp>

#include "coattendwg/data.hpp"

namespace coattendwg {

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& cfg) {
  json j;
  j["embed_dim"] = cfg.embed_dim;
  j["text_dim"] = cfg.text_dim;
  j["img_dim"] = cfg.img_dim;
  j["seq_len"] = cfg.seq_len;
  j["fusion_heads"] = cfg.fusion_heads;
  j["refine_heads"] = cfg.refine_heads;
  j["experts"] = cfg.experts;
  j["mf_kernel"] = cfg.mf_kernel;
  j["mf_depth"] = cfg.mf_depth;
  j["dropout"] = cfg.dropout;
  j["num_classes"] = cfg.num_classes;
  j["seed"] = cfg.seed;
  j["ablate"] = format_ablation(cfg.ablation);
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.text_dim = j.at("text_dim").get<int>();
  cfg.img_dim = j.at("img_dim").get<int>();
  cfg.seq_len = j.at("seq_len").get<int>();
  cfg.fusion_heads = j.at("fusion_heads").get<int>();
  cfg.refine_heads = j.at("refine_heads").get<int>();
  cfg.experts = j.at("experts").get<int>();
  cfg.mf_kernel = j.at("mf_kernel").get<int>();
  cfg.mf_depth = j.at("mf_depth").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.ablation = parse_ablation(j.at("ablate").get<std::string>());
  return cfg;
}

}  // namespace

void save_params(const ModelParams& params, const ModelConfig& cfg,
                 const std::string& path) {
  json j;
  j["format"] = "coattendwg-params-v1";
  j["config"] = config_to_json(cfg);
  json tensors = json::object();
  for (const NamedTensor& p : params.named_parameters()) {
    json t;
    t["shape"] = p.tensor.shape();
    t["data"] = std::vector<double>(p.tensor.data().begin(),
                                    p.tensor.data().end());
    tensors[p.name] = std::move(t);
  }
  j["tensors"] = std::move(tensors);

  std::ofstream out(path);
  if (!out) throw FileError("cannot write params file: " + path);
  out << j.dump();
  out << '\n';
  if (!out) throw FileError("write failed: " + path);
}

std::pair<ModelParams, ModelConfig> load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open params file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError(path + ": invalid JSON");
  if (j.value("format", "") != "coattendwg-params-v1") {
    throw FormatError(path + ": unrecognized params format");
  }

  ModelConfig cfg = config_from_json(j.at("config"));
  ModelParams params = ModelParams::init(cfg);
  const json& tensors = j.at("tensors");
  for (NamedTensor& p : params.named_parameters()) {
    if (!tensors.contains(p.name)) {
      throw FormatError(path + ": missing tensor " + p.name);
    }
    const json& t = tensors.at(p.name);
    const auto shape = t.at("shape").get<std::vector<int>>();
    if (shape != p.tensor.shape()) {
      throw FormatError(path + ": tensor " + p.name + " has shape " +
                        shape_str(shape) + ", expected " +
                        shape_str(p.tensor.shape()));
    }
    const auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != p.tensor.numel()) {
      throw FormatError(path + ": tensor " + p.name + " has wrong size");
    }
    std::copy(data.begin(), data.end(), p.tensor.data().begin());
  }
  return {std::move(params), cfg};
}

}  // namespace coattendwg

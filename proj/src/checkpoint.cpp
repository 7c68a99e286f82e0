#include "hazardfuse/fusion/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "hazardfuse/common.hpp"
#include "hazardfuse/fusion/spec_json.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace hf {

void save_checkpoint(const std::string& stem, const FusionNetwork<float>& net,
                     const CheckpointMeta& meta) {
  FusionNetwork<float>& mutable_net = const_cast<FusionNetwork<float>&>(net);
  const auto params = mutable_net.flat_params();
  const auto names = net.flat_param_names();

  const fs::path stem_path(stem);
  if (stem_path.has_parent_path()) fs::create_directories(stem_path.parent_path());

  json entries = json::array();
  std::size_t offset = 0;
  std::ofstream blob(stem + ".bin", std::ios::binary);
  if (!blob) throw std::runtime_error("cannot write " + stem + ".bin");
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const auto* t : {&params[i]->w, &params[i]->b}) {
      json shape = json::array();
      for (int d = 0; d < t->rank(); ++d) shape.push_back(t->dim(d));
      const std::size_t bytes = static_cast<std::size_t>(t->numel()) * sizeof(float);
      entries.push_back({{"name", names[i] + (t == &params[i]->w ? ".w" : ".b")},
                         {"shape", shape},
                         {"byte_offset", offset},
                         {"byte_length", bytes}});
      blob.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(bytes));
      offset += bytes;
    }
  }
  blob.close();

  json manifest{{"schema_version", kSchemaVersion},
                {"tool_version", kToolVersion},
                {"network_id", meta.network_id},
                {"fusion", fusion_kind_name(net.spec.fusion)},
                {"modalities", json::array()},
                {"arm_layers", json::array()},
                {"shared_layers", json::array()},
                {"rng_seed", meta.rng_seed},
                {"hyperparams", hyperparams_to_json(meta.hp)},
                {"parent_checkpoints", meta.parents},
                {"params", entries},
                {"blob_file", stem_path.filename().string() + ".bin"},
                {"blob_bytes", offset}};
  for (const auto m : net.spec.modalities) manifest["modalities"].push_back(modality_name(m));
  for (const auto& l : net.spec.arm_layers) manifest["arm_layers"].push_back(layer_spec_to_json(l));
  for (const auto& l : net.spec.shared_layers)
    manifest["shared_layers"].push_back(layer_spec_to_json(l));

  std::ofstream out(stem + ".json");
  if (!out) throw std::runtime_error("cannot write " + stem + ".json");
  out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& stem) {
  std::ifstream in(stem + ".json");
  if (!in) throw std::runtime_error("cannot open checkpoint manifest " + stem + ".json");
  json manifest;
  in >> manifest;

  FusionSpec spec;
  spec.fusion = fusion_kind_from_name(manifest.at("fusion").get<std::string>());
  for (const auto& m : manifest.at("modalities"))
    spec.modalities.push_back(modality_from_name(m.get<std::string>()));
  for (const auto& l : manifest.at("arm_layers")) spec.arm_layers.push_back(layer_spec_from_json(l));
  for (const auto& l : manifest.at("shared_layers"))
    spec.shared_layers.push_back(layer_spec_from_json(l));
  spec.hp = hyperparams_from_json(manifest.at("hyperparams"));

  Checkpoint ckpt{CheckpointMeta{}, build_network<float>(spec)};
  ckpt.meta.network_id = manifest.at("network_id").get<std::string>();
  ckpt.meta.rng_seed = manifest.at("rng_seed").get<std::uint64_t>();
  ckpt.meta.hp = spec.hp;
  for (const auto& p : manifest.at("parent_checkpoints"))
    ckpt.meta.parents.push_back(p.get<std::string>());

  const fs::path blob_path =
      fs::path(stem).parent_path() / manifest.at("blob_file").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("cannot open checkpoint blob " + blob_path.string());

  const auto params = ckpt.net.flat_params();
  const auto names = ckpt.net.flat_param_names();
  const auto& entries = manifest.at("params");
  if (entries.size() != params.size() * 2)
    throw std::runtime_error("checkpoint manifest lists " + std::to_string(entries.size()) +
                             " tensors, network has " + std::to_string(params.size() * 2));
  std::size_t e = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto* t : {&params[i]->w, &params[i]->b}) {
      const auto& entry = entries.at(e);
      const std::string expect = names[i] + (t == &params[i]->w ? ".w" : ".b");
      if (entry.at("name").get<std::string>() != expect)
        throw std::runtime_error("checkpoint parameter order mismatch: expected " + expect +
                                 ", manifest has " + entry.at("name").get<std::string>());
      const std::size_t bytes = entry.at("byte_length").get<std::size_t>();
      if (bytes != static_cast<std::size_t>(t->numel()) * sizeof(float))
        throw std::runtime_error("checkpoint tensor " + expect + " has unexpected size");
      blob.seekg(static_cast<std::streamoff>(entry.at("byte_offset").get<std::size_t>()));
      blob.read(reinterpret_cast<char*>(t->data()), static_cast<std::streamsize>(bytes));
      if (!blob) throw std::runtime_error("checkpoint blob truncated at " + expect);
      ++e;
    }
  }
  return ckpt;
}

}  // namespace hf

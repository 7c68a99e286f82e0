#pragma once

// JSON conversions shared by fusion-spec documents and checkpoint manifests.

#include <json.hpp>

#include "hazardfuse/fusion/spec.hpp"

namespace hf {

nlohmann::json layer_spec_to_json(const nn::LayerSpec& l);
nn::LayerSpec layer_spec_from_json(const nlohmann::json& j);
nlohmann::json hyperparams_to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const nlohmann::json& j, Hyperparams base = {});

}  // namespace hf

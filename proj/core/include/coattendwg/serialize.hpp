#pragma once

#include <string>
#include <utility>

#include "coattendwg/model.hpp"

namespace coattendwg {

// Parameter files are JSON: the model config plus every named tensor with its
// shape and row-major data. Doubles round-trip exactly.
void save_params(const ModelParams& params, const ModelConfig& cfg,
                 const std::string& path);
std::pair<ModelParams, ModelConfig> load_params(const std::string& path);

}  // namespace coattendwg

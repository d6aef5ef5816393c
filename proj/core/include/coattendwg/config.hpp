#pragma once

#include <string>

#include "coattendwg/model.hpp"
#include "coattendwg/train.hpp"

namespace coattendwg {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Flat key=value text, one pair per line; '#' starts a comment. Every key is
// optional and defaults to the values baked into ModelConfig/TrainConfig.
// Unknown keys are errors.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string format_config(const RunConfig& cfg);

}  // namespace coattendwg

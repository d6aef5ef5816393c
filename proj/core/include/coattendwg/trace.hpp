#pragma once

#include <string>
#include <vector>

#include "coattendwg/data.hpp"
#include "coattendwg/model.hpp"

namespace coattendwg {

// Long/tidy interpretability rows: one value per row so heatmaps can be drawn
// by any plotting tool. Attention kinds use indices [head, query, key]; gate
// kinds [position, channel]; expert gating [expert]; prediction/label have no
// indices.
struct TraceRow {
  std::string id;
  std::string kind;
  std::vector<int> indices;
  double value = 0.0;
};

enum class TraceFormat { Csv, Jsonl };
TraceFormat parse_trace_format(const std::string& name);

// Runs the model in eval mode sample by sample and flattens the captured
// attention weights, channel gates, expert gating, prediction and label.
std::vector<TraceRow> collect_traces(const ModelParams& params,
                                     const ModelConfig& cfg,
                                     const Dataset& data);

void export_trace(const std::vector<TraceRow>& rows, const std::string& path,
                  TraceFormat format);
std::vector<TraceRow> parse_trace_file(const std::string& path,
                                       TraceFormat format);

}  // namespace coattendwg

#include "coattendwg/trace.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "coattendwg/data.hpp"

namespace coattendwg {

TraceFormat parse_trace_format(const std::string& name) {
  if (name == "csv") return TraceFormat::Csv;
  if (name == "jsonl") return TraceFormat::Jsonl;
  throw std::invalid_argument("unknown trace format: " + name);
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void emit_attn(std::vector<TraceRow>& rows, const std::string& id,
               const char* kind, const Tensor& attn) {
  if (!attn) return;  // skipped by an ablation
  const int heads = attn.dim(1), lq = attn.dim(2), lk = attn.dim(3);
  for (int h = 0; h < heads; ++h) {
    for (int q = 0; q < lq; ++q) {
      for (int k = 0; k < lk; ++k) {
        const std::size_t idx =
            ((static_cast<std::size_t>(h)) * lq + q) * lk + k;
        rows.push_back({id, kind, {h, q, k}, attn.data()[idx]});
      }
    }
  }
}

void emit_gate(std::vector<TraceRow>& rows, const std::string& id,
               const char* kind, const Tensor& gate) {
  if (!gate) return;
  const int l = gate.dim(1), d = gate.dim(2);
  for (int pos = 0; pos < l; ++pos) {
    for (int c = 0; c < d; ++c) {
      rows.push_back({id, kind, {pos, c},
                      gate.data()[static_cast<std::size_t>(pos) * d + c]});
    }
  }
}

}  // namespace

std::vector<TraceRow> collect_traces(const ModelParams& params,
                                     const ModelConfig& cfg,
                                     const Dataset& data) {
  std::vector<TraceRow> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t index[] = {i};
    Batch batch = make_batch(data, index);
    Tape tape;
    ForwardResult fwd = forward_full(tape, params, cfg, batch.text, batch.img);
    const std::string& id = data.records[i].id;

    emit_attn(rows, id, "attn_text_to_img", fwd.trace.gated.text_attn_weights);
    emit_attn(rows, id, "attn_img_to_text", fwd.trace.gated.img_attn_weights);
    emit_attn(rows, id, "xattn_text", fwd.trace.dual.text_xattn_weights);
    emit_attn(rows, id, "xattn_img", fwd.trace.dual.img_xattn_weights);
    emit_attn(rows, id, "refine_attn", fwd.trace.fusion.refine_attn_weights);
    emit_gate(rows, id, "gate_text", fwd.trace.gated.text_gate);
    emit_gate(rows, id, "gate_img", fwd.trace.gated.img_gate);

    const Tensor& g = fwd.trace.fusion.gate_weights;
    if (g) {
      for (int e = 0; e < g.dim(1); ++e) {
        rows.push_back({id, "expert_gate", {e},
                        g.data()[static_cast<std::size_t>(e)]});
      }
    }

    std::size_t best = 0;
    for (std::size_t c = 1; c < static_cast<std::size_t>(cfg.num_classes); ++c) {
      if (fwd.logits.data()[c] > fwd.logits.data()[best]) best = c;
    }
    rows.push_back({id, "prediction", {}, static_cast<double>(best)});
    rows.push_back({id, "label", {}, static_cast<double>(data.records[i].label)});
  }
  return rows;
}

void export_trace(const std::vector<TraceRow>& rows, const std::string& path,
                  TraceFormat format) {
  if (rows.empty()) throw std::invalid_argument("export_trace: no rows");
  for (const TraceRow& row : rows) {
    if (row.id.find_first_of(",\"\n\t") != std::string::npos) {
      throw FormatError("export_trace: sample id '" + row.id +
                        "' contains a delimiter character");
    }
  }
  std::ofstream out(path);
  if (!out) throw FileError("cannot write trace file: " + path);

  if (format == TraceFormat::Csv) {
    out << "id,kind,indices,value\n";
    for (const TraceRow& row : rows) {
      out << row.id << ',' << row.kind << ',';
      for (std::size_t i = 0; i < row.indices.size(); ++i) {
        if (i) out << ':';
        out << row.indices[i];
      }
      out << ',' << fmt17(row.value) << '\n';
    }
  } else {
    for (const TraceRow& row : rows) {
      out << "{\"id\":\"" << row.id << "\",\"kind\":\"" << row.kind
          << "\",\"indices\":[";
      for (std::size_t i = 0; i < row.indices.size(); ++i) {
        if (i) out << ',';
        out << row.indices[i];
      }
      out << "],\"value\":" << fmt17(row.value) << "}\n";
    }
  }
  if (!out) throw FileError("write failed: " + path);
}

std::vector<TraceRow> parse_trace_file(const std::string& path,
                                       TraceFormat format) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open trace file: " + path);
  std::vector<TraceRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (format == TraceFormat::Csv) {
      if (line_no == 1 && line == "id,kind,indices,value") continue;
      std::stringstream ss(line);
      TraceRow row;
      std::string indices, value;
      if (!std::getline(ss, row.id, ',') || !std::getline(ss, row.kind, ',') ||
          !std::getline(ss, indices, ',') || !std::getline(ss, value)) {
        throw FormatError("trace line " + std::to_string(line_no) +
                          ": expected id,kind,indices,value");
      }
      if (!indices.empty()) {
        std::stringstream is(indices);
        std::string tok;
        while (std::getline(is, tok, ':')) row.indices.push_back(std::stoi(tok));
      }
      row.value = std::stod(value);
      rows.push_back(std::move(row));
    } else {
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        throw FormatError("trace line " + std::to_string(line_no) +
                          ": bad JSON");
      }
      TraceRow row;
      row.id = j.at("id").get<std::string>();
      row.kind = j.at("kind").get<std::string>();
      for (const auto& v : j.at("indices")) row.indices.push_back(v.get<int>());
      row.value = j.at("value").get<double>();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace coattendwg

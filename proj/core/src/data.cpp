#include "coattendwg/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace coattendwg {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> parse_floats(const std::string& text, int line_no,
                                 const std::string& id) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      throw FormatError("line " + std::to_string(line_no) + " (record " + id +
                        "): bad float '" + tok + "'");
    }
    if (pos != tok.size()) {
      throw FormatError("line " + std::to_string(line_no) + " (record " + id +
                        "): trailing characters in float '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

Dataset load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open dataset file: " + path);

  std::string header;
  if (!std::getline(in, header)) {
    throw FormatError(path + ": missing header line");
  }
  Dataset data;
  if (std::sscanf(header.c_str(), "D_text=%d D_img=%d C=%d", &data.text_dim,
                  &data.img_dim, &data.num_classes) != 3) {
    throw FormatError(path + ": bad header '" + header +
                      "' (expected 'D_text=<int> D_img=<int> C=<int>')");
  }
  if (data.text_dim <= 0 || data.img_dim <= 0 || data.num_classes <= 0) {
    throw FormatError(path + ": header dims must be positive");
  }

  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 4 "
                        "tab-separated fields, got " +
                        std::to_string(fields.size()));
    }
    FeatureRecord rec;
    rec.id = fields[0];
    try {
      std::size_t pos = 0;
      rec.label = std::stoi(fields[1], &pos);
      if (pos != fields[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError("line " + std::to_string(line_no) + " (record " +
                        rec.id + "): bad label '" + fields[1] + "'");
    }
    if (rec.label < 0 || rec.label >= data.num_classes) {
      throw FormatError("line " + std::to_string(line_no) + " (record " +
                        rec.id + "): label " + std::to_string(rec.label) +
                        " out of range [0," +
                        std::to_string(data.num_classes) + ")");
    }
    rec.text_feat = parse_floats(fields[2], line_no, rec.id);
    rec.img_feat = parse_floats(fields[3], line_no, rec.id);
    if (static_cast<int>(rec.text_feat.size()) != data.text_dim ||
        static_cast<int>(rec.img_feat.size()) != data.img_dim) {
      throw FormatError("record " + rec.id + " (line " +
                        std::to_string(line_no) + "): got " +
                        std::to_string(rec.text_feat.size()) + "/" +
                        std::to_string(rec.img_feat.size()) +
                        " features, expected " + std::to_string(data.text_dim) +
                        "/" + std::to_string(data.img_dim));
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

void save_features(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write dataset file: " + path);
  out << "D_text=" << data.text_dim << " D_img=" << data.img_dim
      << " C=" << data.num_classes << '\n';
  for (const FeatureRecord& rec : data.records) {
    out << rec.id << '\t' << rec.label << '\t';
    for (std::size_t i = 0; i < rec.text_feat.size(); ++i) {
      if (i) out << ',';
      out << fmt17(rec.text_feat[i]);
    }
    out << '\t';
    for (std::size_t i = 0; i < rec.img_feat.size(); ++i) {
      if (i) out << ',';
      out << fmt17(rec.img_feat[i]);
    }
    out << '\n';
  }
  if (!out) throw FileError("write failed: " + path);
}

std::pair<Dataset, Dataset> split(const Dataset& data, double ratio,
                                  std::uint64_t seed) {
  if (ratio <= 0.0 || ratio >= 1.0) {
    throw std::invalid_argument("split: ratio must be in (0,1)");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n_train =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(data.size())));
  Dataset train{data.text_dim, data.img_dim, data.num_classes, {}};
  Dataset test{data.text_dim, data.img_dim, data.num_classes, {}};
  train.records.reserve(n_train);
  test.records.reserve(data.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : test).records.push_back(data.records[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

SynthTask parse_synth_task(const std::string& name) {
  if (name == "xor") return SynthTask::XorInteraction;
  if (name == "single-text") return SynthTask::SingleText;
  if (name == "single-image") return SynthTask::SingleImage;
  if (name == "linear") return SynthTask::LinearlySeparable;
  throw std::invalid_argument("unknown synthetic task: " + name);
}

namespace {

std::vector<double> unit_direction(int dim, Rng& rng) {
  std::vector<double> d(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (double& v : d) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) norm = 1.0;
  for (double& v : d) v /= norm;
  return d;
}

std::vector<double> encode_bit(int bit, const std::vector<double>& dir,
                               double noise, Rng& rng) {
  std::vector<double> v(dir.size());
  const double sign = bit ? 1.0 : -1.0;
  for (std::size_t i = 0; i < dir.size(); ++i) {
    v[i] = sign * dir[i] + noise * rng.normal();
  }
  return v;
}

}  // namespace

Dataset synth_generate(const SyntheticSpec& spec) {
  if (spec.n_samples < 0 || spec.text_dim <= 0 || spec.img_dim <= 0) {
    throw std::invalid_argument("synth: bad spec");
  }
  Rng rng(spec.seed);
  Dataset data{spec.text_dim, spec.img_dim, 2, {}};
  data.records.reserve(static_cast<std::size_t>(spec.n_samples));

  const auto text_dir = unit_direction(spec.text_dim, rng);
  const auto img_dir = unit_direction(spec.img_dim, rng);
  // Fixed functional for the linearly-separable task.
  const auto lin_text = unit_direction(spec.text_dim, rng);
  const auto lin_img = unit_direction(spec.img_dim, rng);

  for (int i = 0; i < spec.n_samples; ++i) {
    FeatureRecord rec;
    {
      char buf[24];
      std::snprintf(buf, sizeof(buf), "s%06d", i);
      rec.id = buf;
    }
    switch (spec.task) {
      case SynthTask::XorInteraction:
      case SynthTask::SingleText:
      case SynthTask::SingleImage: {
        const int u = static_cast<int>(rng.bounded(2));
        const int v = static_cast<int>(rng.bounded(2));
        rec.text_feat = encode_bit(u, text_dir, spec.noise, rng);
        rec.img_feat = encode_bit(v, img_dir, spec.noise, rng);
        if (spec.task == SynthTask::XorInteraction) rec.label = u ^ v;
        else if (spec.task == SynthTask::SingleText) rec.label = u;
        else rec.label = v;
        break;
      }
      case SynthTask::LinearlySeparable: {
        rec.text_feat.resize(static_cast<std::size_t>(spec.text_dim));
        rec.img_feat.resize(static_cast<std::size_t>(spec.img_dim));
        double score = 0.0;
        for (std::size_t j = 0; j < rec.text_feat.size(); ++j) {
          rec.text_feat[j] = rng.normal();
          score += lin_text[j] * rec.text_feat[j];
        }
        for (std::size_t j = 0; j < rec.img_feat.size(); ++j) {
          rec.img_feat[j] = rng.normal();
          score += lin_img[j] * rec.img_feat[j];
        }
        rec.label = score > 0.0 ? 1 : 0;
        for (double& v : rec.text_feat) v += spec.noise * rng.normal();
        for (double& v : rec.img_feat) v += spec.noise * rng.normal();
        break;
      }
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

Dataset mask_modality(const Dataset& data, Modality keep) {
  if (keep == Modality::Both) return data;
  Dataset out = data;
  for (FeatureRecord& rec : out.records) {
    auto& wiped = keep == Modality::TextOnly ? rec.img_feat : rec.text_feat;
    std::fill(wiped.begin(), wiped.end(), 0.0);
  }
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  const int b = static_cast<int>(indices.size());
  Batch batch;
  batch.text = Tensor::zeros({b, data.text_dim});
  batch.img = Tensor::zeros({b, data.img_dim});
  batch.labels.reserve(indices.size());
  for (int r = 0; r < b; ++r) {
    const FeatureRecord& rec = data.records[indices[static_cast<std::size_t>(r)]];
    for (int j = 0; j < data.text_dim; ++j) {
      batch.text.data()[static_cast<std::size_t>(r) * data.text_dim + j] =
          rec.text_feat[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < data.img_dim; ++j) {
      batch.img.data()[static_cast<std::size_t>(r) * data.img_dim + j] =
          rec.img_feat[static_cast<std::size_t>(j)];
    }
    batch.labels.push_back(rec.label);
  }
  return batch;
}

}  // namespace coattendwg

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coattendwg/rng.hpp"
#include "coattendwg/tensor.hpp"

namespace coattendwg {

struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FeatureRecord {
  std::string id;
  int label = 0;
  std::vector<double> text_feat;
  std::vector<double> img_feat;
};

struct Dataset {
  int text_dim = 0;
  int img_dim = 0;
  int num_classes = 0;
  std::vector<FeatureRecord> records;
  std::size_t size() const { return records.size(); }
};

// File format: header `D_text=<int> D_img=<int> C=<int>`, then one record per
// line: id<TAB>label<TAB>text floats (comma separated)<TAB>image floats.
// Floats are written with 17 significant digits so round-trips are lossless.
Dataset load_features(const std::string& path);
void save_features(const Dataset& data, const std::string& path);

// Seeded shuffle, then train = first floor(ratio * N) records.
std::pair<Dataset, Dataset> split(const Dataset& data, double ratio,
                                  std::uint64_t seed);

enum class SynthTask {
  XorInteraction,     // label = u XOR v, u in text, v in image
  SingleText,         // label depends only on the text modality
  SingleImage,        // label depends only on the image modality
  LinearlySeparable,  // label = sign of a fixed linear functional
};

SynthTask parse_synth_task(const std::string& name);

struct SyntheticSpec {
  int n_samples = 0;
  int text_dim = 16;
  int img_dim = 16;
  SynthTask task = SynthTask::XorInteraction;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

// For the xor task each modality carries one latent bit along a random unit
// direction plus Gaussian noise; the label is the XOR of the two bits, so
// neither modality alone predicts it.
Dataset synth_generate(const SyntheticSpec& spec);

// Zeroes the features of the modality NOT kept, for single-modality runs.
enum class Modality { Both, TextOnly, ImageOnly };
Dataset mask_modality(const Dataset& data, Modality keep);

// Batch assembly: text [B, D_text], image [B, D_img], labels.
struct Batch {
  Tensor text;
  Tensor img;
  std::vector<int> labels;
};
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace coattendwg

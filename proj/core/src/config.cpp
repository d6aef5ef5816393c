#include "coattendwg/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "coattendwg/data.hpp"

namespace coattendwg {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("config: bad integer for " + key + ": '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("config: bad number for " + key + ": '" + value + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("config: bad seed for " + key + ": '" + value + "'");
  }
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) +
                        ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "embed_dim") cfg.model.embed_dim = to_int(key, value);
    else if (key == "text_dim") cfg.model.text_dim = to_int(key, value);
    else if (key == "img_dim") cfg.model.img_dim = to_int(key, value);
    else if (key == "seq_len") cfg.model.seq_len = to_int(key, value);
    else if (key == "fusion_heads") cfg.model.fusion_heads = to_int(key, value);
    else if (key == "refine_heads") cfg.model.refine_heads = to_int(key, value);
    else if (key == "experts") cfg.model.experts = to_int(key, value);
    else if (key == "mf_kernel") cfg.model.mf_kernel = to_int(key, value);
    else if (key == "mf_depth") cfg.model.mf_depth = to_int(key, value);
    else if (key == "dropout") cfg.model.dropout = to_double(key, value);
    else if (key == "num_classes") cfg.model.num_classes = to_int(key, value);
    else if (key == "model_seed") cfg.model.seed = to_u64(key, value);
    else if (key == "ablate") {
      try {
        cfg.model.ablation = parse_ablation(value);
      } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("config: ") + e.what());
      }
    }
    else if (key == "lr") cfg.train.lr = to_double(key, value);
    else if (key == "max_epochs") cfg.train.max_epochs = to_int(key, value);
    else if (key == "early_stop_patience") cfg.train.early_stop_patience = to_int(key, value);
    else if (key == "plateau_factor") cfg.train.plateau_factor = to_double(key, value);
    else if (key == "plateau_patience") cfg.train.plateau_patience = to_int(key, value);
    else if (key == "min_improvement") cfg.train.min_improvement = to_double(key, value);
    else if (key == "weight_decay") cfg.train.weight_decay = to_double(key, value);
    else if (key == "batch_size") cfg.train.batch_size = to_int(key, value);
    else if (key == "val_fraction") cfg.train.val_fraction = to_double(key, value);
    else if (key == "train_seed") cfg.train.seed = to_u64(key, value);
    else {
      throw FormatError("config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream os;
  char num[40];
  auto put_double = [&](const char* key, double v) {
    std::snprintf(num, sizeof(num), "%.17g", v);
    os << key << '=' << num << '\n';
  };
  os << "embed_dim=" << cfg.model.embed_dim << '\n';
  os << "text_dim=" << cfg.model.text_dim << '\n';
  os << "img_dim=" << cfg.model.img_dim << '\n';
  os << "seq_len=" << cfg.model.seq_len << '\n';
  os << "fusion_heads=" << cfg.model.fusion_heads << '\n';
  os << "refine_heads=" << cfg.model.refine_heads << '\n';
  os << "experts=" << cfg.model.experts << '\n';
  os << "mf_kernel=" << cfg.model.mf_kernel << '\n';
  os << "mf_depth=" << cfg.model.mf_depth << '\n';
  put_double("dropout", cfg.model.dropout);
  os << "num_classes=" << cfg.model.num_classes << '\n';
  os << "model_seed=" << cfg.model.seed << '\n';
  if (cfg.model.ablation.any()) {
    os << "ablate=" << format_ablation(cfg.model.ablation) << '\n';
  }
  put_double("lr", cfg.train.lr);
  os << "max_epochs=" << cfg.train.max_epochs << '\n';
  os << "early_stop_patience=" << cfg.train.early_stop_patience << '\n';
  put_double("plateau_factor", cfg.train.plateau_factor);
  os << "plateau_patience=" << cfg.train.plateau_patience << '\n';
  put_double("min_improvement", cfg.train.min_improvement);
  put_double("weight_decay", cfg.train.weight_decay);
  os << "batch_size=" << cfg.train.batch_size << '\n';
  put_double("val_fraction", cfg.train.val_fraction);
  os << "train_seed=" << cfg.train.seed << '\n';
  return os.str();
}

}  // namespace coattendwg

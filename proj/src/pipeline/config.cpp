#include "trajview/pipeline/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace trajview::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "'");
}

}  // namespace

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "dim=" << dim << "\n";
  os << "heads=" << heads << "\n";
  os << "depth=" << depth << "\n";
  os << "ff_mult=" << ff_mult << "\n";
  os << "tau=" << tau << "\n";
  os << "w1=" << w1 << "\n";
  os << "w2=" << w2 << "\n";
  os << "mask_prob=" << mask_prob << "\n";
  os << "mask_span=" << mask_span << "\n";
  os << "epochs=" << epochs << "\n";
  os << "batch_size=" << batch_size << "\n";
  os << "lr=" << lr << "\n";
  os << "weight_decay=" << weight_decay << "\n";
  os << "seed=" << seed << "\n";
  os << "no_inter_modal=" << (no_inter_modal ? 1 : 0) << "\n";
  os << "no_grid_view=" << (no_grid_view ? 1 : 0) << "\n";
  os << "no_align_loss=" << (no_align_loss ? 1 : 0) << "\n";
  os << "no_mlm_loss=" << (no_mlm_loss ? 1 : 0) << "\n";
  os << "pretrain=" << (pretrain ? 1 : 0) << "\n";
  return os.str();
}

void TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "dim")
      dim = std::stoi(value);
    else if (key == "heads")
      heads = std::stoi(value);
    else if (key == "depth")
      depth = std::stoi(value);
    else if (key == "ff_mult")
      ff_mult = std::stoi(value);
    else if (key == "tau")
      tau = std::stod(value);
    else if (key == "w1")
      w1 = std::stod(value);
    else if (key == "w2")
      w2 = std::stod(value);
    else if (key == "mask_prob")
      mask_prob = std::stod(value);
    else if (key == "mask_span")
      mask_span = std::stoi(value);
    else if (key == "epochs")
      epochs = std::stoi(value);
    else if (key == "batch_size")
      batch_size = std::stoi(value);
    else if (key == "lr")
      lr = std::stod(value);
    else if (key == "weight_decay")
      weight_decay = std::stod(value);
    else if (key == "seed")
      seed = std::stoull(value);
    else if (key == "no_inter_modal")
      no_inter_modal = parse_bool(value);
    else if (key == "no_grid_view")
      no_grid_view = parse_bool(value);
    else if (key == "no_align_loss")
      no_align_loss = parse_bool(value);
    else if (key == "no_mlm_loss")
      no_mlm_loss = parse_bool(value);
    else if (key == "pretrain")
      pretrain = parse_bool(value);
    else
      throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("config: epochs and batch_size must be >= 1");
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config: expected key=value, got '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  cfg.apply(kv);
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

}  // namespace trajview::pipeline

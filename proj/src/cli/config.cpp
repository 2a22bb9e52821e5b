#include <fstream>
#include <stdexcept>

#include "vulmtl/cli.hpp"
#include "vulmtl/errors.hpp"
#include "vulmtl/training.hpp"

namespace vulmtl {

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError("config " + key + ": '" + v + "' is not a number");
  }
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw ValidationError("config " + key + ": '" + v + "' is not an integer");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError("config " + key + ": '" + v +
                          "' is not a non-negative integer");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config " + key + ": '" + v +
                        "' is not a boolean (true/false/1/0)");
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "lr") lr = to_double(key, value);
  else if (key == "epochs") epochs = to_int(key, value);
  else if (key == "batch") batch = to_int(key, value);
  else if (key == "dropout") dropout = to_double(key, value);
  else if (key == "grad_clip") grad_clip = to_double(key, value);
  else if (key == "pgd_eps") pgd_eps = to_double(key, value);
  else if (key == "pgd_mu") pgd_mu = to_double(key, value);
  else if (key == "pgd_steps") pgd_steps = to_int(key, value);
  else if (key == "sigma") sigma = to_double(key, value);
  else if (key == "focal_gamma") focal_gamma = to_double(key, value);
  else if (key == "d_model") d_model = to_int(key, value);
  else if (key == "n_layers") n_layers = to_int(key, value);
  else if (key == "n_heads") n_heads = to_int(key, value);
  else if (key == "L_c") L_c = to_int(key, value);
  else if (key == "N_l") N_l = to_int(key, value);
  else if (key == "N_t") N_t = to_int(key, value);
  else if (key == "seed") seed = to_u64(key, value);
  else if (key == "edat_enabled") edat_enabled = to_bool(key, value);
  else if (key == "task_mode") task_mode = value;
  else if (key == "warmup_epochs") warmup_epochs = to_int(key, value);
  else if (key == "min_freq") min_freq = to_int(key, value);
  else throw ValidationError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  if (lr <= 0.0) throw ValidationError("config lr: must be > 0");
  if (epochs < 0) throw ValidationError("config epochs: must be >= 0");
  if (batch < 1) throw ValidationError("config batch: must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ValidationError("config dropout: must be in [0,1)");
  if (grad_clip <= 0.0) throw ValidationError("config grad_clip: must be > 0");
  if (pgd_eps <= 0.0) throw ValidationError("config pgd_eps: must be > 0");
  if (pgd_mu < 0.0) throw ValidationError("config pgd_mu: must be >= 0");
  if (pgd_steps < 1) throw ValidationError("config pgd_steps: must be >= 1");
  if (sigma < 0.0) throw ValidationError("config sigma: must be >= 0");
  if (focal_gamma < 0.0)
    throw ValidationError("config focal_gamma: must be >= 0");
  if (d_model < 1 || n_layers < 1 || n_heads < 1)
    throw ValidationError("config model dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ValidationError("config d_model must be divisible by n_heads");
  if (L_c < 2) throw ValidationError("config L_c: must be >= 2");
  if (N_l < 1 || N_t < 1)
    throw ValidationError("config N_l and N_t must be positive");
  if (warmup_epochs < 0)
    throw ValidationError("config warmup_epochs: must be >= 0");
  if (min_freq < 1) throw ValidationError("config min_freq: must be >= 1");
  task_mode_from(task_mode);  // throws on unknown names
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);

  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);

    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config " + path + " line " +
                            std::to_string(lineno) + ": expected key=value");
    auto strip = [](std::string s) {
      auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      auto b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    cfg.apply(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace vulmtl

#include "marca/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace marca {

void MambaConfig::finalize() {
  if (d_inner == 0) d_inner = expand_factor * d_model;
  if (dt_rank == 0) dt_rank = static_cast<int>(ceil_div<int64_t>(d_model, 16));
  if (n_layers < 1) throw DimError("n_layers must be >= 1");
  if (d_model < 1 || d_inner < 1 || d_state < 1 || d_conv < 1 || dt_rank < 1)
    throw DimError("config dimensions must be >= 1");
  if (seq_len < 1) throw DimError("seq_len must be >= 1");
  if (!(eps_norm > 0.0f)) throw DimError("eps_norm must be positive");
}

MambaConfig MambaConfig::preset(const std::string& name) {
  MambaConfig c;
  if (name == "130M") {
    c.n_layers = 24;
    c.d_model = 768;
  } else if (name == "370M") {
    c.n_layers = 48;
    c.d_model = 1024;
  } else if (name == "790M") {
    c.n_layers = 48;
    c.d_model = 1536;
  } else if (name == "1.4B") {
    c.n_layers = 48;
    c.d_model = 2048;
  } else if (name == "2.8B") {
    c.n_layers = 64;
    c.d_model = 2560;
  } else {
    throw DimError("unknown preset: " + name +
                   " (expected one of 130M, 370M, 790M, 1.4B, 2.8B)");
  }
  c.finalize();
  return c;
}

void MambaConfig::apply_proxy_dim(int dim) {
  if (dim < 1) throw DimError("proxy dim must be >= 1");
  d_model = dim;
  d_inner = 0;
  dt_rank = 0;
  finalize();
}

std::string discretization_name(Discretization d) {
  return d == Discretization::Euler ? "euler" : "zoh-exp";
}

static Discretization parse_discretization(const std::string& s) {
  if (s == "euler") return Discretization::Euler;
  if (s == "zoh-exp") return Discretization::ZohExp;
  throw IoError("unknown discretization: " + s);
}

MambaConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError("bad config JSON in " + path + ": " + e.what());
  }

  static const std::set<std::string> known = {
      "n_layers",     "d_model",       "d_inner",     "d_state",
      "d_conv",       "dt_rank",       "seq_len",     "expand_factor",
      "discretization", "eps_norm",    "softplus_delta", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw IoError("unknown config field: " + it.key());

  MambaConfig c;
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_model = j.value("d_model", c.d_model);
  c.d_inner = j.value("d_inner", 0);
  c.d_state = j.value("d_state", c.d_state);
  c.d_conv = j.value("d_conv", c.d_conv);
  c.dt_rank = j.value("dt_rank", 0);
  c.seq_len = j.value("seq_len", c.seq_len);
  c.expand_factor = j.value("expand_factor", c.expand_factor);
  if (j.contains("discretization"))
    c.discretization = parse_discretization(j["discretization"].get<std::string>());
  c.eps_norm = j.value("eps_norm", c.eps_norm);
  c.softplus_delta = j.value("softplus_delta", c.softplus_delta);
  c.seed = j.value("seed", c.seed);
  c.finalize();
  return c;
}

void save_config(const MambaConfig& c, const std::string& path) {
  nlohmann::json j;
  j["n_layers"] = c.n_layers;
  j["d_model"] = c.d_model;
  j["d_inner"] = c.d_inner;
  j["d_state"] = c.d_state;
  j["d_conv"] = c.d_conv;
  j["dt_rank"] = c.dt_rank;
  j["seq_len"] = c.seq_len;
  j["expand_factor"] = c.expand_factor;
  j["discretization"] = discretization_name(c.discretization);
  j["eps_norm"] = c.eps_norm;
  j["softplus_delta"] = c.softplus_delta;
  j["seed"] = c.seed;
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace marca

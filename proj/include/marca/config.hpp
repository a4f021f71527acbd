#pragma once

#include <cstdint>
#include <string>

#include "marca/common.hpp"

namespace marca {

// State update rule for the selective scan.
//   Euler:  Abar = 1 + dt*A        (first-order approximation)
//   ZohExp: Abar = exp(dt*A)
enum class Discretization { Euler, ZohExp };

struct MambaConfig {
  int n_layers = 1;
  int d_model = 64;
  int d_inner = 0;   // 0 -> derived as expand_factor * d_model
  int d_state = 16;  // N
  int d_conv = 4;    // K
  int dt_rank = 0;   // 0 -> derived as ceil(d_model / 16)
  int seq_len = 64;  // L
  int expand_factor = 2;
  Discretization discretization = Discretization::ZohExp;
  float eps_norm = 1e-5f;
  // Golden-model experiment only: the instruction set has no softplus, so
  // lowering rejects configs with this set.
  bool softplus_delta = false;
  uint64_t seed = 1;

  // Fills derived fields (d_inner, dt_rank) and validates.
  void finalize();

  static MambaConfig preset(const std::string& name);
  // Shrinks d_model to `dim` keeping layer count and N/K; derived fields are
  // recomputed from the reduced width. Used to run big presets at desk scale.
  void apply_proxy_dim(int dim);
};

MambaConfig load_config(const std::string& path);       // strict: unknown keys rejected
void save_config(const MambaConfig& c, const std::string& path);
std::string discretization_name(Discretization d);

}  // namespace marca

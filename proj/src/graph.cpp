#include "marca/graph.hpp"

namespace marca {

const char* traffic_class_name(TrafficClass c) {
  switch (c) {
    case TrafficClass::Linear: return "linear";
    case TrafficClass::Ew1: return "ew1";
    case TrafficClass::Ew2: return "ew2";
    case TrafficClass::Nonlinear: return "nonlinear";
    case TrafficClass::Norm: return "norm";
  }
  return "?";
}

TrafficClass op_traffic_class(OpKind k) {
  switch (k) {
    case OpKind::Norm: return TrafficClass::Norm;
    case OpKind::Linear: return TrafficClass::Linear;
    case OpKind::Conv: return TrafficClass::Ew1;
    case OpKind::Silu:
    case OpKind::Exp: return TrafficClass::Nonlinear;
    case OpKind::Ew1Mul:
    case OpKind::Ew1Add: return TrafficClass::Ew1;
    case OpKind::Ew2: return TrafficClass::Ew2;
  }
  return TrafficClass::Ew1;
}

OpGraph build_graph(const MambaConfig& cfg) {
  const int64_t L = cfg.seq_len, M = cfg.d_model, E = cfg.d_inner;
  const int64_t N = cfg.d_state, K = cfg.d_conv, R = cfg.dt_rank;
  OpGraph g;
  g.nodes.reserve(static_cast<size_t>(cfg.n_layers) * (13 + 9 * L));

  auto add = [&](OpNode n) { g.nodes.push_back(std::move(n)); };

  std::string in = "x_in";
  for (int li = 0; li < cfg.n_layers; ++li) {
    const std::string p = "L" + std::to_string(li) + ".";
    const std::string w = "w." + p;
    add({OpKind::Norm, p + "xn", {in, w + "gamma", w + "beta"}, L, 0, M});
    add({OpKind::Linear, p + "xm", {p + "xn", w + "in_proj_x"}, L, M, E});
    add({OpKind::Linear, p + "z", {p + "xn", w + "in_proj_z"}, L, M, E});
    add({OpKind::Conv, p + "xc", {p + "xm", w + "conv"}, L, K, E});
    add({OpKind::Silu, p + "xa", {p + "xc"}, L * E});
    add({OpKind::Linear, p + "dtr", {p + "xa", w + "x_proj_dt"}, L, E, R});
    add({OpKind::Linear, p + "bmat", {p + "xa", w + "x_proj_b"}, L, E, N});
    add({OpKind::Linear, p + "cmat", {p + "xa", w + "x_proj_c"}, L, E, N});
    add({OpKind::Linear, p + "dt", {p + "dtr", w + "dt_proj"}, L, R, E});
    for (int64_t t = 0; t < L; ++t) {
      const std::string s = ".t" + std::to_string(t);
      const std::string dt_row = p + "dt" + s;
      OpNode da{OpKind::Ew2, p + "da" + s, {dt_row, w + "a"}, E, 0, N};
      da.ew2_mode = 1;
      add(da);
      if (cfg.discretization == Discretization::ZohExp) {
        add({OpKind::Exp, p + "abar" + s, {p + "da" + s}, E * N});
      } else {
        OpNode pl{OpKind::Ew1Add, p + "abar" + s, {p + "da" + s}, E * N};
        pl.scalar_src2 = true;
        add(pl);
      }
      add({OpKind::Ew1Mul, p + "u" + s, {dt_row, p + "xa" + s}, E});
      OpNode dbx{OpKind::Ew2, p + "dbx" + s, {p + "u" + s, p + "bmat" + s},
                 E, 0, N};
      dbx.ew2_mode = 0;
      add(dbx);
      add({OpKind::Ew1Mul, p + "t4" + s, {p + "abar" + s, p + "h"}, E * N});
      add({OpKind::Ew1Add, p + "h" + s, {p + "t4" + s, p + "dbx" + s}, E * N});
      add({OpKind::Linear, p + "y" + s, {p + "h" + s, p + "cmat" + s},
           E, N, 1});
      add({OpKind::Ew1Mul, p + "sk" + s, {w + "d_skip", p + "xa" + s}, E});
      add({OpKind::Ew1Add, p + "yrow" + s, {p + "y" + s, p + "sk" + s}, E});
    }
    add({OpKind::Silu, p + "zs", {p + "z"}, L * E});
    add({OpKind::Ew1Mul, p + "g", {p + "y", p + "zs"}, L * E});
    add({OpKind::Linear, p + "o", {p + "g", w + "out_proj"}, L, E, M});
    add({OpKind::Ew1Add, p + "out", {p + "o", in}, L * M});
    in = p + "out";
  }
  return g;
}

TrafficInfo classify_traffic(const OpNode& node) {
  TrafficInfo t;
  t.cls = op_traffic_class(node.kind);
  switch (node.kind) {
    case OpKind::Norm:
      t.read_bytes = (node.m * node.n + 2 * node.n) * 4;
      t.write_bytes = node.m * node.n * 4;
      t.flops = 8 * node.m * node.n;
      break;
    case OpKind::Linear:
      t.read_bytes = (node.m * node.k + node.k * node.n) * 4;
      t.write_bytes = node.m * node.n * 4;
      t.flops = 2 * node.m * node.k * node.n;
      break;
    case OpKind::Conv:
      t.read_bytes = (node.m * node.n + node.k * node.n) * 4;
      t.write_bytes = node.m * node.n * 4;
      t.flops = 2 * node.m * node.k * node.n;
      break;
    case OpKind::Silu:
    case OpKind::Exp:
      t.read_bytes = node.m * 4;
      t.write_bytes = node.m * 4;
      t.flops = 4 * node.m;
      break;
    case OpKind::Ew1Mul:
    case OpKind::Ew1Add:
      t.read_bytes = node.scalar_src2 ? node.m * 4 + 4 : node.m * 8;
      t.write_bytes = node.m * 4;
      t.flops = node.m;
      break;
    case OpKind::Ew2: {
      const int64_t pq = node.m * node.n;
      if (node.ew2_mode == 0) {
        t.read_bytes = (node.m + node.n) * 4;
      } else if (node.ew2_mode == 1) {
        t.read_bytes = (node.m + pq) * 4;
      } else {
        t.read_bytes = (pq + node.n) * 4;
      }
      t.write_bytes = pq * 4;
      t.flops = pq;
      break;
    }
  }
  return t;
}

}  // namespace marca

#pragma once

#include <string>
#include <vector>

#include "marca/config.hpp"

namespace marca {

enum class OpKind { Norm, Linear, Conv, Silu, Exp, Ew1Mul, Ew1Add, Ew2 };

// Reporting classes. Conv lowers to element-wise chains, so its per-tap
// scaling lands in ew2 and its add side in ew1; there is no separate class.
enum class TrafficClass { Linear, Ew1, Ew2, Nonlinear, Norm };
const char* traffic_class_name(TrafficClass c);
TrafficClass op_traffic_class(OpKind k);

// One node of the lowered dataflow. The scan is fully unrolled: per-token
// nodes carry the token index in their name.
struct OpNode {
  OpKind kind;
  std::string name;                  // output tensor name
  std::vector<std::string> inputs;   // tensor names
  // Dimensions, meaning depends on kind:
  //   Linear: m, k, n   Conv: m=L, k=K, n=D   Norm: m=rows, n=D
  //   Ew2: m=P, n=Q     Ew1*/Silu/Exp: m=count
  int64_t m = 0, k = 0, n = 0;
  int ew2_mode = 0;          // 0 outer, 1 row scale, 2 column scale
  bool scalar_src2 = false;  // ew1 with a broadcast constant
};

struct OpGraph {
  std::vector<OpNode> nodes;
};

// Per-layer node sequence: norm, two in_proj branches, conv, silu, the
// dt/B/C projections, dt_proj, then 9 nodes per token (dt row scale by A,
// exp-or-plus-one, dt*x, outer with B, state scale, state update, C
// reduction, skip mul, skip add), then gate silu, gate mul, out_proj,
// residual add: 13 + 9L nodes per layer.
OpGraph build_graph(const MambaConfig& cfg);

struct TrafficInfo {
  TrafficClass cls;
  int64_t read_bytes = 0;
  int64_t write_bytes = 0;
  int64_t flops = 0;
};
TrafficInfo classify_traffic(const OpNode& node);

}  // namespace marca

#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"

#include "marca/engine.hpp"
#include "marca/golden.hpp"

using namespace marca;

namespace {

// Shared scaffolding: a buffer pool prefilled from a deterministic stream,
// a zeroed GPR file, and a program holding the standard creg constants.
struct Rig {
  BufferPool buf{1 << 20};
  std::array<uint32_t, 16> gpr{};
  Program prog;
  MachineConfig mc;

  Rig() {
    mc.kernel_mode = KernelMode::Exact;
    prog.set_creg_f32(0, ExpParams{}.a);
    prog.set_creg_f32(1, ExpParams{}.b);
    prog.set_creg_f32(2, ExpParams{}.c);
    prog.set_creg_f32(3, 1e-5f);
    prog.set_creg_f32(4, 1.0f);
  }

  void fill(uint64_t addr, const float* v, int64_t n) {
    buf.write_bytes(addr, reinterpret_cast<const uint8_t*>(v), n * 4);
  }
  std::vector<float> read(uint64_t addr, int64_t n) {
    std::vector<float> out(static_cast<size_t>(n));
    buf.read_bytes(addr, reinterpret_cast<uint8_t*>(out.data()), n * 4);
    return out;
  }
};

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed) {
  Tensor t(std::move(shape));
  Xorshift rng(seed);
  for (float& v : t.data) v = rng.uniform(-1.0f, 1.0f);
  return t;
}

}  // namespace

TEST_CASE("one matrix tile costs 16 cycles and reduces through the tree") {
  Tensor a = random_tensor({16, 16}, 1);
  Tensor b = random_tensor({16, 16}, 2);
  Tensor acc = Tensor::zeros({16, 16});
  CHECK(rcu_mm(a.data.data(), b.data.data(), acc.data.data()) == 16);
  const Tensor want = matmul_ord(a, b, ReductionOrder::Tree16);
  CHECK(bit_equal(acc, want));
  // Accumulating call chains the previous result through the tree's third
  // adder input, so two half-k calls equal one full-k call bit-for-bit.
  Tensor a2 = random_tensor({16, 16}, 3);
  Tensor b2 = random_tensor({16, 16}, 4);
  rcu_mm(a2.data.data(), b2.data.data(), acc.data.data());
  Tensor wide_a({16, 32}), wide_b({32, 16});
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      wide_a(i, j) = a(i, j);
      wide_a(i, 16 + j) = a2(i, j);
      wide_b(j, i) = b(j, i);
      wide_b(16 + j, i) = b2(j, i);
    }
  CHECK(bit_equal(acc, matmul_ord(wide_a, wide_b, ReductionOrder::Tree16)));
}

TEST_CASE("element-wise, exp and silu tile costs") {
  float a[256], b[256], out[256];
  for (int i = 0; i < 256; ++i) {
    a[i] = static_cast<float>(i) * 0.25f - 8.0f;
    b[i] = 2.0f;
  }
  CHECK(rcu_ew(false, a, b, out, 256) == 1);
  CHECK(out[0] == a[0] + 2.0f);
  CHECK(rcu_ew(true, a, b, out, 256) == 1);
  CHECK(out[255] == a[255] * 2.0f);
  CHECK(rcu_ew(true, a, b, out, 7) == 1);  // partial tile still one pass

  LaneKernels exact;
  float zeros[4] = {0, 0, 0, 0};
  CHECK(rcu_exp(zeros, out, 4, exact) == 4);
  CHECK(out[0] == 1.0f);
  float neg[1] = {-10.0f};
  LaneKernels approx;
  approx.mode = KernelMode::Approx;
  CHECK(rcu_silu(neg, out, 1, approx) == 4);
  CHECK(out[0] == -0.0135f);
  CHECK(rcu_silu(neg, out, 1, exact) == 4);
  CHECK(out[0] == silu_exact(-10.0f));
}

TEST_CASE("normalization unit: three passes per 16-element group, one row") {
  float x[17], gamma[17], beta[17], got[17], want[17];
  Xorshift rng(11);
  for (int i = 0; i < 17; ++i) {
    x[i] = rng.uniform(-2.0f, 2.0f);
    gamma[i] = rng.uniform(0.5f, 1.5f);
    beta[i] = rng.uniform(-0.1f, 0.1f);
  }
  CHECK(norm_unit(x, gamma, beta, 16, 1e-5f, got) == 3);
  layernorm_row(x, gamma, beta, 16, 1e-5f, want);
  CHECK(std::memcmp(got, want, 16 * 4) == 0);
  CHECK(norm_unit(x, gamma, beta, 17, 1e-5f, got) == 6);  // ceil(17/16)=2 groups
}

TEST_CASE("instruction latency anchors") {
  Rig rig;

  // Single-tile element-wise add: 1 tile cycle over 32 RCUs + 2 issue = 3.
  Instruction ewa;
  ewa.op = Opcode::EWA;
  ewa.imm = ew_imm(256);
  rig.gpr[0] = 8192;  // dst
  rig.gpr[1] = 0;     // src1
  rig.gpr[2] = 4096;  // src2
  ewa.dst = 0;
  ewa.src1 = 1;
  ewa.src2 = 2;
  ExecEffect fx = execute_instruction(ewa, rig.prog, rig.gpr, rig.buf, rig.mc);
  CHECK(fx.tile_cycles == 1);
  CHECK(fx.compute_cycles == 3);
  CHECK_FALSE(fx.used_reduction_tree);

  // 64 tiles of element-wise multiply: 2 + ceil(64/32) = 4.
  Instruction ewm = ewa;
  ewm.op = Opcode::EWM;
  ewm.imm = ew_imm(64 * 256);
  rig.gpr[0] = 131072;
  rig.gpr[1] = 0;
  rig.gpr[2] = 65536;
  fx = execute_instruction(ewm, rig.prog, rig.gpr, rig.buf, rig.mc);
  CHECK(fx.tile_cycles == 64);
  CHECK(fx.compute_cycles == 4);

  // 512x16 times 16x16: 32 matrix tiles = 512 tile cycles, 2 + 512/32 = 18.
  Instruction lin;
  lin.op = Opcode::LIN;
  lin.imm = lin_imm(512, 16, 16);
  lin.dst = 0;
  lin.src1 = 1;
  lin.src2 = 2;
  rig.gpr[0] = 262144;
  rig.gpr[1] = 0;
  rig.gpr[2] = 65536;
  fx = execute_instruction(lin, rig.prog, rig.gpr, rig.buf, rig.mc);
  CHECK(fx.tile_cycles == 512);
  CHECK(fx.compute_cycles == 18);
  CHECK(fx.used_reduction_tree);
}

TEST_CASE("baseline mode multiplies element-wise work by 16, never linear") {
  Rig rcu, base;
  base.mc.baseline_tensor_core = true;
  for (auto* r : {&rcu, &base}) {
    r->gpr[0] = 65536;
    r->gpr[1] = 0;
    r->gpr[2] = 32768;
  }

  auto tiles = [&](Rig& r, Instruction in) {
    return execute_instruction(in, r.prog, r.gpr, r.buf, r.mc).tile_cycles;
  };

  Instruction in;
  in.dst = 0;
  in.src1 = 1;
  in.src2 = 2;

  in.op = Opcode::EWA;
  in.imm = ew_imm(1000);
  CHECK(tiles(base, in) == 16 * tiles(rcu, in));
  in.op = Opcode::EWM;
  CHECK(tiles(base, in) == 16 * tiles(rcu, in));
  in.op = Opcode::EWM;
  in.flags = kFlagEwEinsum;
  in.imm = ew2_imm(20, 30, EwPairMode::Outer);
  CHECK(tiles(base, in) == 16 * tiles(rcu, in));
  in.flags = 0;
  in.op = Opcode::EXP;
  in.imm = exp_imm(1000, 0);
  CHECK(tiles(base, in) == 16 * tiles(rcu, in));
  in.op = Opcode::SILU;
  in.imm = ew_imm(1000);
  CHECK(tiles(base, in) == 16 * tiles(rcu, in));
  in.op = Opcode::CONV;
  in.imm = conv_imm(10, 32, 4);
  CHECK(tiles(base, in) == 16 * tiles(rcu, in));

  // The reduction path is native in both machines.
  in.op = Opcode::LIN;
  in.imm = lin_imm(32, 32, 32);
  CHECK(tiles(base, in) == tiles(rcu, in));
  // So is the separate normalization unit.
  in.op = Opcode::NORM;
  in.imm = norm_imm(2, 32, 3);
  in.src3 = 3;
  rcu.gpr[3] = 49152;
  base.gpr[3] = 49152;
  CHECK(tiles(base, in) == tiles(rcu, in));
}

TEST_CASE("linear functionally matches the tree-order reference") {
  Rig rig;
  const int64_t m = 48, k = 40, n = 24;
  Tensor x = random_tensor({m, k}, 21);
  Tensor w = random_tensor({k, n}, 22);
  rig.fill(0, x.data.data(), x.numel());
  rig.fill(65536, w.data.data(), w.numel());
  Instruction lin;
  lin.op = Opcode::LIN;
  lin.imm = lin_imm(m, k, n);
  lin.dst = 0;
  lin.src1 = 1;
  lin.src2 = 2;
  rig.gpr[0] = 131072;
  rig.gpr[1] = 0;
  rig.gpr[2] = 65536;
  ExecEffect fx = execute_instruction(lin, rig.prog, rig.gpr, rig.buf, rig.mc);
  CHECK(fx.tile_cycles == 3 * 3 * 2 * 16);  // ceil(48/16)*ceil(40/16)*ceil(24/16)
  Tensor got = Tensor::zeros({m, n});
  auto raw = rig.read(131072, m * n);
  got.data = raw;
  CHECK(bit_equal(got, matmul_ord(x, w, ReductionOrder::Tree16)));

  // Accumulate flag seeds each reduction with the destination value through
  // the tree's final adder instead of overwriting.
  lin.flags = kFlagLinAcc;
  execute_instruction(lin, rig.prog, rig.gpr, rig.buf, rig.mc);
  Tensor twice = Tensor::zeros({m, n});
  twice.data = rig.read(131072, m * n);
  Tensor chained = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      chained(i, j) = dot_tree16(x.row(i), 1, w.data.data() + j, n, k, got(i, j));
  CHECK(bit_equal(twice, chained));
}

TEST_CASE("causal depthwise conv matches the reference and its tile price") {
  Rig rig;
  const int64_t l = 9, d = 32, k = 4;
  Tensor x = random_tensor({l, d}, 31);
  Tensor w = random_tensor({d, k}, 32);  // reference layout: [channel, tap]
  Tensor wtap({k, d});                   // engine layout: tap-major
  for (int64_t c = 0; c < d; ++c)
    for (int64_t j = 0; j < k; ++j) wtap(j, c) = w(c, j);
  rig.fill(0, x.data.data(), x.numel());
  rig.fill(65536, wtap.data.data(), wtap.numel());
  Instruction conv;
  conv.op = Opcode::CONV;
  conv.imm = conv_imm(l, d, k);
  conv.dst = 0;
  conv.src1 = 1;
  conv.src2 = 2;
  rig.gpr[0] = 131072;
  rig.gpr[1] = 0;
  rig.gpr[2] = 65536;
  ExecEffect fx = execute_instruction(conv, rig.prog, rig.gpr, rig.buf, rig.mc);
  CHECK(fx.tile_cycles ==
        (2 * k - 1) * ceil_div<uint64_t>(l * d, kEwTileElems));
  Tensor got({l, d});
  got.data = rig.read(131072, l * d);
  CHECK(bit_equal(got, conv1d_ref(x, w)));
}

TEST_CASE("exp instruction takes its parameters from the creg file") {
  Rig rig;
  rig.mc.kernel_mode = KernelMode::Approx;
  float in[4] = {0.0f, 0.6931471805599453f, -100.0f, 1.0f};
  rig.fill(0, in, 4);
  Instruction ex;
  ex.op = Opcode::EXP;
  ex.imm = exp_imm(4, 0);
  ex.dst = 0;
  ex.src1 = 1;
  rig.gpr[0] = 4096;
  rig.gpr[1] = 0;
  execute_instruction(ex, rig.prog, rig.gpr, rig.buf, rig.mc);
  auto out = rig.read(4096, 4);
  CHECK(out[0] == 1.0f);   // anchor at x = 0
  CHECK(out[1] == 2.0f);   // anchor at x = ln 2
  CHECK(out[2] == 0.0f);   // flushed
  CHECK(out[3] == fast_exp_biased(1.0f));

  // Shift the additive constant creg and the lanes must follow it.
  rig.prog.set_creg_f32(2, 0.5f);
  execute_instruction(ex, rig.prog, rig.gpr, rig.buf, rig.mc);
  out = rig.read(4096, 4);
  CHECK(out[0] == 1.5f);

  // Exact mode ignores the cregs entirely.
  rig.mc.kernel_mode = KernelMode::Exact;
  execute_instruction(ex, rig.prog, rig.gpr, rig.buf, rig.mc);
  out = rig.read(4096, 4);
  CHECK(out[3] == std::exp(1.0f));
}

TEST_CASE("engine structural rules") {
  Rig rig;
  Instruction bad;
  bad.op = Opcode::EWA;
  bad.flags = kFlagEwEinsum;
  bad.imm = ew2_imm(4, 4, EwPairMode::Outer);
  CHECK_THROWS_AS(execute_instruction(bad, rig.prog, rig.gpr, rig.buf, rig.mc),
                  PlanError);

  for (Opcode op : {Opcode::LOAD, Opcode::STORE}) {
    Instruction mem;
    mem.op = op;
    mem.imm = 64;
    CHECK_THROWS_WITH_AS(
        execute_instruction(mem, rig.prog, rig.gpr, rig.buf, rig.mc),
        "memory instruction routed to the compute engine", PlanError);
  }

  // The reduction tree is engaged by LIN and only LIN.
  Instruction ewa;
  ewa.op = Opcode::EWA;
  ewa.imm = ew_imm(16);
  rig.gpr[0] = 4096;
  CHECK_FALSE(execute_instruction(ewa, rig.prog, rig.gpr, rig.buf, rig.mc)
                  .used_reduction_tree);
  Instruction ein;
  ein.op = Opcode::EWM;
  ein.flags = kFlagEwEinsum;
  ein.imm = ew2_imm(4, 4, EwPairMode::RowScale);
  CHECK_FALSE(execute_instruction(ein, rig.prog, rig.gpr, rig.buf, rig.mc)
                  .used_reduction_tree);

  // Out-of-bounds operands are caught by the buffer view, not UB.
  Instruction far = ewa;
  rig.gpr[1] = static_cast<uint32_t>(rig.buf.capacity() - 8);
  far.src1 = 1;
  CHECK_THROWS_AS(execute_instruction(far, rig.prog, rig.gpr, rig.buf, rig.mc),
                  PlanError);
}

TEST_CASE("einsum flavors compute what their mode says") {
  Rig rig;
  const int64_t p = 3, q = 5;
  std::vector<float> a(p * q), brow(p), bcol(q);
  Xorshift rng(71);
  for (auto& v : a) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : brow) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : bcol) v = rng.uniform(-1.0f, 1.0f);
  rig.fill(0, a.data(), p * q);
  rig.fill(4096, brow.data(), p);
  rig.fill(8192, bcol.data(), q);
  rig.gpr[0] = 16384;
  Instruction in;
  in.op = Opcode::EWM;
  in.flags = kFlagEwEinsum;
  in.dst = 0;

  in.src1 = 1;
  in.src2 = 2;
  rig.gpr[1] = 4096;  // vector [p]
  rig.gpr[2] = 8192;  // vector [q]
  in.imm = ew2_imm(p, q, EwPairMode::Outer);
  execute_instruction(in, rig.prog, rig.gpr, rig.buf, rig.mc);
  auto out = rig.read(16384, p * q);
  for (int64_t i = 0; i < p; ++i)
    for (int64_t j = 0; j < q; ++j)
      CHECK(out[static_cast<size_t>(i * q + j)] == brow[static_cast<size_t>(i)] * bcol[static_cast<size_t>(j)]);

  rig.gpr[1] = 4096;  // vector [p]
  rig.gpr[2] = 0;     // matrix [p,q]
  in.imm = ew2_imm(p, q, EwPairMode::RowScale);
  execute_instruction(in, rig.prog, rig.gpr, rig.buf, rig.mc);
  out = rig.read(16384, p * q);
  for (int64_t i = 0; i < p; ++i)
    for (int64_t j = 0; j < q; ++j)
      CHECK(out[static_cast<size_t>(i * q + j)] ==
            brow[static_cast<size_t>(i)] * a[static_cast<size_t>(i * q + j)]);

  rig.gpr[1] = 0;     // matrix [p,q]
  rig.gpr[2] = 8192;  // vector [q]
  in.imm = ew2_imm(p, q, EwPairMode::ColScale);
  execute_instruction(in, rig.prog, rig.gpr, rig.buf, rig.mc);
  out = rig.read(16384, p * q);
  for (int64_t i = 0; i < p; ++i)
    for (int64_t j = 0; j < q; ++j)
      CHECK(out[static_cast<size_t>(i * q + j)] ==
            a[static_cast<size_t>(i * q + j)] * bcol[static_cast<size_t>(j)]);
}

TEST_CASE("scalar-broadcast element-wise ops read the creg file") {
  Rig rig;
  float v[8] = {1, 2, 3, 4, 5, 6, 7, 8};
  rig.fill(0, v, 8);
  rig.gpr[0] = 4096;  // destination
  rig.gpr[1] = 0;     // source vector
  Instruction in;
  in.op = Opcode::EWM;
  in.flags = kFlagEwScalar;
  in.src1 = 1;
  in.src2 = 4;  // creg c4 = 1.0
  in.imm = ew_imm(8);
  rig.prog.set_creg_f32(4, 2.5f);
  execute_instruction(in, rig.prog, rig.gpr, rig.buf, rig.mc);
  auto out = rig.read(4096, 8);
  for (int i = 0; i < 8; ++i) CHECK(out[static_cast<size_t>(i)] == v[i] * 2.5f);
  in.op = Opcode::EWA;
  execute_instruction(in, rig.prog, rig.gpr, rig.buf, rig.mc);
  out = rig.read(4096, 8);
  for (int i = 0; i < 8; ++i) CHECK(out[static_cast<size_t>(i)] == v[i] + 2.5f);
}

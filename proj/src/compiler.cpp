#include "marca/compiler.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>

#include "marca/engine.hpp"

namespace marca {

namespace {

constexpr uint64_t kAlign = 64;
constexpr uint64_t kNoBuf = ~uint64_t{0};  // "no region allocated" marker
constexpr int64_t kDimCap = 8176;  // largest 16-multiple in a 13-bit field
constexpr int kExpCregBase = 0;    // c0..c2 = exp a, b, c
constexpr int kEpsCreg = 3;
constexpr int kOneCreg = 4;

uint64_t align_up(uint64_t v) { return (v + kAlign - 1) & ~(kAlign - 1); }

int64_t roundup16(int64_t v) { return ceil_div(v, int64_t{16}) * 16; }

// First-fit free-list arena over a byte range; all cuts 64-byte aligned.
class Arena {
 public:
  Arena() = default;
  Arena(uint64_t base, uint64_t size) : base_(base), size_(size) {
    if (size) free_.push_back({base, size});
  }
  uint64_t base() const { return base_; }
  uint64_t size() const { return size_; }
  bool try_alloc(uint64_t bytes, uint64_t& off) {
    bytes = align_up(bytes);
    for (size_t i = 0; i < free_.size(); ++i)
      if (free_[i].size >= bytes) {
        off = free_[i].off;
        free_[i].off += bytes;
        free_[i].size -= bytes;
        if (free_[i].size == 0) free_.erase(free_.begin() + i);
        return true;
      }
    return false;
  }
  void release(uint64_t off, uint64_t bytes) {
    bytes = align_up(bytes);
    Iv iv{off, bytes};
    auto it = std::lower_bound(
        free_.begin(), free_.end(), iv,
        [](const Iv& a, const Iv& b) { return a.off < b.off; });
    it = free_.insert(it, iv);
    if (it + 1 != free_.end() && it->off + it->size == (it + 1)->off) {
      it->size += (it + 1)->size;
      free_.erase(it + 1);
    }
    if (it != free_.begin()) {
      auto prev = it - 1;
      if (prev->off + prev->size == it->off) {
        prev->size += it->size;
        free_.erase(it);
      }
    }
  }
  uint64_t largest_free() const {
    uint64_t m = 0;
    for (const auto& iv : free_) m = std::max(m, iv.size);
    return m;
  }

 private:
  struct Iv {
    uint64_t off, size;
  };
  uint64_t base_ = 0, size_ = 0;
  std::vector<Iv> free_;
};

}  // namespace

TilePlan plan_intra_linear(int64_t m, int64_t k, int64_t n, uint64_t budget,
                           bool intra_bm) {
  if (m <= 0 || k <= 0 || n <= 0) throw PlanError("linear dims must be positive");
  TilePlan t;
  const uint64_t xb = align_up(uint64_t(m) * k * 4);
  const uint64_t wb = align_up(uint64_t(k) * n * 4);
  const uint64_t db = align_up(uint64_t(m) * n * 4);
  const uint64_t w_raw = uint64_t(k) * n * 4;

  if (!intra_bm) {
    // Naive mode: weights reloaded for every 16-row chunk.
    if (k > kDimCap + 15 || n > kDimCap + 15)
      throw PlanError("naive linear: k or n exceeds the instruction dim field");
    const uint64_t chunk = align_up(uint64_t(16) * k * 4) + align_up(uint64_t(16) * n * 4);
    if (wb + chunk > budget)
      throw PlanError("naive linear: weights plus one row chunk exceed the working buffer");
    t.tile_m = 16;
    t.tile_k = k;
    t.tile_n = n;
    const int64_t ch = ceil_div(m, int64_t{16});
    t.loads = 3 * ch;
    t.lins = ch;
    t.stores = ch;
    t.weight_bytes_loaded = w_raw * ch;
    return t;
  }

  if (m <= 8191 && k <= 8191 && n <= 8191 && xb + wb + db <= budget) {
    t.whole_op = true;
    t.tile_m = m;
    t.tile_k = k;
    t.tile_n = n;
    t.loads = 3;
    t.lins = 1;
    t.stores = 1;
    t.weight_bytes_loaded = w_raw;
    return t;
  }

  // Row split: keep the whole weight resident, stream m in the largest
  // 16-multiple chunks that fit. Weight traffic stays at one load.
  if (k <= 8191 && n <= 8191) {
    int64_t tm = std::min(roundup16(m), kDimCap);
    while (tm >= 16 &&
           wb + align_up(uint64_t(tm) * k * 4) + align_up(uint64_t(tm) * n * 4) > budget)
      tm -= 16;
    if (tm >= 16) {
      t.tile_m = tm;
      t.tile_k = k;
      t.tile_n = n;
      const int64_t ch = ceil_div(m, tm);
      t.loads = 1 + 2 * ch;
      t.lins = ch;
      t.stores = ch;
      t.weight_bytes_loaded = w_raw;
      return t;
    }
  }

  // Output-stationary fallback: 16-row m chunks, k then n tiled as large as
  // fits. Strided tiles are gathered row by row; weights are re-read once per
  // m chunk.
  int64_t tk = std::min(roundup16(k), kDimCap);
  const uint64_t dst16 = align_up(uint64_t(16) * 16 * 4);
  while (tk >= 16 && align_up(uint64_t(16) * tk * 4) + align_up(uint64_t(tk) * 16 * 4) +
                             dst16 >
                         budget)
    tk -= 16;
  if (tk < 16)
    throw PlanError("working budget smaller than one operand row-tile");
  int64_t tn = std::min(roundup16(n), kDimCap);
  while (tn >= 16 &&
         align_up(uint64_t(16) * tk * 4) + align_up(uint64_t(tk) * tn * 4) +
                 align_up(uint64_t(16) * tn * 4) >
             budget)
    tn -= 16;
  t.tile_m = 16;
  t.tile_k = tk;
  t.tile_n = tn;
  const int64_t mch = ceil_div(m, int64_t{16});
  const int64_t kch = ceil_div(k, tk);
  const int64_t nch = ceil_div(n, tn);
  t.lins = mch * kch * nch;
  for (int64_t j = 0; j < nch; ++j) {
    const bool full_n = tn >= n;
    for (int64_t i = 0; i < mch; ++i) {
      const int64_t rows = std::min<int64_t>(16, m - 16 * i);
      t.loads += full_n ? 1 : rows;   // dst init
      t.stores += full_n ? 1 : rows;  // dst write-back
      for (int64_t c = 0; c < kch; ++c) {
        const int64_t depth = std::min(tk, k - tk * c);
        t.loads += (tk >= k ? 1 : rows) + (full_n ? 1 : depth);
      }
    }
  }
  t.weight_bytes_loaded = uint64_t(mch) * k * n * 4;
  return t;
}

std::vector<ResidencyDecision> plan_inter_residency(const MambaConfig& cfg,
                                                    bool inter_bm,
                                                    uint64_t budget) {
  const uint64_t L = cfg.seq_len, E = cfg.d_inner, N = cfg.d_state;
  const uint64_t en4 = E * N * 4;
  // Declaration order breaks traffic ties deterministically.
  std::vector<ResidencyDecision> cand = {
      {"abar", L * en4, 2 * L * en4, false},
      {"dbx", L * en4, 2 * L * en4, false},
      {"h", en4, (2 * L - 1) * en4, false},
      {"xa", L * E * 4, 6 * L * E * 4, false},
  };
  std::stable_sort(cand.begin(), cand.end(),
                   [](const ResidencyDecision& a, const ResidencyDecision& b) {
                     return a.traffic_saved > b.traffic_saved;
                   });
  if (inter_bm) {
    uint64_t used = 0;
    for (auto& c : cand) {
      const uint64_t sz = align_up(c.bytes);
      if (used + sz <= budget) {
        c.admitted = true;
        used += sz;
      }
    }
  }
  return cand;
}

namespace {

struct ResidencySet {
  bool abar = false, dbx = false, h = false, xa = false;
  uint64_t total_bytes = 0;
};

ResidencySet make_residency(const MambaConfig& cfg, bool inter_bm) {
  const uint64_t budget = kBufferBytes * kResidentBudgetNum / kResidentBudgetDen;
  ResidencySet rs;
  for (const auto& d : plan_inter_residency(cfg, inter_bm, budget)) {
    if (!d.admitted) continue;
    rs.total_bytes += align_up(d.bytes);
    if (d.tensor == "abar") rs.abar = true;
    if (d.tensor == "dbx") rs.dbx = true;
    if (d.tensor == "h") rs.h = true;
    if (d.tensor == "xa") rs.xa = true;
  }
  return rs;
}

class Emitter {
 public:
  Emitter(const MambaConfig& cfg, const MambaWeights& w, LowerFlags flags,
          const ExpParams& ep, uint64_t instr_cap)
      : cfg_(cfg), weights_(w), flags_(flags), cap_(instr_cap) {
    prog_.set_creg_f32(kExpCregBase, ep.a);
    prog_.set_creg_f32(kExpCregBase + 1, ep.b);
    prog_.set_creg_f32(kExpCregBase + 2, ep.c);
    prog_.set_creg_f32(kEpsCreg, cfg.eps_norm);
    prog_.set_creg_f32(kOneCreg, 1.0f);
  }

  CompiledModel run();

 private:
  // ---- bookkeeping ----
  void set_node(const std::string& n, TrafficClass c) {
    node_ = n;
    cls_ = c;
  }
  uint32_t u32(uint64_t v) const {
    if (v > 0xFFFFFFFFull) throw PlanError("address exceeds 32-bit registers");
    return static_cast<uint32_t>(v);
  }
  void push(Instruction ins, const std::string& sym = "") {
    if (prog_.code.size() >= cap_)
      throw PlanError("instruction cap exceeded (" + std::to_string(cap_) +
                      "); raise --instr-cap or shrink the config");
    encode(ins);  // field validation
    prog_.code.push_back(ins);
    plan_.instr_node.push_back(node_);
    plan_.instr_symbol.push_back(sym);
    plan_.instr_class.push_back(cls_);
  }
  int reg_for(uint32_t value, uint16_t& pinned) {
    for (int i = 0; i < 16; ++i)
      if (rk_[i] && rv_[i] == value) {
        pinned |= uint16_t(1u << i);
        return i;
      }
    for (int step = 0; step < 16; ++step) {
      const int i = (rr_ + step) % 16;
      if (pinned & (1u << i)) continue;
      rr_ = (i + 1) % 16;
      rv_[i] = value;
      rk_[i] = true;
      pinned |= uint16_t(1u << i);
      Instruction s;
      s.op = Opcode::LOAD;
      s.flags = kFlagLoadSetReg;
      s.dst = static_cast<uint8_t>(i);
      s.imm = value;
      push(s);
      return i;
    }
    throw PlanError("register pressure: more than 16 pinned operands");
  }

  // ---- buffer regions ----
  struct OpenRegion {
    size_t idx;
    Arena* arena;
  };
  uint64_t ralloc(Arena& a, const std::string& name, uint64_t bytes,
                  Residency res = Residency::Transient) {
    uint64_t off = 0;
    Arena* owner = &a;
    if (!a.try_alloc(bytes, off)) {
      if (&a == &reserve_ && work_.try_alloc(bytes, off)) {
        owner = &work_;  // reserve overflow spills into the main extent
      } else {
        throw PlanError("buffer working area exhausted allocating " + name +
                        " (" + std::to_string(bytes) + " B)");
      }
    }
    open_[off] = {plan_.regions.size(), owner};
    plan_.regions.push_back(
        {off, bytes, name, res, static_cast<int64_t>(prog_.code.size()), -1});
    return off;
  }
  void rfree(uint64_t off) {
    auto it = open_.find(off);
    if (it == open_.end())
      throw PlanError("free of unknown buffer region at " + std::to_string(off));
    Region& r = plan_.regions[it->second.idx];
    r.live_to = static_cast<int64_t>(prog_.code.size()) - 1;
    it->second.arena->release(r.offset, r.size);
    open_.erase(it);
  }

  // ---- memory instructions ----
  void load(uint64_t buf, const std::string& sym, uint64_t off, uint64_t bytes) {
    const uint64_t hbm = plan_.hbm.at(sym).addr + off;
    if (off + bytes > plan_.hbm.at(sym).bytes)
      throw PlanError("load overruns symbol " + sym);
    uint16_t pin = 0;
    const int rb = reg_for(u32(buf), pin);
    const int rh = reg_for(u32(hbm), pin);
    Instruction ins;
    ins.op = Opcode::LOAD;
    ins.dst = static_cast<uint8_t>(rb);
    ins.src1 = static_cast<uint8_t>(rh);
    ins.imm = bytes;
    push(ins, sym);
  }
  void store(uint64_t buf, const std::string& sym, uint64_t off, uint64_t bytes) {
    const uint64_t hbm = plan_.hbm.at(sym).addr + off;
    if (off + bytes > plan_.hbm.at(sym).bytes)
      throw PlanError("store overruns symbol " + sym);
    uint16_t pin = 0;
    const int rh = reg_for(u32(hbm), pin);
    const int rb = reg_for(u32(buf), pin);
    Instruction ins;
    ins.op = Opcode::STORE;
    ins.dst = static_cast<uint8_t>(rh);
    ins.src1 = static_cast<uint8_t>(rb);
    ins.imm = bytes;
    push(ins, sym);
  }
  void zero_init(uint64_t buf, uint64_t bytes) { load(buf, "zeros", 0, bytes); }

  // ---- compute instructions ----
  void lin(uint64_t dst, uint64_t x, uint64_t w, int64_t m, int64_t k, int64_t n) {
    uint16_t pin = 0;
    const int rd = reg_for(u32(dst), pin);
    const int r1 = reg_for(u32(x), pin);
    const int r2 = reg_for(u32(w), pin);
    Instruction ins;
    ins.op = Opcode::LIN;
    ins.dst = static_cast<uint8_t>(rd);
    ins.src1 = static_cast<uint8_t>(r1);
    ins.src2 = static_cast<uint8_t>(r2);
    ins.flags = kFlagLinAcc;
    ins.imm = lin_imm(m, k, n);
    push(ins);
  }
  void ew(Opcode op, uint64_t dst, uint64_t a, uint64_t b, int64_t count) {
    uint16_t pin = 0;
    const int rd = reg_for(u32(dst), pin);
    const int r1 = reg_for(u32(a), pin);
    const int r2 = reg_for(u32(b), pin);
    Instruction ins;
    ins.op = op;
    ins.dst = static_cast<uint8_t>(rd);
    ins.src1 = static_cast<uint8_t>(r1);
    ins.src2 = static_cast<uint8_t>(r2);
    ins.imm = ew_imm(count);
    push(ins);
  }
  void ew_scalar(Opcode op, uint64_t dst, uint64_t a, int creg, int64_t count) {
    uint16_t pin = 0;
    const int rd = reg_for(u32(dst), pin);
    const int r1 = reg_for(u32(a), pin);
    Instruction ins;
    ins.op = op;
    ins.dst = static_cast<uint8_t>(rd);
    ins.src1 = static_cast<uint8_t>(r1);
    ins.src2 = static_cast<uint8_t>(creg);
    ins.flags = kFlagEwScalar;
    ins.imm = ew_imm(count);
    push(ins);
  }
  void ew2(uint64_t dst, uint64_t a, uint64_t b, int64_t p, int64_t q,
           EwPairMode mode) {
    uint16_t pin = 0;
    const int rd = reg_for(u32(dst), pin);
    const int r1 = reg_for(u32(a), pin);
    const int r2 = reg_for(u32(b), pin);
    Instruction ins;
    ins.op = Opcode::EWM;
    ins.dst = static_cast<uint8_t>(rd);
    ins.src1 = static_cast<uint8_t>(r1);
    ins.src2 = static_cast<uint8_t>(r2);
    ins.flags = kFlagEwEinsum;
    ins.imm = ew2_imm(p, q, mode);
    push(ins);
  }
  void exp_op(uint64_t dst, uint64_t src, int64_t count) {
    uint16_t pin = 0;
    const int rd = reg_for(u32(dst), pin);
    const int r1 = reg_for(u32(src), pin);
    Instruction ins;
    ins.op = Opcode::EXP;
    ins.dst = static_cast<uint8_t>(rd);
    ins.src1 = static_cast<uint8_t>(r1);
    ins.imm = exp_imm(count, kExpCregBase);
    push(ins);
  }
  void silu_op(uint64_t dst, uint64_t src, int64_t count) {
    uint16_t pin = 0;
    const int rd = reg_for(u32(dst), pin);
    const int r1 = reg_for(u32(src), pin);
    Instruction ins;
    ins.op = Opcode::SILU;
    ins.dst = static_cast<uint8_t>(rd);
    ins.src1 = static_cast<uint8_t>(r1);
    ins.imm = ew_imm(count);
    push(ins);
  }
  void norm_op(uint64_t dst, uint64_t x, uint64_t g, uint64_t b, int64_t rows,
               int64_t d) {
    uint16_t pin = 0;
    const int rd = reg_for(u32(dst), pin);
    const int r1 = reg_for(u32(x), pin);
    const int r2 = reg_for(u32(g), pin);
    const int r3 = reg_for(u32(b), pin);
    Instruction ins;
    ins.op = Opcode::NORM;
    ins.dst = static_cast<uint8_t>(rd);
    ins.src1 = static_cast<uint8_t>(r1);
    ins.src2 = static_cast<uint8_t>(r2);
    ins.src3 = static_cast<uint8_t>(r3);
    ins.imm = norm_imm(rows, d, kEpsCreg);
    push(ins);
  }

  // ---- HBM layout ----
  void add_sym(const std::string& name, uint64_t bytes) {
    HbmSymbol s{align_up(hbm_cursor_), bytes};
    hbm_cursor_ = s.addr + bytes;
    plan_.hbm.emplace(name, s);
    order_.push_back(name);
  }
  void put_f32(const std::string& sym, uint64_t index, float v) {
    const uint64_t a = plan_.hbm.at(sym).addr + index * 4;
    std::memcpy(image_.data() + a, &v, 4);
  }

  void build_layout_and_image();
  void emit_layer(int li, const std::string& in_sym, const std::string& out_sym);

  struct LinSrc {
    bool in_buffer = false;
    uint64_t buf_off = 0;
    std::string sym;
  };
  void emit_linear(const std::string& node, int64_t m, int64_t k, int64_t n,
                   const LinSrc& x, const std::string& wsym,
                   const std::string& dsym);
  void emit_norm_stage(const std::string& node, const std::string& in_sym,
                       const std::string& wprefix, const std::string& out_sym,
                       int64_t rows, int64_t d);
  void emit_conv_stage(const std::string& node, const std::string& in_sym,
                       const std::string& wsym, const std::string& out_sym);
  void emit_silu_stage(const std::string& node, const std::string& in_sym,
                       int64_t count, bool dst_resident, uint64_t dst_off,
                       const std::string& out_sym);
  void emit_ew_stage(const std::string& node, Opcode op, const std::string& a_sym,
                     const std::string& b_sym, const std::string& out_sym,
                     int64_t count, TrafficClass cls);
  void emit_scan(int li, const std::string& p, const std::string& wp);

  int64_t ew_chunk_elems(int64_t total, int bufs) {
    const uint64_t largest = work_.largest_free();
    int64_t ce = static_cast<int64_t>(largest / bufs / 4);
    ce -= ce % kEwTileElems;
    if (ce <= 0)
      throw PlanError("working buffer too small for an element-wise chunk");
    return std::min(total, ce);
  }

  const MambaConfig& cfg_;
  const MambaWeights& weights_;
  LowerFlags flags_;
  uint64_t cap_;
  Program prog_;
  BufferPlan plan_;
  std::vector<uint8_t> image_;
  std::vector<std::string> order_;
  uint64_t hbm_cursor_ = 0;
  Arena resident_, reserve_, work_;
  std::map<uint64_t, OpenRegion> open_;
  std::array<uint32_t, 16> rv_{};
  std::array<bool, 16> rk_{};
  int rr_ = 0;
  std::string node_;
  TrafficClass cls_ = TrafficClass::Ew1;
  ResidencySet rs_;
  // Per-layer resident offsets (valid between scan setup and teardown).
  uint64_t xa_off_ = 0, abar_off_ = 0, dbx_off_ = 0, h_off_ = 0;
};

void Emitter::build_layout_and_image() {
  const int64_t L = cfg_.seq_len, M = cfg_.d_model, E = cfg_.d_inner;
  const int64_t N = cfg_.d_state, K = cfg_.d_conv, R = cfg_.dt_rank;

  // Zero page: sized for the largest single zero-fill LOAD (linear dst
  // initialization, conv left pad, h reset).
  uint64_t zmax = 0;
  for (int64_t b : {L * E * 4, L * M * 4, L * N * 4, L * R * 4, E * N * 4,
                    (K - 1) * E * 4, E * 4})
    zmax = std::max<uint64_t>(zmax, static_cast<uint64_t>(b));
  add_sym("zeros", zmax);

  for (int li = 0; li < cfg_.n_layers; ++li) {
    const std::string w = "w.L" + std::to_string(li) + ".";
    add_sym(w + "gamma", M * 4);
    add_sym(w + "beta", M * 4);
    add_sym(w + "in_proj_x", M * E * 4);
    add_sym(w + "in_proj_z", M * E * 4);
    add_sym(w + "conv", K * E * 4);  // tap-major
    add_sym(w + "x_proj_dt", E * R * 4);
    add_sym(w + "x_proj_b", E * N * 4);
    add_sym(w + "x_proj_c", E * N * 4);
    add_sym(w + "dt_proj", R * E * 4);
    add_sym(w + "a", E * N * 4);
    add_sym(w + "d_skip", E * 4);
    add_sym(w + "out_proj", E * M * 4);
    add_sym("L" + std::to_string(li) + ".h", E * N * 4);
  }
  add_sym("x_in", L * M * 4);
  add_sym("out", L * M * 4);
  if (cfg_.n_layers > 1) add_sym("act.a", L * M * 4);
  if (cfg_.n_layers > 2) add_sym("act.b", L * M * 4);

  // Stage scratch, shared across layers (each is written before it is read).
  add_sym("s.xn", L * M * 4);
  add_sym("s.xm", L * E * 4);
  add_sym("s.z", L * E * 4);
  add_sym("s.xc", L * E * 4);
  if (!rs_.xa) add_sym("s.xa", L * E * 4);
  add_sym("s.dtr", L * R * 4);
  add_sym("s.b", L * N * 4);
  add_sym("s.c", L * N * 4);
  add_sym("s.dt", L * E * 4);
  if (!rs_.abar) {
    add_sym("s.da", L * E * N * 4);
    add_sym("s.abar", L * E * N * 4);
  }
  if (!rs_.dbx) add_sym("s.dbx", L * E * N * 4);
  add_sym("s.y", L * E * 4);
  add_sym("s.zs", L * E * 4);
  add_sym("s.g", L * E * 4);
  add_sym("s.o", L * M * 4);

  plan_.hbm_image_bytes = align_up(hbm_cursor_);
  if (plan_.hbm_image_bytes > 0xFFFFFFFFull)
    throw PlanError("HBM image exceeds 32-bit addressing; shrink the config");
  image_.assign(plan_.hbm_image_bytes, 0);

  for (int li = 0; li < cfg_.n_layers; ++li) {
    const auto& lw = weights_.layers[static_cast<size_t>(li)];
    const std::string w = "w.L" + std::to_string(li) + ".";
    for (int64_t i = 0; i < M; ++i) {
      put_f32(w + "gamma", i, lw.norm_gamma.data[static_cast<size_t>(i)]);
      put_f32(w + "beta", i, lw.norm_beta.data[static_cast<size_t>(i)]);
    }
    for (int64_t r = 0; r < M; ++r)
      for (int64_t c = 0; c < E; ++c) {
        put_f32(w + "in_proj_x", r * E + c, lw.in_proj(r, c));
        put_f32(w + "in_proj_z", r * E + c, lw.in_proj(r, E + c));
      }
    for (int64_t j = 0; j < K; ++j)
      for (int64_t c = 0; c < E; ++c)
        put_f32(w + "conv", j * E + c, lw.conv_w(c, j));
    for (int64_t r = 0; r < E; ++r) {
      for (int64_t c = 0; c < R; ++c)
        put_f32(w + "x_proj_dt", r * R + c, lw.x_proj(r, c));
      for (int64_t c = 0; c < N; ++c) {
        put_f32(w + "x_proj_b", r * N + c, lw.x_proj(r, R + c));
        put_f32(w + "x_proj_c", r * N + c, lw.x_proj(r, R + N + c));
      }
    }
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < E; ++c)
        put_f32(w + "dt_proj", r * E + c, lw.dt_proj(r, c));
    const Tensor a = lw.materialize_a();
    for (int64_t i = 0; i < E * N; ++i)
      put_f32(w + "a", i, a.data[static_cast<size_t>(i)]);
    for (int64_t i = 0; i < E; ++i)
      put_f32(w + "d_skip", i, lw.d_skip.data[static_cast<size_t>(i)]);
    for (int64_t i = 0; i < E * M; ++i)
      put_f32(w + "out_proj", i, lw.out_proj.data[static_cast<size_t>(i)]);
  }
}

void Emitter::emit_linear(const std::string& node, int64_t m, int64_t k,
                          int64_t n, const LinSrc& x, const std::string& wsym,
                          const std::string& dsym) {
  set_node(node, TrafficClass::Linear);

  if (x.in_buffer) {
    // The activation is already resident; only weights and the destination
    // need working space. Chunks cover full rows, so slices stay contiguous.
    if (k > 8191 || n > 8191)
      throw PlanError(node + ": resident-operand linear needs k and n within one tile");
    const uint64_t wb = align_up(uint64_t(k) * n * 4);
    const bool naive = !flags_.intra_bm;
    uint64_t free = work_.largest_free();
    if (!naive && m <= 8191 && wb + align_up(uint64_t(m) * n * 4) <= free) {
      const uint64_t woff = ralloc(work_, node + ".w", uint64_t(k) * n * 4);
      load(woff, wsym, 0, uint64_t(k) * n * 4);
      const uint64_t doff = ralloc(work_, node + ".d", uint64_t(m) * n * 4);
      zero_init(doff, uint64_t(m) * n * 4);
      lin(doff, x.buf_off, woff, m, k, n);
      store(doff, dsym, 0, uint64_t(m) * n * 4);
      rfree(doff);
      rfree(woff);
      return;
    }
    uint64_t woff = kNoBuf;
    int64_t tm;
    if (naive) {
      tm = 16;
      if (wb + align_up(uint64_t(16) * n * 4) > free)
        throw PlanError("naive linear: weights plus one row chunk exceed the working buffer");
    } else {
      woff = ralloc(work_, node + ".w", uint64_t(k) * n * 4);
      load(woff, wsym, 0, uint64_t(k) * n * 4);
      free = work_.largest_free();
      tm = std::min(roundup16(m), kDimCap);
      while (tm >= 16 && align_up(uint64_t(tm) * n * 4) > free) tm -= 16;
      if (tm < 16)
        throw PlanError(node + ": no room for one destination row chunk");
    }
    for (int64_t i0 = 0; i0 < m; i0 += tm) {
      const int64_t rows = std::min(tm, m - i0);
      if (naive) {
        woff = ralloc(work_, node + ".w", uint64_t(k) * n * 4);
        load(woff, wsym, 0, uint64_t(k) * n * 4);
      }
      const uint64_t doff = ralloc(work_, node + ".d", uint64_t(rows) * n * 4);
      zero_init(doff, uint64_t(rows) * n * 4);
      lin(doff, x.buf_off + uint64_t(i0) * k * 4, woff, rows, k, n);
      store(doff, dsym, uint64_t(i0) * n * 4, uint64_t(rows) * n * 4);
      rfree(doff);
      if (naive) rfree(woff);
    }
    if (!naive) rfree(woff);
    return;
  }

  const TilePlan tp =
      plan_intra_linear(m, k, n, work_.largest_free(), flags_.intra_bm);

  if (tp.whole_op) {
    const uint64_t xoff = ralloc(work_, node + ".x", uint64_t(m) * k * 4);
    load(xoff, x.sym, 0, uint64_t(m) * k * 4);
    const uint64_t woff = ralloc(work_, node + ".w", uint64_t(k) * n * 4);
    load(woff, wsym, 0, uint64_t(k) * n * 4);
    const uint64_t doff = ralloc(work_, node + ".d", uint64_t(m) * n * 4);
    zero_init(doff, uint64_t(m) * n * 4);
    lin(doff, xoff, woff, m, k, n);
    store(doff, dsym, 0, uint64_t(m) * n * 4);
    rfree(doff);
    rfree(woff);
    rfree(xoff);
    return;
  }

  if (!flags_.intra_bm || (tp.tile_k == k && tp.tile_n == n)) {
    // Row-chunked schedules (naive 16-row or row-split with the weight kept
    // resident). Chunks cover full k and n, so every piece is contiguous.
    const int64_t tm = tp.tile_m;
    const bool naive = !flags_.intra_bm;
    uint64_t woff = kNoBuf;
    if (!naive) {
      woff = ralloc(work_, node + ".w", uint64_t(k) * n * 4);
      load(woff, wsym, 0, uint64_t(k) * n * 4);
    }
    for (int64_t i0 = 0; i0 < m; i0 += tm) {
      const int64_t rows = std::min(tm, m - i0);
      if (naive) {
        woff = ralloc(work_, node + ".w", uint64_t(k) * n * 4);
        load(woff, wsym, 0, uint64_t(k) * n * 4);
      }
      const uint64_t xoff = ralloc(work_, node + ".x", uint64_t(rows) * k * 4);
      load(xoff, x.sym, uint64_t(i0) * k * 4, uint64_t(rows) * k * 4);
      const uint64_t doff = ralloc(work_, node + ".d", uint64_t(rows) * n * 4);
      zero_init(doff, uint64_t(rows) * n * 4);
      lin(doff, xoff, woff, rows, k, n);
      store(doff, dsym, uint64_t(i0) * n * 4, uint64_t(rows) * n * 4);
      rfree(doff);
      rfree(xoff);
      if (naive) rfree(woff);
    }
    if (!naive) rfree(woff);
    return;
  }

  // Gather-heavy fallback for oversized operands.
  const int64_t tk = tp.tile_k, tn = tp.tile_n;
  for (int64_t j0 = 0; j0 < n; j0 += tn) {
    const int64_t cols = std::min(tn, n - j0);
    for (int64_t i0 = 0; i0 < m; i0 += 16) {
      const int64_t rows = std::min<int64_t>(16, m - i0);
      const uint64_t doff = ralloc(work_, node + ".d", uint64_t(rows) * cols * 4);
      if (tn >= n) {
        zero_init(doff, uint64_t(rows) * cols * 4);
      } else {
        for (int64_t r = 0; r < rows; ++r)
          zero_init(doff + uint64_t(r) * cols * 4, uint64_t(cols) * 4);
      }
      for (int64_t c0 = 0; c0 < k; c0 += tk) {
        const int64_t depth = std::min(tk, k - c0);
        const uint64_t xoff = ralloc(work_, node + ".x", uint64_t(rows) * depth * 4);
        if (tk >= k) {
          load(xoff, x.sym, uint64_t(i0) * k * 4, uint64_t(rows) * k * 4);
        } else {
          for (int64_t r = 0; r < rows; ++r)
            load(xoff + uint64_t(r) * depth * 4, x.sym,
                 (uint64_t(i0 + r) * k + c0) * 4, uint64_t(depth) * 4);
        }
        const uint64_t woff = ralloc(work_, node + ".w", uint64_t(depth) * cols * 4);
        if (tn >= n) {
          load(woff, wsym, uint64_t(c0) * n * 4, uint64_t(depth) * n * 4);
        } else {
          for (int64_t r = 0; r < depth; ++r)
            load(woff + uint64_t(r) * cols * 4, wsym,
                 (uint64_t(c0 + r) * n + j0) * 4, uint64_t(cols) * 4);
        }
        lin(doff, xoff, woff, rows, depth, cols);
        rfree(woff);
        rfree(xoff);
      }
      if (tn >= n) {
        store(doff, dsym, uint64_t(i0) * n * 4, uint64_t(rows) * cols * 4);
      } else {
        for (int64_t r = 0; r < rows; ++r)
          store(doff + uint64_t(r) * cols * 4, dsym,
                (uint64_t(i0 + r) * n + j0) * 4, uint64_t(cols) * 4);
      }
      rfree(doff);
    }
  }
}

void Emitter::emit_norm_stage(const std::string& node, const std::string& in_sym,
                              const std::string& wprefix,
                              const std::string& out_sym, int64_t rows,
                              int64_t d) {
  set_node(node, TrafficClass::Norm);
  const uint64_t goff = ralloc(work_, node + ".gamma", uint64_t(d) * 4);
  load(goff, wprefix + "gamma", 0, uint64_t(d) * 4);
  const uint64_t boff = ralloc(work_, node + ".beta", uint64_t(d) * 4);
  load(boff, wprefix + "beta", 0, uint64_t(d) * 4);
  int64_t chunk_rows = ew_chunk_elems(rows * d, 2) / d;
  if (chunk_rows <= 0)
    throw PlanError("working buffer too small for one normalization row");
  chunk_rows = std::min(chunk_rows, rows);
  const uint64_t xoff = ralloc(work_, node + ".x", uint64_t(chunk_rows) * d * 4);
  const uint64_t ooff = ralloc(work_, node + ".o", uint64_t(chunk_rows) * d * 4);
  for (int64_t r0 = 0; r0 < rows; r0 += chunk_rows) {
    const int64_t r = std::min(chunk_rows, rows - r0);
    load(xoff, in_sym, uint64_t(r0) * d * 4, uint64_t(r) * d * 4);
    norm_op(ooff, xoff, goff, boff, r, d);
    store(ooff, out_sym, uint64_t(r0) * d * 4, uint64_t(r) * d * 4);
  }
  rfree(ooff);
  rfree(xoff);
  rfree(boff);
  rfree(goff);
}

void Emitter::emit_conv_stage(const std::string& node, const std::string& in_sym,
                              const std::string& wsym,
                              const std::string& out_sym) {
  const int64_t L = cfg_.seq_len, E = cfg_.d_inner, K = cfg_.d_conv;
  const uint64_t row = uint64_t(E) * 4;
  set_node(node, TrafficClass::Ew2);

  // Tap vectors stay resident across row chunks when the planner may keep
  // weights on chip; naive mode reloads them per chunk.
  std::vector<uint64_t> taps;
  if (flags_.intra_bm) {
    for (int64_t j = 0; j < K; ++j) {
      taps.push_back(ralloc(reserve_, node + ".w" + std::to_string(j), row));
      load(taps.back(), wsym, uint64_t(j) * row, row);
    }
  }

  // Causal window: output rows [t0, t0+C) need input rows [t0-K+1, t0+C).
  const uint64_t free = work_.largest_free();
  int64_t C = std::min<int64_t>(L, kDimCap);
  auto need = [&](int64_t c) {
    return align_up(uint64_t(c + K - 1) * row) + 2 * align_up(uint64_t(c) * row) +
           (flags_.intra_bm ? 0 : align_up(row));
  };
  while (C > 16 && need(C) > free) C -= 16;
  if (need(C) > free)
    throw PlanError("working buffer too small for one convolution row chunk");

  const uint64_t poff = ralloc(work_, node + ".pad_x", uint64_t(C + K - 1) * row);
  const uint64_t aoff = ralloc(work_, node + ".acc", uint64_t(C) * row);
  const uint64_t toff =
      K > 1 ? ralloc(work_, node + ".tap", uint64_t(C) * row) : kNoBuf;
  const uint64_t voff =
      flags_.intra_bm ? kNoBuf : ralloc(work_, node + ".w", row);

  for (int64_t t0 = 0; t0 < L; t0 += C) {
    const int64_t c = std::min(C, L - t0);
    set_node(node, TrafficClass::Ew2);
    if (t0 == 0) {
      if (K > 1) zero_init(poff, uint64_t(K - 1) * row);
      load(poff + uint64_t(K - 1) * row, in_sym, 0, uint64_t(c) * row);
    } else {
      load(poff, in_sym, uint64_t(t0 - (K - 1)) * row, uint64_t(c + K - 1) * row);
    }
    for (int64_t j = 0; j < K; ++j) {
      set_node(node, TrafficClass::Ew2);
      uint64_t v = flags_.intra_bm ? taps[static_cast<size_t>(j)] : voff;
      if (!flags_.intra_bm) load(voff, wsym, uint64_t(j) * row, row);
      if (j == 0) {
        ew2(aoff, poff, v, c, E, EwPairMode::ColScale);
      } else {
        ew2(toff, poff + uint64_t(j) * row, v, c, E, EwPairMode::ColScale);
        set_node(node, TrafficClass::Ew1);
        ew(Opcode::EWA, aoff, aoff, toff, c * E);
      }
    }
    set_node(node, TrafficClass::Ew1);
    store(aoff, out_sym, uint64_t(t0) * row, uint64_t(c) * row);
  }

  if (voff != kNoBuf) rfree(voff);
  if (toff != kNoBuf) rfree(toff);
  rfree(aoff);
  rfree(poff);
  for (auto it = taps.rbegin(); it != taps.rend(); ++it) rfree(*it);
}

void Emitter::emit_silu_stage(const std::string& node, const std::string& in_sym,
                              int64_t count, bool dst_resident, uint64_t dst_off,
                              const std::string& out_sym) {
  set_node(node, TrafficClass::Nonlinear);
  const int64_t ce = ew_chunk_elems(count, 1);
  const uint64_t ioff = ralloc(work_, node + ".in", uint64_t(ce) * 4);
  for (int64_t e0 = 0; e0 < count; e0 += ce) {
    const int64_t c = std::min(ce, count - e0);
    load(ioff, in_sym, uint64_t(e0) * 4, uint64_t(c) * 4);
    if (dst_resident) {
      silu_op(dst_off + uint64_t(e0) * 4, ioff, c);
    } else {
      silu_op(ioff, ioff, c);
      store(ioff, out_sym, uint64_t(e0) * 4, uint64_t(c) * 4);
    }
  }
  rfree(ioff);
}

void Emitter::emit_ew_stage(const std::string& node, Opcode op,
                            const std::string& a_sym, const std::string& b_sym,
                            const std::string& out_sym, int64_t count,
                            TrafficClass cls) {
  set_node(node, cls);
  const int64_t ce = ew_chunk_elems(count, 2);
  const uint64_t aoff = ralloc(work_, node + ".a", uint64_t(ce) * 4);
  const uint64_t boff = ralloc(work_, node + ".b", uint64_t(ce) * 4);
  for (int64_t e0 = 0; e0 < count; e0 += ce) {
    const int64_t c = std::min(ce, count - e0);
    load(aoff, a_sym, uint64_t(e0) * 4, uint64_t(c) * 4);
    load(boff, b_sym, uint64_t(e0) * 4, uint64_t(c) * 4);
    ew(op, aoff, aoff, boff, c);
    store(aoff, out_sym, uint64_t(e0) * 4, uint64_t(c) * 4);
  }
  rfree(boff);
  rfree(aoff);
}

void Emitter::emit_scan(int li, const std::string& p, const std::string& wp) {
  const int64_t L = cfg_.seq_len, E = cfg_.d_inner, N = cfg_.d_state;
  const uint64_t en4 = uint64_t(E) * N * 4;
  const std::string h_sym = "L" + std::to_string(li) + ".h";
  const bool zoh = cfg_.discretization == Discretization::ZohExp;

  // --- stage 1: per-token discretized operands ---
  uint64_t a_mat = kNoBuf;
  if (flags_.intra_bm) {
    set_node(p + "da", TrafficClass::Ew2);
    a_mat = ralloc(work_, p + "A", en4);
    load(a_mat, wp + "a", 0, en4);
  }
  const uint64_t dtrow = ralloc(reserve_, p + "dt.row", uint64_t(E) * 4);
  const uint64_t urow = ralloc(reserve_, p + "u.row", uint64_t(E) * 4);
  const uint64_t brow = ralloc(reserve_, p + "b.row", uint64_t(N) * 4);
  uint64_t da_t = kNoBuf, dbx_t = kNoBuf, xarow = kNoBuf;
  if (!rs_.abar) da_t = ralloc(work_, p + "da.t", en4);
  if (!rs_.dbx) dbx_t = ralloc(work_, p + "dbx.t", en4);
  if (!rs_.xa) xarow = ralloc(reserve_, p + "xa.row", uint64_t(E) * 4);

  for (int64_t t = 0; t < L; ++t) {
    const std::string ts = ".t" + std::to_string(t);
    set_node(p + "da" + ts, TrafficClass::Ew2);
    load(dtrow, "s.dt", uint64_t(t) * E * 4, uint64_t(E) * 4);
    uint64_t a_src = a_mat;
    if (!flags_.intra_bm) {
      a_src = ralloc(work_, p + "A", en4);
      load(a_src, wp + "a", 0, en4);
    }
    const uint64_t da_dst = rs_.abar ? abar_off_ + uint64_t(t) * en4 : da_t;
    ew2(da_dst, dtrow, a_src, E, N, EwPairMode::RowScale);
    if (!flags_.intra_bm) rfree(a_src);
    if (!rs_.abar) store(da_t, "s.da", uint64_t(t) * en4, en4);

    set_node(p + "u" + ts, TrafficClass::Ew1);
    uint64_t xsrc = rs_.xa ? xa_off_ + uint64_t(t) * E * 4 : xarow;
    if (!rs_.xa) load(xarow, "s.xa", uint64_t(t) * E * 4, uint64_t(E) * 4);
    ew(Opcode::EWM, urow, dtrow, xsrc, E);

    set_node(p + "dbx" + ts, TrafficClass::Ew2);
    load(brow, "s.b", uint64_t(t) * N * 4, uint64_t(N) * 4);
    const uint64_t dbx_dst = rs_.dbx ? dbx_off_ + uint64_t(t) * en4 : dbx_t;
    ew2(dbx_dst, urow, brow, E, N, EwPairMode::Outer);
    if (!rs_.dbx) store(dbx_t, "s.dbx", uint64_t(t) * en4, en4);
  }
  if (xarow != kNoBuf) rfree(xarow);
  if (dbx_t != kNoBuf) rfree(dbx_t);
  if (da_t != kNoBuf) rfree(da_t);
  rfree(brow);
  rfree(urow);
  rfree(dtrow);
  if (a_mat != kNoBuf) rfree(a_mat);

  // --- stage 2: discretization nonlinearity over the whole [L,E,N] block ---
  set_node(p + "abar", TrafficClass::Nonlinear);
  if (rs_.abar) {
    if (zoh)
      exp_op(abar_off_, abar_off_, L * E * N);
    else
      ew_scalar(Opcode::EWA, abar_off_, abar_off_, kOneCreg, L * E * N);
  } else {
    const int64_t total = L * E * N;
    const int64_t ce = ew_chunk_elems(total, 1);
    const uint64_t coff = ralloc(work_, p + "abar.chunk", uint64_t(ce) * 4);
    for (int64_t e0 = 0; e0 < total; e0 += ce) {
      const int64_t c = std::min(ce, total - e0);
      load(coff, "s.da", uint64_t(e0) * 4, uint64_t(c) * 4);
      if (zoh)
        exp_op(coff, coff, c);
      else
        ew_scalar(Opcode::EWA, coff, coff, kOneCreg, c);
      store(coff, "s.abar", uint64_t(e0) * 4, uint64_t(c) * 4);
    }
    rfree(coff);
  }

  // --- stage 3: the recurrence itself ---
  const uint64_t t4buf = ralloc(work_, p + "t4", en4);
  const uint64_t ybuf = ralloc(work_, p + "y.row", uint64_t(E) * 4);
  const uint64_t skbuf = ralloc(work_, p + "sk.row", uint64_t(E) * 4);
  const uint64_t crow = ralloc(reserve_, p + "c.row", uint64_t(N) * 4);
  uint64_t habar = kNoBuf, hdbx = kNoBuf, hbuf = kNoBuf, dskip = kNoBuf;
  if (!rs_.abar) habar = ralloc(work_, p + "abar.t", en4);
  if (!rs_.dbx) hdbx = ralloc(work_, p + "dbx.t", en4);
  if (rs_.h) {
    set_node(p + "h.init", TrafficClass::Ew1);
    zero_init(h_off_, en4);
  } else {
    hbuf = ralloc(work_, p + "h.buf", en4);
  }
  if (flags_.intra_bm) {
    set_node(p + "sk", TrafficClass::Ew1);
    dskip = ralloc(reserve_, p + "d_skip", uint64_t(E) * 4);
    load(dskip, wp + "d_skip", 0, uint64_t(E) * 4);
  }

  for (int64_t t = 0; t < L; ++t) {
    const std::string ts = ".t" + std::to_string(t);
    const uint64_t h_cur = rs_.h ? h_off_ : hbuf;

    set_node(p + "t4" + ts, TrafficClass::Ew1);
    uint64_t ab = rs_.abar ? abar_off_ + uint64_t(t) * en4 : habar;
    if (!rs_.abar) load(habar, "s.abar", uint64_t(t) * en4, en4);
    if (!rs_.h) load(hbuf, h_sym, 0, en4);  // h read, once per token
    ew(Opcode::EWM, t4buf, ab, h_cur, E * N);

    set_node(p + "h" + ts, TrafficClass::Ew1);
    uint64_t db = rs_.dbx ? dbx_off_ + uint64_t(t) * en4 : hdbx;
    if (!rs_.dbx) load(hdbx, "s.dbx", uint64_t(t) * en4, en4);
    ew(Opcode::EWA, h_cur, t4buf, db, E * N);
    if (!rs_.h) store(hbuf, h_sym, 0, en4);  // h write, once per token

    set_node(p + "y" + ts, TrafficClass::Linear);
    load(crow, "s.c", uint64_t(t) * N * 4, uint64_t(N) * 4);
    zero_init(ybuf, uint64_t(E) * 4);
    for (int64_t e0 = 0; e0 < E; e0 += kDimCap)
      lin(ybuf + uint64_t(e0) * 4, h_cur + uint64_t(e0) * N * 4, crow,
          std::min(kDimCap, E - e0), N, 1);

    set_node(p + "sk" + ts, TrafficClass::Ew1);
    uint64_t dsk = dskip;
    if (!flags_.intra_bm) {
      dsk = ralloc(reserve_, p + "d_skip", uint64_t(E) * 4);
      load(dsk, wp + "d_skip", 0, uint64_t(E) * 4);
    }
    uint64_t xsrc = rs_.xa ? xa_off_ + uint64_t(t) * E * 4 : 0;
    if (!rs_.xa) {
      xsrc = ralloc(reserve_, p + "xa.row", uint64_t(E) * 4);
      load(xsrc, "s.xa", uint64_t(t) * E * 4, uint64_t(E) * 4);
    }
    ew(Opcode::EWM, skbuf, dsk, xsrc, E);
    if (!rs_.xa) rfree(xsrc);
    if (!flags_.intra_bm) rfree(dsk);

    set_node(p + "yrow" + ts, TrafficClass::Ew1);
    ew(Opcode::EWA, ybuf, ybuf, skbuf, E);
    store(ybuf, "s.y", uint64_t(t) * E * 4, uint64_t(E) * 4);
  }

  if (rs_.h) {
    set_node(p + "h.final", TrafficClass::Ew1);
    store(h_off_, h_sym, 0, en4);  // the only h write with inter-BM on
  }

  if (dskip != kNoBuf) rfree(dskip);
  if (habar != kNoBuf) rfree(habar);
  if (hdbx != kNoBuf) rfree(hdbx);
  if (hbuf != kNoBuf) rfree(hbuf);
  rfree(crow);
  rfree(skbuf);
  rfree(ybuf);
  rfree(t4buf);
}

void Emitter::emit_layer(int li, const std::string& in_sym,
                         const std::string& out_sym) {
  const int64_t L = cfg_.seq_len, M = cfg_.d_model, E = cfg_.d_inner;
  const int64_t N = cfg_.d_state, R = cfg_.dt_rank;
  const std::string p = "L" + std::to_string(li) + ".";
  const std::string wp = "w." + p;
  const uint64_t en4 = uint64_t(E) * N * 4;

  // Scan residents live for the whole layer.
  if (rs_.xa) xa_off_ = ralloc(resident_, p + "xa", uint64_t(L) * E * 4,
                               Residency::ScanResident);
  if (rs_.abar)
    abar_off_ = ralloc(resident_, p + "abar", uint64_t(L) * en4,
                       Residency::ScanResident);
  if (rs_.dbx)
    dbx_off_ = ralloc(resident_, p + "dbx", uint64_t(L) * en4,
                      Residency::ScanResident);
  if (rs_.h) h_off_ = ralloc(resident_, p + "h", en4, Residency::ScanResident);

  emit_norm_stage(p + "xn", in_sym, wp, "s.xn", L, M);
  emit_linear(p + "xm", L, M, E, {false, 0, "s.xn"}, wp + "in_proj_x", "s.xm");
  emit_linear(p + "z", L, M, E, {false, 0, "s.xn"}, wp + "in_proj_z", "s.z");
  emit_conv_stage(p + "xc", "s.xm", wp + "conv", "s.xc");
  emit_silu_stage(p + "xa", "s.xc", L * E, rs_.xa, xa_off_, "s.xa");

  const LinSrc xa_src = rs_.xa ? LinSrc{true, xa_off_, ""}
                               : LinSrc{false, 0, "s.xa"};
  emit_linear(p + "dtr", L, E, R, xa_src, wp + "x_proj_dt", "s.dtr");
  emit_linear(p + "bmat", L, E, N, xa_src, wp + "x_proj_b", "s.b");
  emit_linear(p + "cmat", L, E, N, xa_src, wp + "x_proj_c", "s.c");
  emit_linear(p + "dt", L, R, E, {false, 0, "s.dtr"}, wp + "dt_proj", "s.dt");

  emit_scan(li, p, wp);

  emit_silu_stage(p + "zs", "s.z", L * E, false, 0, "s.zs");
  emit_ew_stage(p + "g", Opcode::EWM, "s.y", "s.zs", "s.g", L * E,
                TrafficClass::Ew1);
  emit_linear(p + "o", L, E, M, {false, 0, "s.g"}, wp + "out_proj", "s.o");
  emit_ew_stage(p + "out", Opcode::EWA, "s.o", in_sym, out_sym, L * M,
                TrafficClass::Ew1);

  if (rs_.h) rfree(h_off_);
  if (rs_.dbx) rfree(dbx_off_);
  if (rs_.abar) rfree(abar_off_);
  if (rs_.xa) rfree(xa_off_);
}

CompiledModel Emitter::run() {
  if (cfg_.softplus_delta)
    throw PlanError("softplus delta is not lowerable: the ISA has no softplus op");
  rs_ = make_residency(cfg_, flags_.inter_bm);

  plan_.capacity = kBufferBytes;
  plan_.resident_bytes = rs_.total_bytes;
  if (plan_.resident_bytes >= plan_.capacity)
    throw PlanError("scan residents exceed the buffer");
  plan_.read_buffer_extent = plan_.capacity - plan_.resident_bytes;
  plan_.ew2_reserve =
      flags_.intra_bm ? (plan_.read_buffer_extent / 16) & ~(kAlign - 1) : 0;

  resident_ = Arena(0, plan_.resident_bytes);
  reserve_ = Arena(plan_.resident_bytes, plan_.ew2_reserve);
  work_ = Arena(plan_.resident_bytes + plan_.ew2_reserve,
                plan_.capacity - plan_.resident_bytes - plan_.ew2_reserve);

  build_layout_and_image();

  std::string in_sym = "x_in";
  for (int li = 0; li < cfg_.n_layers; ++li) {
    std::string out_sym;
    if (li == cfg_.n_layers - 1)
      out_sym = "out";
    else
      out_sym = li % 2 == 0 ? "act.a" : "act.b";
    emit_layer(li, in_sym, out_sym);
    in_sym = out_sym;
  }

  if (!open_.empty())
    throw PlanError("internal: " + std::to_string(open_.size()) +
                    " buffer regions leaked by the lowering");

  prog_.labels = plan_.instr_node;
  validate_program(prog_);

  CompiledModel cm;
  cm.program = std::move(prog_);
  cm.plan = std::move(plan_);
  cm.hbm_image = std::move(image_);
  return cm;
}

}  // namespace

CompiledModel lower(const MambaConfig& cfg, const MambaWeights& w,
                    LowerFlags flags, const ExpParams& exp_params,
                    uint64_t instr_cap) {
  if (static_cast<int>(w.layers.size()) != cfg.n_layers)
    throw PlanError("weights do not match config layer count");
  Emitter em(cfg, w, flags, exp_params, instr_cap);
  return em.run();
}

std::string plan_to_json(const BufferPlan& p) {
  nlohmann::ordered_json j;
  j["capacity"] = p.capacity;
  j["resident_bytes"] = p.resident_bytes;
  j["read_buffer_extent"] = p.read_buffer_extent;
  j["ew2_reserve"] = p.ew2_reserve;
  j["hbm_image_bytes"] = p.hbm_image_bytes;
  nlohmann::ordered_json regions = nlohmann::ordered_json::array();
  for (const auto& r : p.regions) {
    nlohmann::ordered_json rj;
    rj["offset"] = r.offset;
    rj["size"] = r.size;
    rj["tensor"] = r.tensor;
    rj["residency"] =
        r.residency == Residency::ScanResident ? "scan_resident" : "transient";
    rj["live_from"] = r.live_from;
    rj["live_to"] = r.live_to;
    regions.push_back(std::move(rj));
  }
  j["regions"] = std::move(regions);
  nlohmann::ordered_json hbm;
  for (const auto& [name, sym] : p.hbm) {
    hbm[name] = {{"addr", sym.addr}, {"bytes", sym.bytes}};
  }
  j["hbm_symbols"] = std::move(hbm);
  return j.dump(2);
}

std::string plan_summary(const BufferPlan& p) {
  std::ostringstream os;
  os << "buffer capacity      " << p.capacity << " B\n"
     << "scan-resident bytes  " << p.resident_bytes << " B\n"
     << "read buffer extent   " << p.read_buffer_extent << " B\n"
     << "ew2 vector reserve   " << p.ew2_reserve << " B\n"
     << "hbm image            " << p.hbm_image_bytes << " B\n"
     << "hbm symbols          " << p.hbm.size() << "\n"
     << "buffer regions       " << p.regions.size() << "\n"
     << "instructions         " << p.instr_node.size() << "\n";
  size_t residents = 0;
  for (const auto& r : p.regions)
    if (r.residency == Residency::ScanResident) ++residents;
  os << "scan-resident regions " << residents << "\n";
  return os.str();
}

}  // namespace marca

#include "marca/simulator.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <map>
#include <queue>
#include <string>

namespace marca {

namespace {

struct Span {
  uint64_t addr = 0;
  uint64_t bytes = 0;
};

// Buffer footprint of one compute instruction, derived from its immediate.
void operand_spans(const Instruction& in, const std::array<uint32_t, 16>& gpr,
                   std::vector<Span>& out) {
  out.clear();
  auto add = [&](uint8_t reg, uint64_t elems) {
    out.push_back({gpr[reg], elems * 4});
  };
  switch (in.op) {
    case Opcode::LIN: {
      int64_t m, k, n;
      lin_dims(in.imm, m, k, n);
      add(in.src1, uint64_t(m) * k);
      add(in.src2, uint64_t(k) * n);
      add(in.dst, uint64_t(m) * n);
      break;
    }
    case Opcode::CONV: {
      int64_t l, d, k;
      conv_dims(in.imm, l, d, k);
      add(in.src1, uint64_t(l) * d);
      add(in.src2, uint64_t(k) * d);
      add(in.dst, uint64_t(l) * d);
      break;
    }
    case Opcode::NORM: {
      int64_t rows, d;
      int eps_creg;
      norm_dims(in.imm, rows, d, eps_creg);
      add(in.src1, uint64_t(rows) * d);
      add(in.src2, uint64_t(d));
      add(in.src3, uint64_t(d));
      add(in.dst, uint64_t(rows) * d);
      break;
    }
    case Opcode::EWM:
    case Opcode::EWA: {
      if (in.flags & kFlagEwEinsum) {
        int64_t p, q;
        EwPairMode mode;
        ew2_dims(in.imm, p, q, mode);
        switch (mode) {
          case EwPairMode::Outer:
            add(in.src1, uint64_t(p));
            add(in.src2, uint64_t(q));
            break;
          case EwPairMode::RowScale:
            add(in.src1, uint64_t(p));
            add(in.src2, uint64_t(p) * q);
            break;
          case EwPairMode::ColScale:
            add(in.src1, uint64_t(p) * q);
            add(in.src2, uint64_t(q));
            break;
        }
        add(in.dst, uint64_t(p) * q);
      } else {
        const int64_t count = ew_count(in.imm);
        add(in.src1, uint64_t(count));
        if (!(in.flags & kFlagEwScalar)) add(in.src2, uint64_t(count));
        add(in.dst, uint64_t(count));
      }
      break;
    }
    case Opcode::EXP: {
      int64_t count;
      int creg_base;
      exp_fields(in.imm, count, creg_base);
      (void)creg_base;
      add(in.src1, uint64_t(count));
      add(in.dst, uint64_t(count));
      break;
    }
    case Opcode::SILU: {
      const int64_t count = ew_count(in.imm);
      add(in.src1, uint64_t(count));
      add(in.dst, uint64_t(count));
      break;
    }
    case Opcode::LOAD:
    case Opcode::STORE:
      break;
  }
}

// Tracks which planned buffer regions are live while walking the program.
class RegionTracker {
 public:
  explicit RegionTracker(const std::vector<Region>& regions)
      : regions_(regions) {
    order_.resize(regions.size());
    for (size_t i = 0; i < regions.size(); ++i) order_[i] = i;
    std::stable_sort(order_.begin(), order_.end(), [&](size_t a, size_t b) {
      return regions[a].live_from < regions[b].live_from;
    });
  }

  void advance(int64_t instr) {
    while (!expiry_.empty() && expiry_.top().first < instr) {
      const size_t idx = expiry_.top().second;
      expiry_.pop();
      auto it = active_.find(regions_[idx].offset);
      if (it != active_.end() && it->second == idx) active_.erase(it);
    }
    while (next_ < order_.size() &&
           regions_[order_[next_]].live_from <= instr) {
      const size_t idx = order_[next_++];
      const Region& r = regions_[idx];
      active_[r.offset] = idx;
      const int64_t until =
          r.live_to < 0 ? std::numeric_limits<int64_t>::max() : r.live_to;
      expiry_.push({until, idx});
    }
  }

  void check(int64_t instr, const Span& s, const std::string& node) const {
    auto it = active_.upper_bound(s.addr);
    if (it != active_.begin()) {
      --it;
      const Region& r = regions_[it->second];
      const int64_t until =
          r.live_to < 0 ? std::numeric_limits<int64_t>::max() : r.live_to;
      if (s.addr >= r.offset && s.addr + s.bytes <= r.offset + r.size &&
          instr >= r.live_from && instr <= until)
        return;
    }
    throw ResidencyError("instruction " + std::to_string(instr) + " (" + node +
                         ") touches [" + std::to_string(s.addr) + ", " +
                         std::to_string(s.addr + s.bytes) +
                         ") outside any live buffer region");
  }

 private:
  const std::vector<Region>& regions_;
  std::vector<size_t> order_;
  size_t next_ = 0;
  std::map<uint64_t, size_t> active_;
  std::priority_queue<std::pair<int64_t, size_t>,
                      std::vector<std::pair<int64_t, size_t>>,
                      std::greater<>>
      expiry_;
};

}  // namespace

SimResult simulate(const CompiledModel& cm, const MambaConfig& cfg,
                   const Tensor& input, const SimOptions& opt) {
  const Program& prog = cm.program;
  const BufferPlan& plan = cm.plan;

  const uint64_t L = static_cast<uint64_t>(cfg.seq_len);
  const uint64_t M = static_cast<uint64_t>(cfg.d_model);
  if (input.shape.size() != 2 || static_cast<uint64_t>(input.shape[0]) != L ||
      static_cast<uint64_t>(input.shape[1]) != M)
    throw DimError("simulate: input must be [seq_len, d_model]");

  Hbm hbm(plan.hbm_image_bytes);
  if (cm.hbm_image.size() != plan.hbm_image_bytes)
    throw PlanError("simulate: HBM image size does not match the plan");
  std::memcpy(hbm.raw().data(), cm.hbm_image.data(), cm.hbm_image.size());

  const auto xin = plan.hbm.find("x_in");
  if (xin == plan.hbm.end() || xin->second.bytes != L * M * 4)
    throw PlanError("simulate: plan lacks a matching x_in symbol");
  hbm.write_bytes(xin->second.addr,
                  reinterpret_cast<const uint8_t*>(input.data.data()),
                  L * M * 4);

  BufferPool buf(plan.capacity);
  std::array<uint32_t, 16> gpr{};
  const bool have_meta = plan.instr_node.size() == prog.code.size() &&
                         plan.instr_class.size() == prog.code.size() &&
                         plan.instr_symbol.size() == prog.code.size();
  const bool residency =
      opt.check_residency && have_meta && !plan.regions.empty();
  RegionTracker tracker(plan.regions);

  SimResult res;
  TrafficStats& st = res.stats;
  st.instructions = prog.code.size();
  if (opt.collect_trace) res.trace.reserve(prog.code.size());

  std::vector<uint8_t> shuttle;
  std::vector<Span> spans;
  uint64_t pending = 0;           // prefetch window awaiting a compute op
  size_t pending_class = 0;       // class of the latest pending load
  const MachineConfig& mc = opt.machine;

  for (size_t i = 0; i < prog.code.size(); ++i) {
    const Instruction& in = prog.code[i];
    const size_t cls =
        have_meta ? static_cast<size_t>(plan.instr_class[i])
                  : static_cast<size_t>(TrafficClass::Ew1);
    const std::string node =
        have_meta ? plan.instr_node[i]
                  : (i < prog.labels.size() ? prog.labels[i] : std::string());
    if (residency) tracker.advance(static_cast<int64_t>(i));
    OpcodeStats& os = st.by_opcode[static_cast<size_t>(in.op)];
    os.count++;
    uint64_t charged = 0;

    if (in.op == Opcode::LOAD && (in.flags & kFlagLoadSetReg)) {
      if (in.imm > 0xFFFFFFFFull)
        throw PlanError("register immediate exceeds 32 bits");
      gpr[in.dst] = static_cast<uint32_t>(in.imm);
    } else if (in.op == Opcode::LOAD) {
      const uint64_t bytes = in.imm;
      const uint64_t baddr = gpr[in.dst], haddr = gpr[in.src1];
      shuttle.resize(bytes);
      hbm.read_bytes(haddr, shuttle.data(), bytes);
      buf.write_bytes(baddr, shuttle.data(), bytes);
      if (residency) tracker.check(static_cast<int64_t>(i), {baddr, bytes}, node);
      const uint64_t mem = hbm_transfer_cycles(bytes);
      os.memory_cycles += mem;
      st.hbm_read_bytes += bytes;
      st.buffer_bytes += bytes;
      if (have_meta && !plan.instr_symbol[i].empty())
        st.hbm_read_by_symbol[plan.instr_symbol[i]] += bytes;
      if (opt.strict_serial) {
        charged = mem;
      } else {
        pending += mem;
        pending_class = cls;
      }
    } else if (in.op == Opcode::STORE) {
      const uint64_t bytes = in.imm;
      const uint64_t haddr = gpr[in.dst], baddr = gpr[in.src1];
      shuttle.resize(bytes);
      buf.read_bytes(baddr, shuttle.data(), bytes);
      hbm.write_bytes(haddr, shuttle.data(), bytes);
      if (residency) tracker.check(static_cast<int64_t>(i), {baddr, bytes}, node);
      const uint64_t mem = hbm_transfer_cycles(bytes);
      os.memory_cycles += mem;
      st.hbm_write_bytes += bytes;
      st.buffer_bytes += bytes;
      if (have_meta && !plan.instr_symbol[i].empty())
        st.hbm_write_by_symbol[plan.instr_symbol[i]] += bytes;
      charged = mem;
    } else {
      operand_spans(in, gpr, spans);
      uint64_t touched = 0;
      for (const Span& s : spans) {
        if (residency) tracker.check(static_cast<int64_t>(i), s, node);
        touched += s.bytes;
      }
      const ExecEffect fx = execute_instruction(in, prog, gpr, buf, mc);
      if (fx.used_reduction_tree != (in.op == Opcode::LIN))
        throw PlanError("reduction tree engagement does not match the opcode");
      os.tile_cycles += fx.tile_cycles;
      os.compute_cycles += fx.compute_cycles;
      st.buffer_bytes += touched;
      st.pe_ops += fx.tile_cycles *
                   (in.op == Opcode::NORM ? uint64_t(kRpeDim)
                                          : uint64_t(kPeOpsPerTileCycle));
      if (opt.strict_serial) {
        charged = fx.compute_cycles;
      } else {
        charged = instruction_timing(fx.compute_cycles, pending);
        pending = 0;
      }
      if (opt.collect_trace) {
        res.trace.push_back({i, in.op, fx.tile_cycles, fx.compute_cycles, 0,
                             charged});
      }
      os.total_cycles += charged;
      st.cycles_total += charged;
      st.cycles_by_class[cls] += charged;
      continue;
    }

    os.total_cycles += charged;
    st.cycles_total += charged;
    st.cycles_by_class[cls] += charged;
    if (opt.collect_trace) {
      const uint64_t mem =
          in.op == Opcode::LOAD || in.op == Opcode::STORE
              ? (in.flags & kFlagLoadSetReg) && in.op == Opcode::LOAD
                    ? 0
                    : hbm_transfer_cycles(in.imm)
              : 0;
      res.trace.push_back({i, in.op, 0, 0, mem, charged});
    }
  }

  if (pending > 0) {
    // The program ended on an unconsumed prefetch window.
    st.cycles_total += pending;
    st.by_opcode[static_cast<size_t>(Opcode::LOAD)].total_cycles += pending;
    st.cycles_by_class[pending_class] += pending;
    pending = 0;
  }

  res.energy =
      energy_model(st.hbm_read_bytes + st.hbm_write_bytes, st.buffer_bytes,
                   st.pe_ops);

  const auto out = plan.hbm.find("out");
  if (out == plan.hbm.end() || out->second.bytes != L * M * 4)
    throw PlanError("simulate: plan lacks a matching out symbol");
  res.output = Tensor({static_cast<int64_t>(L), static_cast<int64_t>(M)});
  hbm.read_bytes(out->second.addr,
                 reinterpret_cast<uint8_t*>(res.output.data.data()), L * M * 4);
  return res;
}

}  // namespace marca

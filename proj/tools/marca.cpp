// Command-line harness: calibrate the exp unit, lower models, assemble and
// disassemble programs, simulate, sweep sequence lengths, and compare tensors.
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "marca/approx.hpp"
#include "marca/assembler.hpp"
#include "marca/compiler.hpp"
#include "marca/config.hpp"
#include "marca/golden.hpp"
#include "marca/report.hpp"
#include "marca/simulator.hpp"
#include "marca/weights.hpp"

namespace {

using namespace marca;

struct RunSpec {
  std::string config_path;
  std::string preset = "130M";
  int seq_len = 0;    // 0 = keep config value
  int proxy_dim = 0;  // 0 = full width
  int layers = 0;     // 0 = keep config value
  uint64_t seed = 0;  // 0 = keep config value
  bool intra_bm = true;
  bool inter_bm = true;
  bool baseline_tensor_core = false;
  bool exact_kernels = false;
  bool strict_serial = false;
  std::string params_path;  // exp-unit parameters JSON
  uint64_t instr_cap = 10'000'000;

  MambaConfig make_config() const {
    MambaConfig cfg = config_path.empty() ? MambaConfig::preset(preset)
                                          : load_config(config_path);
    if (layers > 0) cfg.n_layers = layers;
    if (seq_len > 0) cfg.seq_len = seq_len;
    if (seed > 0) cfg.seed = seed;
    if (proxy_dim > 0) cfg.apply_proxy_dim(proxy_dim);
    cfg.finalize();
    return cfg;
  }
  ExpParams exp_params() const {
    return params_path.empty() ? ExpParams{} : load_exp_params(params_path);
  }
  LowerFlags lower_flags() const { return {intra_bm, inter_bm}; }
  SimOptions sim_options() const {
    SimOptions o;
    o.machine.baseline_tensor_core = baseline_tensor_core;
    o.machine.kernel_mode =
        exact_kernels ? KernelMode::Exact : KernelMode::Approx;
    o.strict_serial = strict_serial;
    return o;
  }
  RunInfo run_info(const MambaConfig& cfg) const {
    RunInfo ri;
    ri.model = config_path.empty() ? preset : config_path;
    ri.seq_len = cfg.seq_len;
    ri.proxy_dim = proxy_dim;
    ri.layers = cfg.n_layers;
    ri.intra_bm = intra_bm;
    ri.inter_bm = inter_bm;
    ri.baseline_tensor_core = baseline_tensor_core;
    ri.exact_kernels = exact_kernels;
    ri.strict_serial = strict_serial;
    return ri;
  }
};

void add_model_flags(CLI::App* cmd, RunSpec& spec) {
  cmd->add_option("--config", spec.config_path, "model config JSON");
  cmd->add_option("--preset", spec.preset,
                  "model preset: 130M, 370M, 790M, 1.4B, 2.8B");
  cmd->add_option("--seq-len", spec.seq_len, "sequence length override");
  cmd->add_option("--proxy-dim", spec.proxy_dim,
                  "shrink d_model for a desk-scale proxy run");
  cmd->add_option("--layers", spec.layers, "layer count override");
  cmd->add_option("--seed", spec.seed, "weights/input seed override");
  cmd->add_option("--params", spec.params_path, "exp-unit parameters JSON");
  cmd->add_option("--instr-cap", spec.instr_cap,
                  "refuse programs longer than this");
  cmd->add_flag("--intra-bm,!--no-intra-bm", spec.intra_bm,
                "tile linears against the on-chip buffer");
  cmd->add_flag("--inter-bm,!--no-inter-bm", spec.inter_bm,
                "keep scan state on chip across the scan loop");
  cmd->add_flag("--baseline-tensor-core", spec.baseline_tensor_core,
                "price element-wise work at tensor-core rates (16x)");
  cmd->add_flag("--exact-kernels", spec.exact_kernels,
                "libm exp/silu lanes instead of the shift-unit models");
  cmd->add_flag("--strict-serial", spec.strict_serial,
                "no compute/prefetch overlap: sum all phases");
}

void write_or_print(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    if (text.empty() || text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + out_path);
  f << text;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_trace_csv(const std::vector<InstrTrace>& trace,
                     const BufferPlan& plan, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path);
  f << "index,opcode,node,tile_cycles,compute_cycles,memory_cycles,"
       "charged_cycles\n";
  for (const auto& t : trace) {
    const std::string node =
        t.index < plan.instr_node.size() ? plan.instr_node[t.index] : "";
    f << t.index << "," << opcode_name(t.op) << "," << node << ","
      << t.tile_cycles << "," << t.compute_cycles << "," << t.memory_cycles
      << "," << t.charged_cycles << "\n";
  }
}

int cmd_calibrate(const std::string& out_path) {
  const CalibrationResult r = calibrate_exp_bias();
  std::cout << "uncalibrated mean rel err  " << r.err_uncalibrated << "\n"
            << "calibrated mean rel err    " << r.err_calibrated << "\n"
            << "bias_b " << r.params.bias_b << "  c " << r.params.c << "\n";
  if (!out_path.empty()) {
    save_exp_params(r.params, out_path, r.err_uncalibrated, r.err_calibrated);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_assemble(const std::string& in_path, const std::string& out_path) {
  const Program p = assemble(read_file(in_path));
  if (out_path.empty()) throw IoError("assemble needs --out");
  save_program(p, out_path);
  std::cout << "wrote " << p.code.size() << " instructions to " << out_path
            << "\n";
  return 0;
}

int cmd_disassemble(const std::string& in_path, const std::string& out_path) {
  const Program p = load_program(in_path);
  write_or_print(disassemble(p), out_path);
  return 0;
}

int cmd_lower(const RunSpec& spec, const std::string& out_path,
              const std::string& plan_path) {
  const MambaConfig cfg = spec.make_config();
  const MambaWeights w = generate_weights(cfg);
  const CompiledModel cm =
      lower(cfg, w, spec.lower_flags(), spec.exp_params(), spec.instr_cap);
  std::cout << plan_summary(cm.plan);
  if (!out_path.empty()) {
    save_program(cm.program, out_path);
    std::cout << "wrote program to " << out_path << "\n";
  }
  if (!plan_path.empty()) {
    write_or_print(plan_to_json(cm.plan) + "\n", plan_path);
    std::cout << "wrote plan to " << plan_path << "\n";
  }
  return 0;
}

int cmd_simulate(const RunSpec& spec, const std::string& out_path,
                 const std::string& trace_path, const std::string& dump_path) {
  const MambaConfig cfg = spec.make_config();
  const TestBundle tb = make_test_bundle(cfg);
  const CompiledModel cm = lower(cfg, tb.weights, spec.lower_flags(),
                                 spec.exp_params(), spec.instr_cap);
  SimOptions opt = spec.sim_options();
  opt.collect_trace = !trace_path.empty();
  const SimResult res = simulate(cm, cfg, tb.input, opt);
  const Report rep = make_report(res.stats, res.energy, spec.run_info(cfg));
  write_or_print(report_to_json(rep) + "\n", out_path);
  if (!trace_path.empty()) write_trace_csv(res.trace, cm.plan, trace_path);
  if (!dump_path.empty()) save_tensor(res.output, dump_path);
  return 0;
}

int cmd_golden(const RunSpec& spec, const std::string& reduction,
               const std::string& out_path) {
  const MambaConfig cfg = spec.make_config();
  const TestBundle tb = make_test_bundle(cfg);
  GoldenOptions opt;
  if (reduction == "seq")
    opt.reduction = ReductionOrder::Sequential;
  else if (reduction == "tree16")
    opt.reduction = ReductionOrder::Tree16;
  else
    throw IoError("unknown --reduction (expected seq or tree16)");
  const Tensor y = mamba_forward(tb.input, tb.weights, cfg, opt);
  if (out_path.empty()) throw IoError("golden needs --out");
  save_tensor(y, out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                double tol) {
  const Tensor a = load_tensor(a_path);
  const Tensor b = load_tensor(b_path);
  const double mad = max_abs_diff(a, b);
  const double mrd = max_rel_diff(a, b);
  size_t mismatches = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) ++mismatches;
  std::cout << "max abs diff   " << mad << "\n"
            << "max rel diff   " << mrd << "\n"
            << "mismatches     " << mismatches << " / " << a.data.size()
            << "\n";
  const bool pass = mrd <= tol;
  std::cout << (pass ? "PASS" : "FAIL") << " (tol " << tol << ")\n";
  return pass ? 0 : 1;
}

int cmd_sweep(RunSpec spec, std::vector<int> lens, const std::string& out_path) {
  if (lens.empty()) throw IoError("sweep needs --lens");
  for (size_t i = 1; i < lens.size(); ++i)
    if (lens[i] <= lens[i - 1])
      throw IoError("sweep lengths must be strictly ascending");
  std::ostringstream csv;
  csv << "seq_len,cycles_rcu,cycles_baseline,speedup,ew_share_baseline,"
         "share_linear,share_ew1,share_ew2,share_nonlinear,share_norm,"
         "hbm_read_bytes,hbm_write_bytes,buffer_bytes,energy_pj_rcu\n";
  for (int L : lens) {
    RunSpec point = spec;
    point.seq_len = L;
    const MambaConfig cfg = point.make_config();
    const TestBundle tb = make_test_bundle(cfg);
    const CompiledModel cm = lower(cfg, tb.weights, point.lower_flags(),
                                   point.exp_params(), point.instr_cap);

    SimOptions rcu = point.sim_options();
    rcu.machine.baseline_tensor_core = false;
    const SimResult r_rcu = simulate(cm, cfg, tb.input, rcu);

    SimOptions base = rcu;
    base.machine.baseline_tensor_core = true;
    const SimResult r_base = simulate(cm, cfg, tb.input, base);

    const Report rep =
        make_report(r_base.stats, r_base.energy, point.run_info(cfg));
    const auto share = rep.class_share();
    const double ew_share =
        share.at("ew1") + share.at("ew2") + share.at("nonlinear");
    const double speedup = static_cast<double>(r_base.stats.cycles_total) /
                           static_cast<double>(r_rcu.stats.cycles_total);
    csv.precision(10);
    csv << L << "," << r_rcu.stats.cycles_total << ","
        << r_base.stats.cycles_total << "," << speedup << "," << ew_share
        << "," << share.at("linear") << "," << share.at("ew1") << ","
        << share.at("ew2") << "," << share.at("nonlinear") << ","
        << share.at("norm") << "," << r_rcu.stats.hbm_read_bytes << ","
        << r_rcu.stats.hbm_write_bytes << "," << r_rcu.stats.buffer_bytes
        << "," << r_rcu.energy.total() << "\n";
  }
  write_or_print(csv.str(), out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MARCA accelerator model: compiler, simulator, and tooling"};
  app.require_subcommand(1);

  RunSpec spec;
  std::string out_path, plan_path, trace_path, dump_path, reduction = "seq";
  std::string in_path, a_path, b_path;
  std::vector<int> lens;
  double tol = 1e-4;

  CLI::App* c_cal = app.add_subcommand(
      "calibrate-exp", "calibrate the exp shift-unit bias parameters");
  c_cal->add_option("--out", out_path, "write calibrated parameters JSON");

  CLI::App* c_asm = app.add_subcommand("assemble", "assemble text to binary");
  c_asm->add_option("input", in_path, "assembly source")->required();
  c_asm->add_option("--out", out_path, "output binary program")->required();

  CLI::App* c_dis =
      app.add_subcommand("disassemble", "disassemble binary to text");
  c_dis->add_option("input", in_path, "binary program")->required();
  c_dis->add_option("--out", out_path, "output text (default stdout)");

  CLI::App* c_low = app.add_subcommand(
      "lower", "lower a model to a program and a buffer plan");
  add_model_flags(c_low, spec);
  c_low->add_option("--out", out_path, "write the binary program");
  c_low->add_option("--plan-out", plan_path, "write the buffer plan JSON");

  CLI::App* c_sim =
      app.add_subcommand("simulate", "lower and run a model end to end");
  add_model_flags(c_sim, spec);
  c_sim->add_option("--out", out_path, "report JSON path (default stdout)");
  c_sim->add_option("--trace", trace_path, "per-instruction trace CSV");
  c_sim->add_option("--dump-output", dump_path, "write the output tensor");

  CLI::App* c_swp =
      app.add_subcommand("sweep", "simulate across sequence lengths");
  add_model_flags(c_swp, spec);
  c_swp->add_option("--lens", lens, "ascending sequence lengths")
      ->delimiter(',')
      ->required();
  c_swp->add_option("--out", out_path, "CSV path (default stdout)");

  CLI::App* c_cmp =
      app.add_subcommand("compare", "numeric diff of two tensor files");
  c_cmp->add_option("a", a_path, "first tensor")->required();
  c_cmp->add_option("b", b_path, "second tensor")->required();
  c_cmp->add_option("--tol", tol, "max relative difference to pass");

  CLI::App* c_gld = app.add_subcommand(
      "golden", "run the software reference model on the same bundle");
  add_model_flags(c_gld, spec);
  c_gld->add_option("--reduction", reduction, "dot order: seq or tree16");
  c_gld->add_option("--out", out_path, "output tensor path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_cal->parsed()) return cmd_calibrate(out_path);
    if (c_asm->parsed()) return cmd_assemble(in_path, out_path);
    if (c_dis->parsed()) return cmd_disassemble(in_path, out_path);
    if (c_low->parsed()) return cmd_lower(spec, out_path, plan_path);
    if (c_sim->parsed()) return cmd_simulate(spec, out_path, trace_path, dump_path);
    if (c_swp->parsed()) return cmd_sweep(spec, lens, out_path);
    if (c_cmp->parsed()) return cmd_compare(a_path, b_path, tol);
    if (c_gld->parsed()) return cmd_golden(spec, reduction, out_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

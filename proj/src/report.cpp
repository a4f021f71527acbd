#include "marca/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "marca/graph.hpp"
#include "marca/isa.hpp"

namespace marca {

const std::array<const char*, 5> kClassNames = {"linear", "ew1", "ew2",
                                                "nonlinear", "norm"};

std::map<std::string, double> Report::class_share() const {
  std::map<std::string, double> s;
  for (const char* name : kClassNames) {
    const auto it = cycles_by_class.find(name);
    const uint64_t c = it == cycles_by_class.end() ? 0 : it->second;
    s[name] = cycles_total == 0
                  ? 0.0
                  : static_cast<double>(c) / static_cast<double>(cycles_total);
  }
  return s;
}

Report make_report(const TrafficStats& st, const EnergyBreakdown& e,
                   const RunInfo& run) {
  Report r;
  r.run = run;
  r.instructions = st.instructions;
  r.cycles_total = st.cycles_total;
  for (int op = 0; op < kNumOpcodes; ++op) {
    const OpcodeStats& os = st.by_opcode[static_cast<size_t>(op)];
    if (os.count == 0) continue;
    r.cycles_by_opcode[opcode_name(static_cast<Opcode>(op))] = os.total_cycles;
  }
  for (size_t c = 0; c < kClassNames.size(); ++c)
    r.cycles_by_class[kClassNames[c]] = st.cycles_by_class[c];
  r.hbm_read_bytes = st.hbm_read_bytes;
  r.hbm_write_bytes = st.hbm_write_bytes;
  r.buffer_bytes = st.buffer_bytes;
  r.pe_ops = st.pe_ops;
  r.energy_hbm_pj = e.hbm_pj;
  r.energy_buffer_pj = e.buffer_pj;
  r.energy_pe_pj = e.pe_pj;
  r.energy_total_pj = e.total();
  return r;
}

namespace {

nlohmann::ordered_json run_to_json(const RunInfo& run) {
  nlohmann::ordered_json j;
  j["model"] = run.model;
  j["seq_len"] = run.seq_len;
  j["proxy_dim"] = run.proxy_dim;
  j["layers"] = run.layers;
  j["intra_bm"] = run.intra_bm;
  j["inter_bm"] = run.inter_bm;
  j["baseline_tensor_core"] = run.baseline_tensor_core;
  j["exact_kernels"] = run.exact_kernels;
  j["strict_serial"] = run.strict_serial;
  return j;
}

void expect_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                 const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key))
      throw IoError("report: unknown field \"" + key + "\" in " + where);
  }
}

template <typename T>
T require(const nlohmann::json& j, const std::string& key,
          const std::string& where) {
  if (!j.contains(key))
    throw IoError("report: missing field \"" + key + "\" in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IoError("report: field \"" + key + "\" in " + where +
                  " has the wrong type");
  }
}

}  // namespace

std::string report_to_json(const Report& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = r.schema_version;
  j["run"] = run_to_json(r.run);
  j["instructions"] = r.instructions;
  j["cycles_total"] = r.cycles_total;
  j["cycles_by_opcode"] = r.cycles_by_opcode;
  j["cycles_by_class"] = r.cycles_by_class;
  nlohmann::ordered_json shares;
  for (const auto& [name, share] : r.class_share()) shares[name] = share;
  j["class_share"] = std::move(shares);
  j["hbm_read_bytes"] = r.hbm_read_bytes;
  j["hbm_write_bytes"] = r.hbm_write_bytes;
  j["buffer_bytes"] = r.buffer_bytes;
  j["pe_ops"] = r.pe_ops;
  j["energy_pj"] = {{"hbm", r.energy_hbm_pj},
                    {"buffer", r.energy_buffer_pj},
                    {"pe", r.energy_pe_pj},
                    {"total", r.energy_total_pj}};
  return j.dump(2);
}

Report report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("report: invalid JSON: ") + e.what());
  }
  expect_keys(j,
              {"schema_version", "run", "instructions", "cycles_total",
               "cycles_by_opcode", "cycles_by_class", "class_share",
               "hbm_read_bytes", "hbm_write_bytes", "buffer_bytes", "pe_ops",
               "energy_pj"},
              "report");
  Report r;
  r.schema_version = require<int>(j, "schema_version", "report");
  if (r.schema_version != 1)
    throw IoError("report: unsupported schema_version " +
                  std::to_string(r.schema_version));

  const auto& run = j.at("run");
  expect_keys(run,
              {"model", "seq_len", "proxy_dim", "layers", "intra_bm",
               "inter_bm", "baseline_tensor_core", "exact_kernels",
               "strict_serial"},
              "run");
  r.run.model = require<std::string>(run, "model", "run");
  r.run.seq_len = require<int>(run, "seq_len", "run");
  r.run.proxy_dim = require<int>(run, "proxy_dim", "run");
  r.run.layers = require<int>(run, "layers", "run");
  r.run.intra_bm = require<bool>(run, "intra_bm", "run");
  r.run.inter_bm = require<bool>(run, "inter_bm", "run");
  r.run.baseline_tensor_core = require<bool>(run, "baseline_tensor_core", "run");
  r.run.exact_kernels = require<bool>(run, "exact_kernels", "run");
  r.run.strict_serial = require<bool>(run, "strict_serial", "run");

  r.instructions = require<uint64_t>(j, "instructions", "report");
  r.cycles_total = require<uint64_t>(j, "cycles_total", "report");
  r.cycles_by_opcode =
      require<std::map<std::string, uint64_t>>(j, "cycles_by_opcode", "report");
  r.cycles_by_class =
      require<std::map<std::string, uint64_t>>(j, "cycles_by_class", "report");
  for (const auto& [name, c] : r.cycles_by_class) {
    (void)c;
    if (std::find_if(kClassNames.begin(), kClassNames.end(),
                     [&](const char* k) { return name == k; }) ==
        kClassNames.end())
      throw IoError("report: unknown cycle class \"" + name + "\"");
  }
  // Shares are derived data; verify they are consistent rather than trusting
  // the file.
  const auto shares =
      require<std::map<std::string, double>>(j, "class_share", "report");
  for (const auto& [name, share] : r.class_share()) {
    const auto it = shares.find(name);
    if (it == shares.end() || std::abs(it->second - share) > 1e-9)
      throw IoError("report: class_share entry \"" + name +
                    "\" does not match cycles_by_class");
  }
  r.hbm_read_bytes = require<uint64_t>(j, "hbm_read_bytes", "report");
  r.hbm_write_bytes = require<uint64_t>(j, "hbm_write_bytes", "report");
  r.buffer_bytes = require<uint64_t>(j, "buffer_bytes", "report");
  r.pe_ops = require<uint64_t>(j, "pe_ops", "report");
  const auto& e = j.at("energy_pj");
  expect_keys(e, {"hbm", "buffer", "pe", "total"}, "energy_pj");
  r.energy_hbm_pj = require<double>(e, "hbm", "energy_pj");
  r.energy_buffer_pj = require<double>(e, "buffer", "energy_pj");
  r.energy_pe_pj = require<double>(e, "pe", "energy_pj");
  r.energy_total_pj = require<double>(e, "total", "energy_pj");
  return r;
}

namespace {

template <typename T>
void diff_line(std::ostringstream& os, const std::string& name, T a, T b) {
  if (a == b) return;
  os << "  " << name << ": " << a << " -> " << b;
  if constexpr (std::is_integral_v<T>) {
    if (a != 0)
      os << "  (" << static_cast<double>(b) / static_cast<double>(a) << "x)";
  }
  os << "\n";
}

}  // namespace

std::string report_diff(const Report& a, const Report& b) {
  std::ostringstream os;
  os.precision(6);
  diff_line(os, "instructions", a.instructions, b.instructions);
  diff_line(os, "cycles_total", a.cycles_total, b.cycles_total);
  std::set<std::string> ops;
  for (const auto& [k, v] : a.cycles_by_opcode) ops.insert(k);
  for (const auto& [k, v] : b.cycles_by_opcode) ops.insert(k);
  for (const auto& op : ops) {
    const auto ai = a.cycles_by_opcode.find(op);
    const auto bi = b.cycles_by_opcode.find(op);
    diff_line(os, "cycles[" + op + "]",
              ai == a.cycles_by_opcode.end() ? 0 : ai->second,
              bi == b.cycles_by_opcode.end() ? 0 : bi->second);
  }
  for (const char* cls : kClassNames) {
    const auto ai = a.cycles_by_class.find(cls);
    const auto bi = b.cycles_by_class.find(cls);
    diff_line(os, std::string("class[") + cls + "]",
              ai == a.cycles_by_class.end() ? 0 : ai->second,
              bi == b.cycles_by_class.end() ? 0 : bi->second);
  }
  diff_line(os, "hbm_read_bytes", a.hbm_read_bytes, b.hbm_read_bytes);
  diff_line(os, "hbm_write_bytes", a.hbm_write_bytes, b.hbm_write_bytes);
  diff_line(os, "buffer_bytes", a.buffer_bytes, b.buffer_bytes);
  diff_line(os, "pe_ops", a.pe_ops, b.pe_ops);
  diff_line(os, "energy_total_pj", a.energy_total_pj, b.energy_total_pj);
  const std::string s = os.str();
  return s.empty() ? "  (identical)\n" : s;
}

}  // namespace marca

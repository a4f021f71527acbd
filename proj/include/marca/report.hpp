#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "marca/memory.hpp"

namespace marca {

// Labels describing how a run was produced. No wall-clock data: reports for
// identical inputs must be byte-identical.
struct RunInfo {
  std::string model;  // preset or config label
  int seq_len = 0;
  int proxy_dim = 0;  // 0 = full-size dims
  int layers = 0;
  bool intra_bm = true;
  bool inter_bm = true;
  bool baseline_tensor_core = false;
  bool exact_kernels = false;
  bool strict_serial = false;
};

struct Report {
  int schema_version = 1;
  RunInfo run;
  uint64_t instructions = 0;
  uint64_t cycles_total = 0;
  std::map<std::string, uint64_t> cycles_by_opcode;  // charged totals
  std::map<std::string, uint64_t> cycles_by_class;
  uint64_t hbm_read_bytes = 0;
  uint64_t hbm_write_bytes = 0;
  uint64_t buffer_bytes = 0;
  uint64_t pe_ops = 0;
  double energy_hbm_pj = 0.0;
  double energy_buffer_pj = 0.0;
  double energy_pe_pj = 0.0;
  double energy_total_pj = 0.0;

  // Fractions of cycles_total per class; they sum to 1 (within 1e-9) when
  // cycles_total > 0.
  std::map<std::string, double> class_share() const;
};

extern const std::array<const char*, 5> kClassNames;

Report make_report(const TrafficStats& st, const EnergyBreakdown& e,
                   const RunInfo& run);
std::string report_to_json(const Report& r);
// Strict parser: schema_version must match and unknown keys are rejected.
Report report_from_json(const std::string& text);
// Human-readable field-by-field comparison (counters and energies).
std::string report_diff(const Report& a, const Report& b);

}  // namespace marca

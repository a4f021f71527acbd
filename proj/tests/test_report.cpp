#include <string>

#include "doctest.h"

#include <nlohmann/json.hpp>

#include "marca/report.hpp"

using namespace marca;

namespace {

Report sample_report() {
  TrafficStats st;
  st.instructions = 42;
  st.cycles_total = 1000;
  st.by_opcode[static_cast<size_t>(Opcode::LIN)] = {5, 600, 640, 0, 700};
  st.by_opcode[static_cast<size_t>(Opcode::EWA)] = {7, 40, 54, 0, 60};
  st.by_opcode[static_cast<size_t>(Opcode::LOAD)] = {20, 0, 0, 300, 240};
  st.cycles_by_class = {700, 200, 50, 30, 20};
  st.hbm_read_bytes = 4096;
  st.hbm_write_bytes = 1024;
  st.buffer_bytes = 8192;
  st.pe_ops = 100000;
  RunInfo run;
  run.model = "130M";
  run.seq_len = 64;
  run.proxy_dim = 64;
  run.layers = 1;
  run.exact_kernels = true;
  return make_report(st, energy_model(5120, 8192, 100000), run);
}

}  // namespace

TEST_CASE("report survives a JSON round trip") {
  const Report r = sample_report();
  const std::string text = report_to_json(r);
  const Report q = report_from_json(text);
  CHECK(q.schema_version == 1);
  CHECK(q.run.model == r.run.model);
  CHECK(q.run.seq_len == r.run.seq_len);
  CHECK(q.run.exact_kernels == r.run.exact_kernels);
  CHECK(q.run.strict_serial == r.run.strict_serial);
  CHECK(q.instructions == r.instructions);
  CHECK(q.cycles_total == r.cycles_total);
  CHECK(q.cycles_by_opcode == r.cycles_by_opcode);
  CHECK(q.cycles_by_class == r.cycles_by_class);
  CHECK(q.hbm_read_bytes == r.hbm_read_bytes);
  CHECK(q.hbm_write_bytes == r.hbm_write_bytes);
  CHECK(q.buffer_bytes == r.buffer_bytes);
  CHECK(q.pe_ops == r.pe_ops);
  CHECK(q.energy_total_pj == r.energy_total_pj);
  // Byte-identical re-serialization: reports are diffable artifacts.
  CHECK(report_to_json(q) == text);
}

TEST_CASE("the report schema is closed") {
  const std::string text = report_to_json(sample_report());
  auto mutate = [&](auto&& f) {
    nlohmann::json j = nlohmann::json::parse(text);
    f(j);
    return j.dump();
  };

  CHECK_THROWS_AS(
      report_from_json(mutate([](nlohmann::json& j) { j["vendor"] = "x"; })),
      IoError);
  CHECK_THROWS_AS(report_from_json(mutate([](nlohmann::json& j) {
                    j["run"]["hostname"] = "deskside";
                  })),
                  IoError);
  CHECK_THROWS_AS(report_from_json(mutate([](nlohmann::json& j) {
                    j["energy_pj"]["joules"] = 1.0;
                  })),
                  IoError);
  CHECK_THROWS_AS(report_from_json(mutate([](nlohmann::json& j) {
                    j["schema_version"] = 2;
                  })),
                  IoError);
  CHECK_THROWS_AS(report_from_json(mutate([](nlohmann::json& j) {
                    j.erase("cycles_total");
                  })),
                  IoError);
  CHECK_THROWS_AS(report_from_json(mutate([](nlohmann::json& j) {
                    j["cycles_by_class"]["alu"] = 1;
                  })),
                  IoError);
  CHECK_THROWS_AS(report_from_json("not json at all"), IoError);
}

TEST_CASE("derived class shares are validated, not trusted") {
  const Report r = sample_report();
  const auto shares = r.class_share();
  double total = 0.0;
  for (const auto& [name, s] : shares) total += s;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(shares.at("linear") == doctest::Approx(0.7).epsilon(1e-12));

  nlohmann::json j = nlohmann::json::parse(report_to_json(r));
  j["class_share"]["linear"] = 0.9;  // inconsistent with cycles_by_class
  CHECK_THROWS_AS(report_from_json(j.dump()), IoError);
}

TEST_CASE("report diff prints changed counters or calls them identical") {
  const Report a = sample_report();
  CHECK(report_diff(a, a) == "  (identical)\n");
  Report b = a;
  b.cycles_total = 2000;
  b.hbm_read_bytes = 8192;
  const std::string d = report_diff(a, b);
  CHECK(d.find("cycles_total: 1000 -> 2000") != std::string::npos);
  CHECK(d.find("(2x)") != std::string::npos);
  CHECK(d.find("hbm_read_bytes") != std::string::npos);
  CHECK(d.find("buffer_bytes") == std::string::npos);  // unchanged
}

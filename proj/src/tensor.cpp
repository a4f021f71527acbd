#include "marca/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace marca {

Tensor::Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw DimError("negative tensor dimension");
    n *= d;
  }
  data.assign(static_cast<size_t>(n), 0.0f);
}

Tensor Tensor::full(std::vector<int64_t> s, float v) {
  Tensor t(std::move(s));
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

int64_t Tensor::numel() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

float& Tensor::at(int64_t r, int64_t c) {
  if (rank() != 2 || r < 0 || r >= shape[0] || c < 0 || c >= shape[1])
    throw DimError("tensor index out of range");
  return data[static_cast<size_t>(r * shape[1] + c)];
}

float Tensor::at(int64_t r, int64_t c) const {
  return const_cast<Tensor*>(this)->at(r, c);
}

bool Tensor::all_finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor slice_cols(const Tensor& t, int64_t c0, int64_t c1) {
  if (t.rank() != 2 || c0 < 0 || c1 < c0 || c1 > t.shape[1])
    throw DimError("bad column slice");
  Tensor out({t.shape[0], c1 - c0});
  for (int64_t r = 0; r < t.shape[0]; ++r)
    std::memcpy(out.row(r), t.row(r) + c0, static_cast<size_t>(c1 - c0) * sizeof(float));
  return out;
}

void save_tensor(const Tensor& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!f) throw IoError("short write: " + path);

  nlohmann::json j;
  j["shape"] = t.shape;
  j["dtype"] = "f32";
  j["order"] = "row-major";
  std::ofstream s(path + ".json");
  if (!s) throw IoError("cannot open for write: " + path + ".json");
  s << j.dump(2) << "\n";
}

Tensor load_tensor(const std::string& path) {
  std::ifstream s(path + ".json");
  if (!s) throw IoError("missing sidecar: " + path + ".json");
  nlohmann::json j;
  s >> j;
  if (j.value("dtype", "") != "f32") throw IoError("unsupported dtype in " + path + ".json");
  if (j.value("order", "") != "row-major") throw IoError("unsupported order in " + path + ".json");
  Tensor t(j.at("shape").get<std::vector<int64_t>>());

  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(float)))
    throw IoError("payload size does not match sidecar shape: " + path);
  return t;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimError("max_abs_diff: shape mismatch");
  float m = 0.0f;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

float max_rel_diff(const Tensor& a, const Tensor& b, float denom_floor) {
  if (!a.same_shape(b)) throw DimError("max_rel_diff: shape mismatch");
  float m = 0.0f;
  for (size_t i = 0; i < a.data.size(); ++i) {
    float den = std::max({std::fabs(a.data[i]), std::fabs(b.data[i]), denom_floor});
    m = std::max(m, std::fabs(a.data[i] - b.data[i]) / den);
  }
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

}  // namespace marca

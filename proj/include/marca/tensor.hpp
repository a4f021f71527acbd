#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marca/common.hpp"

namespace marca {

// Dense row-major FP32 tensor. Deliberately minimal: the simulator needs
// exact control over every arithmetic op, so there is no expression layer.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s);

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, float v);

  int64_t numel() const;
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  int64_t dim(int64_t i) const { return shape.at(static_cast<size_t>(i)); }

  // 2-D accessors (row-major). Bounds are the caller's problem in hot loops;
  // at() checks.
  float& operator()(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  float operator()(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }
  float& at(int64_t r, int64_t c);
  float at(int64_t r, int64_t c) const;

  const float* row(int64_t r) const { return data.data() + r * shape[1]; }
  float* row(int64_t r) { return data.data() + r * shape[1]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

// Column slice [c0, c1) of a 2-D tensor, copied out contiguously.
Tensor slice_cols(const Tensor& t, int64_t c0, int64_t c1);

// Raw little-endian FP32 payload at `path`, sidecar JSON descriptor at
// `path` + ".json" with {shape, dtype, order}.
void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

// Max |a-b| over all elements; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);
// Max |a-b| / max(|a|, |b|, denom_floor).
float max_rel_diff(const Tensor& a, const Tensor& b, float denom_floor = 1e-6f);
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace marca

#include "marca/memory.hpp"

#include <cstring>

namespace marca {

BufferPool::BufferPool(uint64_t capacity) : bytes_(capacity, 0) {}

void BufferPool::check(uint64_t addr, uint64_t n) const {
  if (addr + n > bytes_.size() || addr + n < addr)
    throw PlanError("buffer access out of range: addr=" + std::to_string(addr) +
                    " size=" + std::to_string(n));
}

void BufferPool::write_bytes(uint64_t addr, const uint8_t* src, uint64_t n) {
  check(addr, n);
  std::memcpy(bytes_.data() + addr, src, n);
}

void BufferPool::read_bytes(uint64_t addr, uint8_t* dst, uint64_t n) const {
  check(addr, n);
  std::memcpy(dst, bytes_.data() + addr, n);
}

float BufferPool::load_f32(uint64_t addr) const {
  float v;
  read_bytes(addr, reinterpret_cast<uint8_t*>(&v), 4);
  return v;
}

void BufferPool::store_f32(uint64_t addr, float v) {
  write_bytes(addr, reinterpret_cast<const uint8_t*>(&v), 4);
}

void BufferPool::fill(uint8_t v) {
  std::memset(bytes_.data(), v, bytes_.size());
}

const float* BufferPool::f32_view(uint64_t addr, uint64_t count) const {
  check(addr, count * 4);
  if (addr % 4 != 0)
    throw PlanError("misaligned f32 buffer access at " + std::to_string(addr));
  return reinterpret_cast<const float*>(bytes_.data() + addr);
}

float* BufferPool::f32_view(uint64_t addr, uint64_t count) {
  check(addr, count * 4);
  if (addr % 4 != 0)
    throw PlanError("misaligned f32 buffer access at " + std::to_string(addr));
  return reinterpret_cast<float*>(bytes_.data() + addr);
}

Hbm::Hbm(uint64_t capacity) : bytes_(capacity, 0) {}

void Hbm::check(uint64_t addr, uint64_t n) const {
  if (addr + n > bytes_.size() || addr + n < addr)
    throw PlanError("hbm access out of range: addr=" + std::to_string(addr) +
                    " size=" + std::to_string(n));
}

void Hbm::write_bytes(uint64_t addr, const uint8_t* src, uint64_t n) {
  check(addr, n);
  std::memcpy(bytes_.data() + addr, src, n);
}

void Hbm::read_bytes(uint64_t addr, uint8_t* dst, uint64_t n) const {
  check(addr, n);
  std::memcpy(dst, bytes_.data() + addr, n);
}

uint64_t TrafficStats::hbm_symbol_bytes(const std::string& sym) const {
  uint64_t b = 0;
  if (auto it = hbm_read_by_symbol.find(sym); it != hbm_read_by_symbol.end())
    b += it->second;
  if (auto it = hbm_write_by_symbol.find(sym); it != hbm_write_by_symbol.end())
    b += it->second;
  return b;
}

}  // namespace marca

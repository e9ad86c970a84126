#pragma once

#include "mcl/ndcore.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mcl {

// Framed binary container: 4-byte magic "MCL1", u32 LE version, then
// repeated records of (u32 LE name length, name bytes, u32 LE rank, u64 LE
// dims, float64 LE payload). Save/load round-trips are bit-exact.
struct ArrayRecord {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::uint64_t element_count() const;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  static constexpr char kConfigHashRecord[] = "meta/config_hash";

  std::vector<ArrayRecord> records;

  void add_scalar(const std::string& name, double value);
  void add_vector(const std::string& name, const FlatVector& v);
  void add_matrix(const std::string& name, const Matrix& m);
  void add_stack(const std::string& prefix, const LayerStack& stack);

  const ArrayRecord* find(const std::string& name) const;
  const ArrayRecord& require(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  FlatVector get_vector(const std::string& name) const;
  Matrix get_matrix(const std::string& name) const;
  LayerStack get_stack(const std::string& prefix) const;

  // Stored as the bit pattern of a single float64 record.
  void set_config_hash(std::uint64_t hash);
  std::uint64_t config_hash() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mcl

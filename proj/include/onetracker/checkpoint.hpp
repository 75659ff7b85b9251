#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "onetracker/optim.hpp"

namespace onetracker {

enum class Dtype : uint8_t { F32 = 0, F64 = 1 };

struct CheckpointEntry {
  std::string name;
  Dtype dtype = Dtype::F64;
  Shape shape;
  std::vector<double> data;  // f32 entries hold float-rounded values
};

/// In-memory image of an OTKR file. Entries stay sorted by name.
class Checkpoint {
 public:
  void add(const std::string& name, const Tensor& t, Dtype dtype = Dtype::F64);
  void add_scalar(const std::string& name, double value, Dtype dtype = Dtype::F64);
  const CheckpointEntry* find(const std::string& name) const;
  const std::vector<CheckpointEntry>& entries() const { return entries_; }

 private:
  std::vector<CheckpointEntry> entries_;
};

// Wire format: "OTKR", version u32, entry count u32, then per entry
// name_len u32 + name + dtype u8 + rank u32 + dims u32 each + LE payload;
// a CRC-32 of all preceding bytes closes the file.
void save_checkpoint(const Checkpoint& ck, std::ostream& out);
void save_checkpoint_file(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint_file(const std::string& path);

// Bytes save_checkpoint would emit, via a counting stream (nothing written).
uint64_t checkpoint_byte_size(const Checkpoint& ck);

// The CRC-32 stored in the trailing four bytes of a saved checkpoint file.
uint32_t checkpoint_stored_crc(const std::string& path);

Checkpoint snapshot_parameters(const std::vector<Parameter*>& params, Dtype dtype = Dtype::F64);
Checkpoint snapshot_trainable(const std::vector<Parameter*>& params, Dtype dtype = Dtype::F64);

/// Copies entries into matching parameters; names and shapes must line up
/// exactly. Entries under "meta." are ignored; with `trainable_only` the
/// checkpoint must cover exactly the non-frozen parameters.
void load_into(const std::vector<Parameter*>& params, const Checkpoint& ck,
               bool trainable_only = false);

inline const char* kFoundationCrcKey = "meta.foundation_crc";

}  // namespace onetracker

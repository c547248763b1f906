#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cdanet/autodiff/tensor.hpp"
#include "cdanet/model/parameters.hpp"

namespace cdanet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Tensor value;
};

/// Binary layout, all integers and doubles little-endian:
///   "CDA1" | u32 version | u64 fingerprint | u64 record count |
///   per record: u32 name length | name | u32 rank | u64 dims... | f64 values...
struct CheckpointFile {
  std::uint64_t fingerprint = 0;
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(std::string_view name) const;
};

std::string encode_checkpoint(const CheckpointFile& file);
/// Throws CheckpointError on bad magic, unknown version or truncation,
/// naming the record being read.
CheckpointFile decode_checkpoint(std::string_view bytes);

void write_checkpoint(const CheckpointFile& file, const std::filesystem::path& path);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

/// Prefix of parameter records; other prefixes hold optimizer and trainer state.
inline constexpr std::string_view kParamPrefix = "param/";

void append_parameters(const ParameterStore& params, std::vector<CheckpointRecord>& out);
/// Copies parameter records into the store. Every parameter must be present
/// with the same shape; the first offending record is named in the error.
void restore_parameters(ParameterStore& params, const CheckpointFile& file);

}  // namespace cdanet

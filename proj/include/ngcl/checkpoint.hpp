#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "ngcl/trainer.hpp"

namespace ngcl {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Malformed or unsupported checkpoint. `offset` is the byte position where
/// reading failed.
class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

struct Checkpoint {
  std::string config_json;
  TrainState state;
};

/// Layout: "NGCL", u16 version, then sections of (4-byte tag, u64 length,
/// payload). Tags: CONF (JSON text), META, PARM, OPTE, OPTG. All integers and
/// floats little-endian. Written to a temporary file and renamed.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const std::string& config_json);
std::string encode_checkpoint(const TrainState& state, const std::string& config_json);

Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace ngcl

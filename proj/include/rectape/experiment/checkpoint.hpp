#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>

#include "rectape/error.hpp"
#include "rectape/models/model.hpp"

namespace rectape::experiment {

inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  enum class Code { kIo = 1, kBadMagic, kUnsupportedVersion, kTruncated, kMalformed };

  CheckpointError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct Checkpoint {
  std::string model_name;
  /// Canonical config text the model was trained with.
  std::string config_echo;
  ParamStore params;
};

/// Layout: "DREC" | u16 version | u32-prefixed model name | u32-prefixed
/// config echo | u32 tensor count | per tensor {u32-prefixed name, u8 rank,
/// u64 dims, f64 values}, all little-endian. Non-trainable tensors are
/// written with a leading '~' on the name.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const models::Model& model, const std::string& config_echo);
Checkpoint load_checkpoint(const std::string& path);

struct LoadedModel {
  std::unique_ptr<models::Model> model;
  std::string config_echo;
};
LoadedModel load_model(const std::string& path);

}  // namespace rectape::experiment

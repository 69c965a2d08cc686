#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "motionid/nn/models.hpp"

namespace motionid::nn {

// Binary container: "MIDM", version, model kind, config JSON, then named
// f32 blobs (name, shape, data) in visit order.
struct Checkpoint {
  std::string kind;  // "verification" | "pattern"
  std::string config_json;
  std::vector<std::pair<std::string, Tensor<float>>> params;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const VerificationModel& model);
void save_model(const std::filesystem::path& path, const PatternModel& model);
VerificationModel load_verification_model(const std::filesystem::path& path);
PatternModel load_pattern_model(const std::filesystem::path& path);

}  // namespace motionid::nn

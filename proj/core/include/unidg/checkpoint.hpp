#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "unidg/model.hpp"

namespace unidg {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  MlpEncoder encoder;
  LinearClassifier classifier;
  std::uint64_t seed = 0;
};

/// Line-oriented text container. Every double is written as a C99 hex float,
/// so load(save(x)) reproduces x bit for bit.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace unidg

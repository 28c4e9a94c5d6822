#pragma once

// Binary checkpoint container:
//   "SYMKANCK" | u32 version | u64 meta length | JSON metadata |
//   u64 count | raw doubles (parameters, then learnable values) | u64 FNV-1a
// The checksum covers every preceding byte. Files are written atomically.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "symkan/network.hpp"
#include "symkan/problems.hpp"

namespace symkan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointState {
  Network net;
  std::vector<LearnableScalar> learnables;
  std::int64_t step = 0;
  std::string config_text;  // effective run config (TOML); may be empty
};

void checkpoint_save(const std::filesystem::path& path, const Network& net,
                     std::span<const LearnableScalar> learnables, std::int64_t step,
                     const std::string& config_text = {});

// Throws LoadError for unreadable, truncated, corrupted or foreign files; the
// message names the detected version when the header was readable.
CheckpointState checkpoint_load(const std::filesystem::path& path);

}  // namespace symkan

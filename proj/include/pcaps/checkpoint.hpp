#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pcaps/parameter_store.hpp"

namespace pcaps {

inline constexpr int kCheckpointVersion = 1;

/// Parameters, optimizer state, and free-form metadata (configuration keys,
/// seeds, epoch).
///
/// File layout: a text preamble
///   PCAPS <version>
///   step <adam step>
///   meta <key> <value>
///   param <name> <trainable 0|1> <dim>...
///   end_header
/// followed by little-endian float32 blobs in preamble order: the value, then
/// Adam m and v for trainable entries.
struct Checkpoint {
  ParameterStore store;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const ParameterStore& store, const std::map<std::string, std::string>& metadata,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values, moments, and step from `src`; names and shapes must match
/// exactly, otherwise CheckpointShapeError.
void restore_into(ParameterStore& dst, const ParameterStore& src);

}  // namespace pcaps

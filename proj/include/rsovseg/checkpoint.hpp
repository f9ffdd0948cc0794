#pragma once

// Binary checkpoint: magic, JSON header (run config snapshot, iteration,
// training vocabulary, parameter names and shapes), raw little-endian
// doubles, and a trailing CRC-32 of everything before it.

#include <filesystem>
#include <memory>
#include <string>

#include "rsovseg/config.hpp"
#include "rsovseg/model.hpp"

namespace rsovseg {

struct Checkpoint {
  RunConfig config;
  long iteration = 0;
  std::unique_ptr<Model> model;
};

std::string serialize_checkpoint(const Model& model, const RunConfig& config, long iteration);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const RunConfig& config, long iteration);
/// Any structural or integrity problem raises DataError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rsovseg

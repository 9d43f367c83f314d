#pragma once

#include "dfdgcn/config.hpp"
#include "dfdgcn/model.hpp"
#include "dfdgcn/params.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace dfdgcn {

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
	ConfigText config; // full resolved run configuration
	ParameterStore params;
};

/// Binary layout: magic `DFDG`, u32 version, u64-length-prefixed canonical
/// config text, u64 array count, then per array: u64 name length, name,
/// u64 rank, u64 extents, little-endian f64 data. All integers little-endian.
void save_checkpoint(const std::filesystem::path &path, const ConfigText &config, const ParameterStore &params);
Checkpoint load_checkpoint(const std::filesystem::path &path);

/// Copies the checkpoint arrays into `model`, checking names and shapes.
void restore_parameters(DfdgcnModel &model, const ParameterStore &params);

/// Rebuilds the model described by the checkpoint's [model] section.
DfdgcnModel load_model(const Checkpoint &checkpoint, std::optional<PredefinedGraphs> predefined = std::nullopt);

} // namespace dfdgcn

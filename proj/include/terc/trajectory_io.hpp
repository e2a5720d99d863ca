#pragma once

#include <filesystem>
#include <iosfwd>

#include "json.hpp"
#include "terc/rl.hpp"

// Trajectory files: one JSON object per step,
//   {"ep":int,"t":int,"s":[...],"a":int-or-real,"r":real}
// plus a sidecar "<file>.meta.json" holding variable names, environment and
// agent configuration, seed and per-episode returns.
namespace terc {

void write_jsonl(const TrajectoryBatch& batch, std::ostream& out);
nlohmann::ordered_json trajectory_metadata(const TrajectoryBatch& batch);

// Rows from a JSONL stream. Without metadata, variables are named X1..Xn and
// the state/action kinds are inferred (integer-valued means discrete).
TrajectoryBatch read_jsonl(std::istream& in, const nlohmann::ordered_json* meta = nullptr);

std::filesystem::path metadata_path(const std::filesystem::path& trajectories);
void save_trajectories(const TrajectoryBatch& batch, const std::filesystem::path& path);
// Reads the sidecar when it exists.
TrajectoryBatch load_trajectories(const std::filesystem::path& path);

}  // namespace terc

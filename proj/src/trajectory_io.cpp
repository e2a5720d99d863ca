#include "terc/trajectory_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "terc/common.hpp"

namespace terc {

namespace {

bool is_integer_valued(double v) { return std::isfinite(v) && v == std::nearbyint(v) && std::abs(v) < 9e15; }

nlohmann::ordered_json number(double v, bool as_integer) {
  if (as_integer) return static_cast<std::int64_t>(std::llround(v));
  return v;
}

}  // namespace

void write_jsonl(const TrajectoryBatch& batch, std::ostream& out) {
  for (const TrajectoryRow& row : batch.rows) {
    nlohmann::ordered_json j;
    j["ep"] = row.episode;
    j["t"] = row.t;
    nlohmann::ordered_json s = nlohmann::ordered_json::array();
    for (double v : row.state) s.push_back(number(v, batch.discrete_state));
    j["s"] = std::move(s);
    if (row.action.size() == 1) {
      j["a"] = number(row.action[0], batch.discrete_actions);
    } else {
      nlohmann::ordered_json a = nlohmann::ordered_json::array();
      for (double v : row.action) a.push_back(number(v, batch.discrete_actions));
      j["a"] = std::move(a);
    }
    j["r"] = row.reward;
    out << j.dump() << '\n';
  }
}

nlohmann::ordered_json trajectory_metadata(const TrajectoryBatch& batch) {
  nlohmann::ordered_json j;
  j["format"] = "terc-trajectory";
  j["version"] = 1;
  j["variables"] = batch.variable_names;
  j["discrete_state"] = batch.discrete_state;
  j["discrete_actions"] = batch.discrete_actions;
  j["seed"] = batch.seed;
  j["env"] = batch.env;
  j["agent"] = batch.agent;
  j["notes"] = batch.notes;
  nlohmann::ordered_json episodes = nlohmann::ordered_json::array();
  for (const EpisodeSummary& e : batch.episodes) {
    episodes.push_back({{"ep", e.episode}, {"steps", e.steps}, {"reward", e.reward}});
  }
  j["episodes"] = std::move(episodes);
  return j;
}

TrajectoryBatch read_jsonl(std::istream& in, const nlohmann::ordered_json* meta) {
  TrajectoryBatch batch;
  bool all_integer_state = true;
  bool all_integer_action = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
      TrajectoryRow row;
      row.episode = j.at("ep").get<std::size_t>();
      row.t = j.at("t").get<std::size_t>();
      row.state = j.at("s").get<std::vector<double>>();
      const auto& a = j.at("a");
      row.action = a.is_array() ? a.get<std::vector<double>>() : std::vector<double>{a.get<double>()};
      row.reward = j.at("r").get<double>();
      for (double v : row.state) all_integer_state = all_integer_state && is_integer_valued(v);
      for (double v : row.action) all_integer_action = all_integer_action && is_integer_valued(v);
      if (!batch.rows.empty()) {
        const TrajectoryRow& prev = batch.rows.back();
        if (row.state.size() != prev.state.size()) {
          throw std::invalid_argument("state length changed");
        }
        if (row.episode < prev.episode || (row.episode == prev.episode && row.t <= prev.t)) {
          throw std::invalid_argument("rows must be ordered by episode and strictly increasing t");
        }
      }
      batch.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw std::invalid_argument("trajectory line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (batch.rows.empty()) {
    throw std::invalid_argument("trajectory file has no rows");
  }
  for (const TrajectoryRow& row : batch.rows) {
    if (batch.episodes.empty() || batch.episodes.back().episode != row.episode) {
      batch.episodes.push_back({row.episode, 0, 0.0});
    }
    batch.episodes.back().steps += 1;
    batch.episodes.back().reward += row.reward;
  }

  const std::size_t dim = batch.rows.front().state.size();
  if (meta) {
    batch.variable_names = meta->at("variables").get<std::vector<std::string>>();
    batch.discrete_state = meta->at("discrete_state").get<bool>();
    batch.discrete_actions = meta->at("discrete_actions").get<bool>();
    batch.seed = meta->value("seed", std::uint64_t{0});
    if (meta->contains("env")) batch.env = meta->at("env");
    if (meta->contains("agent")) batch.agent = meta->at("agent");
    if (meta->contains("notes")) batch.notes = meta->at("notes");
    if (batch.variable_names.size() != dim) {
      throw std::invalid_argument("metadata names " + std::to_string(batch.variable_names.size()) +
                                  " variables but rows have " + std::to_string(dim));
    }
  } else {
    for (std::size_t k = 0; k < dim; ++k) batch.variable_names.push_back("X" + std::to_string(k + 1));
    batch.discrete_state = all_integer_state;
    batch.discrete_actions = all_integer_action;
  }
  return batch;
}

std::filesystem::path metadata_path(const std::filesystem::path& trajectories) {
  std::filesystem::path p = trajectories;
  p += ".meta.json";
  return p;
}

void save_trajectories(const TrajectoryBatch& batch, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_jsonl(batch, out);
  }
  std::ofstream meta(metadata_path(path), std::ios::binary);
  if (!meta) throw std::runtime_error("cannot write " + metadata_path(path).string());
  meta << trajectory_metadata(batch).dump(2) << '\n';
}

TrajectoryBatch load_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const std::filesystem::path mp = metadata_path(path);
  if (std::filesystem::exists(mp)) {
    std::ifstream min(mp, std::ios::binary);
    const nlohmann::ordered_json meta = nlohmann::ordered_json::parse(min);
    return read_jsonl(in, &meta);
  }
  return read_jsonl(in);
}

}  // namespace terc

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "terc/envs.hpp"
#include "terc/rl.hpp"

// Run configuration files: INI-style sections of `key = value` lines.
// `#` and `;` start comments; blank lines are ignored.
//
//   [run]    seed, output
//   [env]    kind = secret_key | ipd | cartpole | pendulum | point_mass
//            plus the environment's parameters and an optional
//            keep = <comma-separated variable names>
//   [agent]  kind = q | ac | ppo, episodes (q, ac) or steps (ppo), and the
//            agent's hyperparameters
//
// Unknown sections and keys are errors naming `section.key`.
namespace terc {

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

class IniFile {
 public:
  static IniFile parse(std::istream& in);
  static IniFile load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, std::string value);
  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

  // "section.key=value" lines in sorted order; the input to the config hash.
  std::string canonical() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

// Typed accessors that name `section.key` in their errors and record which
// keys were read, so leftover keys can be reported as unknown.
class ConfigReader {
 public:
  explicit ConfigReader(const IniFile& ini) : ini_(ini) {}

  std::string text(const std::string& section, const std::string& key, const std::string& fallback);
  std::string required(const std::string& section, const std::string& key);
  double real(const std::string& section, const std::string& key, double fallback);
  std::uint64_t count(const std::string& section, const std::string& key, std::uint64_t fallback);
  bool flag(const std::string& section, const std::string& key, bool fallback);
  std::vector<std::string> list(const std::string& section, const std::string& key);

  // Throws ConfigError for any key or section that was never read.
  void reject_unknown(const std::set<std::string>& allowed_sections) const;

 private:
  const IniFile& ini_;
  std::set<std::pair<std::string, std::string>> used_;
};

struct EnvSpec {
  std::string kind;
  SecretKeyConfig secret_key;
  IpdConfig ipd;
  CartPoleConfig cartpole;
  PendulumConfig pendulum;
  std::uint64_t point_mass_seed = 0;
  std::vector<std::string> keep;  // empty: full state
};

enum class AgentKind { q, ac, ppo };
std::string_view to_string(AgentKind kind);

struct AgentSpec {
  AgentKind kind = AgentKind::q;
  std::size_t episodes = 0;  // q and ac
  std::size_t steps = 0;     // ppo
  QConfig q;
  AcConfig ac;
  PpoConfig ppo;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output;
  EnvSpec env;
  AgentSpec agent;
  IniFile source;           // after the seed override
  std::string config_hash;  // hex FNV-1a of source.canonical()
};

// Parses and validates a run configuration. `seed_override` (the TERC_SEED
// environment variable in the CLI) replaces run.seed before hashing.
RunConfig parse_run_config(const IniFile& ini, std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt);

// TERC_SEED as an unsigned integer, if set. Throws ConfigError when malformed.
std::optional<std::uint64_t> seed_from_environment();

// Builds the configured environment (projected when `keep` is set). The
// environment seed is derived from the run seed.
std::unique_ptr<Env> make_env(const RunConfig& config);

}  // namespace terc

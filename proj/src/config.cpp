#include "terc/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace terc {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string qualified(const std::string& section, const std::string& key) { return section + "." + key; }

}  // namespace

IniFile IniFile::parse(std::istream& in) {
  IniFile ini;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    const std::string body = trim(comment == std::string::npos ? line : line.substr(0, comment));
    if (body.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      ini.sections_[section];
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (section.empty()) throw ConfigError(where + "key '" + key + "' appears before any section");
    auto& keys = ini.sections_[section];
    if (keys.count(key)) throw ConfigError(where + "duplicate key " + qualified(section, key));
    keys[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return ini;
}

IniFile IniFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse(in);
}

bool IniFile::has(const std::string& section, const std::string& key) const { return get(section, key).has_value(); }

std::optional<std::string> IniFile::get(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void IniFile::set(const std::string& section, const std::string& key, std::string value) {
  sections_[section][key] = std::move(value);
}

std::string IniFile::canonical() const {
  std::string out;
  for (const auto& [section, keys] : sections_) {
    for (const auto& [key, value] : keys) out += qualified(section, key) + "=" + value + "\n";
  }
  return out;
}

std::string ConfigReader::text(const std::string& section, const std::string& key, const std::string& fallback) {
  used_.insert({section, key});
  return ini_.get(section, key).value_or(fallback);
}

std::string ConfigReader::required(const std::string& section, const std::string& key) {
  used_.insert({section, key});
  const auto v = ini_.get(section, key);
  if (!v || v->empty()) throw ConfigError("missing required setting " + qualified(section, key));
  return *v;
}

double ConfigReader::real(const std::string& section, const std::string& key, double fallback) {
  used_.insert({section, key});
  const auto v = ini_.get(section, key);
  if (!v) return fallback;
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size() || v->empty()) {
    throw ConfigError(qualified(section, key) + ": expected a number, got '" + *v + "'");
  }
  return out;
}

std::uint64_t ConfigReader::count(const std::string& section, const std::string& key, std::uint64_t fallback) {
  used_.insert({section, key});
  const auto v = ini_.get(section, key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size() || v->empty()) {
    throw ConfigError(qualified(section, key) + ": expected a non-negative integer, got '" + *v + "'");
  }
  return out;
}

bool ConfigReader::flag(const std::string& section, const std::string& key, bool fallback) {
  used_.insert({section, key});
  const auto v = ini_.get(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(qualified(section, key) + ": expected true or false, got '" + *v + "'");
}

std::vector<std::string> ConfigReader::list(const std::string& section, const std::string& key) {
  used_.insert({section, key});
  std::vector<std::string> out;
  const auto v = ini_.get(section, key);
  if (!v) return out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(qualified(section, key) + ": empty list entry");
    out.push_back(item);
  }
  return out;
}

void ConfigReader::reject_unknown(const std::set<std::string>& allowed_sections) const {
  for (const auto& [section, keys] : ini_.sections()) {
    if (!allowed_sections.count(section)) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : keys) {
      if (!used_.count({section, key})) throw ConfigError("unknown config key " + qualified(section, key));
    }
  }
}

std::string_view to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::q: return "q";
    case AgentKind::ac: return "ac";
    case AgentKind::ppo: return "ppo";
  }
  return "q";
}

namespace {

neural::OptimKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return neural::OptimKind::adam;
  if (name == "sgd") return neural::OptimKind::sgd;
  throw ConfigError("agent.optimizer: expected adam or sgd, got '" + name + "'");
}

EnvSpec parse_env(ConfigReader& r, std::uint64_t seed) {
  EnvSpec e;
  e.kind = r.required("env", "kind");
  if (e.kind == "secret_key") {
    e.secret_key.keys = r.count("env", "keys", 10);
    e.secret_key.seed = seed;
    for (const std::string& s : r.list("env", "secret")) {
      std::size_t idx = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), idx);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("env.secret: expected key positions, got '" + s + "'");
      }
      e.secret_key.secret_indices.push_back(idx);
    }
  } else if (e.kind == "ipd") {
    e.ipd.opponent_n = r.count("env", "opponent_n", 3);
    e.ipd.history = r.count("env", "history", 2);
    e.ipd.rounds = r.count("env", "rounds", 100);
    e.ipd.continuing = r.flag("env", "continuing", true);
    e.ipd.payoff[0][0] = r.real("env", "reward_cc", 2.0);
    e.ipd.payoff[1][0] = r.real("env", "reward_dc", 3.0);
    e.ipd.payoff[0][1] = r.real("env", "reward_cd", 0.0);
    e.ipd.payoff[1][1] = r.real("env", "reward_dd", 1.0);
    e.ipd.seed = seed;
    if (e.ipd.opponent_n < 1) throw ConfigError("env.opponent_n must be >= 1");
    if (e.ipd.history < 1) throw ConfigError("env.history must be >= 1");
    if (e.ipd.rounds < 1) throw ConfigError("env.rounds must be >= 1");
  } else if (e.kind == "cartpole") {
    e.cartpole.gravity = r.real("env", "gravity", 9.8);
    e.cartpole.doped = r.count("env", "doped", 3);
    e.cartpole.doped_range = r.real("env", "doped_range", 5.0);
    e.cartpole.max_steps = r.count("env", "max_steps", 500);
    e.cartpole.seed = seed;
  } else if (e.kind == "pendulum") {
    e.pendulum.doped = r.count("env", "doped", 0);
    e.pendulum.doped_range = r.real("env", "doped_range", 5.0);
    e.pendulum.max_steps = r.count("env", "max_steps", 200);
    e.pendulum.seed = seed;
  } else if (e.kind == "point_mass") {
    e.point_mass_seed = seed;
  } else {
    throw ConfigError("env.kind: unknown environment '" + e.kind +
                      "' (expected secret_key, ipd, cartpole, pendulum or point_mass)");
  }
  e.keep = r.list("env", "keep");
  return e;
}

AgentSpec parse_agent(ConfigReader& r) {
  AgentSpec a;
  const std::string kind = r.required("agent", "kind");
  if (kind == "q") {
    a.kind = AgentKind::q;
    a.episodes = r.count("agent", "episodes", 0);
    a.q.alpha = r.real("agent", "alpha", a.q.alpha);
    a.q.gamma = r.real("agent", "gamma", a.q.gamma);
    a.q.epsilon_start = r.real("agent", "epsilon_start", a.q.epsilon_start);
    a.q.decay_steps = r.count("agent", "decay_steps", a.q.decay_steps);
    a.q.validate();
  } else if (kind == "ac") {
    a.kind = AgentKind::ac;
    a.episodes = r.count("agent", "episodes", 0);
    a.ac.hidden = r.count("agent", "hidden", a.ac.hidden);
    a.ac.gamma = r.real("agent", "gamma", a.ac.gamma);
    a.ac.actor_lr = r.real("agent", "actor_lr", a.ac.actor_lr);
    a.ac.critic_lr = r.real("agent", "critic_lr", a.ac.critic_lr);
    a.ac.optimizer = optimizer_from_string(r.text("agent", "optimizer", "adam"));
    a.ac.discount_actor = r.flag("agent", "discount_actor", a.ac.discount_actor);
    a.ac.input_offset = r.real("agent", "input_offset", a.ac.input_offset);
    a.ac.input_scale = r.real("agent", "input_scale", a.ac.input_scale);
    a.ac.validate();
  } else if (kind == "ppo") {
    a.kind = AgentKind::ppo;
    a.steps = r.count("agent", "steps", 0);
    a.ppo.hidden = r.count("agent", "hidden", a.ppo.hidden);
    a.ppo.activation = neural::activation_from_string(r.text("agent", "activation", "tanh"));
    a.ppo.gamma = r.real("agent", "gamma", a.ppo.gamma);
    a.ppo.lr = r.real("agent", "lr", a.ppo.lr);
    a.ppo.clip = r.real("agent", "clip", a.ppo.clip);
    a.ppo.minibatch = r.count("agent", "minibatch", a.ppo.minibatch);
    a.ppo.horizon = r.count("agent", "horizon", a.ppo.horizon);
    a.ppo.epochs = r.count("agent", "epochs", a.ppo.epochs);
    a.ppo.entropy_coef = r.real("agent", "entropy_coef", a.ppo.entropy_coef);
    a.ppo.update_scale = r.real("agent", "update_scale", a.ppo.update_scale);
    a.ppo.damp_updates = r.flag("agent", "damp_updates", a.ppo.damp_updates);
    a.ppo.initial_log_std = r.real("agent", "initial_log_std", a.ppo.initial_log_std);
    a.ppo.validate();
  } else {
    throw ConfigError("agent.kind: unknown agent '" + kind + "' (expected q, ac or ppo)");
  }
  if (a.kind == AgentKind::ppo ? a.steps == 0 : a.episodes == 0) {
    throw ConfigError(a.kind == AgentKind::ppo ? "agent.steps must be positive" : "agent.episodes must be positive");
  }
  return a;
}

}  // namespace

RunConfig parse_run_config(const IniFile& ini, std::optional<std::uint64_t> seed_override) {
  RunConfig cfg;
  cfg.source = ini;
  if (seed_override) cfg.source.set("run", "seed", std::to_string(*seed_override));
  ConfigReader r(cfg.source);
  if (!cfg.source.has("run", "seed")) throw ConfigError("missing required setting run.seed (seeds must be explicit)");
  cfg.seed = r.count("run", "seed", 0);
  cfg.output = r.text("run", "output", "");
  cfg.env = parse_env(r, cfg.seed);
  cfg.agent = parse_agent(r);
  r.reject_unknown({"run", "env", "agent"});
  cfg.config_hash = hex64(fnv1a64(cfg.source.canonical()));
  // Constructing the environment validates the remaining fields.
  (void)make_env(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  return parse_run_config(IniFile::load(path), seed_override);
}

std::optional<std::uint64_t> seed_from_environment() {
  const char* v = std::getenv("TERC_SEED");
  if (v == nullptr) return std::nullopt;
  const std::string s = v;
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("TERC_SEED must be a non-negative integer, got '" + s + "'");
  }
  return out;
}

std::unique_ptr<Env> make_env(const RunConfig& config) {
  const EnvSpec& e = config.env;
  std::unique_ptr<Env> env;
  if (e.kind == "secret_key") {
    env = std::make_unique<SecretKeyGame>(e.secret_key);
  } else if (e.kind == "ipd") {
    env = std::make_unique<IteratedPrisonersDilemma>(e.ipd);
  } else if (e.kind == "cartpole") {
    env = std::make_unique<CartPole>(e.cartpole);
  } else if (e.kind == "pendulum") {
    env = std::make_unique<Pendulum>(e.pendulum);
  } else if (e.kind == "point_mass") {
    env = std::make_unique<PointMass>(e.point_mass_seed);
  } else {
    throw ConfigError("env.kind: unknown environment '" + e.kind + "'");
  }
  if (e.keep.empty()) return env;
  const std::vector<std::string> names = env->variable_names();
  std::vector<std::size_t> keep;
  for (const std::string& name : e.keep) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("env.keep: unknown variable '" + name + "'");
    keep.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  return std::make_unique<ProjectedEnv>(std::move(env), std::move(keep));
}

}  // namespace terc

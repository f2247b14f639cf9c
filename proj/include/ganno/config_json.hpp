#pragma once

// JSON forms of the configuration types. Absent keys keep their defaults;
// unknown keys are rejected with ConfigError so that typos do not pass
// silently.

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "ganno/data/datasets.hpp"
#include "ganno/env/environment.hpp"
#include "ganno/errors.hpp"
#include "ganno/marl/ppo.hpp"
#include "ganno/nn/network.hpp"
#include "ganno/nn/optim.hpp"
#include "ganno/schedules.hpp"

namespace ganno {

using Json = nlohmann::json;

// Throws ConfigError if `j` is not an object or has a key outside `allowed`.
void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const std::string& context);

// Reads j[key] into `out` when present, with a ConfigError naming the key on
// a type mismatch.
template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& context) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(context + "." + key + ": wrong type");
  }
}

nn::NetworkSpec network_from_json(const Json& j);
Json to_json(const nn::NetworkSpec& spec);

nn::OptimConfig optim_from_json(const Json& j);
Json to_json(const nn::OptimConfig& cfg);

schedules::ScheduleSpec schedule_from_json(const Json& j);
Json to_json(const schedules::ScheduleSpec& spec);

DataConfig data_from_json(const Json& j);
Json to_json(const DataConfig& cfg);

env::EnvConfig env_from_json(const Json& j);
Json to_json(const env::EnvConfig& cfg);

marl::PolicyConfig policy_from_json(const Json& j);
Json to_json(const marl::PolicyConfig& cfg);

marl::PPOConfig ppo_from_json(const Json& j);
Json to_json(const marl::PPOConfig& cfg);

// Parses a whole file; throws LoadError if unreadable, ConfigError if not JSON.
Json read_json_file(const std::string& path);

}  // namespace ganno

#pragma once

// JSON mapping of the config structs, shared by checkpoints and experiment
// configs. Readers are strict: unknown keys raise ConfigError, missing keys
// keep their defaults.

#include <set>
#include <string>

#include "json.hpp"
#include "r2dl/classifier.hpp"
#include "r2dl/errors.hpp"
#include "r2dl/reprogram.hpp"
#include "r2dl/sparse_coding.hpp"

namespace r2dl::detail {

class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string where);

  template <typename T>
  void read(const char* key, T& out) {
    if (const auto* v = find(key)) {
      try {
        out = v->get<T>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(where_ + "." + key + " has the wrong type");
      }
    }
  }

  const nlohmann::json* find(const char* key);
  /// Throws ConfigError naming any key that was never looked up.
  void finish() const;

  const std::string& where() const { return where_; }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

nlohmann::json ksvd_config_to_json(const KsvdConfig& cfg);
KsvdConfig ksvd_config_from_json(const nlohmann::json& j, const std::string& where = "ksvd");

nlohmann::json r2dl_config_to_json(const R2dlConfig& cfg);
R2dlConfig r2dl_config_from_json(const nlohmann::json& j, const std::string& where = "reprogram");
/// Reads only the reprogram keys (no nested ksvd) into an existing config.
void read_r2dl_fields(StrictObject& obj, R2dlConfig& cfg);

nlohmann::json training_config_to_json(const TrainingConfig& cfg);
TrainingConfig training_config_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json trace_row_to_json(const TraceRow& row);
TraceRow trace_row_from_json(const nlohmann::json& j);

}  // namespace r2dl::detail

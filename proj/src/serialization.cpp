#include "serialization.hpp"

namespace r2dl::detail {

using nlohmann::json;

StrictObject::StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
  if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
}

const json* StrictObject::find(const char* key) {
  seen_.insert(key);
  const auto it = j_.find(key);
  return it == j_.end() ? nullptr : &*it;
}

void StrictObject::finish() const {
  for (const auto& [key, value] : j_.items()) {
    if (!seen_.count(key)) throw ConfigError("unknown key '" + where_ + "." + key + "'");
  }
}

namespace {

std::string policy_name(UnusedAtomPolicy p) {
  return p == UnusedAtomPolicy::keep ? "keep" : "replace_with_worst_residual";
}

UnusedAtomPolicy policy_from(const std::string& s) {
  if (s == "keep") return UnusedAtomPolicy::keep;
  if (s == "replace_with_worst_residual") return UnusedAtomPolicy::replace_with_worst_residual;
  throw ConfigError("unknown unused_atom_policy '" + s + "'");
}

ResidualNorm norm_from(const std::string& s) {
  if (s == "l1") return ResidualNorm::l1;
  if (s == "l2") return ResidualNorm::l2;
  throw ConfigError("unknown residual_norm '" + s + "'");
}

}  // namespace

json ksvd_config_to_json(const KsvdConfig& cfg) {
  return json{{"epsilon", cfg.epsilon},
              {"max_atoms", cfg.max_atoms},
              {"sweeps", cfg.sweeps},
              {"update_dictionary", cfg.update_dictionary},
              {"unused_atom_policy", policy_name(cfg.unused_atom_policy)},
              {"residual_norm", cfg.residual_norm == ResidualNorm::l1 ? "l1" : "l2"}};
}

KsvdConfig ksvd_config_from_json(const json& j, const std::string& where) {
  StrictObject obj(j, where);
  KsvdConfig cfg;
  obj.read("epsilon", cfg.epsilon);
  obj.read("max_atoms", cfg.max_atoms);
  obj.read("sweeps", cfg.sweeps);
  obj.read("update_dictionary", cfg.update_dictionary);
  std::string policy = policy_name(cfg.unused_atom_policy);
  obj.read("unused_atom_policy", policy);
  cfg.unused_atom_policy = policy_from(policy);
  std::string norm = "l1";
  obj.read("residual_norm", norm);
  cfg.residual_norm = norm_from(norm);
  obj.finish();
  return cfg;
}

json r2dl_config_to_json(const R2dlConfig& cfg) {
  return json{{"outer_iterations", cfg.outer_iterations},
              {"step_size", cfg.step_size},
              {"schedule", to_string(cfg.schedule)},
              {"decay", cfg.decay},
              {"batch_size", cfg.batch_size},
              {"steps_per_iteration", cfg.steps_per_iteration},
              {"projection_mode", to_string(cfg.projection_mode)},
              {"init_scale", cfg.init_scale},
              {"seed", cfg.seed},
              {"ksvd", ksvd_config_to_json(cfg.ksvd)}};
}

void read_r2dl_fields(StrictObject& obj, R2dlConfig& cfg) {
  obj.read("outer_iterations", cfg.outer_iterations);
  obj.read("step_size", cfg.step_size);
  std::string schedule = to_string(cfg.schedule);
  obj.read("schedule", schedule);
  cfg.schedule = step_schedule_from_string(schedule);
  obj.read("decay", cfg.decay);
  obj.read("batch_size", cfg.batch_size);
  obj.read("steps_per_iteration", cfg.steps_per_iteration);
  std::string mode = to_string(cfg.projection_mode);
  obj.read("projection_mode", mode);
  cfg.projection_mode = projection_mode_from_string(mode);
  obj.read("init_scale", cfg.init_scale);
}

R2dlConfig r2dl_config_from_json(const json& j, const std::string& where) {
  StrictObject obj(j, where);
  R2dlConfig cfg;
  read_r2dl_fields(obj, cfg);
  obj.read("seed", cfg.seed);
  if (const auto* k = obj.find("ksvd")) cfg.ksvd = ksvd_config_from_json(*k, where + ".ksvd");
  obj.finish();
  return cfg;
}

json training_config_to_json(const TrainingConfig& cfg) {
  return json{{"architecture", to_string(cfg.architecture)},
              {"embedding_dim", cfg.embedding_dim},
              {"hidden", cfg.hidden},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"learning_rate", cfg.learning_rate},
              {"init_scale", cfg.init_scale}};
}

TrainingConfig training_config_from_json(const json& j, const std::string& where) {
  StrictObject obj(j, where);
  TrainingConfig cfg;
  std::string arch = to_string(cfg.architecture);
  obj.read("architecture", arch);
  cfg.architecture = architecture_from_string(arch);
  obj.read("embedding_dim", cfg.embedding_dim);
  obj.read("hidden", cfg.hidden);
  obj.read("epochs", cfg.epochs);
  obj.read("batch_size", cfg.batch_size);
  obj.read("learning_rate", cfg.learning_rate);
  obj.read("init_scale", cfg.init_scale);
  obj.finish();
  return cfg;
}

json trace_row_to_json(const TraceRow& row) {
  return json{{"iteration", row.iteration},
              {"loss", row.loss},
              {"valid_accuracy", row.valid_accuracy},
              {"mean_support", row.mean_support},
              {"coding_error", row.coding_error},
              {"dictionary_modified", row.dictionary_modified}};
}

TraceRow trace_row_from_json(const json& j) {
  TraceRow row;
  row.iteration = j.at("iteration").get<std::size_t>();
  row.loss = j.at("loss").get<double>();
  row.valid_accuracy = j.at("valid_accuracy").get<double>();
  row.mean_support = j.at("mean_support").get<double>();
  row.coding_error = j.at("coding_error").get<double>();
  row.dictionary_modified = j.at("dictionary_modified").get<bool>();
  return row;
}

}  // namespace r2dl::detail

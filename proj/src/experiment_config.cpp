#include "ordlab/experiment_config.hpp"

#include <fstream>
#include <set>
#include <vector>

namespace ordlab {

namespace {

const std::vector<std::string> kKnownHooks = {
    "training_metrics", "norms",           "consecutive",        "parameter_delta",
    "path_length",      "weight_tracking", "fourier",            "batch_dynamics",
    "adam_dynamics",    "gradient_projection", "counterfactual", "hessian",
};

// Whitelisting helper: every object must explain all of its keys.
void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::string bad;
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) bad += (bad.empty() ? "" : ", ") + k;
  if (!bad.empty()) throw ConfigError(where + ": unknown keys: " + bad);
}

template <typename T>
T get(const nlohmann::json& j, const std::string& key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
T require(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + "." + key + ": required");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

HookSchedule HookSchedule::defaults() {
  HookSchedule h;
  h.cadence = {
      {"training_metrics", 1}, {"norms", 1},          {"consecutive", 1},
      {"parameter_delta", 1},  {"path_length", 1},    {"weight_tracking", 5},
      {"fourier", 5},          {"batch_dynamics", 10}, {"adam_dynamics", 5},
      {"gradient_projection", 1}, {"counterfactual", 10}, {"hessian", 10},
  };
  return h;
}

bool HookSchedule::due(const std::string& hook, std::uint64_t epoch) const {
  auto it = cadence.find(hook);
  if (it == cadence.end() || it->second == 0) return false;
  return epoch % it->second == 0;
}

void HookSchedule::validate() const {
  for (const auto& [name, c] : cadence) {
    bool known = false;
    for (const auto& k : kKnownHooks) known = known || k == name;
    if (!known) throw ConfigError("hooks: unknown hook name: " + name);
  }
  if (counterfactual_k < 2) throw ConfigError("hooks.counterfactual_k: must be >= 2");
  if (hessian_burst < 1) throw ConfigError("hooks.hessian_burst: must be >= 1");
}

void ExperimentConfig::validate() const {
  task.validate();
  model.validate();
  if (model.p != task.p) throw ConfigError("model.p must match task.p");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (target_accuracy <= 0.0 || target_accuracy > 1.0)
    throw ConfigError("target_accuracy must be in (0, 1]");
  if (strategy == Strategy::kStride && stride != 0) StrideSpec{stride}.validate(task.p);
  if (schedule.total_epochs == 0) throw ConfigError("schedule.total_epochs must be >= 1");
  hooks.validate();
}

ExperimentConfig parse_config(const nlohmann::json& j) {
  check_keys(j, {"task", "model", "schedule", "optimizer", "strategy", "batch_size",
                 "max_epochs", "target_accuracy", "master_seed", "eval_subset",
                 "full_eval", "checkpoint_every", "hooks", "reference_model",
                 "output_dir"},
             "config");
  ExperimentConfig cfg;

  const auto& task = j.at("task");
  check_keys(task, {"p", "train_size", "test_size", "data_seed"}, "task");
  cfg.task.p = require<std::uint32_t>(task, "p", "task");
  cfg.task.train_size = require<std::uint64_t>(task, "train_size", "task");
  cfg.task.test_size = require<std::uint64_t>(task, "test_size", "task");
  cfg.task.data_seed = get<std::uint64_t>(task, "data_seed", "task", 0);

  const auto& model = j.at("model");
  check_keys(model, {"d_model", "n_heads", "d_ff", "n_layers", "dropout", "precision"},
             "model");
  cfg.model.p = cfg.task.p;
  cfg.model.d_model = require<int>(model, "d_model", "model");
  cfg.model.n_heads = get<int>(model, "n_heads", "model", 4);
  cfg.model.d_ff = get<int>(model, "d_ff", "model", 4 * cfg.model.d_model);
  cfg.model.n_layers = get<int>(model, "n_layers", "model", 1);
  cfg.model.dropout_rate = get<double>(model, "dropout", "model", 0.1);
  cfg.model.precision =
      precision_from_string(get<std::string>(model, "precision", "model", "f64"));

  if (j.contains("schedule")) {
    const auto& sched = j.at("schedule");
    check_keys(sched, {"lr_max", "lr_min", "total_epochs"}, "schedule");
    cfg.schedule.lr_max = get<double>(sched, "lr_max", "schedule", cfg.schedule.lr_max);
    cfg.schedule.lr_min = get<double>(sched, "lr_min", "schedule", cfg.schedule.lr_min);
    cfg.schedule.total_epochs =
        get<std::uint64_t>(sched, "total_epochs", "schedule", cfg.schedule.total_epochs);
  }

  if (j.contains("optimizer")) {
    const auto& opt = j.at("optimizer");
    check_keys(opt, {"beta1", "beta2", "eps", "weight_decay"}, "optimizer");
    cfg.optimizer.beta1 = get<double>(opt, "beta1", "optimizer", cfg.optimizer.beta1);
    cfg.optimizer.beta2 = get<double>(opt, "beta2", "optimizer", cfg.optimizer.beta2);
    cfg.optimizer.eps = get<double>(opt, "eps", "optimizer", cfg.optimizer.eps);
    cfg.optimizer.weight_decay =
        get<double>(opt, "weight_decay", "optimizer", cfg.optimizer.weight_decay);
  }

  const auto& strat = j.at("strategy");
  check_keys(strat, {"name", "stride"}, "strategy");
  cfg.strategy = strategy_from_string(require<std::string>(strat, "name", "strategy"));
  cfg.stride = get<std::uint32_t>(strat, "stride", "strategy", 0);

  cfg.batch_size = require<std::uint32_t>(j, "batch_size", "config");
  cfg.max_epochs = require<std::uint64_t>(j, "max_epochs", "config");
  cfg.target_accuracy = get<double>(j, "target_accuracy", "config", 0.995);
  cfg.master_seed = get<std::uint64_t>(j, "master_seed", "config", 0);
  cfg.eval_subset = get<std::uint64_t>(j, "eval_subset", "config", 10000);
  cfg.full_eval = get<bool>(j, "full_eval", "config", false);
  cfg.checkpoint_every = get<std::uint64_t>(j, "checkpoint_every", "config", 0);

  cfg.hooks = HookSchedule::defaults();
  if (j.contains("hooks")) {
    const auto& hooks = j.at("hooks");
    std::set<std::string> allowed(kKnownHooks.begin(), kKnownHooks.end());
    allowed.insert("counterfactual_k");
    allowed.insert("hessian_burst");
    allowed.insert("hessian_displacement_form");
    check_keys(hooks, allowed, "hooks");
    for (const auto& name : kKnownHooks)
      if (hooks.contains(name))
        cfg.hooks.cadence[name] = require<std::uint64_t>(hooks, name, "hooks");
    cfg.hooks.counterfactual_k = get<int>(hooks, "counterfactual_k", "hooks", 3);
    cfg.hooks.hessian_burst = get<std::uint64_t>(hooks, "hessian_burst", "hooks", 10);
    cfg.hooks.hessian_displacement_form =
        get<bool>(hooks, "hessian_displacement_form", "hooks", false);
  }

  cfg.reference_model = get<std::string>(j, "reference_model", "config", "");
  cfg.output_dir = get<std::string>(j, "output_dir", "config", "");

  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {  // validators below the config layer
    throw ConfigError(e.what());
  }
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["task"] = {{"p", cfg.task.p},
               {"train_size", cfg.task.train_size},
               {"test_size", cfg.task.test_size},
               {"data_seed", cfg.task.data_seed}};
  j["model"] = {{"d_model", cfg.model.d_model},
                {"n_heads", cfg.model.n_heads},
                {"d_ff", cfg.model.d_ff},
                {"n_layers", cfg.model.n_layers},
                {"dropout", cfg.model.dropout_rate},
                {"precision", to_string(cfg.model.precision)}};
  j["schedule"] = {{"lr_max", cfg.schedule.lr_max},
                   {"lr_min", cfg.schedule.lr_min},
                   {"total_epochs", cfg.schedule.total_epochs}};
  j["optimizer"] = {{"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"eps", cfg.optimizer.eps},
                    {"weight_decay", cfg.optimizer.weight_decay}};
  j["strategy"] = {{"name", to_string(cfg.strategy)}, {"stride", cfg.stride}};
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["target_accuracy"] = cfg.target_accuracy;
  j["master_seed"] = cfg.master_seed;
  j["eval_subset"] = cfg.eval_subset;
  j["full_eval"] = cfg.full_eval;
  j["checkpoint_every"] = cfg.checkpoint_every;
  nlohmann::json hooks;
  for (const auto& [name, c] : cfg.hooks.cadence) hooks[name] = c;
  hooks["counterfactual_k"] = cfg.hooks.counterfactual_k;
  hooks["hessian_burst"] = cfg.hooks.hessian_burst;
  hooks["hessian_displacement_form"] = cfg.hooks.hessian_displacement_form;
  j["hooks"] = hooks;
  j["reference_model"] = cfg.reference_model.string();
  j["output_dir"] = cfg.output_dir.string();
  return j;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse failure in " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace ordlab

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "ordlab/experiment_config.hpp"

using namespace ordlab;

namespace {

nlohmann::json minimal() {
  return nlohmann::json{
      {"task", {{"p", 97}, {"train_size", 2500}, {"test_size", 1000}}},
      {"model", {{"d_model", 128}}},
      {"strategy", {{"name", "random"}}},
      {"batch_size", 32},
      {"max_epochs", 100},
  };
}

std::string error_of(const nlohmann::json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal config parses with documented defaults") {
  ExperimentConfig cfg = parse_config(minimal());
  CHECK(cfg.task.p == 97);
  CHECK(cfg.model.p == 97);
  CHECK(cfg.model.n_heads == 4);
  CHECK(cfg.model.d_ff == 512);  // 4 * d_model
  CHECK(cfg.model.dropout_rate == 0.1);
  CHECK(cfg.strategy == Strategy::kRandom);
  CHECK(cfg.target_accuracy == 0.995);
  CHECK(cfg.schedule.lr_max == 1e-3);
  CHECK(cfg.schedule.total_epochs == 5000);
  CHECK(cfg.optimizer.beta1 == 0.9);
  CHECK(cfg.hooks.cadence.at("fourier") == 5);
  CHECK(cfg.hooks.counterfactual_k == 3);
  CHECK(cfg.output_dir.empty());
}

TEST_CASE("unknown keys are rejected with their json path") {
  auto top = minimal();
  top["typo_key"] = 1;
  CHECK(error_of(top).find("typo_key") != std::string::npos);

  auto nested = minimal();
  nested["task"]["primes"] = 3;
  std::string msg = error_of(nested);
  CHECK(msg.find("task") != std::string::npos);
  CHECK(msg.find("primes") != std::string::npos);

  auto hook = minimal();
  hook["hooks"] = {{"fourrier", 5}};  // misspelled hook name
  CHECK(error_of(hook).find("fourrier") != std::string::npos);
}

TEST_CASE("missing required keys name the path") {
  auto j = minimal();
  j["task"].erase("p");
  std::string msg = error_of(j);
  CHECK(msg.find("task.p") != std::string::npos);
  CHECK(msg.find("required") != std::string::npos);
}

TEST_CASE("type errors carry the path") {
  auto j = minimal();
  j["batch_size"] = "many";
  CHECK(error_of(j).find("batch_size") != std::string::npos);
}

TEST_CASE("semantic validation errors") {
  auto j = minimal();
  j["target_accuracy"] = 1.5;
  CHECK(!error_of(j).empty());
  j = minimal();
  j["task"]["p"] = 96;  // not prime
  CHECK(!error_of(j).empty());
  j = minimal();
  j["hooks"] = {{"counterfactual_k", 1}};
  CHECK(error_of(j).find("counterfactual_k") != std::string::npos);
}

TEST_CASE("round-trip through json preserves every field") {
  auto j = minimal();
  j["strategy"] = {{"name", "stride"}, {"stride", 9}};
  j["master_seed"] = 42;
  j["schedule"] = {{"lr_max", 2e-3}, {"lr_min", 2e-5}, {"total_epochs", 777}};
  j["optimizer"] = {{"weight_decay", 0.05}};
  j["hooks"] = {{"hessian", 20}, {"hessian_displacement_form", true}};
  j["eval_subset"] = 500;
  j["checkpoint_every"] = 25;
  ExperimentConfig cfg = parse_config(j);
  ExperimentConfig back = parse_config(config_to_json(cfg));
  CHECK(back.strategy == Strategy::kStride);
  CHECK(back.stride == 9);
  CHECK(back.master_seed == 42);
  CHECK(back.schedule.total_epochs == 777);
  CHECK(back.optimizer.weight_decay == 0.05);
  CHECK(back.hooks.cadence.at("hessian") == 20);
  CHECK(back.hooks.cadence.at("norms") == 1);  // untouched default survives
  CHECK(back.hooks.hessian_displacement_form);
  CHECK(back.eval_subset == 500);
  CHECK(back.checkpoint_every == 25);
  CHECK(config_to_json(back) == config_to_json(cfg));
}

TEST_CASE("hook schedule cadence semantics") {
  HookSchedule h = HookSchedule::defaults();
  CHECK(h.due("norms", 0));
  CHECK(h.due("norms", 17));
  CHECK(h.due("fourier", 0));
  CHECK(!h.due("fourier", 3));
  CHECK(h.due("fourier", 10));
  h.cadence["fourier"] = 0;
  CHECK(!h.due("fourier", 10));  // zero disables
  CHECK(!h.due("unheard_of", 10));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ordlab/trainer.hpp"

using namespace ordlab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.task = TaskSpec{13, 120, 40, 5};
  cfg.model.p = 13;
  cfg.model.d_model = 16;
  cfg.model.n_heads = 2;
  cfg.model.d_ff = 32;
  cfg.model.n_layers = 1;
  cfg.model.dropout_rate = 0.1;
  cfg.schedule = ScheduleSpec{1e-3, 1e-5, 100};
  cfg.optimizer.weight_decay = 0.01;
  cfg.strategy = Strategy::kRandom;
  cfg.batch_size = 32;
  cfg.max_epochs = 6;
  cfg.master_seed = 11;
  cfg.hooks = HookSchedule::defaults();
  cfg.hooks.cadence["counterfactual"] = 3;
  cfg.hooks.counterfactual_k = 2;
  cfg.hooks.cadence["hessian"] = 2;
  cfg.hooks.hessian_burst = 2;
  cfg.hooks.cadence["batch_dynamics"] = 2;
  cfg.hooks.cadence["fourier"] = 2;
  return cfg;
}

fs::path temp_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("ordlab_trainer_" + tag);
  fs::remove_all(d);
  return d;
}

bool same_records(const std::vector<MetricRecord>& a, const std::vector<MetricRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].hook != b[i].hook || a[i].epoch != b[i].epoch || a[i].key != b[i].key ||
        a[i].value != b[i].value || a[i].payload != b[i].payload)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("two runs of the same config are bit-identical") {
  Trainer a(tiny_config());
  Trainer b(tiny_config());
  a.run();
  b.run();
  CHECK(a.params() == b.params());
  CHECK(same_records(a.metrics().records(), b.metrics().records()));
  CHECK(!a.metrics().series("training_metrics", "loss").empty());
  CHECK(!a.metrics().series("counterfactual", "ordering_fraction").empty());
  CHECK(!a.metrics().series("hessian", "rayleigh_quotient").empty());
  CHECK(!a.metrics().series("fourier", "spectral_entropy").empty());
}

TEST_CASE("hooks never perturb the training trajectory") {
  Trainer full(tiny_config());
  auto cfg = tiny_config();
  for (auto& [name, c] : cfg.hooks.cadence) c = 0;  // observe nothing
  Trainer bare(cfg);
  full.run();
  bare.run();
  CHECK(full.params() == bare.params());
  CHECK(bare.metrics().records().empty());
}

TEST_CASE("different seeds give different trajectories") {
  auto cfg = tiny_config();
  Trainer a(cfg);
  cfg.master_seed = 12;
  Trainer b(cfg);
  a.run();
  b.run();
  CHECK(!(a.params() == b.params()));
}

TEST_CASE("resume from a checkpoint continues byte-identically") {
  auto cfg = tiny_config();
  cfg.output_dir = temp_dir("resume");
  cfg.checkpoint_every = 3;
  Trainer a(cfg);
  a.run();

  auto cfg_b = tiny_config();  // in-memory continuation of the same run
  Trainer b(cfg_b);
  b.resume(cfg.output_dir / "checkpoints" / "epoch_000003.ckpt");

  CHECK(b.epochs_completed() == 6);
  CHECK(a.params() == b.params());
  // every record the resumed run emits must match the original tail
  std::vector<MetricRecord> tail;
  for (const auto& r : a.metrics().records())
    if (r.epoch >= 3) tail.push_back(r);
  CHECK(same_records(tail, b.metrics().records()));
  fs::remove_all(cfg.output_dir);
}

TEST_CASE("run artifacts land in the expected layout") {
  auto cfg = tiny_config();
  cfg.output_dir = temp_dir("layout");
  cfg.checkpoint_every = 3;
  Trainer t(cfg);
  RunResult res = t.run();
  CHECK(res.epochs_run == 6);
  CHECK(fs::exists(cfg.output_dir / "manifest.json"));
  CHECK(fs::exists(cfg.output_dir / "metrics" / "training_metrics.csv"));
  CHECK(fs::exists(cfg.output_dir / "metrics" / "training_metrics.jsonl"));
  CHECK(fs::exists(cfg.output_dir / "metrics" / "counterfactual.csv"));
  CHECK(fs::exists(cfg.output_dir / "checkpoints" / "epoch_000003.ckpt"));
  CHECK(fs::exists(cfg.output_dir / "final-model.ckpt"));

  std::ifstream in(cfg.output_dir / "manifest.json");
  nlohmann::json manifest;
  in >> manifest;
  CHECK(manifest.at("status") == "completed");
  CHECK(manifest.at("epochs_completed") == 6);
  CHECK(manifest.at("config").at("task").at("p") == 13);
  fs::remove_all(cfg.output_dir);
}

TEST_CASE("an immediately-satisfied target stops after one confirmed epoch") {
  auto cfg = tiny_config();
  cfg.target_accuracy = 1e-6;  // any accuracy at all clears it
  Trainer t(cfg);
  RunResult res = t.run();
  CHECK(res.reached_target);
  CHECK(res.stop_epoch == 1);
  CHECK(res.epochs_run == 1);
}

TEST_CASE("isolated closures leave parameters and optimizer untouched") {
  Trainer t(tiny_config());
  ParameterVector before = t.params();
  KValidationReport report = t.with_isolated_state([&] { return t.validate_k_now(3); });
  CHECK(t.params() == before);
  CHECK(report.subset_content_norms.size() == 4);
  CHECK(report.full_content_norm > 0.0);
}

TEST_CASE("training metrics report percentages and a sane loss") {
  Trainer t(tiny_config());
  t.run();
  auto acc = t.metrics().series("training_metrics", "val_acc");
  REQUIRE(!acc.empty());
  for (double a : acc) {
    CHECK(a >= 0.0);
    CHECK(a <= 100.0);
  }
  auto loss = t.metrics().series("training_metrics", "loss");
  // fresh 13-class model starts near log 13
  CHECK(loss.front() == doctest::Approx(std::log(13.0)).epsilon(0.2));
}

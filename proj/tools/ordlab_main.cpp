#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ordlab/counterfactual.hpp"
#include "ordlab/hessian_probe.hpp"
#include "ordlab/spectral.hpp"
#include "ordlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace ordlab;

namespace {

// exit codes: 0 ok, 1 check failed, 2 config, 3 numeric, 4 I/O
constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kConfigFailure = 2;
constexpr int kNumericFailure = 3;
constexpr int kIoFailure = 4;

struct RunOverrides {
  std::string output;
  std::optional<std::uint64_t> seed;
  std::string strategy;
  std::optional<std::uint32_t> stride;
  std::string precision;
  std::optional<std::uint64_t> eval_subset;
  std::optional<std::uint64_t> max_epochs;
  std::vector<std::string> cadences;  // hook=every
};

void apply_overrides(ExperimentConfig& cfg, const RunOverrides& ov) {
  if (!ov.output.empty()) cfg.output_dir = ov.output;
  if (ov.seed) cfg.master_seed = *ov.seed;
  if (!ov.strategy.empty()) cfg.strategy = strategy_from_string(ov.strategy);
  if (ov.stride) cfg.stride = *ov.stride;
  if (!ov.precision.empty()) cfg.model.precision = precision_from_string(ov.precision);
  if (ov.eval_subset) cfg.eval_subset = *ov.eval_subset;
  if (ov.max_epochs) cfg.max_epochs = *ov.max_epochs;
  for (const auto& spec : ov.cadences) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--cadence expects hook=every, got: " + spec);
    cfg.hooks.cadence[spec.substr(0, eq)] =
        static_cast<std::uint64_t>(std::stoull(spec.substr(eq + 1)));
  }
  cfg.validate();
}

void print_result(const RunResult& res, const fs::path& dir) {
  std::printf("epochs run:          %llu\n", static_cast<unsigned long long>(res.epochs_run));
  if (res.reached_target)
    std::printf("reached target at:   epoch %llu\n",
                static_cast<unsigned long long>(res.stop_epoch));
  else
    std::printf("reached target:      no\n");
  std::printf("final train acc:     %.4f\n", res.final_train_accuracy);
  std::printf("final test acc:      %.4f\n", res.final_test_accuracy);
  if (!dir.empty()) std::printf("run directory:       %s\n", dir.string().c_str());
}

int cmd_run(const std::string& config_path, const RunOverrides& ov) {
  ExperimentConfig cfg = load_config_file(config_path);
  apply_overrides(cfg, ov);
  if (cfg.output_dir.empty())
    throw ConfigError("run requires an output directory (config output_dir or --output)");
  Trainer t(cfg);
  print_result(t.run(), cfg.output_dir);
  return kOk;
}

nlohmann::json read_manifest(const fs::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot open manifest in " + run_dir.string());
  nlohmann::json m;
  in >> m;
  return m;
}

int cmd_resume(const std::string& run_dir_s, const std::string& checkpoint_s) {
  const fs::path run_dir = run_dir_s;
  ExperimentConfig cfg = parse_config(read_manifest(run_dir).at("config"));
  cfg.output_dir = run_dir;  // the directory may have moved since the manifest was written

  fs::path ckpt = checkpoint_s;
  if (ckpt.empty()) {
    // latest periodic checkpoint; metric files are rewritten from that epoch on
    std::vector<fs::path> found;
    const fs::path cdir = run_dir / "checkpoints";
    if (fs::exists(cdir))
      for (const auto& e : fs::directory_iterator(cdir))
        if (e.path().extension() == ".ckpt") found.push_back(e.path());
    if (found.empty()) throw std::runtime_error("no checkpoints under " + cdir.string());
    std::sort(found.begin(), found.end());
    ckpt = found.back();
  }
  std::printf("resuming from %s\n", ckpt.string().c_str());
  Trainer t(cfg);
  print_result(t.resume(ckpt), cfg.output_dir);
  return kOk;
}

// --- validate ---

struct CheckList {
  int failures = 0;
  void check(bool ok, const std::string& name, const std::string& detail = "") {
    std::printf("%s  %s%s%s\n", ok ? "ok  " : "FAIL", name.c_str(),
                detail.empty() ? "" : ": ", detail.c_str());
    if (!ok) ++failures;
  }
};

int oracle_suite() {
  CheckList cl;

  // quadratic HVP: grad(theta) = A theta with a fixed diagonal A
  auto reg = std::make_shared<SegmentRegistry>();
  reg->add("x", 1, 16);
  RegistryPtr rp = reg;
  std::vector<double> diag(16);
  for (int i = 0; i < 16; ++i) diag[i] = 0.5 + 0.25 * i;
  GradFn grad = [rp, diag](const ParameterVector& th) {
    ParameterVector g(rp);
    for (int i = 0; i < 16; ++i) g.flat()[i] = diag[i] * th.flat()[i];
    return g;
  };
  ParameterVector theta(rp), v(rp);
  for (int i = 0; i < 16; ++i) {
    theta.flat()[i] = std::sin(1.0 + i);
    v.flat()[i] = std::cos(2.0 + 0.3 * i);
  }
  ParameterVector hv = hvp_fd(grad, theta, v);
  double rel = 0.0;
  for (int i = 0; i < 16; ++i)
    rel = std::max(rel, std::abs(hv.flat()[i] - diag[i] * v.flat()[i]) /
                            std::max(1e-12, std::abs(diag[i] * v.flat()[i])));
  cl.check(rel < 1e-6, "quadratic hvp matches A*v",
           "max relative error " + std::to_string(rel));

  // content reconstruction: on a quadratic, c = g_B at the pre-step point exactly
  const double eta = 0.05;
  ParameterVector g_a = grad(theta);
  ParameterVector theta_prime = theta;
  theta_prime.axpy(-eta, g_a);  // one plain SGD step on batch A
  ParameterVector minus_g_a = g_a;
  minus_g_a.scale(-1.0);  // theta = theta' - (-eta g_a); probe with the undone step
  EntanglementStep st = entanglement_step(grad, theta_prime, g_a, eta);
  ParameterVector expect_c = grad(theta);
  double c_rel = 0.0;
  for (std::size_t i = 0; i < expect_c.size(); ++i)
    c_rel = std::max(c_rel, std::abs(st.c.flat()[i] - expect_c.flat()[i]) /
                                std::max(1e-12, std::abs(expect_c.flat()[i])));
  cl.check(c_rel < 1e-8, "reconstructed content equals pre-step gradient",
           "max relative error " + std::to_string(c_rel));

  // decomposition identity on arbitrary vectors
  ParameterVector actual(rp), m1(rp), m2(rp);
  for (int i = 0; i < 16; ++i) {
    actual.flat()[i] = std::sin(3.0 * i + 0.2);
    m1.flat()[i] = std::cos(1.7 * i);
    m2.flat()[i] = std::cos(1.7 * i + 0.5);
  }
  Decomposition d = decompose(actual, {m1, m2});
  const double lhs = actual.squared_norm();
  const double rhs = d.g_content.squared_norm() + d.g_ordering.squared_norm();
  cl.check(std::abs(lhs - rhs) <= 1e-10 * lhs, "energy partition is exact",
           "relative defect " + std::to_string(std::abs(lhs - rhs) / lhs));

  // spectral invariants
  {
    const std::uint32_t p = 97;
    DftPlan plan(p);
    std::vector<double> x(p), power(p, 0.0);
    double energy = 0.0;
    for (std::uint32_t j = 0; j < p; ++j) {
      x[j] = std::sin(0.41 * j) - 0.3;
      energy += x[j] * x[j];
    }
    plan.accumulate_power(x.data(), power.data());
    double total = 0.0;
    for (double w : power) total += w;
    cl.check(std::abs(total - p * energy) <= 1e-9 * p * energy, "parseval");

    double sym = 0.0;
    for (std::uint32_t k = 1; k < p; ++k) sym = std::max(sym, std::abs(power[k] - power[p - k]));
    cl.check(sym <= 1e-9 * total, "conjugate symmetry");

    PowerSpectrum uniform{p, std::vector<double>(p, 1.0 / p)};
    PowerSpectrum delta{p, std::vector<double>(p, 0.0)};
    delta.P[3] = 1.0;
    cl.check(std::abs(spectral_entropy(uniform) - 1.0) < 1e-12 &&
                 spectral_entropy(delta) == 0.0,
             "entropy endpoints");

    auto h = harmonic_series(101, 9973, 7);
    cl.check(h == std::vector<std::uint32_t>{101, 202, 404, 808, 1616, 3232, 3509},
             "harmonic folding 101..3509");
  }

  cl.check(predicted_fundamental(9973, 50) == 199 && predicted_fundamental(9973, 99) == 101 &&
               predicted_fundamental(9973, 150) == 66,
           "predicted fundamentals (50,99,150) -> (199,101,66)");

  std::printf("%d failure(s)\n", cl.failures);
  return cl.failures == 0 ? kOk : kCheckFailed;
}

int k_sufficiency(const std::string& config_path, std::uint64_t train_epochs, int K) {
  ExperimentConfig cfg = load_config_file(config_path);
  cfg.output_dir.clear();
  cfg.max_epochs = train_epochs;
  cfg.target_accuracy = 1.0;  // never stop early; we want the checkpoint state
  for (auto& [name, c] : cfg.hooks.cadence) c = 0;
  Trainer t(cfg);
  t.run();
  KValidationReport r = t.with_isolated_state([&] { return t.validate_k_now(K); });
  std::printf("full content norm:   %.6g\n", r.full_content_norm);
  std::printf("norm gap:            %.4f%%\n", 100.0 * r.norm_gap);
  std::printf("min subset cosine:   %.6f\n", r.min_cosine);
  std::printf("strictly monotone:   %s\n", r.strictly_monotone ? "yes" : "no");
  const bool pass = std::abs(r.norm_gap) < 0.05 && r.min_cosine > 0.95 && r.strictly_monotone;
  std::printf("%s\n", pass ? "PASS" : "FAIL");
  return pass ? kOk : kCheckFailed;
}

int stride_frequency(std::uint32_t p, const std::vector<std::uint32_t>& strides,
                     std::uint64_t epochs, std::uint64_t train_size, int d_model,
                     std::uint64_t seed) {
  int failures = 0;
  for (std::uint32_t s : strides) {
    ExperimentConfig cfg;
    cfg.task = TaskSpec{p, train_size, std::max<std::uint64_t>(train_size / 4, 1), seed};
    cfg.model.p = p;
    cfg.model.d_model = d_model;
    cfg.model.n_heads = 4;
    cfg.model.d_ff = 4 * d_model;
    cfg.model.n_layers = 1;
    cfg.model.precision = Precision::kF32;
    cfg.optimizer.weight_decay = 0.1;
    cfg.strategy = Strategy::kStride;
    cfg.stride = s;
    cfg.max_epochs = epochs;
    cfg.master_seed = seed;
    cfg.hooks = HookSchedule{};  // nothing due; spectrum read directly afterwards
    Trainer t(cfg);
    t.run();
    DftPlan plan(p);
    PowerSpectrum ps = weight_spectrum(t.params().matrix("token_embedding"), plan);
    const std::uint32_t observed = peak_frequency(ps);
    const std::uint32_t predicted = predicted_fundamental(p, s);
    const bool ok = observed == predicted;
    if (!ok) ++failures;
    std::printf("%s  p=%u s=%u  predicted=%u observed=%u\n", ok ? "ok  " : "FAIL", p, s,
                predicted, observed);
  }
  return failures == 0 ? kOk : kCheckFailed;
}

// --- compare ---

using Series = std::map<std::uint64_t, double>;  // epoch -> last value

std::optional<Series> read_series(const fs::path& run_dir, const std::string& hook,
                                  const std::string& key) {
  std::ifstream in(run_dir / "metrics" / (hook + ".csv"));
  if (!in) return std::nullopt;
  Series s;
  std::string line;
  std::getline(in, line);  // header
  bool key_seen = false;
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    if (c1 == std::string::npos) continue;
    const auto c2 = line.rfind(',');
    if (c2 == c1) continue;
    if (line.compare(c1 + 1, c2 - c1 - 1, key) != 0) continue;
    key_seen = true;
    const std::string val = line.substr(c2 + 1);
    if (val == "nan") continue;
    s[std::stoull(line.substr(0, c1))] = std::stod(val);
  }
  if (!key_seen) return std::nullopt;
  return s;
}

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

void write_svg(const fs::path& path, const std::string& title,
               const std::vector<PlotSeries>& series) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  const double W = 860, H = 520, L = 70, R = 30, T = 40, B = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot: " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";
  // axes with end labels
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\""
      << H - B << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  char buf[64];
  auto label = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };
  out << "<text x=\"" << L << "\" y=\"" << H - B + 18 << "\">" << label(xmin) << "</text>\n";
  out << "<text x=\"" << W - R << "\" y=\"" << H - B + 18 << "\" text-anchor=\"end\">"
      << label(xmax) << "</text>\n";
  out << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" text-anchor=\"end\">"
      << label(ymin) << "</text>\n";
  out << "<text x=\"" << L - 6 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\">"
      << label(ymax) << "</text>\n";
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\">epoch</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % 8];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (auto [x, y] : series[i].points) out << px(x) << "," << py(y) << " ";
    out << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(i);
    out << "<line x1=\"" << W - R - 150 << "\" y1=\"" << ly << "\" x2=\"" << W - R - 130
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R - 125 << "\" y=\"" << ly + 4 << "\">" << series[i].label
        << "</text>\n";
  }
  out << "</svg>\n";
}

int cmd_compare(const std::vector<std::string>& run_dirs, const std::vector<std::string>& keys,
                const std::string& plots_dir) {
  std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
  std::optional<std::uint64_t> p;
  for (const auto& d : dirs) {
    const std::uint64_t dp = read_manifest(d).at("config").at("task").at("p");
    if (p && *p != dp)
      throw ConfigError("runs disagree on p: " + std::to_string(*p) + " vs " +
                        std::to_string(dp) + " (" + d.string() + ")");
    p = dp;
  }

  if (!plots_dir.empty()) fs::create_directories(plots_dir);
  for (const auto& key : keys) {
    const auto slash = key.find('/');
    if (slash == std::string::npos)
      throw ConfigError("metric keys are hook/key, got: " + key);
    const std::string hook = key.substr(0, slash);
    const std::string name = key.substr(slash + 1);

    std::vector<std::optional<Series>> per_run;
    std::set<std::uint64_t> epochs;
    for (const auto& d : dirs) {
      per_run.push_back(read_series(d, hook, name));
      if (per_run.back())
        for (const auto& [e, v] : *per_run.back()) epochs.insert(e);
    }

    std::printf("\n== %s ==\n", key.c_str());
    std::printf("%-10s", "epoch");
    for (const auto& d : dirs) std::printf("  %-20s", d.filename().string().c_str());
    std::printf("\n");
    for (std::uint64_t e : epochs) {
      std::printf("%-10llu", static_cast<unsigned long long>(e));
      for (const auto& s : per_run) {
        if (s && s->count(e))
          std::printf("  %-20.8g", s->at(e));
        else
          std::printf("  %-20s", "");
      }
      std::printf("\n");
    }
    std::printf("%-10s", "summary");
    for (const auto& s : per_run) {
      if (!s || s->empty()) {
        std::printf("  %-20s", "absent");
        continue;
      }
      double mn = 1e300, mx = -1e300, sum = 0.0;
      for (const auto& [e, v] : *s) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        sum += v;
      }
      char cell[64];
      std::snprintf(cell, sizeof(cell), "%.4g/%.4g/%.4g", sum / s->size(), mn, mx);
      std::printf("  %-20s", cell);
    }
    std::printf("   (mean/min/max)\n");

    if (!plots_dir.empty()) {
      std::vector<PlotSeries> plot;
      for (std::size_t i = 0; i < dirs.size(); ++i) {
        if (!per_run[i]) continue;
        PlotSeries ps;
        ps.label = dirs[i].filename().string();
        for (const auto& [e, v] : *per_run[i])
          ps.points.emplace_back(static_cast<double>(e), v);
        plot.push_back(std::move(ps));
      }
      std::string fname = key;
      std::replace(fname.begin(), fname.end(), '/', '_');
      write_svg(fs::path(plots_dir) / (fname + ".svg"), key, plot);
    }
  }
  if (!plots_dir.empty()) std::printf("\nplots written to %s\n", plots_dir.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ordering-channel experiment runner"};
  app.require_subcommand(1);

  std::string config_path, run_dir, checkpoint;
  RunOverrides ov;
  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--output", ov.output, "run directory (overrides config)");
    cmd->add_option("--seed", ov.seed, "master seed override");
    cmd->add_option("--strategy", ov.strategy, "stride|fixed-random|random|target");
    cmd->add_option("--stride", ov.stride, "stride s (0 = floor(sqrt(p)))");
    cmd->add_option("--precision", ov.precision, "f32|f64");
    cmd->add_option("--eval-subset", ov.eval_subset, "per-epoch eval subsample size");
    cmd->add_option("--max-epochs", ov.max_epochs, "epoch budget override");
    cmd->add_option("--cadence", ov.cadences, "hook=every cadence override (repeatable)");
  };

  auto* run = app.add_subcommand("run", "train from a config file");
  run->add_option("config", config_path, "experiment config (json)")->required();
  add_overrides(run);

  auto* resume = app.add_subcommand("resume", "continue a run from its checkpoint");
  resume->add_option("run-dir", run_dir, "existing run directory")->required();
  resume->add_option("--checkpoint", checkpoint, "checkpoint file (default: latest)");

  auto* validate = app.add_subcommand("validate", "oracle and consistency checks");
  std::string what;
  validate->add_option("what", what, "oracle-suite|k-sufficiency|stride-frequency")
      ->required();
  std::string vconfig;
  std::uint64_t vepochs = 5;
  int vk = 3;
  std::uint32_t vp = 97;
  std::vector<std::uint32_t> vstrides = {9};
  std::uint64_t vtrain = 2500, vseed = 0, vfreq_epochs = 50;
  int vd = 128;
  validate->add_option("--config", vconfig, "config for k-sufficiency");
  validate->add_option("--train-epochs", vepochs, "epochs before the k check");
  validate->add_option("--k", vk, "K for k-sufficiency");
  validate->add_option("--p", vp, "modulus for stride-frequency");
  validate->add_option("--strides", vstrides, "stride list for stride-frequency");
  validate->add_option("--epochs", vfreq_epochs, "epochs for stride-frequency");
  validate->add_option("--train-size", vtrain, "train size for stride-frequency");
  validate->add_option("--d-model", vd, "model width for stride-frequency");
  validate->add_option("--seed", vseed, "seed for stride-frequency");

  auto* compare = app.add_subcommand("compare", "aligned tables and plots across runs");
  std::vector<std::string> cdirs, ckeys;
  std::string cplots = "compare-plots";
  compare->add_option("run-dirs", cdirs, "run directories")->required()->expected(-1);
  compare->add_option("--keys", ckeys, "metric keys as hook/key")->required();
  compare->add_option("--plots", cplots, "plot output directory (empty disables)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, ov);
    if (resume->parsed()) return cmd_resume(run_dir, checkpoint);
    if (validate->parsed()) {
      if (what == "oracle-suite") return oracle_suite();
      if (what == "k-sufficiency") {
        if (vconfig.empty()) throw ConfigError("k-sufficiency needs --config");
        return k_sufficiency(vconfig, vepochs, vk);
      }
      if (what == "stride-frequency")
        return stride_frequency(vp, vstrides, vfreq_epochs, vtrain, vd, vseed);
      throw ConfigError("unknown validation: " + what);
    }
    if (compare->parsed()) return cmd_compare(cdirs, ckeys, cplots);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigFailure;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumericFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIoFailure;
  }
  return kOk;
}

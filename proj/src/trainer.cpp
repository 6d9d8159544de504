#include "ordlab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ordlab/hessian_probe.hpp"
#include "ordlab/rng.hpp"

namespace ordlab {

Trainer::Trainer(ExperimentConfig cfg)
    : cfg_(std::move(cfg)), model_(cfg_.model), data_(generate_dataset(cfg_.task)),
      theta_(model_.registry()) {
  cfg_.validate();
  opt_ = std::make_unique<AdamW>(model_.registry(), cfg_.optimizer);
  theta_ = model_.init_params(cfg_.master_seed);
  path_.reset(theta_);
  prev_theta_ = theta_;

  if (!cfg_.reference_model.empty())
    theta_ref_ = load_checkpoint_params(cfg_.reference_model, model_.registry());

  if (!cfg_.output_dir.empty()) {
    std::filesystem::create_directories(cfg_.output_dir / "metrics");
    std::filesystem::create_directories(cfg_.output_dir / "checkpoints");
    file_sink_ = std::make_unique<FileMetricSink>(cfg_.output_dir / "metrics");
  }
  sink_.add(&memory_sink_);
  if (file_sink_) sink_.add(file_sink_.get());
}

EpochEngine Trainer::engine(double lr) const {
  EpochEngine eng;
  eng.model = &model_;
  eng.train = &data_.train;
  eng.opt_cfg = cfg_.optimizer;
  eng.lr = lr;
  eng.batch_size = cfg_.batch_size;
  eng.master_seed = cfg_.master_seed;
  return eng;
}

double Trainer::eval_accuracy(std::uint64_t epoch, bool full, bool train_split) const {
  const auto& examples = train_split ? data_.train : data_.test;
  if (examples.empty()) return 0.0;
  if (full || examples.size() <= cfg_.eval_subset)
    return model_.accuracy(theta_, examples);
  // fixed seeded subsample per (epoch, split); stateless, so resume-safe
  RngStream rng(cfg_.master_seed, "hook/eval", epoch, train_split ? 0 : 1);
  std::vector<std::uint32_t> idx(examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
  // partial Fisher-Yates: only the prefix we keep
  const std::size_t k = static_cast<std::size_t>(cfg_.eval_subset);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<ExamplePair> subset;
  subset.reserve(k);
  for (std::size_t i = 0; i < k; ++i) subset.push_back(examples[idx[i]]);
  return model_.accuracy(theta_, subset);
}

void Trainer::run_epoch(std::uint64_t epoch) {
  const double lr = cosine_lr(cfg_.schedule, epoch);
  PermutationPlan plan = make_plan(cfg_.strategy, data_.train, cfg_.task.p, cfg_.stride,
                                   cfg_.master_seed, epoch, cfg_.batch_size);

  const bool cf_due = cfg_.hooks.due("counterfactual", epoch);
  std::optional<TrainingSnapshot> pre_snap;
  if (cf_due) pre_snap = take_snapshot(theta_, *opt_, epoch);

  const bool hess_due = cfg_.hooks.due("hessian", epoch);
  const bool window_on = cfg_.hooks.cadence.count("batch_dynamics") &&
                         cfg_.hooks.cadence.at("batch_dynamics") > 0;

  ParameterVector g_sum(model_.registry());
  double loss_sum = 0.0;
  const std::size_t n_batches = plan.batch_count();

  // hessian burst state: probe vector captured at step t, probed against the
  // batch of step t+1 before that batch's own optimizer step
  std::optional<ParameterVector> probe_vec;
  ParameterVector pre_step_theta(model_.registry());
  std::uint64_t probes_done = 0;

  std::vector<ExamplePair> batch;
  for (std::size_t i = 0; i < n_batches; ++i) {
    auto [begin, end] = plan.batch_range(i);
    batch.clear();
    for (std::size_t j = begin; j < end; ++j) batch.push_back(data_.train[plan.order[j]]);

    if (probe_vec && probes_done < cfg_.hooks.hessian_burst) {
      // theta_ is theta' (post step A); current batch plays B. Probe gradients
      // run dropout-free so the difference isolates curvature.
      std::vector<ExamplePair> batch_b = batch;
      GradFn grad_fn = [&](const ParameterVector& p) {
        return model_.loss_and_grad(p, batch_b, ForwardMode::eval()).second;
      };
      EntanglementStep step = entanglement_step(
          grad_fn, theta_, *probe_vec, lr, prev_e_ ? &*prev_e_ : nullptr);
      emit_entanglement(step, epoch, sink_, &theta_,
                        theta_ref_ ? &*theta_ref_ : nullptr);
      prev_e_ = step.e;
      ++probes_done;
      probe_vec.reset();
    }

    auto [loss, grad] = model_.loss_and_grad(
        theta_, batch, ForwardMode::train_at(cfg_.master_seed, epoch, i));
    loss_sum += loss;
    g_sum += grad;
    if (window_on) window_.push(grad, opt_->t());

    const bool capture = hess_due && probes_done < cfg_.hooks.hessian_burst &&
                         i + 1 < n_batches;
    if (capture && cfg_.hooks.hessian_displacement_form) pre_step_theta = theta_;

    opt_->step(theta_, grad, lr);

    if (capture) {
      if (cfg_.hooks.hessian_displacement_form) {
        // probe with (theta_prev - theta') / eta: the realized displacement
        // in raw-gradient units
        ParameterVector disp = pre_step_theta;
        disp -= theta_;
        disp.scale(1.0 / lr);
        probe_vec = std::move(disp);
      } else {
        probe_vec = grad;
      }
    }
  }

  ParameterVector g_mean = g_sum;
  g_mean.scale(1.0 / static_cast<double>(n_batches));
  last_epoch_loss_ = loss_sum / static_cast<double>(n_batches);

  end_of_epoch_hooks(epoch, g_mean, last_epoch_loss_, lr,
                     pre_snap ? &*pre_snap : nullptr);
}

void Trainer::end_of_epoch_hooks(std::uint64_t epoch, const ParameterVector& g_mean,
                                 double mean_loss, double lr,
                                 const TrainingSnapshot* pre_epoch_snapshot) {
  if (cfg_.hooks.due("training_metrics", epoch)) {
    const std::string h = "training_metrics";
    sink_.emit(h, epoch, "loss", mean_loss);
    sink_.emit(h, epoch, "train_acc", 100.0 * eval_accuracy(epoch, false, true));
    sink_.emit(h, epoch, "val_acc", 100.0 * eval_accuracy(epoch, false, false));
    sink_.emit(h, epoch, "lr", lr);
    sink_.emit(h, epoch, "perplexity", std::exp(mean_loss));
  }

  if (cfg_.hooks.due("norms", epoch)) {
    auto nm = grad_norm_metrics(g_mean);
    sink_.emit("norms", epoch, "total_norm", nm.total_norm);
    sink_.emit("norms", epoch, "max_component", nm.max_component);
    sink_.emit("norms", epoch, "mean_component", nm.mean_component);
    for (const auto& [layer, n] : nm.per_layer)
      sink_.emit("norms", epoch, "norm_" + layer, n);
  }

  if (cfg_.hooks.due("consecutive", epoch) && prev_grad_) {
    if (auto a = consecutive_cossim(g_mean, *prev_grad_)) {
      sink_.emit("consecutive", epoch, "cos_sim", a->cos_sim);
      sink_.emit("consecutive", epoch, "angle_degrees", a->angle_degrees);
    } else {
      sink_.emit_undefined("consecutive", epoch, "cos_sim");
      sink_.emit_undefined("consecutive", epoch, "angle_degrees");
    }
  }

  if (cfg_.hooks.due("parameter_delta", epoch) && prev_theta_) {
    auto pd = parameter_delta(theta_, *prev_theta_);
    if (pd.relative_delta)
      sink_.emit("parameter_delta", epoch, "relative_delta", *pd.relative_delta);
    else
      sink_.emit_undefined("parameter_delta", epoch, "relative_delta");
    sink_.emit("parameter_delta", epoch, "absolute_delta", pd.absolute_delta);
    sink_.emit("parameter_delta", epoch, "param_norm", pd.param_norm);
  }

  {
    // path accumulates every epoch regardless of emission cadence
    PathMetrics pm = path_.update(theta_);
    if (cfg_.hooks.due("path_length", epoch)) {
      sink_.emit("path_length", epoch, "path_length", pm.path_length);
      sink_.emit("path_length", epoch, "net_displacement", pm.net_displacement);
      sink_.emit("path_length", epoch, "path_efficiency", pm.path_efficiency);
    }
  }

  if (cfg_.hooks.due("weight_tracking", epoch)) {
    auto wt = weight_tracking(theta_, g_mean);
    const std::string h = "weight_tracking";
    for (const auto& [layer, st] : wt.layers) {
      sink_.emit(h, epoch, "weight_norm/" + layer, st.weight_norm);
      if (st.top_sv) sink_.emit(h, epoch, "top_sv/" + layer, *st.top_sv);
      if (st.effective_rank)
        sink_.emit(h, epoch, "effective_rank/" + layer, *st.effective_rank);
      if (st.grad_weight_align)
        sink_.emit(h, epoch, "grad_weight_align/" + layer, *st.grad_weight_align);
    }
    sink_.emit(h, epoch, "total_weight_norm", wt.total_weight_norm);
    sink_.emit(h, epoch, "mean_weight_norm", wt.mean_weight_norm);
    sink_.emit(h, epoch, "mean_top_sv", wt.mean_top_sv);
    sink_.emit(h, epoch, "max_top_sv", wt.max_top_sv);
    sink_.emit(h, epoch, "mean_effective_rank", wt.mean_effective_rank);
    sink_.emit(h, epoch, "mean_grad_weight_align", wt.mean_grad_weight_align);
  }

  if (cfg_.hooks.due("fourier", epoch)) {
    if (!dft_) dft_.emplace(cfg_.task.p);
    const std::string h = "fourier";
    try {
      PowerSpectrum ps = weight_spectrum(theta_.matrix("token_embedding"), *dft_);
      sink_.emit(h, epoch, "low_freq_power", low_freq_power(ps));
      sink_.emit(h, epoch, "spectral_entropy", spectral_entropy(ps));
      const auto peak = peak_frequency(ps);
      sink_.emit(h, epoch, "peak_frequency", static_cast<double>(peak));
      sink_.emit(h, epoch, "peak_power", ps.P[peak]);
      auto sig = significant_frequencies(ps);
      sink_.emit(h, epoch, "n_significant_freqs", static_cast<double>(sig.size()));
      sink_.emit(h, epoch, "stride_harmonic_power", stride_harmonic_power(ps));
      auto fresh = embed_tracker_.update(sig);
      nlohmann::json powers = nlohmann::json::object();
      for (auto k : embed_tracker_.ever_significant())
        powers[std::to_string(k)] = ps.P[k];
      sink_.emit_json(h, epoch, "freq_powers", powers);
      sink_.emit(h, epoch, "n_tracked_freqs",
                 static_cast<double>(embed_tracker_.ever_significant().size()));
      sink_.emit_json(h, epoch, "newly_acquired_freqs", fresh);

      auto ns = neuron_spectral_summary(theta_.matrix("token_embedding"), *dft_);
      sink_.emit(h, epoch, "neuron_fourier_top1", ns.top1);
      sink_.emit(h, epoch, "neuron_fourier_entropy", ns.entropy);
    } catch (const std::invalid_argument&) {
      sink_.emit_undefined(h, epoch, "spectral_entropy");
    }
    try {
      PowerSpectrum dec = weight_spectrum(theta_.matrix("decoder.weight"), *dft_);
      sink_.emit(h, epoch, "decoder_spectral_entropy", spectral_entropy(dec));
      sink_.emit(h, epoch, "decoder_peak_frequency",
                 static_cast<double>(peak_frequency(dec)));
      auto dec_sig = significant_frequencies(dec);
      sink_.emit(h, epoch, "decoder_n_significant_freqs",
                 static_cast<double>(dec_sig.size()));
      decoder_tracker_.update(dec_sig);
    } catch (const std::invalid_argument&) {
      sink_.emit_undefined(h, epoch, "decoder_spectral_entropy");
    }
  }

  if (cfg_.hooks.due("batch_dynamics", epoch)) {
    auto bd = batch_dynamics(window_);
    const std::string h = "batch_dynamics";
    for (const auto& [n, v] : bd.lag) sink_.emit(h, epoch, "lag_" + std::to_string(n), v);
    if (bd.autocorrelation_mean)
      sink_.emit(h, epoch, "autocorrelation_mean", *bd.autocorrelation_mean);
    for (const auto& [w, v] : bd.efficiency)
      sink_.emit(h, epoch, "efficiency_" + std::to_string(w), v);
    if (bd.effective_rank) sink_.emit(h, epoch, "effective_rank", *bd.effective_rank);
    if (bd.top1_variance) sink_.emit(h, epoch, "top1_variance", *bd.top1_variance);
  }

  if (cfg_.hooks.due("adam_dynamics", epoch)) {
    ParameterVector update = adam_update_vector(*opt_, g_mean, lr);
    auto ai = adam_introspect(*opt_, g_mean, update, lr, theta_,
                              theta_ref_ ? &*theta_ref_ : nullptr);
    const std::string h = "adam_dynamics";
    auto emit_opt = [&](const std::string& key, const std::optional<double>& v) {
      if (v)
        sink_.emit(h, epoch, key, *v);
      else
        sink_.emit_undefined(h, epoch, key);
    };
    emit_opt("momentum_grad_cossim", ai.momentum_grad_cossim);
    emit_opt("amplification_ratio", ai.amplification_ratio);
    emit_opt("update_deflection", ai.update_deflection);
    emit_opt("effective_lr_cv", ai.effective_lr_cv);
    if (theta_ref_) {
      emit_opt("momentum_solution_cossim", ai.momentum_solution_cossim);
      emit_opt("update_solution_cossim", ai.update_solution_cossim);
      emit_opt("grad_solution_cossim", ai.grad_solution_cossim);
      emit_opt("optimizer_solution_amplification", ai.optimizer_solution_amplification);
    }
  }

  if (cfg_.hooks.due("gradient_projection", epoch) && theta_ref_ && prev_theta_) {
    const std::string h = "gradient_projection";
    auto grad_proj = projection_to_solution(g_mean, theta_, *theta_ref_, /*descent=*/true);
    ParameterVector disp = theta_;
    disp -= *prev_theta_;
    auto disp_proj = projection_to_solution(disp, theta_, *theta_ref_, /*descent=*/false);
    auto emit_family = [&](const std::string& tag, const SolutionProjection& pr) {
      if (pr.overall)
        sink_.emit(h, epoch, "overall_" + tag + "_cossim_to_solution", *pr.overall);
      else
        sink_.emit_undefined(h, epoch, "overall_" + tag + "_cossim_to_solution");
      double sum = 0.0;
      for (const auto& [layer, c] : pr.per_layer) {
        sink_.emit(h, epoch, tag + "_cossim_to_solution/" + layer, c);
        sum += c;
      }
      if (!pr.per_layer.empty())
        sink_.emit(h, epoch, "mean_layer_" + tag + "_cossim_to_solution",
                   sum / static_cast<double>(pr.per_layer.size()));
    };
    emit_family("grad", grad_proj);
    emit_family("disp", disp_proj);
    sink_.emit(h, epoch, "displacement_norm", disp.norm());
    sink_.emit(h, epoch, "distance_to_reference", grad_proj.distance_to_reference);
  }

  if (pre_epoch_snapshot) {
    counterfactual_hook(*pre_epoch_snapshot, engine(lr), g_mean, epoch,
                        cfg_.hooks.counterfactual_k, sink_,
                        theta_ref_ ? &*theta_ref_ : nullptr);
  }

  prev_grad_ = g_mean;
  prev_theta_ = theta_;
}

RunResult Trainer::run_loop() {
  RunResult res;
  while (epoch_ < cfg_.max_epochs) {
    const std::uint64_t e = epoch_;
    try {
      run_epoch(e);
    } catch (const NumericError&) {
      sink_.flush();
      write_manifest(nullptr);
      throw;
    }
    epoch_ = e + 1;

    if (cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0 &&
        !cfg_.output_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%06llu.ckpt",
                    static_cast<unsigned long long>(epoch_));
      write_checkpoint(cfg_.output_dir / "checkpoints" / name);
    }

    const double subset_acc = eval_accuracy(e, cfg_.full_eval, false);
    if (subset_acc >= cfg_.target_accuracy) {
      const double full_acc = cfg_.full_eval ? subset_acc : eval_accuracy(e, true, false);
      if (full_acc >= cfg_.target_accuracy) {
        res.reached_target = true;
        res.stop_epoch = epoch_;
        break;
      }
    }
  }
  res.epochs_run = epoch_;
  res.final_train_accuracy = model_.accuracy(theta_, data_.train);
  res.final_test_accuracy =
      data_.test.empty() ? 0.0 : model_.accuracy(theta_, data_.test);
  sink_.flush();
  if (!cfg_.output_dir.empty()) {
    write_checkpoint(cfg_.output_dir / "final-model.ckpt");
    write_manifest(&res);
  }
  return res;
}

RunResult Trainer::run() {
  if (!cfg_.output_dir.empty()) write_manifest(nullptr);
  return run_loop();
}

RunResult Trainer::resume(const std::filesystem::path& checkpoint) {
  CheckpointData data = load_checkpoint(checkpoint, model_.registry());
  theta_ = data.theta;
  opt_->restore(data.opt);
  epoch_ = data.epoch;
  load_hook_state(std::move(data.hooks));
  return run_loop();
}

KValidationReport Trainer::validate_k_now(int K) {
  const double lr = cosine_lr(cfg_.schedule, epoch_);
  TrainingSnapshot snap = take_snapshot(theta_, *opt_, epoch_);
  PermutationPlan plan = make_plan(cfg_.strategy, data_.train, cfg_.task.p, cfg_.stride,
                                   cfg_.master_seed, epoch_, cfg_.batch_size);
  ParameterVector g_actual = mean_epoch_gradient(snap, engine(lr), plan);
  return validate_k(snap, engine(lr), g_actual, epoch_, K);
}

void Trainer::write_manifest(const RunResult* result) const {
  if (cfg_.output_dir.empty()) return;
  nlohmann::json m;
  m["format"] = "ordlab-run-1";
  m["config"] = config_to_json(cfg_);
  m["epochs_completed"] = epoch_;
  if (result) {
    m["status"] = "completed";
    m["reached_target"] = result->reached_target;
    if (result->reached_target) m["stop_epoch"] = result->stop_epoch;
    m["final_train_accuracy"] = result->final_train_accuracy;
    m["final_test_accuracy"] = result->final_test_accuracy;
  } else {
    m["status"] = "running";
  }
  std::ofstream out(cfg_.output_dir / "manifest.json");
  if (!out)
    throw std::runtime_error("cannot write manifest under " + cfg_.output_dir.string());
  out << m.dump(2) << "\n";
}

HookState Trainer::hook_state_snapshot() const {
  HookState h;
  h.has_prev_grad = prev_grad_.has_value();
  if (prev_grad_) h.prev_grad = *prev_grad_;
  h.path_initialized = path_.initialized();
  if (h.path_initialized) {
    h.path_origin = path_.origin();
    h.path_prev = path_.previous();
    h.path_length = path_.accumulated_length();
  }
  h.has_prev_theta = prev_theta_.has_value();
  if (prev_theta_) h.prev_theta = *prev_theta_;
  h.window = window_;
  h.embed_ever = embed_tracker_.ever_significant();
  h.decoder_ever = decoder_tracker_.ever_significant();
  h.has_prev_e = prev_e_.has_value();
  if (prev_e_) h.prev_e = *prev_e_;
  return h;
}

void Trainer::load_hook_state(HookState&& h) {
  prev_grad_.reset();
  if (h.has_prev_grad) prev_grad_ = std::move(h.prev_grad);
  if (h.path_initialized)
    path_.restore(std::move(h.path_origin), std::move(h.path_prev), h.path_length);
  prev_theta_.reset();
  if (h.has_prev_theta) prev_theta_ = std::move(h.prev_theta);
  window_ = std::move(h.window);
  embed_tracker_.restore(std::move(h.embed_ever));
  decoder_tracker_.restore(std::move(h.decoder_ever));
  prev_e_.reset();
  if (h.has_prev_e) prev_e_ = std::move(h.prev_e);
}

void Trainer::write_checkpoint(const std::filesystem::path& path) const {
  CheckpointData data;
  data.epoch = epoch_;
  data.theta = theta_;
  data.opt = opt_->state();
  data.hooks = hook_state_snapshot();
  save_checkpoint(data, path);
}

}  // namespace ordlab

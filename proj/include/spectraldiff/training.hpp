#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"
#include "spectraldiff/core.hpp"
#include "spectraldiff/dataset.hpp"
#include "spectraldiff/diffusion.hpp"
#include "spectraldiff/image_io.hpp"
#include "spectraldiff/mask.hpp"
#include "spectraldiff/nn/denoiser.hpp"
#include "spectraldiff/rng.hpp"
#include "spectraldiff/schedule.hpp"

namespace spectraldiff {

struct TrainConfig {
  int iterations = 500;
  int batch_size = 4;
  double lr = 2e-4;
  double lr_min = 1e-6;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double plateau_factor = 0.5;
  int plateau_patience = 10;  // evaluations without improvement before reducing
  int eval_every = 50;        // iterations per plateau evaluation
  PerturbationMode mode = PerturbationMode::SpectralMasked;
  uint64_t seed = 0;
  int steps = 0;  // diffusion depth D; 0 means "bank size"
  double noise_energy_scale = 1.0;
  DenoiserConfig model;

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("train config: iterations must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
    if (!(lr > 0.0 && lr < 1.0))
      throw std::invalid_argument("train config: learning rate must lie in (0, 1)");
    if (!(lr_min > 0.0 && lr_min <= lr))
      throw std::invalid_argument("train config: lr_min must lie in (0, lr]");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
      throw std::invalid_argument("train config: plateau factor must lie in (0, 1)");
    if (plateau_patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("train config: eval_every must be >= 1");
    if (steps < 0) throw std::invalid_argument("train config: steps must be >= 0");
    if (!(noise_energy_scale > 0.0))
      throw std::invalid_argument("train config: noise energy scale must be positive");
    model.validate();
  }

  nlohmann::json to_json() const {
    return {{"iterations", iterations},
            {"batch_size", batch_size},
            {"lr", lr},
            {"lr_min", lr_min},
            {"weight_decay", weight_decay},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"plateau_factor", plateau_factor},
            {"plateau_patience", plateau_patience},
            {"eval_every", eval_every},
            {"mode", to_string(mode)},
            {"seed", seed},
            {"steps", steps},
            {"noise_energy_scale", noise_energy_scale},
            {"model", model.to_json()}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.eval_every = j.value("eval_every", c.eval_every);
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.steps = j.value("steps", c.steps);
    c.noise_energy_scale = j.value("noise_energy_scale", c.noise_energy_scale);
    if (j.contains("model")) c.model = DenoiserConfig::from_json(j.at("model"));
    c.validate();
    return c;
  }
};

// Adaptive moments with decoupled weight decay:
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
template <typename T>
struct AdamW {
  double lr = 2e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  long long t = 0;
  std::vector<Tensor<T>> m, v;

  explicit AdamW(const DenoiserModel<T>& model, double lr_ = 2e-4, double wd = 1e-4)
      : lr(lr_), weight_decay(wd) {
    m.reserve(model.params.size());
    v.reserve(model.params.size());
    for (const auto& p : model.params) {
      m.emplace_back(p.shape);
      v.emplace_back(p.shape);
    }
  }

  void step(DenoiserModel<T>& model, const std::vector<Tensor<T>>& grads) {
    if (grads.size() != model.params.size())
      throw std::invalid_argument("AdamW: gradient/parameter count mismatch");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < model.params.size(); ++i) {
      Tensor<T>& p = model.params[i];
      const Tensor<T>& g = grads[i];
      if (!g.same_shape(p)) throw std::invalid_argument("AdamW: gradient shape mismatch");
      for (size_t j = 0; j < p.size(); ++j) {
        const double gj = double(g.data[j]);
        const double mj = beta1 * double(m[i].data[j]) + (1.0 - beta1) * gj;
        const double vj = beta2 * double(v[i].data[j]) + (1.0 - beta2) * gj * gj;
        m[i].data[j] = T(mj);
        v[i].data[j] = T(vj);
        const double update = (mj / bc1) / (std::sqrt(vj / bc2) + eps) +
                              weight_decay * double(p.data[j]);
        p.data[j] = T(double(p.data[j]) - lr * update);
      }
    }
  }
};

// Reduce-on-plateau: after `patience` evaluations without improvement the
// learning rate is multiplied by `factor`, never dropping below `lr_min`.
struct PlateauScheduler {
  double factor = 0.5;
  int patience = 10;
  double lr_min = 1e-6;

  double best = std::numeric_limits<double>::infinity();
  int bad = 0;

  enum class Outcome { Improved, Waiting, Reduced, AtFloor };

  Outcome observe(double loss, double& lr) {
    if (loss < best) {
      best = loss;
      bad = 0;
      return Outcome::Improved;
    }
    if (++bad < patience) return Outcome::Waiting;
    bad = 0;
    if (lr <= lr_min) return Outcome::AtFloor;
    lr = std::max(lr * factor, lr_min);
    return Outcome::Reduced;
  }
};

// One corrupted training sample: the noised clean image at step d, the rainy
// conditioning image, and the induced spatial noise the model must predict.
struct CorruptedSample {
  Field x_sd;
  int d = 0;
  Field cond;
  Field target_eps;
};

// Corrupts a clean image at step d following the forward process, then
// algebraically inverts the closed form to obtain the regression target.
inline CorruptedSample corrupt_sample(const Field& clean, const Field& rainy, int d,
                                      PerturbationMode mode, const MaskBank& bank,
                                      const NoiseSchedule& sched, Rng& rng,
                                      double energy_scale = 1.0) {
  require_same_shape(clean, rainy, "corrupt_sample");
  const double ab = sched.alpha_bar_at(d);
  const Field pert =
      sample_perturbation(mode, d, bank, clean.h, clean.w, clean.c, rng, energy_scale);
  Field x_sd(clean.h, clean.w, clean.c);
  const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
  for (size_t i = 0; i < x_sd.data.size(); ++i)
    x_sd.data[i] = sa * clean.data[i] + sb * pert.data[i];
  CorruptedSample s;
  s.target_eps = induced_noise(x_sd, clean, ab);
  s.x_sd = std::move(x_sd);
  s.d = d;
  s.cond = rainy;
  return s;
}

// Mean over the batch of per-sample mean squared error between predicted and
// induced noise. Gradients (if requested) are accumulated sample by sample in
// batch order, then scaled by 1/batch — a fixed reduction order so reruns are
// bit-reproducible.
template <typename T>
double batch_objective(const DenoiserModel<T>& model, const std::vector<CorruptedSample>& batch,
                       std::type_identity_t<std::vector<Tensor<T>>*> grads_out) {
  if (batch.empty()) throw std::invalid_argument("batch_objective: empty batch");
  if (grads_out) {
    grads_out->clear();
    grads_out->reserve(model.params.size());
    for (const auto& p : model.params) grads_out->emplace_back(p.shape);
  }
  double loss_sum = 0.0;
  for (const CorruptedSample& s : batch) {
    Tape<T> tape;
    tape.grad_enabled = grads_out != nullptr;
    auto g = build_denoiser_graph(tape, model, field_to_tensor<T>(s.x_sd), s.d,
                                  field_to_tensor<T>(s.cond));
    VarId loss = tape.mse_loss(g.out, field_to_tensor<T>(s.target_eps));
    loss_sum += double(tape.value(loss).data[0]);
    if (grads_out) {
      tape.backward(loss);
      for (size_t i = 0; i < g.params.size(); ++i) {
        const Tensor<T>& pg = tape.grad(g.params[i]);
        if (pg.data.empty()) continue;
        Tensor<T>& acc = (*grads_out)[i];
        for (size_t j = 0; j < acc.size(); ++j) acc.data[j] += pg.data[j];
      }
    }
  }
  const double inv_b = 1.0 / double(batch.size());
  if (grads_out)
    for (auto& gt : *grads_out)
      for (T& v : gt.data) v = T(double(v) * inv_b);
  return loss_sum * inv_b;
}

// One optimizer step on a batch of (clean, rainy) pairs: per-sample step
// index drawn uniformly from {1..D}, corruption injected, noise regressed.
template <typename T>
double train_step(const std::vector<std::pair<Field, Field>>& batch, DenoiserModel<T>& model,
                  AdamW<T>& opt, const NoiseSchedule& sched, const MaskBank& bank,
                  PerturbationMode mode, Rng& rng, double energy_scale = 1.0) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  if (mode == PerturbationMode::SpectralMasked && int(bank.size()) < sched.steps)
    throw std::invalid_argument("train_step: mask bank shorter than the schedule");
  std::vector<CorruptedSample> corrupted;
  corrupted.reserve(batch.size());
  for (const auto& [clean, rainy] : batch) {
    const int d = rng.uniform_int(1, sched.steps);
    corrupted.push_back(corrupt_sample(clean, rainy, d, mode, bank, sched, rng, energy_scale));
  }
  std::vector<Tensor<T>> grads;
  const double loss = batch_objective(model, corrupted, &grads);
  if (!std::isfinite(loss))
    throw std::runtime_error("train_step: non-finite loss (" + std::to_string(loss) +
                             ") — aborting");
  opt.step(model, grads);
  return loss;
}

struct TrainReport {
  std::vector<double> losses;  // one entry per iteration
  std::vector<double> lrs;
  std::string checkpoint_path;
  double wall_seconds = 0.0;
  int iterations_run = 0;
  bool stopped_on_plateau = false;
};

// Full optimization loop over a paired dataset. Images are loaded once,
// random-cropped to the bank resolution each draw, and corrupted on the fly.
// Stops at max iterations or when the loss plateaus with the learning rate
// already at its floor. Writes the checkpoint and, if trace_path is nonempty,
// a CSV trace (iteration, loss, lr).
template <typename T = float>
TrainReport train_loop(const PairedDataset& ds, const TrainConfig& cfg, const MaskBank& bank,
                       const std::string& checkpoint_path, const std::string& trace_path = "") {
  cfg.validate();
  if (ds.size() == 0) throw std::invalid_argument("train_loop: empty dataset");
  const auto t0 = std::chrono::steady_clock::now();

  const int D = cfg.steps > 0 ? cfg.steps : int(bank.size());
  const NoiseSchedule sched = cosine_schedule(D);
  if (cfg.mode == PerturbationMode::SpectralMasked && int(bank.size()) < D)
    throw std::invalid_argument("train_loop: mask bank shorter than the schedule");

  std::vector<std::pair<Field, Field>> images;
  images.reserve(ds.size());
  for (const auto& [clean_path, rainy_path] : ds.pairs) {
    Field clean = load_png(clean_path);
    Field rainy = load_png(rainy_path);
    require_same_shape(clean, rainy, clean_path.c_str());
    if (clean.h < bank.h || clean.w < bank.w)
      throw std::invalid_argument("train_loop: image smaller than bank resolution: " + clean_path);
    images.emplace_back(std::move(clean), std::move(rainy));
  }

  Rng root(cfg.seed);
  Rng pick = root.derive(1);
  Rng noise = root.derive(2);
  DenoiserModel<T> model = init_denoiser<T>(cfg.model, root.derive(3).next_u64());
  AdamW<T> opt(model, cfg.lr, cfg.weight_decay);
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.eps = cfg.adam_eps;
  PlateauScheduler plateau{cfg.plateau_factor, cfg.plateau_patience, cfg.lr_min};

  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path);
    if (!trace) throw std::runtime_error("cannot open trace for writing: " + trace_path);
    trace << "iteration,loss,lr\n";
  }

  TrainReport report;
  double window_sum = 0.0;
  int window_n = 0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    std::vector<std::pair<Field, Field>> batch;
    batch.reserve(size_t(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& [clean, rainy] = images[size_t(pick.uniform_int(0, int(images.size()) - 1))];
      batch.push_back(paired_random_crop(clean, rainy, bank.h, bank.w, pick));
    }
    const double loss =
        train_step(batch, model, opt, sched, bank, cfg.mode, noise, cfg.noise_energy_scale);
    report.losses.push_back(loss);
    report.lrs.push_back(opt.lr);
    report.iterations_run = it;
    if (trace.is_open())
      trace << it << ',' << loss << ',' << opt.lr << '\n';

    window_sum += loss;
    if (++window_n == cfg.eval_every) {
      const double smoothed = window_sum / window_n;
      window_sum = 0.0;
      window_n = 0;
      const auto outcome = plateau.observe(smoothed, opt.lr);
      if (outcome == PlateauScheduler::Outcome::AtFloor) {
        report.stopped_on_plateau = true;
        break;
      }
    }
  }

  save_checkpoint(model, checkpoint_path);
  report.checkpoint_path = checkpoint_path;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// Compares analytic parameter gradients against central finite differences on
// a random subset of at least n_checks scalars (all of them on tiny models).
// Run with T = double; float round-off would swamp the comparison.
inline double gradient_check(DenoiserModel<double>& model, const Field& clean, const Field& rainy,
                             const MaskBank& bank, const NoiseSchedule& sched,
                             PerturbationMode mode, uint64_t seed, int n_checks = 200,
                             double h = 1e-5, double energy_scale = 1.0) {
  Rng rng(seed);
  const int d = rng.uniform_int(1, sched.steps);
  const CorruptedSample sample = corrupt_sample(clean, rainy, d, mode, bank, sched, rng,
                                                energy_scale);

  const Tensor<double> x = field_to_tensor<double>(sample.x_sd);
  const Tensor<double> cond = field_to_tensor<double>(sample.cond);
  const Tensor<double> target = field_to_tensor<double>(sample.target_eps);

  auto loss_value = [&]() {
    Tape<double> t;
    t.grad_enabled = false;
    auto g = build_denoiser_graph(t, model, x, sample.d, cond);
    return double(t.value(t.mse_loss(g.out, target)).data[0]);
  };

  // analytic gradients
  std::vector<Tensor<double>> analytic;
  analytic.reserve(model.params.size());
  {
    Tape<double> t;
    auto g = build_denoiser_graph(t, model, x, sample.d, cond);
    t.backward(t.mse_loss(g.out, target));
    for (size_t i = 0; i < g.params.size(); ++i) {
      const Tensor<double>& pg = t.grad(g.params[i]);
      analytic.push_back(pg.data.empty() ? Tensor<double>(model.params[i].shape) : pg);
    }
  }

  const size_t total = model.param_count();
  Rng pick_rng = rng.derive(77);
  std::vector<std::pair<size_t, size_t>> picks;
  if (int(total) <= n_checks) {
    for (size_t i = 0; i < model.params.size(); ++i)
      for (size_t j = 0; j < model.params[i].size(); ++j) picks.emplace_back(i, j);
  } else {
    for (int k = 0; k < n_checks; ++k) {
      size_t flat = size_t(pick_rng.uniform_int(0, int(total) - 1));
      size_t i = 0;
      while (flat >= model.params[i].size()) flat -= model.params[i++].size();
      picks.emplace_back(i, flat);
    }
  }

  double max_rel = 0.0;
  for (const auto& [i, j] : picks) {
    double& pj = model.params[i].data[j];
    const double keep = pj;
    pj = keep + h;
    const double up = loss_value();
    pj = keep - h;
    const double down = loss_value();
    pj = keep;
    const double fd = (up - down) / (2.0 * h);
    const double an = analytic[i].data[j];
    const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace spectraldiff

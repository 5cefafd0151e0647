#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "spectraldiff/rain.hpp"
#include "spectraldiff/training.hpp"

using namespace spectraldiff;

namespace {

MaskBank toy_bank(int n = 16) {
  return build_bank(n, n, GridSpec::toy(6, {5.0}));  // 6 masks -> D = 6
}

Field rand_field(int h, int w, int c, uint64_t seed) {
  Field f(h, w, c);
  Rng r(seed);
  for (double& v : f.data) v = 0.5 + 0.2 * r.normal();
  return f;
}

DenoiserConfig tiny_cfg(Backbone b) {
  DenoiserConfig c;
  c.backbone = b;
  c.base_channels = 4;
  c.channel_mults = {1};
  c.step_embed_dim = 8;
  c.attn_middle = false;
  return c;
}

}  // namespace

TEST_CASE("zero-init model: batch loss equals the element-mean energy of the targets") {
  MaskBank bank = toy_bank();
  NoiseSchedule sched = cosine_schedule(int(bank.size()));
  auto model = init_denoiser<float>(tiny_cfg(Backbone::Product), 1);

  Rng rng(42);
  std::vector<CorruptedSample> batch;
  for (int i = 0; i < 3; ++i)
    batch.push_back(corrupt_sample(rand_field(16, 16, 3, 10 + uint64_t(i)),
                                   rand_field(16, 16, 3, 20 + uint64_t(i)),
                                   rng.uniform_int(1, sched.steps), PerturbationMode::SpectralMasked,
                                   bank, sched, rng));
  const double loss = batch_objective(model, batch, nullptr);
  double want = 0.0;
  for (const auto& s : batch) want += energy(s.target_eps) / double(s.target_eps.data.size());
  want /= double(batch.size());
  CHECK(loss == Catch::Approx(want).epsilon(1e-6));
  CHECK(loss > 0.0);
  CHECK(std::isfinite(loss));
}

TEST_CASE("perfect prediction gives zero loss") {
  // A zero-init model predicts the zero field; against zero targets the
  // objective is exactly zero.
  MaskBank bank = toy_bank();
  NoiseSchedule sched = cosine_schedule(int(bank.size()));
  auto model = init_denoiser<float>(tiny_cfg(Backbone::Conv), 2);
  CorruptedSample s;
  s.x_sd = rand_field(16, 16, 3, 31);
  s.cond = rand_field(16, 16, 3, 32);
  s.d = 3;
  s.target_eps = Field(16, 16, 3);
  CHECK(batch_objective(model, {s}, nullptr) == 0.0);
}

TEST_CASE("train_step: fixed seed reproduces the loss, lr 0 freezes parameters") {
  MaskBank bank = toy_bank();
  NoiseSchedule sched = cosine_schedule(int(bank.size()));
  std::vector<std::pair<Field, Field>> batch;
  for (int i = 0; i < 2; ++i)
    batch.emplace_back(rand_field(16, 16, 3, 40 + uint64_t(i)),
                       rand_field(16, 16, 3, 50 + uint64_t(i)));

  auto run = [&](double lr) {
    auto model = init_denoiser<float>(tiny_cfg(Backbone::Product), 3);
    randomize_denoiser(model, 4);
    AdamW<float> opt(model, lr);
    Rng rng(77);
    const double loss =
        train_step(batch, model, opt, sched, bank, PerturbationMode::SpectralMasked, rng);
    return std::make_pair(loss, std::move(model));
  };

  auto [l1, m1] = run(2e-4);
  auto [l2, m2] = run(2e-4);
  CHECK(l1 == l2);
  for (size_t i = 0; i < m1.params.size(); ++i) CHECK(m1.params[i].data == m2.params[i].data);

  // learning rate zero: loss computed, parameters bit-identical to init
  auto frozen = init_denoiser<float>(tiny_cfg(Backbone::Product), 3);
  randomize_denoiser(frozen, 4);
  auto [l0, m0] = run(0.0);
  CHECK(std::isfinite(l0));
  for (size_t i = 0; i < m0.params.size(); ++i) CHECK(m0.params[i].data == frozen.params[i].data);
}

TEST_CASE("batch objective is permutation invariant") {
  MaskBank bank = toy_bank();
  NoiseSchedule sched = cosine_schedule(int(bank.size()));
  auto model = init_denoiser<float>(tiny_cfg(Backbone::Product), 5);
  randomize_denoiser(model, 6);

  Rng rng(88);
  std::vector<CorruptedSample> batch;
  for (int i = 0; i < 4; ++i)
    batch.push_back(corrupt_sample(rand_field(16, 16, 3, 60 + uint64_t(i)),
                                   rand_field(16, 16, 3, 70 + uint64_t(i)),
                                   rng.uniform_int(1, sched.steps), PerturbationMode::SpectralMasked,
                                   bank, sched, rng));
  std::vector<CorruptedSample> shuffled = {batch[2], batch[0], batch[3], batch[1]};

  std::vector<Tensor<float>> g1, g2;
  const double a = batch_objective(model, batch, &g1);
  const double b = batch_objective(model, shuffled, &g2);
  CHECK(a == Catch::Approx(b).epsilon(1e-10));
  for (size_t i = 0; i < g1.size(); ++i)
    for (size_t j = 0; j < g1[i].size(); ++j)
      CHECK(double(g1[i].data[j]) == Catch::Approx(double(g2[i].data[j])).margin(1e-6));
}

TEST_CASE("masked corruption uses exactly the mask indexed by d") {
  // Same rng draw with the same step must reproduce the perturbation the
  // bank mask defines; a different step (different mask) must not.
  MaskBank bank = toy_bank();
  NoiseSchedule sched = cosine_schedule(int(bank.size()));
  Field clean = rand_field(16, 16, 3, 81);
  Field rainy = rand_field(16, 16, 3, 82);

  Rng r1(9);
  CorruptedSample s1 = corrupt_sample(clean, rainy, 2, PerturbationMode::SpectralMasked, bank,
                                      sched, r1);
  Rng r2(9);
  const Field pert = sample_perturbation(PerturbationMode::SpectralMasked, 2, bank, 16, 16, 3, r2);
  const double ab = sched.alpha_bar_at(2);
  for (size_t i = 0; i < clean.data.size(); ++i) {
    const double want = std::sqrt(ab) * clean.data[i] + std::sqrt(1.0 - ab) * pert.data[i];
    CHECK(s1.x_sd.data[i] == Catch::Approx(want).margin(1e-12));
  }
  // induced noise equals the injected perturbation (algebraic inversion)
  for (size_t i = 0; i < clean.data.size(); ++i)
    CHECK(s1.target_eps.data[i] == Catch::Approx(pert.data[i]).margin(1e-9));

  Rng r3(9);
  CorruptedSample s3 = corrupt_sample(clean, rainy, 5, PerturbationMode::SpectralMasked, bank,
                                      sched, r3);
  double diff = 0.0;
  for (size_t i = 0; i < clean.data.size(); ++i)
    diff += std::abs(s3.target_eps.data[i] - s1.target_eps.data[i]);
  CHECK(diff > 1e-3);
}

TEST_CASE("train_step rejects a bank shorter than the schedule") {
  MaskBank bank = toy_bank();                       // 6 masks
  NoiseSchedule sched = cosine_schedule(10);        // D = 10
  auto model = init_denoiser<float>(tiny_cfg(Backbone::Product), 7);
  AdamW<float> opt(model);
  Rng rng(1);
  std::vector<std::pair<Field, Field>> batch = {
      {rand_field(16, 16, 3, 90), rand_field(16, 16, 3, 91)}};
  CHECK_THROWS_AS(
      train_step(batch, model, opt, sched, bank, PerturbationMode::SpectralMasked, rng),
      std::invalid_argument);
}

TEST_CASE("plateau scheduler reduces by the configured factor and respects the floor") {
  PlateauScheduler p{0.5, 3, 1e-6};
  double lr = 8e-6;
  CHECK(p.observe(1.0, lr) == PlateauScheduler::Outcome::Improved);
  CHECK(p.observe(1.0, lr) == PlateauScheduler::Outcome::Waiting);
  CHECK(p.observe(1.0, lr) == PlateauScheduler::Outcome::Waiting);
  CHECK(p.observe(1.0, lr) == PlateauScheduler::Outcome::Reduced);
  CHECK(lr == 4e-6);
  for (int i = 0; i < 3; ++i) p.observe(1.0, lr);
  CHECK(lr == 2e-6);
  for (int i = 0; i < 3; ++i) p.observe(1.0, lr);
  CHECK(lr == 1e-6);  // clamped to the floor
  CHECK(p.observe(1.0, lr) == PlateauScheduler::Outcome::Waiting);
  CHECK(p.observe(1.0, lr) == PlateauScheduler::Outcome::Waiting);
  CHECK(p.observe(1.0, lr) == PlateauScheduler::Outcome::AtFloor);
  CHECK(lr == 1e-6);
}

TEST_CASE("improvement resets the plateau counter") {
  PlateauScheduler p{0.5, 2, 1e-6};
  double lr = 1e-4;
  p.observe(1.0, lr);
  CHECK(p.observe(1.1, lr) == PlateauScheduler::Outcome::Waiting);
  CHECK(p.observe(0.9, lr) == PlateauScheduler::Outcome::Improved);
  CHECK(p.observe(0.95, lr) == PlateauScheduler::Outcome::Waiting);
  CHECK(lr == 1e-4);
}

TEST_CASE("train config json round trip and validation") {
  TrainConfig c;
  c.iterations = 42;
  c.mode = PerturbationMode::SpatialIid;
  c.noise_energy_scale = 16.0;
  c.model = tiny_cfg(Backbone::Product);
  TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  nlohmann::json j = c.to_json();
  j["lr"] = 1.5;
  CHECK_THROWS_AS(TrainConfig::from_json(j), std::invalid_argument);
  j = c.to_json();
  j["batch_size"] = 0;
  CHECK_THROWS_AS(TrainConfig::from_json(j), std::invalid_argument);
}

TEST_CASE("one training iteration writes a loadable checkpoint and finite loss") {
  const std::string dir = "/tmp/spectraldiff_train_smoke";
  std::filesystem::remove_all(dir);
  make_toy_dataset(3, 16, 16, 1, 2, 0.2, 0.5, 11, dir);
  PairedDataset ds = load_paired_dataset(dir);
  MaskBank bank = toy_bank();

  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 2;
  cfg.seed = 5;
  cfg.model = tiny_cfg(Backbone::Product);
  const std::string ckpt = dir + "/model.sdck";
  const std::string trace = dir + "/trace.csv";
  TrainReport rep = train_loop<float>(ds, cfg, bank, ckpt, trace);

  REQUIRE(rep.losses.size() == 1);
  CHECK(std::isfinite(rep.losses[0]));
  CHECK(rep.iterations_run == 1);
  auto model = load_checkpoint<float>(ckpt);
  CHECK(model.param_count() == count_params(cfg.model));

  std::ifstream tf(trace);
  std::string header;
  std::getline(tf, header);
  CHECK(header == "iteration,loss,lr");
  std::string row;
  std::getline(tf, row);
  CHECK(row.substr(0, 2) == "1,");
  std::filesystem::remove_all(dir);
}

TEST_CASE("a short training run reduces the smoothed loss") {
  const std::string dir = "/tmp/spectraldiff_train_500";
  std::filesystem::remove_all(dir);
  make_toy_dataset(8, 16, 16, 1, 2, 0.3, 0.6, 13, dir);
  PairedDataset ds = load_paired_dataset(dir);
  MaskBank bank = toy_bank();

  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.seed = 21;
  cfg.noise_energy_scale = 16.0;  // unit per-pixel noise variance at 16x16
  cfg.model = tiny_cfg(Backbone::Product);
  TrainReport rep = train_loop<float>(ds, cfg, bank, dir + "/model.sdck");

  REQUIRE(rep.losses.size() == 500);
  const double first =
      std::accumulate(rep.losses.begin(), rep.losses.begin() + 50, 0.0) / 50.0;
  const double last = std::accumulate(rep.losses.end() - 50, rep.losses.end(), 0.0) / 50.0;
  INFO("first window " << first << " last window " << last);
  CHECK(last < first);
  for (double l : rep.losses) CHECK(std::isfinite(l));
  std::filesystem::remove_all(dir);
}

TEST_CASE("gradient check: tiny models in double precision") {
  MaskBank bank = toy_bank(8);
  NoiseSchedule sched = cosine_schedule(int(bank.size()));
  Field clean = rand_field(8, 8, 3, 101);
  Field rainy = rand_field(8, 8, 3, 102);

  for (Backbone b : {Backbone::Product, Backbone::Conv}) {
    DenoiserConfig cfg = tiny_cfg(b);
    auto model = init_denoiser<double>(cfg, 8);
    randomize_denoiser(model, 9);
    const double err = gradient_check(model, clean, rainy, bank, sched,
                                      PerturbationMode::SpectralMasked, 33, 200, 1e-5);
    INFO("backbone " << (b == Backbone::Conv ? "conv" : "product") << " max rel err " << err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("zero input and zero-init head: analytic and numeric head gradients vanish") {
  DenoiserConfig cfg = tiny_cfg(Backbone::Conv);
  auto model = init_denoiser<double>(cfg, 10);
  const Tensor<double> x({3, 8, 8});
  const Tensor<double> cond({3, 8, 8});
  Tensor<double> target({3, 8, 8});
  target.data.assign(target.size(), 0.25);

  Tape<double> t;
  auto g = build_denoiser_graph(t, model, x, 1, cond);
  t.backward(t.mse_loss(g.out, target));
  const size_t head_w = model.index_of("head.w");
  const Tensor<double>& hw_grad = t.grad(g.params[head_w]);
  if (!hw_grad.data.empty())
    for (double v : hw_grad.data) CHECK(v == 0.0);

  // numeric: nudging head weights cannot change the loss when its input is 0
  auto loss_of = [&]() {
    Tape<double> t2;
    t2.grad_enabled = false;
    auto g2 = build_denoiser_graph(t2, model, x, 1, cond);
    return t2.value(t2.mse_loss(g2.out, target)).data[0];
  };
  const double base = loss_of();
  model.params[head_w].data[0] += 1e-3;
  CHECK(loss_of() == base);
}

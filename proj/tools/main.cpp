// Command-line front end: mask building, data synthesis, training,
// deraining, evaluation, and FLOPs reporting. Exit codes: 0 success,
// 1 runtime/I-O failure, 2 usage error. Every subcommand is deterministic
// under --seed. Numeric config may come from JSON files; explicit flags
// override file values, which override built-in defaults.
#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spectraldiff/dataset.hpp"
#include "spectraldiff/flops.hpp"
#include "spectraldiff/image_io.hpp"
#include "spectraldiff/mask.hpp"
#include "spectraldiff/metrics.hpp"
#include "spectraldiff/nn/denoiser.hpp"
#include "spectraldiff/rain.hpp"
#include "spectraldiff/sampler.hpp"
#include "spectraldiff/schedule.hpp"
#include "spectraldiff/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spectraldiff;

namespace {

// Deterministic, locale-independent float formatting for CSV output.
std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return j;
}

// Worker pool size for directory jobs: hardware concurrency, capped by the
// SPECTRALDIFF_THREADS env var and by the number of items.
int worker_count(size_t n_items) {
  unsigned hw = std::thread::hardware_concurrency();
  int w = hw > 0 ? static_cast<int>(hw) : 1;
  if (const char* env = std::getenv("SPECTRALDIFF_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) w = std::min(w, cap);
  }
  if (n_items < 1) return 1;
  return std::max(1, std::min(w, static_cast<int>(n_items)));
}

// Runs fn(i) for i in [0, n) on a small worker pool. Exceptions are
// captured and rethrown on the calling thread (first one wins).
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
  const int workers = worker_count(n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto body = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers));
  for (int t = 0; t < workers; ++t) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<fs::path> list_pngs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------- make-masks

struct MakeMasksArgs {
  int h = 64, w = 64;
  std::string grid = "reference";  // reference | toy
  int theta_count = 60;
  std::vector<double> kappas;
  std::string order = "lexicographic";  // lexicographic | shuffled
  uint64_t seed = 0;
  std::string config, out;
};

void run_make_masks(const CLI::App& cmd, MakeMasksArgs a) {
  json file;
  if (!a.config.empty()) file = read_json_file(a.config);
  auto from_file = [&](const char* key, auto& slot, const std::string& flag) {
    if (cmd.count(flag) == 0 && file.contains(key))
      slot = file.at(key).get<std::decay_t<decltype(slot)>>();
  };
  from_file("h", a.h, "--height");
  from_file("w", a.w, "--width");
  from_file("grid", a.grid, "--grid");
  from_file("theta_count", a.theta_count, "--theta-count");
  from_file("kappas", a.kappas, "--kappas");
  from_file("order", a.order, "--order");
  from_file("seed", a.seed, "--seed");

  GridSpec spec;
  if (a.grid == "reference") {
    spec = GridSpec::reference();
  } else if (a.grid == "toy") {
    spec = a.kappas.empty() ? GridSpec::toy(a.theta_count)
                            : GridSpec::toy(a.theta_count, a.kappas);
  } else {
    throw std::invalid_argument("unknown grid '" + a.grid + "' (want reference|toy)");
  }
  // A config file may pin the grid axes outright (theta in degrees).
  if (file.contains("r_values")) spec.r_values = file.at("r_values").get<std::vector<double>>();
  if (file.contains("sigma_values"))
    spec.sigma_values = file.at("sigma_values").get<std::vector<double>>();
  if (file.contains("theta_degrees")) {
    spec.theta_values.clear();
    for (double deg : file.at("theta_degrees").get<std::vector<double>>())
      spec.theta_values.push_back(deg * detail::kPi / 180.0);
  }
  if (file.contains("kappa_values") && cmd.count("--kappas") == 0)
    spec.kappa_values = file.at("kappa_values").get<std::vector<double>>();

  if (a.order == "shuffled") {
    spec.order = MaskOrder::Shuffled;
    spec.shuffle_seed = a.seed;
  } else if (a.order != "lexicographic") {
    throw std::invalid_argument("unknown order '" + a.order +
                                "' (want lexicographic|shuffled)");
  }

  const MaskBank bank = build_bank(a.h, a.w, spec);
  save_bank(bank, a.out);
  std::cout << "wrote " << bank.size() << " masks at " << a.h << "x" << a.w << " to " << a.out
            << "\n";
}

// ---------------------------------------------------------------- synth-rain

struct SynthRainArgs {
  int n = 16, h = 32, w = 32;
  int min_layers = 1, max_layers = 3;
  double gain_lo = 2.0, gain_hi = 6.0;
  uint64_t seed = 0;
  std::string config, out;
};

void run_synth_rain(const CLI::App& cmd, SynthRainArgs a) {
  json file;
  if (!a.config.empty()) file = read_json_file(a.config);
  auto from_file = [&](const char* key, auto& slot, const std::string& flag) {
    if (cmd.count(flag) == 0 && file.contains(key))
      slot = file.at(key).get<std::decay_t<decltype(slot)>>();
  };
  from_file("n", a.n, "--n");
  from_file("h", a.h, "--height");
  from_file("w", a.w, "--width");
  from_file("min_layers", a.min_layers, "--min-layers");
  from_file("max_layers", a.max_layers, "--max-layers");
  from_file("gain_lo", a.gain_lo, "--gain-lo");
  from_file("gain_hi", a.gain_hi, "--gain-hi");
  from_file("seed", a.seed, "--seed");

  const DatasetManifest m =
      make_toy_dataset(a.n, a.h, a.w, a.min_layers, a.max_layers, a.gain_lo, a.gain_hi, a.seed,
                       a.out);
  std::cout << "wrote " << m.n_pairs << " pairs at " << m.h << "x" << m.w << " to " << a.out
            << "\n";
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string data, bank, out, trace, config;
  int iterations = 0, batch_size = 0, eval_every = 0, steps = 0;
  double lr = 0, lr_min = 0, weight_decay = 0, energy_scale = 0;
  std::string mode, backbone;
  uint64_t seed = 0;
  int base_channels = 0, r_c = 0, embed_dim = 0;
  std::vector<int> mults;
};

void run_train(const CLI::App& cmd, const TrainArgs& a) {
  // Start from defaults, merge the config file (model object merged
  // field-by-field so partial model configs are fine), then apply flags.
  json merged = TrainConfig{}.to_json();
  if (!a.config.empty()) {
    const json file = read_json_file(a.config);
    json model = merged.at("model");
    if (file.contains("model")) model.update(file.at("model"));
    for (const auto& [k, v] : file.items())
      if (k != "model") merged[k] = v;
    merged["model"] = model;
  }
  TrainConfig cfg = TrainConfig::from_json(merged);

  auto flag = [&](const std::string& name) { return cmd.count(name) > 0; };
  if (flag("--iterations")) cfg.iterations = a.iterations;
  if (flag("--batch-size")) cfg.batch_size = a.batch_size;
  if (flag("--lr")) cfg.lr = a.lr;
  if (flag("--lr-min")) cfg.lr_min = a.lr_min;
  if (flag("--weight-decay")) cfg.weight_decay = a.weight_decay;
  if (flag("--eval-every")) cfg.eval_every = a.eval_every;
  if (flag("--steps")) cfg.steps = a.steps;
  if (flag("--energy-scale")) cfg.noise_energy_scale = a.energy_scale;
  if (flag("--mode")) cfg.mode = mode_from_string(a.mode);
  if (flag("--seed")) cfg.seed = a.seed;
  if (flag("--backbone")) cfg.model.backbone = backbone_from_string(a.backbone);
  if (flag("--base-channels")) cfg.model.base_channels = a.base_channels;
  if (flag("--mults")) cfg.model.channel_mults = a.mults;
  if (flag("--r-c")) cfg.model.r_c = a.r_c;
  if (flag("--embed-dim")) cfg.model.step_embed_dim = a.embed_dim;
  cfg.validate();

  const PairedDataset ds = load_paired_dataset(a.data);
  const MaskBank bank = load_bank(a.bank);
  const TrainReport rep = train_loop<float>(ds, cfg, bank, a.out, a.trace);
  std::cout << "trained " << rep.iterations_run << " iterations in " << fmt_g(rep.wall_seconds)
            << " s; final loss " << fmt_g(rep.losses.back()) << (rep.stopped_on_plateau
                                                                     ? " (stopped on plateau)"
                                                                     : "")
            << "; checkpoint " << rep.checkpoint_path << "\n";
}

// -------------------------------------------------------------------- derain

struct DerainArgs {
  std::string in, ckpt, bank, out;
  int steps = 10;
  int depth = 0;  // schedule depth D; 0 means bank size
  double temperature = 1.0;
  uint64_t seed = 0;
};

void require_distinct_paths(const fs::path& in, const fs::path& out) {
  std::error_code ec;
  const fs::path a = fs::weakly_canonical(in, ec);
  const fs::path b = fs::weakly_canonical(out, ec);
  if (a == b)
    throw std::runtime_error("refusing to overwrite input: " + in.string());
}

void run_derain(const DerainArgs& a) {
  const MaskBank bank = load_bank(a.bank);
  const DenoiserModel<float> model = load_checkpoint<float>(a.ckpt);
  const int big_d = a.depth > 0 ? a.depth : static_cast<int>(bank.size());
  const NoiseSchedule sched = cosine_schedule(big_d);
  if (big_d > static_cast<int>(bank.size()))
    throw std::invalid_argument("derain: schedule depth exceeds mask bank size");

  auto derain_one = [&](const fs::path& in_path, const fs::path& out_path, uint64_t stream) {
    require_distinct_paths(in_path, out_path);
    const Field rainy = load_png(in_path.string());
    Rng rng = Rng(a.seed).derive(stream);
    const Field clean = ddim_derain(rainy, model, bank, sched, a.steps, rng, a.temperature);
    save_png(out_path.string(), clean);
  };

  if (fs::is_directory(a.in)) {
    const std::vector<fs::path> inputs = list_pngs(a.in);
    if (inputs.empty()) throw std::runtime_error("no .png files in " + a.in);
    fs::create_directories(a.out);
    // Per-image RNG streams are derived from the sorted index, so results are
    // byte-identical regardless of worker scheduling.
    parallel_for(inputs.size(), [&](size_t i) {
      derain_one(inputs[i], fs::path(a.out) / inputs[i].filename(), uint64_t(i));
    });
    std::cout << "derained " << inputs.size() << " images to " << a.out << "\n";
  } else {
    derain_one(a.in, a.out, 0);
    std::cout << "wrote " << a.out << "\n";
  }
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred, gt, out;
};

void run_eval(const EvalArgs& a) {
  const std::vector<fs::path> preds = list_pngs(a.pred);
  const std::vector<fs::path> gts = list_pngs(a.gt);
  std::map<std::string, fs::path> gt_by_name;
  for (const auto& p : gts) gt_by_name[p.filename().string()] = p;
  std::map<std::string, fs::path> pred_by_name;
  for (const auto& p : preds) pred_by_name[p.filename().string()] = p;
  for (const auto& [name, path] : pred_by_name)
    if (!gt_by_name.count(name))
      throw std::runtime_error("eval: unpaired file (no ground truth): " + path.string());
  for (const auto& [name, path] : gt_by_name)
    if (!pred_by_name.count(name))
      throw std::runtime_error("eval: unpaired file (no prediction): " + path.string());

  std::vector<std::string> names;
  names.reserve(pred_by_name.size());
  for (const auto& [name, _] : pred_by_name) names.push_back(name);

  std::vector<MetricReport> rows(names.size());
  parallel_for(names.size(), [&](size_t i) {
    const Field gt = load_png(gt_by_name.at(names[i]).string());
    const Field pred = load_png(pred_by_name.at(names[i]).string());
    rows[i] = evaluate_pair(gt, pred);
  });

  std::ostringstream csv;
  csv << "path,mse,psnr_db,ssim_global,ssim_windowed\n";
  MetricReport mean;
  for (size_t i = 0; i < names.size(); ++i) {
    const MetricReport& r = rows[i];
    csv << names[i] << ',' << fmt_g(r.mse) << ',' << fmt_g(r.psnr_db) << ','
        << fmt_g(r.ssim_global) << ',' << fmt_g(r.ssim_windowed) << "\n";
    mean.mse += r.mse;
    mean.psnr_db += r.psnr_db;
    mean.ssim_global += r.ssim_global;
    mean.ssim_windowed += r.ssim_windowed;
  }
  const double n = double(names.size());
  mean.mse /= n;
  mean.psnr_db /= n;
  mean.ssim_global /= n;
  mean.ssim_windowed /= n;
  csv << "mean," << fmt_g(mean.mse) << ',' << fmt_g(mean.psnr_db) << ','
      << fmt_g(mean.ssim_global) << ',' << fmt_g(mean.ssim_windowed) << "\n";

  std::ofstream os(a.out);
  if (!os) throw std::runtime_error("cannot open output file: " + a.out);
  os << csv.str();
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + a.out);
  std::cout << "evaluated " << names.size() << " pairs; mean psnr " << fmt_g(mean.psnr_db)
            << " dB, mean ssim " << fmt_g(mean.ssim_global) << "; wrote " << a.out << "\n";
}

// -------------------------------------------------------------- flops-report

struct FlopsArgs {
  std::string preset = "toy";  // toy | reference
  std::string config, out;
  int h = 32, w = 32;
  int base_channels = 0, r_c = 0, embed_dim = 0;
  std::vector<int> mults;
};

void print_rows_csv(std::ostream& os, const char* backbone, const std::vector<FlopsRow>& rows) {
  for (const auto& r : rows)
    os << backbone << ',' << r.name << ',' << r.kind << ',' << r.c_in << ',' << r.c_out << ','
       << r.h << ',' << r.w << ',' << r.flops << ',' << (r.in_ratio ? 1 : 0) << "\n";
}

void print_rows_table(std::ostream& os, const char* title, const std::vector<FlopsRow>& rows) {
  os << title << "\n";
  os << "  " << std::left << std::setw(28) << "name" << std::setw(11) << "kind" << std::right
     << std::setw(6) << "c_in" << std::setw(6) << "c_out" << std::setw(5) << "h" << std::setw(5)
     << "w" << std::setw(14) << "flops" << "\n";
  for (const auto& r : rows)
    os << "  " << std::left << std::setw(28) << r.name << std::setw(11) << r.kind << std::right
       << std::setw(6) << r.c_in << std::setw(6) << r.c_out << std::setw(5) << r.h << std::setw(5)
       << r.w << std::setw(14) << r.flops << (r.in_ratio ? "  *" : "") << "\n";
  os << "  total: " << FlopsReport::total(rows)
     << " flops (backbone rows marked *: " << FlopsReport::ratio_bucket(rows) << ")\n";
}

void run_flops_report(const CLI::App& cmd, const FlopsArgs& a) {
  DenoiserConfig cfg =
      a.preset == "reference" ? DenoiserConfig::reference() : DenoiserConfig::toy();
  if (!a.config.empty()) {
    json merged = cfg.to_json();
    merged.update(read_json_file(a.config));
    cfg = DenoiserConfig::from_json(merged);
  }
  auto flag = [&](const std::string& name) { return cmd.count(name) > 0; };
  if (flag("--base-channels")) cfg.base_channels = a.base_channels;
  if (flag("--mults")) cfg.channel_mults = a.mults;
  if (flag("--r-c")) cfg.r_c = a.r_c;
  if (flag("--embed-dim")) cfg.step_embed_dim = a.embed_dim;
  cfg.validate();

  const FlopsReport rep = model_report(cfg, a.h, a.w);

  std::ostringstream csv;
  csv << "backbone,name,kind,c_in,c_out,h,w,flops,in_ratio\n";
  print_rows_csv(csv, "product", rep.product_rows);
  print_rows_csv(csv, "conv", rep.conv_rows);
  std::cout << csv.str();

  std::cout << "\n";
  print_rows_table(std::cout, "product backbone", rep.product_rows);
  std::cout << "\n";
  print_rows_table(std::cout, "conv backbone", rep.conv_rows);
  const double reduction = double(FlopsReport::ratio_bucket(rep.conv_rows)) /
                           double(FlopsReport::ratio_bucket(rep.product_rows));
  std::cout << "\nbackbone reduction (conv/product over replaced rows): " << fmt_g(reduction)
            << "x\n";
  std::cout << "closed-form reduction_ratio(C=" << cfg.base_channels
            << "): " << fmt_g(reduction_ratio(cfg.base_channels, cfg.r_c)) << "\n";

  if (!a.out.empty()) {
    std::ofstream os(a.out);
    if (!os) throw std::runtime_error("cannot open output file: " + a.out);
    os << csv.str();
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + a.out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectraldiff: structured spectral perturbations for single-image deraining"};
  app.require_subcommand(1);

  MakeMasksArgs mk;
  CLI::App* c_mk = app.add_subcommand("make-masks", "Build a spectral mask bank (.sdmb)");
  c_mk->add_option("--height", mk.h, "mask height");
  c_mk->add_option("--width", mk.w, "mask width");
  c_mk->add_option("--grid", mk.grid, "parameter grid preset")
      ->check(CLI::IsMember({"reference", "toy"}));
  c_mk->add_option("--theta-count", mk.theta_count, "orientation count (toy grid)");
  c_mk->add_option("--kappas", mk.kappas, "von Mises concentrations (toy grid)")
      ->delimiter(',');
  c_mk->add_option("--order", mk.order, "mask ordering")
      ->check(CLI::IsMember({"lexicographic", "shuffled"}));
  c_mk->add_option("--seed", mk.seed, "shuffle seed");
  c_mk->add_option("--config", mk.config, "JSON config file");
  c_mk->add_option("--out", mk.out, "output bank path")->required();
  c_mk->callback([&]() { run_make_masks(*c_mk, mk); });

  SynthRainArgs sr;
  CLI::App* c_sr = app.add_subcommand("synth-rain", "Generate a paired toy rain dataset");
  c_sr->add_option("--n", sr.n, "number of pairs");
  c_sr->add_option("--height", sr.h, "image height");
  c_sr->add_option("--width", sr.w, "image width");
  c_sr->add_option("--min-layers", sr.min_layers, "minimum rain layers per image");
  c_sr->add_option("--max-layers", sr.max_layers, "maximum rain layers per image");
  c_sr->add_option("--gain-lo", sr.gain_lo, "minimum layer gain");
  c_sr->add_option("--gain-hi", sr.gain_hi, "maximum layer gain");
  c_sr->add_option("--seed", sr.seed, "dataset seed");
  c_sr->add_option("--config", sr.config, "JSON config file");
  c_sr->add_option("--out", sr.out, "output dataset directory")->required();
  c_sr->callback([&]() { run_synth_rain(*c_sr, sr); });

  TrainArgs tr;
  CLI::App* c_tr = app.add_subcommand("train", "Train a denoiser on a paired dataset");
  c_tr->add_option("--data", tr.data, "dataset directory (clean/ + rainy/)")->required();
  c_tr->add_option("--bank", tr.bank, "mask bank path")->required();
  c_tr->add_option("--out", tr.out, "output checkpoint path (.sdck)")->required();
  c_tr->add_option("--trace", tr.trace, "optional CSV loss trace path");
  c_tr->add_option("--config", tr.config, "JSON training config file");
  c_tr->add_option("--iterations", tr.iterations, "optimization iterations");
  c_tr->add_option("--batch-size", tr.batch_size, "batch size");
  c_tr->add_option("--lr", tr.lr, "learning rate");
  c_tr->add_option("--lr-min", tr.lr_min, "learning-rate floor");
  c_tr->add_option("--weight-decay", tr.weight_decay, "decoupled weight decay");
  c_tr->add_option("--eval-every", tr.eval_every, "iterations per plateau check");
  c_tr->add_option("--steps", tr.steps, "diffusion depth D (0 = bank size)");
  c_tr->add_option("--energy-scale", tr.energy_scale, "perturbation energy scale");
  c_tr->add_option("--mode", tr.mode, "perturbation mode")
      ->check(CLI::IsMember({"spatial-iid", "spectral-unmasked", "spectral-masked"}));
  c_tr->add_option("--seed", tr.seed, "training seed");
  c_tr->add_option("--backbone", tr.backbone, "denoiser backbone")
      ->check(CLI::IsMember({"product", "conv"}));
  c_tr->add_option("--base-channels", tr.base_channels, "base channel width");
  c_tr->add_option("--mults", tr.mults, "channel multipliers")->delimiter(',');
  c_tr->add_option("--r-c", tr.r_c, "product bottleneck ratio");
  c_tr->add_option("--embed-dim", tr.embed_dim, "step embedding dimension");
  c_tr->callback([&]() { run_train(*c_tr, tr); });

  DerainArgs dr;
  CLI::App* c_dr = app.add_subcommand("derain", "Derain a PNG (or a directory of PNGs)");
  c_dr->add_option("--in", dr.in, "input PNG or directory")->required();
  c_dr->add_option("--ckpt", dr.ckpt, "checkpoint path (.sdck)")->required();
  c_dr->add_option("--bank", dr.bank, "mask bank path (.sdmb)")->required();
  c_dr->add_option("--steps", dr.steps, "reverse steps S");
  c_dr->add_option("--depth", dr.depth, "schedule depth D (0 = bank size)");
  c_dr->add_option("--temperature", dr.temperature, "step-plan sharpening temperature");
  c_dr->add_option("--seed", dr.seed, "sampling seed");
  c_dr->add_option("--out", dr.out, "output PNG or directory")->required();
  c_dr->callback([&]() { run_derain(dr); });

  EvalArgs ev;
  CLI::App* c_ev = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  c_ev->add_option("--pred", ev.pred, "prediction directory")->required();
  c_ev->add_option("--gt", ev.gt, "ground-truth directory")->required();
  c_ev->add_option("--out", ev.out, "output CSV path")->required();
  c_ev->callback([&]() { run_eval(ev); });

  FlopsArgs fl;
  CLI::App* c_fl = app.add_subcommand("flops-report", "Per-layer FLOPs for both backbones");
  c_fl->add_option("--preset", fl.preset, "architecture preset")
      ->check(CLI::IsMember({"toy", "reference"}));
  c_fl->add_option("--config", fl.config, "JSON model config file");
  c_fl->add_option("--height", fl.h, "input height");
  c_fl->add_option("--width", fl.w, "input width");
  c_fl->add_option("--base-channels", fl.base_channels, "base channel width");
  c_fl->add_option("--mults", fl.mults, "channel multipliers")->delimiter(',');
  c_fl->add_option("--r-c", fl.r_c, "product bottleneck ratio");
  c_fl->add_option("--embed-dim", fl.embed_dim, "step embedding dimension");
  c_fl->add_option("--out", fl.out, "also write the CSV to this path");
  c_fl->callback([&]() { run_flops_report(*c_fl, fl); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    (void)app.exit(e);  // prints the diagnostic and usage hint
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "spectraldiff: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
